"""Canonical binary encoding of the domain types for the wire protocol.

Field order is fixed, integers are big-endian, decimals are 8-byte IEEE-754,
strings are u16-length-prefixed UTF-8, lists are u32-count-prefixed.  The
byte layout of every message body is documented in the README and frozen per
protocol version; both sides of the wire (including out-of-process agents in
other languages) must reproduce it bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import ControlAction, GeoLocation, Transform, VehicleState
from .errors import WireError
from .routes import DenseRoute, GeoOrigin, GeoRoute, RoadOption
from .sensors import (
    GnssReading,
    GridSpec,
    ImuReading,
    OccupancyGrid,
    SensorFrame,
    SensorKind,
    SensorSpec,
    SpeedReading,
)
from .world import (
    ActorBlueprint,
    ActorKind,
    ActorSnapshot,
    Road,
    WeatherParams,
    WorldMap,
    WorldState,
)


class Writer:
    def __init__(self):
        self._buf = bytearray()

    def u8(self, v: int):
        self._buf += struct.pack(">B", v)

    def u16(self, v: int):
        self._buf += struct.pack(">H", v)

    def u32(self, v: int):
        self._buf += struct.pack(">I", v)

    def u64(self, v: int):
        self._buf += struct.pack(">Q", v)

    def i8(self, v: int):
        self._buf += struct.pack(">b", v)

    def i64(self, v: int):
        self._buf += struct.pack(">q", v)

    def f64(self, v: float):
        self._buf += struct.pack(">d", v)

    def boolean(self, v: bool):
        self._buf += struct.pack(">B", 1 if v else 0)

    def string(self, v: str):
        data = v.encode("utf-8")
        if len(data) > 0xFFFF:
            raise WireError("string too long")
        self.u16(len(data))
        self._buf += data

    def raw(self, data: bytes):
        self.u32(len(data))
        self._buf += data

    def getvalue(self) -> bytes:
        return bytes(self._buf)


class Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise WireError("payload truncated")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack(">B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def i8(self) -> int:
        return struct.unpack(">b", self._take(1))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self._take(8))[0]

    def boolean(self) -> bool:
        return self.u8() != 0

    def string(self) -> str:
        n = self.u16()
        return self._take(n).decode("utf-8")

    def raw(self) -> bytes:
        n = self.u32()
        return self._take(n)

    def done(self) -> bool:
        return self._pos == len(self._data)


# --- domain types ----------------------------------------------------------

def write_transform(w: Writer, t: Transform):
    w.f64(t.x)
    w.f64(t.y)
    w.f64(t.yaw)


def read_transform(r: Reader) -> Transform:
    return Transform(r.f64(), r.f64(), r.f64())


def write_control(w: Writer, a: ControlAction):
    w.f64(a.throttle)
    w.f64(a.steer)
    w.f64(a.brake)
    w.boolean(a.hand_brake)
    w.boolean(a.reverse)
    w.boolean(a.manual_gear_shift)
    w.i8(a.gear)


def read_control(r: Reader) -> ControlAction:
    return ControlAction(
        throttle=r.f64(), steer=r.f64(), brake=r.f64(),
        hand_brake=r.boolean(), reverse=r.boolean(),
        manual_gear_shift=r.boolean(), gear=r.i8(),
    )


def write_geo_location(w: Writer, g: GeoLocation):
    w.f64(g.latitude)
    w.f64(g.longitude)
    w.f64(g.altitude)


def read_geo_location(r: Reader) -> GeoLocation:
    return GeoLocation(r.f64(), r.f64(), r.f64())


def write_vehicle_state(w: Writer, s: VehicleState):
    write_transform(w, s.transform)
    w.f64(s.speed)
    w.f64(s.yaw_rate)
    w.u64(s.frame)
    w.f64(s.sim_time)


def read_vehicle_state(r: Reader) -> VehicleState:
    return VehicleState(transform=read_transform(r), speed=r.f64(),
                        yaw_rate=r.f64(), frame=r.u64(), sim_time=r.f64())


def write_blueprint(w: Writer, b: ActorBlueprint):
    w.string(b.kind.value)
    for v in (b.length, b.width, b.max_wheel_angle, b.wheelbase,
              b.max_accel, b.max_brake_decel, b.drag):
        w.f64(v)


def read_blueprint(r: Reader) -> ActorBlueprint:
    kind = ActorKind(r.string())
    return ActorBlueprint(kind, r.f64(), r.f64(), r.f64(), r.f64(),
                          r.f64(), r.f64(), r.f64())


def write_weather(w: Writer, p: WeatherParams):
    for v in (p.cloudiness, p.precipitation, p.fog_density, p.sun_altitude):
        w.f64(v)


def read_weather(r: Reader) -> WeatherParams:
    return WeatherParams(r.f64(), r.f64(), r.f64(), r.f64())


def write_world_state(w: Writer, s: WorldState):
    w.u64(s.frame)
    w.f64(s.fixed_delta)
    w.i64(s.seed)
    write_weather(w, s.weather)
    w.u32(len(s.actors))
    for snap in s.actors:
        w.u32(snap.actor_id)
        write_blueprint(w, snap.blueprint)
        write_vehicle_state(w, snap.state)
    w.u32(len(s.collisions_this_frame))
    for a, b in s.collisions_this_frame:
        w.u32(a)
        w.u32(b)


def read_world_state(r: Reader) -> WorldState:
    frame = r.u64()
    fixed_delta = r.f64()
    seed = r.i64()
    weather = read_weather(r)
    actors = tuple(ActorSnapshot(r.u32(), read_blueprint(r), read_vehicle_state(r))
                   for _ in range(r.u32()))
    collisions = tuple((r.u32(), r.u32()) for _ in range(r.u32()))
    return WorldState(frame=frame, fixed_delta=fixed_delta, actors=actors,
                      weather=WeatherParams(weather.cloudiness, weather.precipitation,
                                            weather.fog_density, weather.sun_altitude),
                      collisions_this_frame=collisions, seed=seed)


def write_world_map(w: Writer, m: WorldMap):
    w.string(m.town)
    w.f64(m.geo_origin.ref_latitude)
    w.f64(m.geo_origin.ref_longitude)
    w.f64(m.geo_origin.ref_altitude)
    w.u32(len(m.roads))
    for road in m.roads:
        w.u32(road.centerline.shape[0])
        for x, y in road.centerline:
            w.f64(float(x))
            w.f64(float(y))
        w.f64(road.width)
    w.u32(len(m.spawn_points))
    for sp in m.spawn_points:
        write_transform(w, sp)


def read_world_map(r: Reader) -> WorldMap:
    town = r.string()
    origin = GeoOrigin(r.f64(), r.f64(), r.f64())
    roads = []
    for _ in range(r.u32()):
        n = r.u32()
        pts = np.array([[r.f64(), r.f64()] for _ in range(n)], dtype=np.float64)
        roads.append(Road(pts, r.f64()))
    spawns = tuple(read_transform(r) for _ in range(r.u32()))
    return WorldMap(town=town, roads=tuple(roads), spawn_points=spawns, geo_origin=origin)


def write_sensor_spec(w: Writer, s: SensorSpec):
    w.string(s.sensor_id)
    w.string(s.kind.value)
    write_transform(w, s.mount)
    w.f64(s.noise_stddev)
    w.boolean(s.grid is not None)
    if s.grid is not None:
        w.u32(s.grid.cells_x)
        w.u32(s.grid.cells_y)
        w.f64(s.grid.meters_per_cell)


def read_sensor_spec(r: Reader) -> SensorSpec:
    sensor_id = r.string()
    kind = SensorKind(r.string())
    mount = read_transform(r)
    noise = r.f64()
    grid = None
    if r.boolean():
        grid = GridSpec(r.u32(), r.u32(), r.f64())
    return SensorSpec(sensor_id, kind, mount, noise, grid)


_READING_TAGS = {GnssReading: 1, ImuReading: 2, SpeedReading: 3, OccupancyGrid: 4}


def write_sensor_frame(w: Writer, f: SensorFrame):
    w.u64(f.frame)
    w.f64(f.sim_time)
    w.u32(len(f.readings))
    for sensor_id, reading in f.readings.items():
        w.string(sensor_id)
        tag = _READING_TAGS[type(reading)]
        w.u8(tag)
        if tag == 1:
            write_geo_location(w, reading.location)
        elif tag == 2:
            w.f64(reading.accel_x)
            w.f64(reading.accel_y)
            w.f64(reading.yaw_rate)
            w.f64(reading.compass)
        elif tag == 3:
            w.f64(reading.speed)
        else:
            w.u32(reading.cells_x)
            w.u32(reading.cells_y)
            w.f64(reading.meters_per_cell)
            w.raw(reading.cells.encode("ascii"))


def read_sensor_frame(r: Reader) -> SensorFrame:
    frame = r.u64()
    sim_time = r.f64()
    readings = {}
    for _ in range(r.u32()):
        sensor_id = r.string()
        tag = r.u8()
        if tag == 1:
            readings[sensor_id] = GnssReading(read_geo_location(r))
        elif tag == 2:
            readings[sensor_id] = ImuReading(r.f64(), r.f64(), r.f64(), r.f64())
        elif tag == 3:
            readings[sensor_id] = SpeedReading(r.f64())
        elif tag == 4:
            readings[sensor_id] = OccupancyGrid(r.u32(), r.u32(), r.f64(),
                                                r.raw().decode("ascii"))
        else:
            raise WireError(f"unknown reading tag {tag}")
    return SensorFrame(frame=frame, sim_time=sim_time, readings=readings)


def write_dense_route(w: Writer, route: DenseRoute):
    n = len(route)
    w.u32(n)
    for i in range(n):
        w.f64(float(route.xs[i]))
        w.f64(float(route.ys[i]))
        w.f64(float(route.yaws[i]))
        w.f64(float(route.arc[i]))
    w.f64(route.spacing)
    w.u32(len(route.junctions))
    for j in route.junctions:
        w.u32(int(j))


def read_dense_route(r: Reader) -> DenseRoute:
    n = r.u32()
    data = np.array([[r.f64(), r.f64(), r.f64(), r.f64()] for _ in range(n)],
                    dtype=np.float64).reshape(n, 4)
    spacing = r.f64()
    junctions = np.array([r.u32() for _ in range(r.u32())], dtype=np.intp)
    return DenseRoute(xs=data[:, 0].copy(), ys=data[:, 1].copy(),
                      yaws=data[:, 2].copy(), arc=data[:, 3].copy(),
                      spacing=spacing, junctions=junctions)


def write_geo_route(w: Writer, route: GeoRoute):
    n = len(route)
    w.u32(n)
    for i in range(n):
        w.f64(float(route.latitudes[i]))
        w.f64(float(route.longitudes[i]))
        w.f64(float(route.altitudes[i]))
        w.u8(int(route.road_options[i]))


def read_geo_route(r: Reader) -> GeoRoute:
    n = r.u32()
    lats = np.empty(n)
    lons = np.empty(n)
    alts = np.empty(n)
    options = []
    for i in range(n):
        lats[i] = r.f64()
        lons[i] = r.f64()
        alts[i] = r.f64()
        options.append(RoadOption(r.u8()))
    return GeoRoute(latitudes=lats, longitudes=lons, altitudes=alts,
                    road_options=tuple(options))


def write_parameters(w: Writer, params: dict[str, float]):
    w.u32(len(params))
    for key in sorted(params):
        w.string(key)
        w.f64(float(params[key]))


def read_parameters(r: Reader) -> dict[str, float]:
    return {r.string(): r.f64() for _ in range(r.u32())}
