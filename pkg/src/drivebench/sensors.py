"""Sensor rigs: GNSS, IMU, speedometer, and a bird's-eye occupancy grid.

Sensors observe world snapshots; they never read the integrator's internals.
The IMU differentiates the observed velocity between the last two samples,
and the occupancy grid classifies cell centers against actor bounding boxes
and the road network.  Per-sensor noise streams are seeded from the world
seed and the sensor id, so equal seeds reproduce equal readings.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .core import GeoLocation, HALF_PI, Transform, normalize_yaw
from .errors import DuplicateSensorId, EmptyRig, OutOfRange
from .geometry import points_in_obb, points_to_polyline_distance
from .routes import point_to_geo

CELL_FREE = "."
CELL_OCCUPIED = "X"
CELL_OFF_ROAD = "~"
CELL_EGO = "E"


class SensorKind(str, enum.Enum):
    GNSS = "gnss"
    IMU = "imu"
    SPEEDOMETER = "speedometer"
    BEV_OCCUPANCY = "bev_occupancy"


@dataclass(frozen=True)
class GridSpec:
    cells_x: int
    cells_y: int
    meters_per_cell: float

    def __post_init__(self):
        if self.cells_x <= 0:
            raise OutOfRange("cells_x", self.cells_x)
        if self.cells_y <= 0:
            raise OutOfRange("cells_y", self.cells_y)
        if not self.meters_per_cell > 0:
            raise OutOfRange("meters_per_cell", self.meters_per_cell)


@dataclass(frozen=True)
class SensorSpec:
    """One sensor slot in a rig: what it is and where it sits on the vehicle."""

    sensor_id: str
    kind: SensorKind
    mount: Transform = field(default_factory=Transform)
    noise_stddev: float = 0.0
    grid: GridSpec | None = None

    def __post_init__(self):
        if self.kind is SensorKind.BEV_OCCUPANCY and self.grid is None:
            raise OutOfRange("grid", None)
        if self.noise_stddev < 0:
            raise OutOfRange("noise_stddev", self.noise_stddev)


@dataclass(frozen=True)
class GnssReading:
    location: GeoLocation


@dataclass(frozen=True)
class ImuReading:
    accel_x: float      # forward, m/s^2
    accel_y: float      # left, m/s^2
    yaw_rate: float     # rad/s
    compass: float      # radians clockwise from north


@dataclass(frozen=True)
class SpeedReading:
    speed: float        # m/s, unsigned


@dataclass(frozen=True)
class OccupancyGrid:
    """Ego-centered, ego-aligned grid. Row 0 is the farthest-forward row,
    column 0 the leftmost; ``cells`` is row-major over the 4-symbol alphabet
    '.', 'X', '~', 'E' (free / occupied / off-road / ego)."""

    cells_x: int
    cells_y: int
    meters_per_cell: float
    cells: str

    def cell(self, row: int, col: int) -> str:
        return self.cells[row * self.cells_y + col]

    def local_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Forward/left offsets (meters) of each cell center, row-major."""
        m = self.meters_per_cell
        rows = ((self.cells_x - 1) / 2.0 - np.arange(self.cells_x)) * m
        cols = ((self.cells_y - 1) / 2.0 - np.arange(self.cells_y)) * m
        fwd = np.repeat(rows, self.cells_y)
        left = np.tile(cols, self.cells_x)
        return fwd, left


Reading = GnssReading | ImuReading | SpeedReading | OccupancyGrid


@dataclass(frozen=True)
class SensorFrame:
    """Everything an agent sees for one frame: one reading per rig sensor."""

    frame: int
    sim_time: float
    readings: dict[str, Reading]


def build_rig(specs: list[SensorSpec] | tuple[SensorSpec, ...]) -> "SensorRig":
    """Assemble a rig from sensor specs; ids must be unique and non-empty."""
    specs = tuple(specs)
    if not specs:
        raise EmptyRig("a rig needs at least one sensor")
    seen = set()
    for spec in specs:
        if spec.sensor_id in seen:
            raise DuplicateSensorId(spec.sensor_id)
        seen.add(spec.sensor_id)
    return SensorRig(specs)


def _noise_rng(world_seed: int, sensor_id: str) -> np.random.Generator:
    digest = hashlib.sha256(sensor_id.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([world_seed & 0xFFFFFFFFFFFFFFFF, key])))


class SensorRig:
    """Stateful rig bound to one vehicle: noise streams plus the previous
    sample needed for finite differences.  Single-owner."""

    def __init__(self, specs: tuple[SensorSpec, ...]):
        self.specs = specs
        self._rngs: dict[str, np.random.Generator] = {}
        self._rng_seed: int | None = None
        self._prev: tuple[int, float, float, float] | None = None  # frame, vx, vy, yaw
        self._prev_imu: ImuReading | None = None

    def _rng(self, world_seed: int, sensor_id: str) -> np.random.Generator:
        if self._rng_seed != world_seed:
            self._rngs = {}
            self._rng_seed = world_seed
        if sensor_id not in self._rngs:
            self._rngs[sensor_id] = _noise_rng(world_seed, sensor_id)
        return self._rngs[sensor_id]

    def sample(self, world, ego_id: int) -> SensorFrame:
        return sample(self, world, ego_id)


def sample(rig: SensorRig, world, ego_id: int) -> SensorFrame:
    """Read every sensor in the rig against the world's current state."""
    state = world.state()
    ego = state.actor(ego_id)  # raises NoSuchActor
    readings: dict[str, Reading] = {}
    for spec in rig.specs:
        if spec.kind is SensorKind.GNSS:
            readings[spec.sensor_id] = _sample_gnss(rig, spec, world, ego, state)
        elif spec.kind is SensorKind.IMU:
            readings[spec.sensor_id] = _sample_imu(rig, spec, ego, state)
        elif spec.kind is SensorKind.SPEEDOMETER:
            readings[spec.sensor_id] = SpeedReading(abs(ego.state.speed))
        elif spec.kind is SensorKind.BEV_OCCUPANCY:
            readings[spec.sensor_id] = _sample_bev(spec, world, ego, state)
    tform = ego.state.transform
    rig._prev = (ego.state.frame, *ego.state.velocity(), tform.yaw)
    return SensorFrame(frame=state.frame, sim_time=state.frame * state.fixed_delta,
                       readings=readings)


def _sample_gnss(rig: SensorRig, spec: SensorSpec, world, ego, state) -> GnssReading:
    x, y = ego.state.transform.apply_offset(spec.mount.x, spec.mount.y)
    if spec.noise_stddev > 0:
        rng = rig._rng(state.seed, spec.sensor_id)
        x += spec.noise_stddev * rng.standard_normal()
        y += spec.noise_stddev * rng.standard_normal()
    return GnssReading(point_to_geo(x, y, world.world_map.geo_origin))


def _sample_imu(rig: SensorRig, spec: SensorSpec, ego, state) -> ImuReading:
    yaw = ego.state.transform.yaw
    compass = normalize_yaw(HALF_PI - yaw)
    prev = rig._prev
    if prev is None or prev[0] >= ego.state.frame:
        # first sample, or re-sample of the same frame: reuse/zero
        if prev is not None and prev[0] == ego.state.frame and rig._prev_imu is not None:
            return rig._prev_imu
        reading = ImuReading(0.0, 0.0, 0.0, compass)
        rig._prev_imu = reading
        return reading
    dt = (ego.state.frame - prev[0]) * state.fixed_delta
    vx, vy = ego.state.velocity()
    ax_world = (vx - prev[1]) / dt
    ay_world = (vy - prev[2]) / dt
    c, s = math.cos(yaw), math.sin(yaw)
    accel_x = ax_world * c + ay_world * s
    accel_y = -ax_world * s + ay_world * c
    if spec.noise_stddev > 0:
        rng = rig._rng(state.seed, spec.sensor_id)
        accel_x += spec.noise_stddev * rng.standard_normal()
        accel_y += spec.noise_stddev * rng.standard_normal()
    yaw_rate = normalize_yaw(yaw - prev[3]) / dt
    reading = ImuReading(accel_x, accel_y, yaw_rate, compass)
    rig._prev_imu = reading
    return reading


def _sample_bev(spec: SensorSpec, world, ego, state) -> OccupancyGrid:
    grid = spec.grid
    template = OccupancyGrid(grid.cells_x, grid.cells_y, grid.meters_per_cell, "")
    fwd, left = template.local_offsets()
    t = ego.state.transform
    c, s = math.cos(t.yaw), math.sin(t.yaw)
    wx = t.x + fwd * c - left * s
    wy = t.y + fwd * s + left * c
    points = np.column_stack([wx, wy])

    n = points.shape[0]
    cells = np.full(n, CELL_FREE, dtype="<U1")

    # off-road first, then occupancy, then the ego footprint on top
    off = np.full(n, np.inf)
    for road in world.world_map.roads:
        d = points_to_polyline_distance(points, road.centerline) - 0.5 * road.width
        off = np.minimum(off, d)
    cells[off > 0] = CELL_OFF_ROAD

    for snap in state.actors:
        if snap.actor_id == ego.actor_id:
            continue
        ot = snap.state.transform
        inside = points_in_obb(points, ot.x, ot.y, ot.yaw,
                               snap.blueprint.length, snap.blueprint.width)
        cells[inside] = CELL_OCCUPIED

    inside_ego = points_in_obb(points, t.x, t.y, t.yaw,
                               ego.blueprint.length, ego.blueprint.width)
    cells[inside_ego] = CELL_EGO

    return OccupancyGrid(grid.cells_x, grid.cells_y, grid.meters_per_cell,
                         "".join(cells.tolist()))


def required_rig_for(agent_name: str) -> tuple[SensorSpec, ...]:
    """Canonical sensor list declared by the named agent's family."""
    from .agents import resolve_agent  # late import: agents declare their rigs
    resolved = resolve_agent(agent_name)
    if resolved.rig:
        return resolved.rig
    # external agents declare their rig over the wire
    return resolved.create().required_rig()
