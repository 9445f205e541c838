"""Deterministic tick-based world: map, actors, bicycle dynamics, collisions.

The world advances only through `World.tick`, one fixed time step at a time.
Vehicles integrate a kinematic bicycle model with a semi-implicit update
(speed, then heading, then position); scripted actors follow their assigned
route at constant speed; everything else stands still.  There is no contact
response: collisions are detected and reported, never resolved.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ControlAction, Transform, VehicleState, neutral_control, normalize_yaw, validate_control
from .errors import (
    NoRoads,
    NoSuchActor,
    NotAVehicle,
    OutOfRange,
    ParseError,
    SpawnCollision,
)
from .geometry import obb_overlap, point_to_polyline_distance
from .routes import DenseRoute, GeoOrigin

DEFAULT_FIXED_DELTA = 0.05  # seconds; 20 Hz fixed-step mode


class ActorKind(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    STATIC_PROP = "static_prop"


@dataclass(frozen=True)
class ActorBlueprint:
    """Physical description of a spawnable actor.

    The dynamics fields only matter for vehicles; they stay zero for
    pedestrians and props.
    """

    kind: ActorKind
    length: float
    width: float
    max_wheel_angle: float = 0.0   # radians
    wheelbase: float = 0.0         # meters
    max_accel: float = 0.0         # m/s^2
    max_brake_decel: float = 0.0   # m/s^2
    drag: float = 0.0              # 1/s

    def __post_init__(self):
        if not self.length > 0:
            raise OutOfRange("length", self.length)
        if not self.width > 0:
            raise OutOfRange("width", self.width)
        if self.kind is ActorKind.VEHICLE:
            if not (0 < self.max_wheel_angle < math.pi / 2):
                raise OutOfRange("max_wheel_angle", self.max_wheel_angle)
            if not self.wheelbase > 0:
                raise OutOfRange("wheelbase", self.wheelbase)


def vehicle_blueprint(*, length: float = 4.5, width: float = 2.0,
                      max_wheel_angle: float = 0.61, wheelbase: float = 2.9,
                      max_accel: float = 3.0, max_brake_decel: float = 8.0,
                      drag: float = 0.1) -> ActorBlueprint:
    """Default passenger-car parameters used by the bundled scenarios."""
    return ActorBlueprint(ActorKind.VEHICLE, length, width, max_wheel_angle,
                          wheelbase, max_accel, max_brake_decel, drag)


def pedestrian_blueprint(*, length: float = 0.5, width: float = 0.5) -> ActorBlueprint:
    return ActorBlueprint(ActorKind.PEDESTRIAN, length, width)


def static_prop_blueprint(*, length: float = 2.0, width: float = 2.0) -> ActorBlueprint:
    return ActorBlueprint(ActorKind.STATIC_PROP, length, width)


@dataclass(frozen=True)
class WeatherParams:
    """Ambient conditions; recorded and echoed, no effect on dynamics."""

    cloudiness: float = 0.0
    precipitation: float = 0.0
    fog_density: float = 0.0
    sun_altitude: float = 45.0

    def __post_init__(self):
        for name in ("cloudiness", "precipitation", "fog_density"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise OutOfRange(name, v)
        if not (-90.0 <= self.sun_altitude <= 90.0):
            raise OutOfRange("sun_altitude", self.sun_altitude)


@dataclass(frozen=True)
class Road:
    centerline: np.ndarray  # (M, 2) meters
    width: float

    def __post_init__(self):
        self.centerline.setflags(write=False)


@dataclass(frozen=True)
class WorldMap:
    town: str
    roads: tuple[Road, ...]
    spawn_points: tuple[Transform, ...]
    geo_origin: GeoOrigin


@dataclass(frozen=True)
class ActorSnapshot:
    actor_id: int
    blueprint: ActorBlueprint
    state: VehicleState


@dataclass(frozen=True)
class WorldInfo:
    """Static facts a client needs about the world it is driving."""

    world_map: WorldMap
    seed: int
    fixed_delta: float
    frame: int


@dataclass(frozen=True)
class WorldState:
    """Immutable per-tick snapshot; safe to share across threads."""

    frame: int
    fixed_delta: float
    actors: tuple[ActorSnapshot, ...]
    weather: WeatherParams
    collisions_this_frame: tuple[tuple[int, int], ...]
    seed: int

    def actor(self, actor_id: int) -> ActorSnapshot:
        for snap in self.actors:
            if snap.actor_id == actor_id:
                return snap
        raise NoSuchActor(actor_id)


# --- map loading -----------------------------------------------------------

def _require(doc: dict, context: str, allowed: set[str], required: set[str]):
    unknown = set(doc) - allowed
    if unknown:
        raise ParseError(0, f"{context}: unknown field {sorted(unknown)[0]!r}")
    missing = required - set(doc)
    if missing:
        raise ParseError(0, f"{context}: missing field {sorted(missing)[0]!r}")


def load_map(text: str) -> WorldMap:
    """Parse a map document (JSON; schema in the README).

    Unknown fields are rejected so typos fail loudly instead of being ignored.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"invalid JSON: {exc.msg}") from exc
    try:
        return _load_map_doc(doc)
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(0, f"bad value in map document: {exc}") from exc


def _load_map_doc(doc) -> WorldMap:
    if not isinstance(doc, dict):
        raise ParseError(0, "map document must be an object")
    _require(doc, "map", {"town", "geo_origin", "roads", "spawn_points"},
             {"town", "geo_origin", "roads"})

    origin_doc = doc["geo_origin"]
    if not isinstance(origin_doc, dict):
        raise ParseError(0, "geo_origin must be an object")
    _require(origin_doc, "geo_origin", {"latitude", "longitude", "altitude"},
             {"latitude", "longitude"})
    origin = GeoOrigin(float(origin_doc["latitude"]), float(origin_doc["longitude"]),
                       float(origin_doc.get("altitude", 0.0)))

    roads_doc = doc["roads"]
    if not isinstance(roads_doc, list):
        raise ParseError(0, "roads must be a list")
    if not roads_doc:
        raise NoRoads("map has no roads")
    roads = []
    for i, rd in enumerate(roads_doc):
        if not isinstance(rd, dict):
            raise ParseError(0, f"roads[{i}] must be an object")
        _require(rd, f"roads[{i}]", {"centerline", "width"}, {"centerline", "width"})
        pts = rd["centerline"]
        if not isinstance(pts, list) or len(pts) < 2:
            raise ParseError(0, f"roads[{i}]: centerline needs at least 2 points")
        centerline = np.array([[float(p[0]), float(p[1])] for p in pts], dtype=np.float64)
        width = float(rd["width"])
        if not width > 0:
            raise ParseError(0, f"roads[{i}]: width must be positive")
        roads.append(Road(centerline, width))

    spawns = []
    for i, sp in enumerate(doc.get("spawn_points", [])):
        if not isinstance(sp, dict):
            raise ParseError(0, f"spawn_points[{i}] must be an object")
        _require(sp, f"spawn_points[{i}]", {"x", "y", "yaw_deg"}, {"x", "y"})
        spawns.append(Transform(float(sp["x"]), float(sp["y"]),
                                math.radians(float(sp.get("yaw_deg", 0.0)))))

    return WorldMap(town=str(doc["town"]), roads=tuple(roads),
                    spawn_points=tuple(spawns), geo_origin=origin)


def load_map_path(path) -> WorldMap:
    with open(path, "r", encoding="utf-8") as fh:
        return load_map(fh.read())


def off_road_distance(world_map: WorldMap, position: Transform | tuple[float, float]) -> float:
    """How far a position lies outside every road envelope (0 when on a road)."""
    x, y = (position.x, position.y) if isinstance(position, Transform) else position
    best = math.inf
    for road in world_map.roads:
        d = point_to_polyline_distance(x, y, road.centerline) - 0.5 * road.width
        best = min(best, d)
    return max(0.0, best)


# --- dynamics --------------------------------------------------------------

def integrate_vehicle(state: VehicleState, control: ControlAction,
                      blueprint: ActorBlueprint, dt: float) -> VehicleState:
    """One semi-implicit step of the kinematic bicycle model.

    Order matters: speed first, then heading using the new speed, then
    position using the new heading.  Braking clamps speed at zero instead of
    crossing it; driving backwards requires the reverse flag.
    """
    speed = state.speed
    if control.hand_brake:
        new_speed = max(0.0, speed - blueprint.max_brake_decel * dt)
    else:
        drive = control.throttle * blueprint.max_accel - control.brake * blueprint.max_brake_decel
        if control.reverse:
            drive = -drive
        accel = drive - blueprint.drag * speed
        new_speed = speed + accel * dt
        if control.brake > 0.0:
            crossed = (speed > 0.0 and new_speed < 0.0) or (speed < 0.0 and new_speed > 0.0)
            if speed == 0.0:
                # from standstill the brake may hold, never push
                crossed = (new_speed < 0.0) if not control.reverse else (new_speed > 0.0)
            if crossed:
                new_speed = 0.0

    wheel = control.steer * blueprint.max_wheel_angle
    yaw_rate = (new_speed / blueprint.wheelbase) * math.tan(wheel) if blueprint.wheelbase > 0 else 0.0
    new_yaw = normalize_yaw(state.transform.yaw + yaw_rate * dt)
    new_x = state.transform.x + new_speed * math.cos(new_yaw) * dt
    new_y = state.transform.y + new_speed * math.sin(new_yaw) * dt
    new_frame = state.frame + 1
    return VehicleState(
        transform=Transform(new_x, new_y, new_yaw),
        speed=new_speed,
        yaw_rate=yaw_rate,
        frame=new_frame,
        sim_time=new_frame * dt,
    )


@dataclass
class _Actor:
    actor_id: int
    blueprint: ActorBlueprint
    state: VehicleState
    control: ControlAction = field(default_factory=neutral_control)
    pending_control: ControlAction | None = None
    script_route: DenseRoute | None = None
    script_speed: float = 0.0
    script_arc: float = 0.0


@dataclass(frozen=True)
class SpawnRecord:
    """Journal entry so a run log can reconstruct the world's population."""

    blueprint: ActorBlueprint
    at: Transform


class World:
    """Single-writer simulation container.

    All mutation goes through one owner; `state()` snapshots are immutable
    and freely shareable.  Identical maps, seeds, spawn sequences, and control
    sequences produce bit-identical state streams.
    """

    def __init__(self, world_map: WorldMap, seed: int = 0,
                 fixed_delta: float = DEFAULT_FIXED_DELTA):
        if not fixed_delta > 0:
            raise OutOfRange("fixed_delta", fixed_delta)
        self.world_map = world_map
        self.seed = int(seed)
        self.fixed_delta = float(fixed_delta)
        self.frame = 0
        self.weather = WeatherParams()
        self._actors: dict[int, _Actor] = {}
        self._next_id = 1
        self._collisions: tuple[tuple[int, int], ...] = ()
        self._journal: list[SpawnRecord] = []

    # -- population --------------------------------------------------------

    def spawn_actor(self, blueprint: ActorBlueprint, at: Transform) -> int:
        for other in self._actors.values():
            t = other.state.transform
            if obb_overlap((at.x, at.y, at.yaw), (blueprint.length, blueprint.width),
                           (t.x, t.y, t.yaw), (other.blueprint.length, other.blueprint.width)):
                raise SpawnCollision(other.actor_id)
        actor_id = self._next_id
        self._next_id += 1
        state = VehicleState(transform=at, speed=0.0, yaw_rate=0.0,
                             frame=self.frame, sim_time=self.frame * self.fixed_delta)
        self._actors[actor_id] = _Actor(actor_id, blueprint, state)
        self._journal.append(SpawnRecord(blueprint, at))
        return actor_id

    def actor_ids(self) -> tuple[int, ...]:
        return tuple(self._actors)

    def spawn_journal(self) -> tuple[SpawnRecord, ...]:
        return tuple(self._journal)

    def _get(self, actor_id: int) -> _Actor:
        try:
            return self._actors[actor_id]
        except KeyError:
            raise NoSuchActor(actor_id) from None

    # -- commands ----------------------------------------------------------

    def apply_control(self, actor_id: int, action: ControlAction) -> None:
        actor = self._get(actor_id)
        if actor.blueprint.kind is not ActorKind.VEHICLE:
            raise NotAVehicle(actor_id)
        actor.pending_control = validate_control(action)

    def set_weather(self, params: WeatherParams) -> None:
        self.weather = params

    def set_script_route(self, actor_id: int, route: DenseRoute, speed: float) -> None:
        """Assign a constant-speed mission to an NPC (or any actor)."""
        if not speed >= 0:
            raise OutOfRange("script_speed", speed)
        actor = self._get(actor_id)
        actor.script_route = route
        actor.script_speed = float(speed)
        actor.script_arc = 0.0

    # -- time --------------------------------------------------------------

    def tick(self) -> WorldState:
        dt = self.fixed_delta
        self.frame += 1
        for actor in self._actors.values():
            if actor.pending_control is not None:
                actor.control = actor.pending_control
                actor.pending_control = None
            if actor.script_route is not None:
                self._advance_scripted(actor, dt)
            elif actor.blueprint.kind is ActorKind.VEHICLE:
                actor.state = integrate_vehicle(actor.state, actor.control,
                                                actor.blueprint, dt)
            else:
                actor.state = replace(actor.state, frame=self.frame,
                                      sim_time=self.frame * dt)
        self._collisions = self._collision_pairs()
        return self.state()

    def _advance_scripted(self, actor: _Actor, dt: float) -> None:
        route = actor.script_route
        total = route.total_length
        new_arc = min(total, actor.script_arc + actor.script_speed * dt)
        x, y, yaw = route.point_at_arc(new_arc)
        old_yaw = actor.state.transform.yaw
        moving = new_arc < total and actor.script_speed > 0
        actor.script_arc = new_arc
        actor.state = VehicleState(
            transform=Transform(x, y, yaw),
            speed=actor.script_speed if moving else 0.0,
            yaw_rate=normalize_yaw(yaw - old_yaw) / dt,
            frame=self.frame,
            sim_time=self.frame * dt,
        )

    def _collision_pairs(self) -> tuple[tuple[int, int], ...]:
        ids = sorted(self._actors)
        pairs = []
        for i, a in enumerate(ids):
            actor_a = self._actors[a]
            ta = actor_a.state.transform
            for b in ids[i + 1:]:
                actor_b = self._actors[b]
                tb = actor_b.state.transform
                if obb_overlap((ta.x, ta.y, ta.yaw),
                               (actor_a.blueprint.length, actor_a.blueprint.width),
                               (tb.x, tb.y, tb.yaw),
                               (actor_b.blueprint.length, actor_b.blueprint.width)):
                    pairs.append((a, b))
        return tuple(pairs)

    # -- snapshots ----------------------------------------------------------

    def state(self) -> WorldState:
        snaps = tuple(ActorSnapshot(a.actor_id, a.blueprint, a.state)
                      for a in self._actors.values())
        return WorldState(frame=self.frame, fixed_delta=self.fixed_delta,
                          actors=snaps, weather=self.weather,
                          collisions_this_frame=self._collisions, seed=self.seed)


def detect_collisions(world: World) -> list[tuple[int, int]]:
    """All currently overlapping actor pairs, sorted by id."""
    return list(world._collision_pairs())
