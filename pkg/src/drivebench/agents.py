"""Uniform agent abstraction: naming, lifecycle, registry, reference agents.

Agent names follow ``family(_variant)?(_sN)?`` with lowercase alphanumeric
tokens and N in [1, 99].  Resolving a name yields a factory with fully derived
parameters, so switching agents is a one-string change.  Agents consume only
SensorFrames plus the routes they were configured with; they never see world
internals, hold no wall-clock state, and use no randomness beyond their
seed-derived constants, which keeps whole runs reproducible.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    ControlAction,
    HALF_PI,
    neutral_control,
    normalize_yaw,
    validate_control,
)
from .errors import MalformedName, MissingSensor, NotInitialized, RouteEmpty, UnknownAgent
from .routes import DenseRoute, GeoOrigin, GeoRoute, RouteProgress, from_geo
from .sensors import (
    CELL_OCCUPIED,
    GridSpec,
    OccupancyGrid,
    SensorFrame,
    SensorKind,
    SensorSpec,
)

# Geometry every pure-pursuit controller assumes about its vehicle; kept as
# controller constants so the agent works without reading the blueprint.
ASSUMED_WHEELBASE_M = 2.9
ASSUMED_MAX_WHEEL_ANGLE_RAD = 0.61
SPEED_KP = 0.5

_NAME_TOKEN = re.compile(r"[a-z0-9]+\Z")
_SEED_TOKEN = re.compile(r"s([1-9][0-9]?)\Z")


@dataclass(frozen=True)
class AgentDescriptor:
    """Parsed agent name: family, optional variant, optional seed index."""

    family: str
    variant: str = ""
    seed: int | None = None

    def render(self) -> str:
        name = self.family
        if self.variant:
            name += f"_{self.variant}"
        if self.seed is not None:
            name += f"_s{self.seed}"
        return name


def parse_agent_name(name: str) -> AgentDescriptor:
    if not isinstance(name, str) or not name:
        raise MalformedName(name, "empty")
    tokens = name.split("_")
    if any(not t for t in tokens):
        raise MalformedName(name, "empty token")
    seed = None
    m = _SEED_TOKEN.match(tokens[-1])
    if m and len(tokens) > 1:
        seed = int(m.group(1))
        tokens = tokens[:-1]
    if len(tokens) > 2:
        raise MalformedName(name, "too many tokens")
    for t in tokens:
        if not _NAME_TOKEN.match(t):
            raise MalformedName(name, f"token {t!r} is not lowercase alphanumeric")
    family = tokens[0]
    variant = tokens[1] if len(tokens) == 2 else ""
    return AgentDescriptor(family=family, variant=variant, seed=seed)


@dataclass(frozen=True)
class AgentConfig:
    """Everything an agent receives at setup time."""

    descriptor: AgentDescriptor
    geo_route: GeoRoute
    dense_route: DenseRoute
    parameters: dict[str, float] = field(default_factory=dict)


class Agent:
    """Lifecycle contract: setup -> run_step xN -> destroy."""

    def required_rig(self) -> tuple[SensorSpec, ...]:
        raise NotImplementedError

    def setup(self, config: AgentConfig) -> None:
        raise NotImplementedError

    def run_step(self, frame: SensorFrame) -> ControlAction:
        raise NotImplementedError

    def destroy(self) -> None:
        raise NotImplementedError


def _check_routes(config: AgentConfig) -> None:
    if len(config.dense_route) < 2 or len(config.geo_route) == 0:
        raise RouteEmpty("agent configured with an empty route")


def _derive_origin(config: AgentConfig) -> GeoOrigin:
    """Recover the geographic origin from the first waypoint pair.

    The geo route and the dense route describe the same points, so inverting
    the forward mapping at waypoint 0 pins down the origin without it being
    part of the agent's configuration.
    """
    from .routes import DEG_PER_RAD, EARTH_RADIUS_M
    lat0 = float(config.geo_route.latitudes[0])
    lon0 = float(config.geo_route.longitudes[0])
    alt0 = float(config.geo_route.altitudes[0])
    x0 = float(config.dense_route.xs[0])
    y0 = float(config.dense_route.ys[0])
    ref_lat = lat0 - (y0 / EARTH_RADIUS_M) * DEG_PER_RAD
    cos_ref = math.cos(ref_lat * math.pi / 180.0)
    ref_lon = lon0 - (x0 / (EARTH_RADIUS_M * cos_ref)) * DEG_PER_RAD
    return GeoOrigin(ref_lat, ref_lon, alt0)


_BASE_RIG = (
    SensorSpec("gnss", SensorKind.GNSS),
    SensorSpec("speedometer", SensorKind.SPEEDOMETER),
    SensorSpec("imu", SensorKind.IMU),
)

_SAFE_RIG = _BASE_RIG + (
    SensorSpec("bev", SensorKind.BEV_OCCUPANCY, grid=GridSpec(40, 40, 0.5)),
)


class NoopAgent(Agent):
    """Always outputs the neutral action; useful as a do-nothing baseline."""

    RIG = (SensorSpec("speedometer", SensorKind.SPEEDOMETER),)

    def __init__(self, parameters: dict[str, float] | None = None):
        self._ready = False

    def required_rig(self):
        return self.RIG

    def setup(self, config: AgentConfig) -> None:
        _check_routes(config)
        self._ready = True

    def run_step(self, frame: SensorFrame) -> ControlAction:
        if not self._ready:
            raise NotInitialized("noop agent not set up")
        for spec in self.RIG:
            if spec.sensor_id not in frame.readings:
                raise MissingSensor(spec.sensor_id)
        return validate_control(neutral_control())

    def destroy(self) -> None:
        self._ready = False


class PurePursuitAgent(Agent):
    """Geometric path tracker with a proportional speed controller.

    Steering aims at the route point one lookahead distance ahead of a
    forward-only progress cursor; the "safe" profile additionally brakes to a
    stop whenever the occupancy grid shows an occupied cell within its stop
    distance ahead.
    """

    def __init__(self, parameters: dict[str, float]):
        self.parameters = dict(parameters)
        self._target_speed = float(parameters["target_speed"])
        self._lookahead = float(parameters["lookahead"])
        self._kp = float(parameters.get("k_p", SPEED_KP))
        self._stop_distance = float(parameters["stop_distance"]) if "stop_distance" in parameters else None
        self._cursor: RouteProgress | None = None
        self._route: DenseRoute | None = None
        self._origin: GeoOrigin | None = None

    def required_rig(self):
        return _SAFE_RIG if self._stop_distance is not None else _BASE_RIG

    def setup(self, config: AgentConfig) -> None:
        _check_routes(config)
        self._route = config.dense_route
        self._origin = _derive_origin(config)
        self._cursor = RouteProgress(config.dense_route)

    def run_step(self, frame: SensorFrame) -> ControlAction:
        if self._cursor is None:
            raise NotInitialized("pure-pursuit agent not set up")
        for spec in self.required_rig():
            if spec.sensor_id not in frame.readings:
                raise MissingSensor(spec.sensor_id)

        gnss = frame.readings["gnss"]
        position = from_geo(gnss.location, self._origin)
        speed = frame.readings["speedometer"].speed
        compass = frame.readings["imu"].compass
        heading = normalize_yaw(HALF_PI - compass)

        self._cursor.update(position.x, position.y)
        target_arc = self._cursor.arc + self._lookahead
        tx, ty, _ = self._route.point_at_arc(target_arc)
        alpha = normalize_yaw(math.atan2(ty - position.y, tx - position.x) - heading)
        steer_angle = math.atan2(2.0 * ASSUMED_WHEELBASE_M * math.sin(alpha), self._lookahead)
        steer = max(-1.0, min(1.0, steer_angle / ASSUMED_MAX_WHEEL_ANGLE_RAD))

        error = self._target_speed - speed
        if error > 0:
            throttle = min(1.0, max(0.0, self._kp * error))
            brake = 0.0
        else:
            throttle = 0.0
            brake = min(1.0, max(0.0, -self._kp * error))

        if self._stop_distance is not None and self._obstacle_ahead(frame):
            throttle = 0.0
            brake = 1.0

        return validate_control(ControlAction(throttle=throttle, steer=steer, brake=brake))

    def _obstacle_ahead(self, frame: SensorFrame) -> bool:
        grid = frame.readings["bev"]
        if not isinstance(grid, OccupancyGrid):
            raise MissingSensor("bev")
        fwd, left = grid.local_offsets()
        occupied = np.frombuffer(grid.cells.encode("ascii"), dtype="S1") == CELL_OCCUPIED.encode("ascii")
        ahead = (fwd > 0.0) & (np.sqrt(fwd * fwd + left * left) <= self._stop_distance)
        return bool(np.any(occupied & ahead))

    def destroy(self) -> None:
        self._cursor = None
        self._route = None
        self._origin = None


@dataclass(frozen=True)
class ResolvedAgent:
    """Outcome of looking a name up in the registry."""

    descriptor: AgentDescriptor
    parameters: dict[str, float]
    rig: tuple[SensorSpec, ...]
    factory: Callable[[], Agent]

    def create(self) -> Agent:
        return self.factory()


_PP_VARIANTS = {
    "fast": {"target_speed": 8.0, "lookahead": 6.0, "k_p": SPEED_KP},
    "safe": {"target_speed": 5.0, "lookahead": 4.0, "k_p": SPEED_KP, "stop_distance": 8.0},
}


def _resolve_pp(descriptor: AgentDescriptor) -> ResolvedAgent:
    if descriptor.variant not in _PP_VARIANTS:
        raise UnknownAgent(descriptor.render())
    params = dict(_PP_VARIANTS[descriptor.variant])
    if descriptor.seed is not None:
        # seed index k scales target speed by +2%.k and lookahead by -1%.k
        params["target_speed"] *= 1.0 + 0.02 * descriptor.seed
        params["lookahead"] *= 1.0 - 0.01 * descriptor.seed
    rig = _SAFE_RIG if "stop_distance" in params else _BASE_RIG
    return ResolvedAgent(descriptor, params, rig, lambda: PurePursuitAgent(params))


def _resolve_noop(descriptor: AgentDescriptor) -> ResolvedAgent:
    # no variants and nothing to perturb, so no seeded instances either
    if descriptor.variant or descriptor.seed is not None:
        raise UnknownAgent(descriptor.render())
    return ResolvedAgent(descriptor, {}, NoopAgent.RIG, lambda: NoopAgent({}))


_FAMILIES: dict[str, Callable[[AgentDescriptor], ResolvedAgent]] = {
    "noop": _resolve_noop,
    "pp": _resolve_pp,
}


def register_family(family: str, resolver: Callable[[AgentDescriptor], ResolvedAgent]) -> None:
    """Add a family to the registry (tests and extensions hook in here)."""
    _FAMILIES[family] = resolver


def registered_families() -> tuple[str, ...]:
    return tuple(sorted(_FAMILIES))


def resolve_agent(name: str) -> ResolvedAgent:
    """Look up an agent name; same name always derives identical parameters."""
    if isinstance(name, str) and name.startswith("ext:"):
        from .remote import resolve_external
        return resolve_external(name)
    descriptor = parse_agent_name(name)
    resolver = _FAMILIES.get(descriptor.family)
    if resolver is None:
        raise UnknownAgent(name)
    return resolver(descriptor)


def list_agent_names() -> list[str]:
    """Every resolvable built-in name, sorted by family, variant, then seed."""
    names: list[tuple[str, str, int]] = [("noop", "", 0)]
    for variant in _PP_VARIANTS:
        names.append(("pp", variant, 0))
        names.extend(("pp", variant, s) for s in range(1, 100))
    names.sort()
    out = []
    for family, variant, seed in names:
        out.append(AgentDescriptor(family, variant, seed if seed else None).render())
    return out
