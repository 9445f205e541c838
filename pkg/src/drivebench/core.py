"""Shared domain types: control commands, planar poses, vehicle state, geographic points.

All types are immutable values and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

from .errors import NonFinite, OutOfRange

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


def normalize_yaw(angle: float) -> float:
    """Wrap an angle in radians to the interval (-pi, pi]."""
    if not math.isfinite(angle):
        raise NonFinite("angle", angle)
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class ControlAction:
    """Per-frame vehicle command.

    The seven fields, in this order, are the canonical flat record used by
    logs and the wire protocol: throttle, steer, brake, hand_brake, reverse,
    manual_gear_shift, gear.  throttle/brake are unit-interval fractions,
    steer is a normalized lateral command in [-1, 1] (positive steers left).
    """

    throttle: float = 0.0
    steer: float = 0.0
    brake: float = 0.0
    hand_brake: bool = False
    reverse: bool = False
    manual_gear_shift: bool = False
    gear: int = 0

    FIELDS: ClassVar[tuple[str, ...]] = (
        "throttle", "steer", "brake", "hand_brake", "reverse",
        "manual_gear_shift", "gear",
    )

    def as_record(self) -> dict:
        """Flat record with the seven fields in canonical order."""
        return {name: getattr(self, name) for name in self.FIELDS}

    @classmethod
    def from_record(cls, record: dict) -> "ControlAction":
        return cls(
            throttle=float(record["throttle"]),
            steer=float(record["steer"]),
            brake=float(record["brake"]),
            hand_brake=bool(record["hand_brake"]),
            reverse=bool(record["reverse"]),
            manual_gear_shift=bool(record["manual_gear_shift"]),
            gear=int(record["gear"]),
        )


def neutral_control() -> ControlAction:
    """All-zero command: applying it to a stationary vehicle does nothing."""
    return ControlAction()


def safe_stop_control() -> ControlAction:
    """Neutral command with full brake, substituted when an agent fails."""
    return ControlAction(brake=1.0)


_UNIT_BOUNDS = (("throttle", 0.0, 1.0), ("brake", 0.0, 1.0), ("steer", -1.0, 1.0))


def validate_control(action: ControlAction) -> ControlAction:
    """Return ``action`` unchanged if every bound holds.

    Raises OutOfRange naming the first violated bound, checked in the order
    throttle, brake, steer, gear.
    """
    for name, lo, hi in _UNIT_BOUNDS:
        value = getattr(action, name)
        if not (lo <= value <= hi):  # also rejects NaN
            raise OutOfRange(name, value)
    if not (-1 <= action.gear <= 6):
        raise OutOfRange("gear", action.gear)
    if action.reverse and action.manual_gear_shift and action.gear > 0:
        raise OutOfRange("gear", action.gear)
    return action


@dataclass(frozen=True)
class Transform:
    """Planar pose in the map frame: x east, y north (meters), yaw CCW from +x.

    yaw is normalized to (-pi, pi] at construction.
    """

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise NonFinite("x" if not math.isfinite(self.x) else "y",
                            self.x if not math.isfinite(self.x) else self.y)
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    def apply_offset(self, dx: float, dy: float) -> tuple[float, float]:
        """World coordinates of a point given in this pose's local frame."""
        c = math.cos(self.yaw)
        s = math.sin(self.yaw)
        return self.x + dx * c - dy * s, self.y + dx * s + dy * c


@dataclass(frozen=True)
class VehicleState:
    """Kinematic snapshot of one actor at a simulation frame."""

    transform: Transform
    speed: float = 0.0          # m/s, signed; negative while reversing
    yaw_rate: float = 0.0       # rad/s
    frame: int = 0
    sim_time: float = 0.0       # seconds; always frame * fixed_delta

    def __post_init__(self):
        if not math.isfinite(self.speed):
            raise NonFinite("speed", self.speed)

    def velocity(self) -> tuple[float, float]:
        return (self.speed * math.cos(self.transform.yaw),
                self.speed * math.sin(self.transform.yaw))


@dataclass(frozen=True)
class GeoLocation:
    """Geodetic point in degrees / meters."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise OutOfRange("latitude", self.latitude)
        if not (-180.0 <= self.longitude <= 180.0):
            raise OutOfRange("longitude", self.longitude)
