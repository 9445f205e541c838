"""Exception types raised across the package.

Kept in one module so the CLI can map them onto exit codes without
importing every subsystem.
"""

from __future__ import annotations


class Error(Exception):
    """Base class for every drivebench error."""


class OutOfRange(Error):
    """A numeric field violated its documented bounds."""

    def __init__(self, field: str, value):
        super().__init__(f"{field} out of range: {value!r}")
        self.field = field
        self.value = value


class NonFinite(Error):
    """An angle or coordinate was NaN or infinite."""

    def __init__(self, field: str, value):
        super().__init__(f"{field} must be finite, got {value!r}")
        self.field = field
        self.value = value


# --- route files ---------------------------------------------------------

class ParseError(Error):
    """A route or map document could not be parsed."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyRoute(Error):
    """Route has fewer than two usable waypoints."""


class DuplicateConsecutivePoint(Error):
    """Two consecutive route keypoints coincide."""

    def __init__(self, index: int):
        super().__init__(f"keypoints {index - 1} and {index} coincide")
        self.index = index


class InvalidSpacing(Error):
    """Interpolation spacing must be a positive finite number."""

    def __init__(self, spacing):
        super().__init__(f"invalid spacing: {spacing!r}")
        self.spacing = spacing


class OriginDegenerate(Error):
    """Geographic origin too close to a pole for the planar mapping."""


# --- world ---------------------------------------------------------------

class NoRoads(Error):
    """Map document contains no roads."""


class SpawnCollision(Error):
    """Spawn transform overlaps an existing actor."""

    def __init__(self, existing_id: int):
        super().__init__(f"spawn overlaps actor {existing_id}")
        self.existing_id = existing_id


class NoSuchActor(Error):
    def __init__(self, actor_id: int):
        super().__init__(f"no actor with id {actor_id}")
        self.actor_id = actor_id


class NotAVehicle(Error):
    def __init__(self, actor_id: int):
        super().__init__(f"actor {actor_id} is not a vehicle")
        self.actor_id = actor_id


# --- sensors -------------------------------------------------------------

class DuplicateSensorId(Error):
    def __init__(self, sensor_id: str):
        super().__init__(f"duplicate sensor id {sensor_id!r}")
        self.sensor_id = sensor_id


class EmptyRig(Error):
    """A sensor rig needs at least one sensor."""


class MissingSensor(Error):
    def __init__(self, sensor_id: str):
        super().__init__(f"frame is missing sensor {sensor_id!r}")
        self.sensor_id = sensor_id


# --- agents --------------------------------------------------------------

class UnknownAgent(Error):
    def __init__(self, name: str):
        super().__init__(f"unknown agent {name!r}")
        self.name = name


class MalformedName(Error):
    def __init__(self, name: str, reason: str = ""):
        detail = f": {reason}" if reason else ""
        super().__init__(f"malformed agent name {name!r}{detail}")
        self.name = name


class RouteEmpty(Error):
    """Agent configured with an empty route."""


class NotInitialized(Error):
    """Agent stepped before setup or after destroy."""


# --- harness -------------------------------------------------------------

class OutOfLockstep(Error):
    """World ticked out of step with get_action calls."""


class LogCorrupt(Error):
    """Run log unreadable, truncated, or structurally invalid."""


class DeterminismViolation(Error):
    """Replay diverged from the recorded trajectory."""

    def __init__(self, frame: int):
        super().__init__(f"replay diverged at frame {frame}")
        self.frame = frame


# --- wire protocol -------------------------------------------------------

class BindFailure(Error):
    """Server could not bind its address/port."""


class VersionMismatch(Error):
    def __init__(self, server_version: int):
        super().__init__(f"server speaks protocol version {server_version}")
        self.server_version = server_version


class Forbidden(Error):
    """Operation not permitted for this session's role."""


class WireError(Error):
    """Malformed envelope or payload on the wire."""


class DuplicateRequest(Error):
    def __init__(self, request_id: int):
        super().__init__(f"request id {request_id} already used in this session")
        self.request_id = request_id
