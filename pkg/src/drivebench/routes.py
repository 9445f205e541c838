"""Route files, dense interpolation, geodetic conversion, and progress tracking.

A sparse keypoint route (XML, yaw in degrees) is densified by piecewise-linear
interpolation so consecutive waypoints sit at most ``spacing`` meters apart,
then mapped to latitude/longitude around the map's geographic origin using an
equirectangular local-tangent-plane projection (spherical radius 6,371,000 m).
The projection is closed-form invertible, which `from_geo` exploits.
"""

from __future__ import annotations

import enum
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .core import GeoLocation, Transform, normalize_yaw
from .errors import (
    DuplicateConsecutivePoint,
    EmptyRoute,
    InvalidSpacing,
    OriginDegenerate,
    OutOfRange,
    ParseError,
)

EARTH_RADIUS_M = 6_371_000.0
DEG_PER_RAD = 180.0 / math.pi
RAD_PER_DEG = math.pi / 180.0

#: Heading change below which a junction counts as going straight.
TURN_THRESHOLD_RAD = 0.1

#: Default max gap between dense waypoints.
DEFAULT_SPACING_M = 1.0

#: Consecutive keypoints closer than this are considered coincident.
MIN_POINT_SEPARATION_M = 1e-9


class RoadOption(enum.IntEnum):
    LANE_FOLLOW = 1
    LEFT = 2
    RIGHT = 3
    STRAIGHT = 4


@dataclass(frozen=True)
class GeoOrigin:
    """Reference point anchoring the map frame on the globe."""

    ref_latitude: float
    ref_longitude: float
    ref_altitude: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.ref_latitude) or not (abs(self.ref_latitude) < 89.0):
            raise OriginDegenerate(
                f"ref_latitude {self.ref_latitude!r} too close to a pole "
                "(cosine would be degenerate)")
        if not (-180.0 <= self.ref_longitude <= 180.0):
            raise OutOfRange("ref_longitude", self.ref_longitude)

    def cos_ref_latitude(self) -> float:
        c = math.cos(self.ref_latitude * RAD_PER_DEG)
        if c < 1e-6:
            raise OriginDegenerate(f"cos(ref_latitude) = {c!r} below 1e-6")
        return c


@dataclass(frozen=True)
class RouteFile:
    """Parsed route document: an ordered list of sparse keypoints."""

    route_id: str
    town: str
    keypoints: tuple[Transform, ...]


@dataclass(frozen=True)
class DenseRoute:
    """Interpolated waypoint trajectory, array-backed.

    ``arc`` holds the cumulative polyline distance from the start; it is
    strictly increasing and starts at 0.  ``junctions`` marks the dense
    indices that coincide with interior keypoints of the source route.
    """

    xs: np.ndarray
    ys: np.ndarray
    yaws: np.ndarray
    arc: np.ndarray
    spacing: float
    junctions: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    def __post_init__(self):
        n = self.xs.size
        if any(getattr(self, name).size != n for name in ("ys", "yaws", "arc")):
            raise OutOfRange("waypoints", "mismatched array lengths")
        if n > 0 and (self.arc[0] != 0.0 or not bool(np.all(np.diff(self.arc) > 0))):
            raise OutOfRange("arc", "must start at 0 and be strictly increasing")
        for name in ("xs", "ys", "yaws", "arc", "junctions"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return int(self.xs.size)

    @property
    def total_length(self) -> float:
        return float(self.arc[-1])

    def waypoint(self, i: int) -> tuple[Transform, float]:
        return (Transform(float(self.xs[i]), float(self.ys[i]), float(self.yaws[i])),
                float(self.arc[i]))

    def point_at_arc(self, s: float) -> tuple[float, float, float]:
        """Position and heading at arc distance ``s`` along the polyline."""
        if s <= 0.0:
            return float(self.xs[0]), float(self.ys[0]), float(self.yaws[0])
        if s >= self.total_length:
            return float(self.xs[-1]), float(self.ys[-1]), float(self.yaws[-1])
        i = int(np.searchsorted(self.arc, s, side="right")) - 1
        i = min(i, len(self) - 2)
        t = (s - float(self.arc[i])) / (float(self.arc[i + 1]) - float(self.arc[i]))
        x = float(self.xs[i]) + t * (float(self.xs[i + 1]) - float(self.xs[i]))
        y = float(self.ys[i]) + t * (float(self.ys[i + 1]) - float(self.ys[i]))
        return x, y, float(self.yaws[i])


@dataclass(frozen=True)
class GeoRoute:
    """Dense route in geodetic coordinates with per-point road options."""

    latitudes: np.ndarray
    longitudes: np.ndarray
    altitudes: np.ndarray
    road_options: tuple[RoadOption, ...]

    def __post_init__(self):
        for name in ("latitudes", "longitudes", "altitudes"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return int(self.latitudes.size)

    def geopoint(self, i: int) -> tuple[GeoLocation, RoadOption]:
        return (GeoLocation(float(self.latitudes[i]), float(self.longitudes[i]),
                            float(self.altitudes[i])),
                self.road_options[i])


# --- parsing / serialization ----------------------------------------------

def _element_line(text: str, tag: str, index: int) -> int:
    """Best-effort 1-based line number of the index-th <tag ...> occurrence."""
    needle = f"<{tag}"
    pos = -1
    for _ in range(index + 1):
        pos = text.find(needle, pos + 1)
        if pos < 0:
            return 0
    return text.count("\n", 0, pos) + 1


def parse_route(text: str) -> RouteFile:
    """Parse a route document (see README for the grammar).

    Waypoint yaw is given in degrees in the file and converted to radians.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else 0
        raise ParseError(line, f"not well-formed: {exc.msg if hasattr(exc, 'msg') else exc}") from exc
    if root.tag != "route":
        raise ParseError(_element_line(text, root.tag, 0), f"expected root element 'route', got {root.tag!r}")
    route_id = root.get("id", "")
    town = root.get("town", "")
    keypoints: list[Transform] = []
    for i, child in enumerate(root):
        line = _element_line(text, child.tag, i)
        if child.tag != "waypoint":
            raise ParseError(line, f"unexpected element {child.tag!r}")
        values = []
        for attr in ("x", "y", "yaw"):
            raw = child.get(attr)
            if raw is None:
                raise ParseError(line, f"waypoint {i} missing attribute {attr!r}")
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(line, f"waypoint {i} attribute {attr!r} is not a number: {raw!r}") from None
            if not math.isfinite(value):
                raise ParseError(line, f"waypoint {i} attribute {attr!r} is not finite")
            values.append(value)
        keypoints.append(Transform(values[0], values[1], values[2] * RAD_PER_DEG))
    if len(keypoints) < 2:
        raise EmptyRoute(f"route needs at least 2 waypoints, found {len(keypoints)}")
    for i in range(1, len(keypoints)):
        d = math.hypot(keypoints[i].x - keypoints[i - 1].x,
                       keypoints[i].y - keypoints[i - 1].y)
        if d <= MIN_POINT_SEPARATION_M:
            raise DuplicateConsecutivePoint(i)
    return RouteFile(route_id=route_id, town=town, keypoints=tuple(keypoints))


def serialize_route(route: RouteFile) -> str:
    """Emit the same grammar parse_route reads; inverse on the keypoint list."""
    lines = [f'<route id="{route.route_id}" town="{route.town}">']
    for kp in route.keypoints:
        yaw_deg = kp.yaw * DEG_PER_RAD
        lines.append(f'  <waypoint x="{kp.x!r}" y="{kp.y!r}" yaw="{yaw_deg!r}"/>')
    lines.append("</route>")
    return "\n".join(lines) + "\n"


# --- interpolation ---------------------------------------------------------

def interpolate_route(route: RouteFile, spacing: float = DEFAULT_SPACING_M) -> DenseRoute:
    """Densify a keypoint route by piecewise-linear interpolation.

    Each segment of length d splits into ceil(d / spacing) equal pieces, so no
    consecutive gap exceeds ``spacing``.  Every waypoint carries the heading of
    the segment it starts; the final waypoint inherits the last heading.
    """
    if not (isinstance(spacing, (int, float)) and math.isfinite(spacing) and spacing > 0):
        raise InvalidSpacing(spacing)
    kxs = np.array([k.x for k in route.keypoints], dtype=np.float64)
    kys = np.array([k.y for k in route.keypoints], dtype=np.float64)
    if kxs.size < 2:
        raise EmptyRoute("route needs at least 2 keypoints")

    xs_parts: list[np.ndarray] = []
    ys_parts: list[np.ndarray] = []
    yaw_parts: list[np.ndarray] = []
    arc_parts: list[np.ndarray] = []
    junction_idx: list[int] = []
    arc_start = 0.0
    count = 0
    for i in range(kxs.size - 1):
        dx = float(kxs[i + 1] - kxs[i])
        dy = float(kys[i + 1] - kys[i])
        d = math.hypot(dx, dy)
        heading = normalize_yaw(math.atan2(dy, dx))
        n = max(1, math.ceil(d / spacing))
        fracs = np.arange(n, dtype=np.float64) / n
        xs_parts.append(kxs[i] + fracs * dx)
        ys_parts.append(kys[i] + fracs * dy)
        yaw_parts.append(np.full(n, heading))
        arc_parts.append(arc_start + fracs * d)
        if i > 0:
            junction_idx.append(count)
        count += n
        arc_start += d
        last_heading = heading
    # closing waypoint: the final keypoint with the last segment's heading
    xs_parts.append(kxs[-1:])
    ys_parts.append(kys[-1:])
    yaw_parts.append(np.array([last_heading]))
    arc_parts.append(np.array([arc_start]))

    return DenseRoute(
        xs=np.concatenate(xs_parts),
        ys=np.concatenate(ys_parts),
        yaws=np.concatenate(yaw_parts),
        arc=np.concatenate(arc_parts),
        spacing=float(spacing),
        junctions=np.array(junction_idx, dtype=np.intp),
    )


# --- geodesy ---------------------------------------------------------------

def point_to_geo(x: float, y: float, origin: GeoOrigin) -> GeoLocation:
    """Map-frame meters to geodetic degrees around ``origin``."""
    cos_ref = origin.cos_ref_latitude()
    lat = origin.ref_latitude + (y / EARTH_RADIUS_M) * DEG_PER_RAD
    lon = origin.ref_longitude + (x / (EARTH_RADIUS_M * cos_ref)) * DEG_PER_RAD
    return GeoLocation(lat, lon, origin.ref_altitude)


def from_geo(point: GeoLocation, origin: GeoOrigin) -> Transform:
    """Exact algebraic inverse of the point mapping used by to_geo; yaw is 0."""
    cos_ref = origin.cos_ref_latitude()
    y = (point.latitude - origin.ref_latitude) * RAD_PER_DEG * EARTH_RADIUS_M
    x = (point.longitude - origin.ref_longitude) * RAD_PER_DEG * EARTH_RADIUS_M * cos_ref
    return Transform(x, y, 0.0)


def to_geo(route: DenseRoute, origin: GeoOrigin) -> GeoRoute:
    """Convert a dense route to geodetic coordinates and annotate road options.

    Waypoints inside a segment are LANE_FOLLOW.  At a keypoint junction the
    heading change decides: below TURN_THRESHOLD_RAD it is STRAIGHT, otherwise
    LEFT or RIGHT by the sign of the turn (positive yaw change = left).
    """
    cos_ref = origin.cos_ref_latitude()
    lats = origin.ref_latitude + (route.ys / EARTH_RADIUS_M) * DEG_PER_RAD
    lons = origin.ref_longitude + route.xs / (EARTH_RADIUS_M * cos_ref) * DEG_PER_RAD
    alts = np.full(len(route), origin.ref_altitude)

    junction_set = set(int(j) for j in route.junctions)
    options: list[RoadOption] = [RoadOption.LANE_FOLLOW]
    for i in range(1, len(route)):
        if i in junction_set:
            turn = normalize_yaw(float(route.yaws[i]) - float(route.yaws[i - 1]))
            if abs(turn) < TURN_THRESHOLD_RAD:
                options.append(RoadOption.STRAIGHT)
            elif turn > 0:
                options.append(RoadOption.LEFT)
            else:
                options.append(RoadOption.RIGHT)
        else:
            options.append(RoadOption.LANE_FOLLOW)
    return GeoRoute(latitudes=lats, longitudes=lons, altitudes=alts,
                    road_options=tuple(options))


# --- progress --------------------------------------------------------------

class RouteProgress:
    """Forward-only projection of a position onto a dense route.

    The cursor never moves backwards within one run, so completion is
    monotonically non-decreasing even when the route crosses itself.
    """

    def __init__(self, route: DenseRoute):
        if len(route) < 2:
            raise EmptyRoute("progress needs a route with at least 2 waypoints")
        self._route = route
        self._ax = np.asarray(route.xs[:-1])
        self._ay = np.asarray(route.ys[:-1])
        self._bx = np.asarray(route.xs[1:])
        self._by = np.asarray(route.ys[1:])
        self._ex = self._bx - self._ax
        self._ey = self._by - self._ay
        self._len2 = self._ex * self._ex + self._ey * self._ey
        self._seg_len = np.asarray(route.arc[1:]) - np.asarray(route.arc[:-1])
        self._cursor_seg = 0
        self._cursor_t = 0.0
        self._cursor_arc = 0.0

    @property
    def arc(self) -> float:
        return self._cursor_arc

    @property
    def completion(self) -> float:
        total = self._route.total_length
        return min(1.0, self._cursor_arc / total) if total > 0 else 0.0

    def update(self, x: float, y: float) -> tuple[float, float]:
        """Advance the cursor toward ``(x, y)``; return (completion, cross_track)."""
        j = self._cursor_seg
        t = ((x - self._ax[j:]) * self._ex[j:] + (y - self._ay[j:]) * self._ey[j:]) / self._len2[j:]
        np.clip(t, 0.0, 1.0, out=t)
        t[0] = max(t[0], self._cursor_t)  # never behind the cursor
        px = self._ax[j:] + t * self._ex[j:]
        py = self._ay[j:] + t * self._ey[j:]
        d2 = (x - px) ** 2 + (y - py) ** 2
        k = int(np.argmin(d2))
        seg = j + k
        frac = float(t[k])
        self._cursor_seg = seg
        self._cursor_t = frac
        self._cursor_arc = float(self._route.arc[seg]) + frac * float(self._seg_len[seg])
        return self.completion, float(math.sqrt(float(d2[k])))


def route_progress(route: DenseRoute, position: Transform) -> tuple[float, float]:
    """One-shot progress query with a fresh cursor."""
    return RouteProgress(route).update(position.x, position.y)
