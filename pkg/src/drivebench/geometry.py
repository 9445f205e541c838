"""Planar geometry: oriented rectangles and point-to-polyline distances."""

from __future__ import annotations

import math

import numpy as np


def obb_corners(x: float, y: float, yaw: float, length: float, width: float) -> np.ndarray:
    """Corners of a centered rectangle, counterclockwise, as a (4, 2) array."""
    hl, hw = 0.5 * length, 0.5 * width
    c, s = math.cos(yaw), math.sin(yaw)
    local = np.array([(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)])
    rot = np.array([(c, -s), (s, c)])
    return local @ rot.T + np.array([x, y])


def sat_margin(pose_a: tuple[float, float, float], size_a: tuple[float, float],
               pose_b: tuple[float, float, float], size_b: tuple[float, float]) -> float:
    """Separating-axis margin for two oriented rectangles.

    Positive values are the penetration depth (the minimum translation
    distance); negative values are minus the largest gap found on any of the
    four candidate axes.  Zero means exact edge contact.
    """
    xa, ya, yawa = pose_a
    xb, yb, yawb = pose_b
    hla, hwa = 0.5 * size_a[0], 0.5 * size_a[1]
    hlb, hwb = 0.5 * size_b[0], 0.5 * size_b[1]
    dx, dy = xb - xa, yb - ya
    margin = math.inf
    for yaw in (yawa, yawa + math.pi / 2, yawb, yawb + math.pi / 2):
        ax, ay = math.cos(yaw), math.sin(yaw)
        ra = hla * abs(ax * math.cos(yawa) + ay * math.sin(yawa)) + \
            hwa * abs(-ax * math.sin(yawa) + ay * math.cos(yawa))
        rb = hlb * abs(ax * math.cos(yawb) + ay * math.sin(yawb)) + \
            hwb * abs(-ax * math.sin(yawb) + ay * math.cos(yawb))
        overlap = (ra + rb) - abs(ax * dx + ay * dy)
        margin = min(margin, overlap)
    return margin


def obb_overlap(pose_a, size_a, pose_b, size_b) -> bool:
    """Strict overlap test (edge contact does not count)."""
    return sat_margin(pose_a, size_a, pose_b, size_b) > 0.0


def points_in_obb(points: np.ndarray, x: float, y: float, yaw: float,
                  length: float, width: float) -> np.ndarray:
    """Boolean mask of (N, 2) world points inside a rectangle (inclusive)."""
    c, s = math.cos(yaw), math.sin(yaw)
    dx = points[:, 0] - x
    dy = points[:, 1] - y
    local_x = dx * c + dy * s
    local_y = -dx * s + dy * c
    return (np.abs(local_x) <= 0.5 * length) & (np.abs(local_y) <= 0.5 * width)


def points_to_polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each of N points to a polyline of M >= 2 vertices."""
    a = polyline[:-1]
    e = polyline[1:] - a
    len2 = np.maximum((e * e).sum(axis=1), 1e-30)
    # t has shape (N, M-1)
    diff = points[:, None, :] - a[None, :, :]
    t = np.clip((diff * e[None, :, :]).sum(axis=2) / len2[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * e[None, :, :]
    d2 = ((points[:, None, :] - proj) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=1))


def point_to_polyline_distance(x: float, y: float, polyline: np.ndarray) -> float:
    return float(points_to_polyline_distance(np.array([[x, y]]), polyline)[0])
