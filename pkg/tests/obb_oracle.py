"""Brute-force oracles for oriented-rectangle overlap, independent of the
production geometry code: corners are built here, axis margins come from
corner projections, and the hit test rasterizes one rectangle's area and
checks containment in the other."""

import math

import numpy as np


def corners(pose, size):
    x, y, yaw = pose
    hl, hw = 0.5 * size[0], 0.5 * size[1]
    c, s = math.cos(yaw), math.sin(yaw)
    out = []
    for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)):
        out.append((x + dx * c - dy * s, y + dx * s + dy * c))
    return out


def margin_by_projection(pose_a, size_a, pose_b, size_b):
    """Min axis overlap over the four edge normals, from corner projections.

    Positive = penetration depth, negative = minus the largest axis gap.
    """
    ca = corners(pose_a, size_a)
    cb = corners(pose_b, size_b)
    margin = math.inf
    for yaw in (pose_a[2], pose_a[2] + math.pi / 2, pose_b[2], pose_b[2] + math.pi / 2):
        ax, ay = math.cos(yaw), math.sin(yaw)
        pa = [cx * ax + cy * ay for cx, cy in ca]
        pb = [cx * ax + cy * ay for cx, cy in cb]
        overlap = min(max(pa), max(pb)) - max(min(pa), min(pb))
        margin = min(margin, overlap)
    return margin


def _local_grid(size, step):
    hl, hw = 0.5 * size[0], 0.5 * size[1]
    nx = max(2, math.ceil(size[0] / step) + 1)
    ny = max(2, math.ceil(size[1] / step) + 1)
    gx = np.linspace(-hl, hl, nx)
    gy = np.linspace(-hw, hw, ny)
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _contains(points, pose, size):
    x, y, yaw = pose
    c, s = math.cos(yaw), math.sin(yaw)
    dx = points[:, 0] - x
    dy = points[:, 1] - y
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    return (np.abs(lx) <= 0.5 * size[0]) & (np.abs(ly) <= 0.5 * size[1])


def _one_sided_hit(pose_a, size_a, pose_b, size_b, step):
    local = _local_grid(size_a, step)
    c, s = math.cos(pose_a[2]), math.sin(pose_a[2])
    world = np.column_stack([
        pose_a[0] + local[:, 0] * c - local[:, 1] * s,
        pose_a[1] + local[:, 0] * s + local[:, 1] * c,
    ])
    # only points near B can be inside B
    cb = np.array(corners(pose_b, size_b))
    lo = cb.min(axis=0) - step
    hi = cb.max(axis=0) + step
    near = ((world[:, 0] >= lo[0]) & (world[:, 0] <= hi[0]) &
            (world[:, 1] >= lo[1]) & (world[:, 1] <= hi[1]))
    if not near.any():
        return False
    return bool(_contains(world[near], pose_b, size_b).any())


def rasterized_overlap(pose_a, size_a, pose_b, size_b, step=0.005):
    """True when a dense sampling of either rectangle lands inside the other."""
    return (_one_sided_hit(pose_a, size_a, pose_b, size_b, step)
            or _one_sided_hit(pose_b, size_b, pose_a, size_a, step))
