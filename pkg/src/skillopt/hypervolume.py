"""Exact hypervolume (M <= 3) against the origin, plus a Monte-Carlo cross-check."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .metrics import ContractError, weakly_dominates

# two-sided 99% normal quantile
Z99 = 2.5758293035489004


class UnsupportedDimension(ContractError):
    pass


def _as_points(points) -> list[tuple[float, ...]]:
    pts = [tuple(float(x) for x in p) for p in points]
    if pts and len({len(p) for p in pts}) != 1:
        raise ContractError("points have mixed dimensions")
    return pts


def _hv2(points: Sequence[tuple[float, float]]) -> float:
    # staircase: sweep x descending, each point adds the strip above the running max y
    area = 0.0
    best_y = 0.0
    for x, y in sorted(points, key=lambda p: (-p[0], -p[1])):
        if y > best_y:
            area += x * (y - best_y)
            best_y = y
    return area


def _hv3(points: Sequence[tuple[float, float, float]]) -> float:
    # slabs along z, from the top down; each slab's cross-section is a 2D staircase
    pts = sorted(points, key=lambda p: -p[2])
    volume = 0.0
    active: list[tuple[float, float]] = []
    i = 0
    while i < len(pts):
        z = pts[i][2]
        while i < len(pts) and pts[i][2] == z:
            active.append((pts[i][0], pts[i][1]))
            i += 1
        z_next = pts[i][2] if i < len(pts) else 0.0
        if z > z_next:
            volume += _hv2(active) * (z - z_next)
    return volume


def hv_exact(points) -> float:
    """Volume of [0,1]^M jointly dominated by ``points`` (reference point = origin)."""
    pts = _as_points(points)
    if not pts:
        return 0.0
    m = len(pts[0])
    if m == 1:
        return max(p[0] for p in pts)
    if m == 2:
        return _hv2(pts)
    if m == 3:
        return _hv3(pts)
    raise UnsupportedDimension(f"exact hypervolume supports M <= 3, got M = {m}")


def hvc(candidate, points) -> float:
    """Exclusive volume ``candidate`` adds to ``points``; 0 if it is weakly dominated."""
    c = tuple(float(x) for x in candidate)
    pts = _as_points(points)
    if pts and len(pts[0]) != len(c):
        raise ContractError("candidate and points have different dimensions")
    if any(weakly_dominates(p, c) for p in pts):
        return 0.0
    # box(c) minus the part of it already covered: HV of the points clipped to c
    own = math.prod(c)
    clipped = [tuple(min(a, b) for a, b in zip(p, c)) for p in pts]
    return max(0.0, own - hv_exact(clipped))


def hv_monte_carlo(points, samples: int, rng, chunk: int = 200_000) -> tuple[float, float]:
    """Fraction of uniform samples in [0,1]^M dominated by ``points``, with a 99% half-width."""
    if samples < 1:
        raise ContractError("samples must be >= 1")
    pts = np.asarray(_as_points(points), dtype=float)
    if pts.size == 0:
        return 0.0, 0.0
    m = pts.shape[1]
    hits = 0
    remaining = samples
    while remaining:
        k = min(chunk, remaining)
        q = rng.random((k, m))
        covered = np.zeros(k, dtype=bool)
        for p in pts:
            covered |= np.all(q <= p, axis=1)
        hits += int(covered.sum())
        remaining -= k
    est = hits / samples
    half = Z99 * math.sqrt(est * (1.0 - est) / samples)
    return est, half
