"""Chebyshev and linear scalarization, simplex weight sampling, parent selection."""

from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np

from .metrics import ContractError

TIE_TOLERANCE = 1e-12


def _check(m: Sequence[float], w: Sequence[float]) -> None:
    if len(m) != len(w):
        raise ContractError(f"metric/weight length mismatch: {len(m)} vs {len(w)}")


def chebyshev(m: Sequence[float], w: Sequence[float]) -> float:
    """Largest weighted gap to the ideal point (1, ..., 1). Lower is better."""
    _check(m, w)
    return max(wj * abs(mj - 1.0) for mj, wj in zip(m, w))


def linear(m: Sequence[float], w: Sequence[float]) -> float:
    """Weighted sum of the metrics. Higher is better."""
    _check(m, w)
    return float(sum(wj * mj for mj, wj in zip(m, w)))


def composite(m: Sequence[float]) -> float:
    """Unweighted mean of the metrics, the scalar the single-objective baselines use."""
    return float(sum(m)) / len(m)


def sample_weight(rng, m: int) -> tuple[float, ...]:
    """Uniform draw from the (m-1)-simplex via normalized unit exponentials (Dirichlet(1))."""
    if m < 2:
        raise ContractError("need at least two objectives to sample a weight vector")
    e = np.asarray(rng.standard_exponential(m), dtype=float)
    return tuple(float(x) for x in e / e.sum())


def argmin_ties(scores: Sequence[float], tol: float = TIE_TOLERANCE) -> list[int]:
    best = min(scores)
    return [i for i, s in enumerate(scores) if s - best <= tol]


def select_parent(
    pool: Sequence[tuple[Hashable, Sequence[float]]], w: Sequence[float], rng
) -> Hashable:
    """Id of the pool member with the lowest Chebyshev score; ties broken uniformly."""
    if not pool:
        raise ContractError("cannot select a parent from an empty pool")
    scores = [chebyshev(m, w) for _, m in pool]
    ties = argmin_ties(scores)
    pick = ties[0] if len(ties) == 1 else ties[int(rng.integers(len(ties)))]
    return pool[pick][0]
