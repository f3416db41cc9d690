"""Objective-space primitives: metric vectors, compliance scoring, Pareto dominance."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

MetricVector = tuple[float, ...]

METRIC_NAMES = ("correctness", "description_compliance", "body_compliance")


class ContractError(ValueError):
    """A caller broke an operation's precondition."""


@dataclass(frozen=True)
class ComplianceLimits:
    description_limit: int = 1024
    body_limit: int = 5000

    def __post_init__(self):
        if self.description_limit <= 0 or self.body_limit <= 0:
            raise ContractError("compliance limits must be strictly positive")


def metric_vector(values: Iterable[float], m: int | None = None) -> MetricVector:
    """Build a metric vector, clamping components into [0, 1].

    Out-of-range components are clamped with a warning rather than rejected so
    that noisy evaluators cannot crash a run. Non-finite values are rejected.
    """
    out = []
    for v in values:
        v = float(v)
        if not math.isfinite(v):
            raise ContractError(f"metric component is not finite: {v!r}")
        if v < 0.0 or v > 1.0:
            log.warning("clamping metric component %r into [0, 1]", v)
            v = min(1.0, max(0.0, v))
        out.append(v)
    if m is not None and len(out) != m:
        raise ContractError(f"expected {m} metric components, got {len(out)}")
    return tuple(out)


def _check_same_length(a: Sequence[float], b: Sequence[float]) -> None:
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} vs {len(b)}")


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    _check_same_length(a, b)
    strictly = False
    for x, y in zip(a, b):
        if x < y:
            return False
        if x > y:
            strictly = True
    return strictly


def weakly_dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    _check_same_length(a, b)
    return all(x >= y for x, y in zip(a, b))


def compliance_score(length: int, limit: int) -> float:
    if limit <= 0:
        raise ContractError("limit must be positive")
    if length < 0:
        raise ContractError("length must be non-negative")
    return max(0.0, 1.0 - length / limit)


def pareto_front(points: Sequence[Sequence[float]]) -> list[MetricVector]:
    """Non-dominated subset of ``points``; ties (duplicates) on the front are all kept."""
    return [tuple(points[i]) for i in pareto_front_indices(points)]


def pareto_front_indices(points: Sequence[Sequence[float]]) -> list[int]:
    keep = []
    for i, p in enumerate(points):
        if not any(dominates(q, p) for j, q in enumerate(points) if j != i):
            keep.append(i)
    return keep
