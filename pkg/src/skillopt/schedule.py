"""Annealed HVC threshold and the two-mode acceptance rule built on it."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from .hypervolume import hvc
from .metrics import ContractError
from .scalarize import chebyshev


@dataclass(frozen=True)
class AnnealSchedule:
    tau0: float = 0.1
    tau_end: float = 0.0
    lam: float = 10.0
    # tau_end = 0 is never reached exactly; below this the exploitation branch runs
    mode_epsilon: float = 1e-3

    def __post_init__(self):
        if not (self.tau0 >= self.tau_end >= 0):
            raise ContractError("need tau0 >= tau_end >= 0")
        if self.lam <= 0:
            raise ContractError("lambda must be positive")

    def tau(self, b: float, total: float) -> float:
        if total <= 0:
            raise ContractError("total budget must be positive")
        return self.tau_end + (self.tau0 - self.tau_end) * math.exp(-self.lam * b / total)

    def exploring(self, tau: float) -> bool:
        return tau > self.mode_epsilon


def tau(schedule: AnnealSchedule, b: float, total: float) -> float:
    return schedule.tau(b, total)


class Decision(str, enum.Enum):
    COMMIT_FROM_BUFFER = "CommitFromBuffer"
    COMMIT_CANDIDATE = "CommitCandidate"
    BUFFERED = "Buffered"
    REJECT = "Reject"

    @property
    def commits(self) -> bool:
        return self in (Decision.COMMIT_FROM_BUFFER, Decision.COMMIT_CANDIDATE)


@dataclass
class SpeculativeBuffer:
    """Fixed-capacity queue of candidates ordered by the HVC stored at insertion."""

    capacity: int = 5
    entries: list[tuple[float, Any]] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ContractError("buffer capacity must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, candidate, stored_hvc: float):
        """Insert by rank; return the evicted candidate when over capacity, else None."""
        if not stored_hvc > 0:
            raise ContractError(f"buffered HVC must be positive, got {stored_hvc!r}")
        pos = len(self.entries)
        for i, (h, _) in enumerate(self.entries):
            if stored_hvc > h:
                pos = i
                break
        self.entries.insert(pos, (stored_hvc, candidate))
        if len(self.entries) > self.capacity:
            return self.entries.pop()[1]
        return None

    def pop_best(self):
        if not self.entries:
            raise ContractError("pop from an empty buffer")
        return self.entries.pop(0)[1]

    def best_hvc(self) -> float:
        return self.entries[0][0] if self.entries else 0.0

    def points(self) -> list[tuple[float, ...]]:
        return [c.minibatch_scores for _, c in self.entries]

    def candidates(self) -> list:
        return [c for _, c in self.entries]

    def clear(self) -> list:
        dropped = self.candidates()
        self.entries.clear()
        return dropped


def buffer_insert(buffer: SpeculativeBuffer, candidate, stored_hvc: float):
    return buffer.insert(candidate, stored_hvc)


@dataclass
class Judgement:
    decision: Decision
    commit: Any = None
    exploring: bool = True
    hvc_pool: float | None = None
    hvc_pool_buffer: float | None = None
    candidate_score: float | None = None
    evicted: Any = None
    tau: float | None = None


def decide(
    mode_tau: float,
    candidate,
    pool_points: Sequence[Sequence[float]],
    buffer: SpeculativeBuffer,
    w: Sequence[float],
    parent_score: float,
    mode_epsilon: float = 1e-3,
) -> Judgement:
    """Acceptance for one offspring.

    Exploration (tau above ``mode_epsilon``) gates on hypervolume contribution and
    routes commits through the buffer; exploitation accepts only a strict
    Chebyshev improvement over the parent under the same weights.
    """
    m = candidate.minibatch_scores
    if mode_tau > mode_epsilon:
        pool_points = list(pool_points)
        gain_all = hvc(m, pool_points + buffer.points())
        evicted = None
        buffered = False
        if gain_all > 0:
            evicted = buffer.insert(candidate, gain_all)
            buffered = evicted is not candidate
        gain = hvc(m, pool_points)
        j = Judgement(
            Decision.REJECT, exploring=True, hvc_pool=gain, hvc_pool_buffer=gain_all, evicted=evicted
        )
        if gain > mode_tau and len(buffer):
            j.decision = Decision.COMMIT_FROM_BUFFER
            j.commit = buffer.pop_best()
        elif buffered:
            j.decision = Decision.BUFFERED
        return j

    score = chebyshev(m, w)
    if score < parent_score:
        return Judgement(Decision.COMMIT_CANDIDATE, commit=candidate, exploring=False, candidate_score=score)
    return Judgement(Decision.REJECT, exploring=False, candidate_score=score)
