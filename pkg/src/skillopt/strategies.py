"""Candidate selection strategies.

Every strategy runs inside the same engine loop, sees the same mutation prompt
and pays the same budget; only parent choice and offspring acceptance differ.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .metrics import ContractError
from .scalarize import chebyshev, composite, sample_weight, select_parent
from .schedule import AnnealSchedule, Decision, Judgement, SpeculativeBuffer, decide

log = logging.getLogger(__name__)

VARIANTS = ("mocha", "mocha_no_hvc", "mocha_no_anneal", "greedy", "ucb_beam", "stochastic_pareto")


class SelectionStrategy:
    name = "base"
    weights: tuple[float, ...] | None = None

    def __init__(self):
        self._notes: list[str] = []

    def reset(self, seed, state) -> None:
        pass

    def select_parent(self, state):
        raise NotImplementedError

    def observe(self, parent, parent_ev, child, child_ev, state) -> None:
        """Called after the minibatch evaluations of an iteration, before judging."""

    def judge(self, parent, parent_scores, child, state) -> Judgement:
        raise NotImplementedError

    def on_commit(self, candidate, state) -> None:
        pass

    def note(self, text: str) -> None:
        self._notes.append(text)

    def pop_note(self) -> str:
        out = "; ".join(self._notes)
        self._notes.clear()
        return out


def ablation_config(variant: str, base: AnnealSchedule = AnnealSchedule()) -> AnnealSchedule:
    """Schedule realizing an ablation: no-HVC pins tau at 0, no-anneal pins it at tau0."""
    if variant == "mocha_no_hvc":
        return AnnealSchedule(0.0, 0.0, base.lam, base.mode_epsilon)
    if variant == "mocha_no_anneal":
        return AnnealSchedule(base.tau0, base.tau0, base.lam, base.mode_epsilon)
    if variant == "mocha":
        return base
    raise ContractError(f"{variant!r} is not a MOCHA variant")


class Mocha(SelectionStrategy):
    """Chebyshev parent selection with annealed HVC / Chebyshev acceptance."""

    def __init__(self, schedule: AnnealSchedule = AnnealSchedule(), buffer_capacity: int = 5,
                 variant: str = "mocha"):
        super().__init__()
        self.name = variant
        self.schedule = ablation_config(variant, schedule)
        self.buffer = SpeculativeBuffer(buffer_capacity)
        self.weights = None
        self._was_exploring = True

    def reset(self, seed, state) -> None:
        self.buffer.clear()
        self._was_exploring = True

    def select_parent(self, state):
        m = len(state.pool[0].validation_scores)
        self.weights = sample_weight(state.streams.weights, m)
        pid = select_parent(
            [(c.id, c.validation_scores) for c in state.pool], self.weights, state.streams.ties
        )
        return state.member(pid)

    def judge(self, parent, parent_scores, child, state) -> Judgement:
        tau = self.schedule.tau(state.ledger.consumed, state.ledger.total)
        exploring = self.schedule.exploring(tau)
        if self._was_exploring and not exploring:
            dropped = self.buffer.clear()
            if dropped:
                ids = ",".join(str(c.id) for c in dropped)
                log.info("entering exploitation; discarding buffered candidates %s", ids)
                self.note(f"discarded buffer [{ids}] at mode switch")
        self._was_exploring = exploring
        j = decide(
            tau,
            child,
            [c.validation_scores for c in state.pool],
            self.buffer,
            self.weights,
            chebyshev(parent_scores, self.weights),
            self.schedule.mode_epsilon,
        )
        j.tau = tau
        if j.evicted is not None and j.evicted is not child:
            self.note(f"evicted {j.evicted.id} from buffer")
        return j


def greedy_step(best_composite: float, candidate_composite: float) -> bool:
    return candidate_composite > best_composite


class Greedy(SelectionStrategy):
    """Always mutate the incumbent; accept only a strict composite improvement."""

    name = "greedy"

    def select_parent(self, state):
        best = state.pool[0]
        for c in state.pool[1:]:
            if composite(c.validation_scores) > composite(best.validation_scores):
                best = c
        return best

    def judge(self, parent, parent_scores, child, state) -> Judgement:
        if greedy_step(composite(parent_scores), composite(child.minibatch_scores)):
            return Judgement(Decision.COMMIT_CANDIDATE, commit=child, exploring=False)
        return Judgement(Decision.REJECT, exploring=False)


@dataclass
class BeamEntry:
    candidate: object
    visits: int
    mean: float

    def pull(self, reward: float) -> None:
        self.visits += 1
        self.mean += (reward - self.mean) / self.visits


def ucb_step(beam: list[BeamEntry], t: int, c: float = math.sqrt(2)) -> BeamEntry:
    """Beam member maximizing mean + c * sqrt(ln t / visits); first wins ties."""
    if not beam:
        raise ContractError("empty beam")
    log_t = math.log(max(t, 1))

    def bound(e: BeamEntry) -> float:
        return e.mean + c * math.sqrt(log_t / e.visits)

    return max(beam, key=bound)


class UcbBeam(SelectionStrategy):
    """UCB selection over a small beam of trajectories.

    The beam starts as the seed alone. An offspring joins when its minibatch
    composite beats the weakest beam mean, replacing that member once the beam
    is full (this replacement rule is our own choice).
    """

    name = "ucb_beam"

    def __init__(self, beam_width: int = 3, exploration_constant: float = math.sqrt(2)):
        super().__init__()
        if beam_width < 1:
            raise ContractError("beam width must be >= 1")
        self.beam_width = beam_width
        self.c = exploration_constant
        self.beam: list[BeamEntry] = []

    def reset(self, seed, state) -> None:
        self.beam = [BeamEntry(seed, 1, composite(seed.validation_scores))]

    def select_parent(self, state):
        t = sum(e.visits for e in self.beam)
        return ucb_step(self.beam, t, self.c).candidate

    def observe(self, parent, parent_ev, child, child_ev, state) -> None:
        for e in self.beam:
            if e.candidate is parent:
                e.pull(composite(parent_ev.scores))

    def judge(self, parent, parent_scores, child, state) -> Judgement:
        floor = min(e.mean for e in self.beam)
        if composite(child.minibatch_scores) > floor:
            return Judgement(Decision.COMMIT_CANDIDATE, commit=child, exploring=False)
        return Judgement(Decision.REJECT, exploring=False)

    def on_commit(self, candidate, state) -> None:
        entry = BeamEntry(candidate, 1, composite(candidate.minibatch_scores))
        if len(self.beam) >= self.beam_width:
            weakest = min(range(len(self.beam)), key=lambda i: self.beam[i].mean)
            self.note(f"beam replaced {self.beam[weakest].candidate.id}")
            self.beam.pop(weakest)
        self.beam.append(entry)


def per_example_wins(records: list[tuple[float, ...]], tol: float = 1e-12) -> list[int]:
    """For each member, the number of validation examples on which it is (jointly) best."""
    if not records:
        return []
    wins = [0] * len(records)
    for k in range(len(records[0])):
        best = max(r[k] for r in records)
        for i, r in enumerate(records):
            if best - r[k] <= tol:
                wins[i] += 1
    return wins


def stochastic_pareto_step(records: list[tuple[float, ...]], rng) -> int:
    """Index of the sampled parent, drawn proportionally to per-example win counts.

    How the original method weights its per-example front is not pinned down;
    proportional-to-wins is our choice.
    """
    wins = per_example_wins(records)
    total = sum(wins)
    if total == 0:
        return 0
    r = rng.random() * total
    acc = 0.0
    for i, w in enumerate(wins):
        acc += w
        if w and r < acc:
            return i
    return max(i for i, w in enumerate(wins) if w)


class StochasticPareto(SelectionStrategy):
    """Parent sampled from the per-validation-example front; strict composite acceptance."""

    name = "stochastic_pareto"

    def select_parent(self, state):
        records = [c.validation_correctness for c in state.pool]
        return state.pool[stochastic_pareto_step(records, state.streams.ties)]

    def judge(self, parent, parent_scores, child, state) -> Judgement:
        if composite(child.minibatch_scores) > composite(parent_scores):
            return Judgement(Decision.COMMIT_CANDIDATE, commit=child, exploring=False)
        return Judgement(Decision.REJECT, exploring=False)


def make_strategy(variant: str, schedule: AnnealSchedule = AnnealSchedule(), buffer_capacity: int = 5,
                  beam_width: int = 3, exploration_constant: float = math.sqrt(2)) -> SelectionStrategy:
    if variant in ("mocha", "mocha_no_hvc", "mocha_no_anneal"):
        return Mocha(schedule, buffer_capacity, variant)
    if variant == "greedy":
        return Greedy()
    if variant == "ucb_beam":
        return UcbBeam(beam_width, exploration_constant)
    if variant == "stochastic_pareto":
        return StochasticPareto()
    raise ContractError(f"unknown strategy {variant!r}; expected one of {', '.join(VARIANTS)}")
