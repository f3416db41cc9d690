"""The optimization loop: two-stage evaluation, budget ledger, pool management."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from .hypervolume import hv_exact
from .metrics import ComplianceLimits, ContractError, MetricVector, metric_vector, pareto_front_indices
from .skill_doc import SkillDoc, compliance_report, measure, render_mutation_prompt

log = logging.getLogger(__name__)

STREAM_NAMES = ("weights", "minibatch", "ties", "task")


class MutationError(RuntimeError):
    """The mutator could not produce a usable offspring document."""


class TaskAdapter(Protocol):
    train: Sequence[Any]
    validation: Sequence[Any]

    def score(self, doc: SkillDoc, example: Any) -> float: ...

    def feedback(self, doc: SkillDoc, example: Any, score: float) -> str: ...

    def mutate(self, prompt: str, rng: np.random.Generator) -> SkillDoc: ...


class Streams:
    """Independent named random streams derived from one 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        for i, name in enumerate(STREAM_NAMES):
            ss = np.random.SeedSequence(self.seed, spawn_key=(i,))
            setattr(self, name, np.random.Generator(np.random.PCG64(ss)))


@dataclass
class Candidate:
    id: int
    doc: SkillDoc
    parent_id: int | None = None
    minibatch_scores: MetricVector | None = None
    validation_scores: MetricVector | None = None
    validation_correctness: tuple[float, ...] | None = None
    created_at_budget: int = 0


@dataclass
class BudgetLedger:
    total: int
    minibatch_size: int
    validation_size: int
    consumed: int = 0

    def charge(self, rollouts: int) -> None:
        if rollouts not in (self.minibatch_size, 2 * self.minibatch_size, self.validation_size):
            raise ContractError(f"unexpected budget increment {rollouts}")
        self.consumed += rollouts

    def can_iterate(self) -> bool:
        # an iteration starts only if its minibatch cost fits; only a commit may overshoot
        return self.consumed + 2 * self.minibatch_size <= self.total


@dataclass
class Evaluation:
    scores: MetricVector
    per_example: tuple[float, ...]
    failures: tuple[int, ...] = ()


def evaluate(
    doc: SkillDoc,
    examples: Sequence[Any],
    task: TaskAdapter,
    limits: ComplianceLimits = ComplianceLimits(),
    workers: int = 1,
) -> Evaluation:
    """Mean task score plus compliance; one rollout per example.

    A failing example scores 0 and is flagged. Per-example calls may run in a
    thread pool; results are reduced in dataset order.
    """
    if not examples:
        raise ContractError("cannot evaluate on an empty slice")

    def one(example):
        try:
            return min(1.0, max(0.0, float(task.score(doc, example)))), False
        except Exception as exc:  # noqa: BLE001 - a broken example must not kill the run
            log.warning("evaluation failed on example %r: %s", example, exc)
            return 0.0, True

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, examples))
    else:
        results = [one(e) for e in examples]
    per_example = tuple(r[0] for r in results)
    failures = tuple(i for i, r in enumerate(results) if r[1])
    desc, body = measure(doc, limits)
    correctness = math.fsum(per_example) / len(per_example)
    return Evaluation(metric_vector((correctness, desc, body)), per_example, failures)


@dataclass
class EngineSettings:
    budget: int
    minibatch_size: int
    limits: ComplianceLimits = field(default_factory=ComplianceLimits)
    seed: int = 0
    workers: int = 1
    validation_size: int | None = None

    def __post_init__(self):
        if self.budget <= 0 or self.minibatch_size <= 0 or self.workers <= 0:
            raise ContractError("budget, minibatch_size and workers must be positive")


@dataclass
class RunState:
    settings: EngineSettings
    ledger: BudgetLedger
    streams: Streams
    pool: list[Candidate] = field(default_factory=list)

    def member(self, cid: int) -> Candidate:
        for c in self.pool:
            if c.id == cid:
                return c
        raise KeyError(cid)


TRACE_FIELDS = (
    "iteration",
    "budget_before",
    "budget_after",
    "weights",
    "parent_id",
    "child_id",
    "decision",
    "committed_id",
    "tau",
    "mode",
    "hvc_pool",
    "hvc_pool_buffer",
    "parent_minibatch",
    "child_minibatch",
    "committed_validation",
    "mutation_failed",
    "eval_failures",
    "feedback_source",
    "note",
)


@dataclass
class RunReport:
    strategy: str
    seed: int
    pool: list[Candidate]
    trace: list[dict]
    consumed: int
    total: int
    minibatch_size: int
    validation_size: int
    front: list[Candidate]
    hv: float
    incomplete: bool = False
    error: str | None = None
    config: dict | None = None

    @property
    def commits(self) -> int:
        return len(self.pool) - 1

    @property
    def best_correctness(self) -> float:
        return max(c.validation_scores[0] for c in self.front)

    def summary(self) -> str:
        flag = " INCOMPLETE" if self.incomplete else ""
        return (
            f"strategy={self.strategy} seed={self.seed} #PF={len(self.front)} hv={self.hv:.4f} "
            f"best_correctness={self.best_correctness:.4f} commits={self.commits} "
            f"consumed={self.consumed}/{self.total}{flag}"
        )


def final_front(pool: Sequence[Candidate]) -> list[Candidate]:
    if not pool:
        raise ContractError("pool is empty")
    idx = pareto_front_indices([c.validation_scores for c in pool])
    return [pool[i] for i in idx]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (tuple, list)):
        return ";".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_feedback(doc: SkillDoc, examples, ev: Evaluation, task: TaskAdapter) -> str:
    lines = []
    for k, (example, s) in enumerate(zip(examples, ev.per_example), start=1):
        lines.append(f"Example {k}: {task.feedback(doc, example, s)}")
    return "\n".join(lines)


def run(seed_doc: SkillDoc, settings: EngineSettings, strategy, task: TaskAdapter) -> RunReport:
    """Run one optimization from ``seed_doc`` until the rollout budget is spent."""
    validation = list(task.validation)
    if settings.validation_size is not None:
        validation = validation[: settings.validation_size]
    train = list(task.train)
    n = settings.minibatch_size
    if not validation:
        raise ContractError("task has no validation examples")
    if n > len(train):
        raise ContractError(f"minibatch size {n} exceeds train set size {len(train)}")

    ledger = BudgetLedger(settings.budget, n, len(validation))
    state = RunState(settings, ledger, Streams(settings.seed))
    next_id = 0

    def validate(c: Candidate) -> None:
        ev = evaluate(c.doc, validation, task, settings.limits, settings.workers)
        ledger.charge(len(validation))
        c.validation_scores = ev.scores
        c.validation_correctness = ev.per_example

    seed = Candidate(next_id, seed_doc, None, created_at_budget=0)
    next_id += 1
    validate(seed)
    state.pool.append(seed)
    strategy.reset(seed, state)

    trace: list[dict] = []
    incomplete, error = False, None
    iteration = 0
    try:
        while ledger.can_iterate():
            iteration += 1
            before = ledger.consumed
            row = dict.fromkeys(TRACE_FIELDS, "")
            row.update(iteration=iteration, budget_before=before, mutation_failed=0)

            parent = strategy.select_parent(state)
            row["weights"] = _fmt(strategy.weights)
            row["parent_id"] = parent.id

            picks = state.streams.minibatch.choice(len(train), size=n, replace=False)
            minibatch = [train[int(i)] for i in picks]
            parent_ev = evaluate(parent.doc, minibatch, task, settings.limits, settings.workers)
            ledger.charge(n)
            row["parent_minibatch"] = _fmt(parent_ev.scores)
            failures = len(parent_ev.failures)

            prompt = render_mutation_prompt(
                parent.doc,
                compliance_report(parent.doc, settings.limits),
                format_feedback(parent.doc, minibatch, parent_ev, task),
                parent.doc.section_names,
            )
            row["feedback_source"] = "minibatch"
            try:
                child_doc = task.mutate(prompt, state.streams.task)
            except MutationError as exc:
                log.warning("iteration %d: mutation failed: %s", iteration, exc)
                row.update(decision="MutationFailed", mutation_failed=1, note=str(exc)[:200])
                row.update(budget_after=ledger.consumed, eval_failures=failures)
                strategy.observe(parent, parent_ev, None, None, state)
                trace.append(row)
                continue

            child = Candidate(next_id, child_doc, parent.id, created_at_budget=before)
            next_id += 1
            child_ev = evaluate(child_doc, minibatch, task, settings.limits, settings.workers)
            ledger.charge(n)
            child.minibatch_scores = child_ev.scores
            row["child_id"] = child.id
            row["child_minibatch"] = _fmt(child_ev.scores)
            failures += len(child_ev.failures)

            strategy.observe(parent, parent_ev, child, child_ev, state)
            j = strategy.judge(parent, parent_ev.scores, child, state)
            row.update(
                decision=j.decision.value,
                tau=_fmt(j.tau),
                mode="" if j.tau is None else ("explore" if j.exploring else "exploit"),
                hvc_pool=_fmt(j.hvc_pool),
                hvc_pool_buffer=_fmt(j.hvc_pool_buffer),
                note=strategy.pop_note(),
            )
            if j.decision.commits:
                committed = j.commit
                validate(committed)
                state.pool.append(committed)
                strategy.on_commit(committed, state)
                row["committed_id"] = committed.id
                row["committed_validation"] = _fmt(committed.validation_scores)
            row["budget_after"] = ledger.consumed
            row["eval_failures"] = failures
            trace.append(row)
    except Exception as exc:  # noqa: BLE001 - keep what was computed, flag the report
        log.exception("run aborted at iteration %d", iteration)
        incomplete, error = True, f"{type(exc).__name__}: {exc}"

    front = final_front(state.pool)
    return RunReport(
        strategy=strategy.name,
        seed=settings.seed,
        pool=state.pool,
        trace=trace,
        consumed=ledger.consumed,
        total=ledger.total,
        minibatch_size=n,
        validation_size=len(validation),
        front=front,
        hv=hv_exact([c.validation_scores for c in front]),
        incomplete=incomplete,
        error=error,
    )
