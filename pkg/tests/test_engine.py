import pytest

from skillopt.engine import (
    TRACE_FIELDS,
    BudgetLedger,
    EngineSettings,
    MutationError,
    Streams,
    evaluate,
    run,
)
from skillopt.metrics import ComplianceLimits, ContractError
from skillopt.skill_doc import SkillDoc
from skillopt.strategies import make_strategy
from skillopt.tasks import ScriptedTask, ScriptStep, conflict_landscape, fever_seed


def audit(report):
    """Rebuild consumed budget from the trace alone."""
    n, v = report.minibatch_size, report.validation_size
    total = v
    for row in report.trace:
        spent = n if row["mutation_failed"] == 1 else 2 * n
        if row["committed_id"] != "":
            spent += v
        assert row["budget_after"] - row["budget_before"] == spent
        total += spent
    return total


def test_ledger_charges_only_known_increments():
    led = BudgetLedger(100, 2, 10)
    for amount in (2, 4, 10):
        led.charge(amount)
    assert led.consumed == 16
    with pytest.raises(ContractError):
        led.charge(3)


def test_ledger_iteration_guard():
    led = BudgetLedger(20, 2, 10, consumed=16)
    assert led.can_iterate()
    led.consumed = 17
    assert not led.can_iterate()


def test_streams_are_independent_and_reproducible():
    a, b = Streams(7), Streams(7)
    assert a.weights.random() == b.weights.random()
    assert Streams(7).weights.random() != Streams(7).minibatch.random()


class Flaky:
    def __init__(self, fail_on):
        self.fail_on = fail_on

    def score(self, doc, example):
        if example in self.fail_on:
            raise RuntimeError("boom")
        return 1.0

    def feedback(self, doc, example, score):
        return ""


def test_evaluate_flags_failures_and_scores_them_zero():
    ev = evaluate(fever_seed(), [0, 1, 2, 3], Flaky({1}))
    assert ev.per_example == (1.0, 0.0, 1.0, 1.0)
    assert ev.failures == (1,)
    assert ev.scores[0] == 0.75


def test_evaluate_thread_pool_matches_serial():
    task = Flaky({2, 5})
    serial = evaluate(fever_seed(), list(range(8)), task)
    pooled = evaluate(fever_seed(), list(range(8)), task, workers=4)
    assert serial == pooled


def test_evaluate_rejects_empty_slice():
    with pytest.raises(ContractError):
        evaluate(fever_seed(), [], Flaky(set()))


def test_conflict_run_budget_audit_and_trace_shape():
    task = conflict_landscape()
    rep = run(task.seed_doc, EngineSettings(200, 2), make_strategy("mocha"), task)
    assert audit(rep) == rep.consumed
    assert rep.consumed - rep.total < rep.validation_size + 2 * rep.minibatch_size
    assert all(set(row) == set(TRACE_FIELDS) for row in rep.trace)
    assert rep.pool[0].validation_scores == pytest.approx((0.632, 1 - 38 / 1024, 1 - 67 / 5000))
    assert rep.trace[0]["budget_before"] == rep.validation_size


def test_empty_script_idles_and_charges_n_per_failure():
    base = fever_seed()
    task = ScriptedTask(base, (1.0,) * 4, (1.0,) * 3, steps=())
    rep = run(base, EngineSettings(20, 2), make_strategy("mocha"), task)
    assert rep.commits == 0
    assert all(row["decision"] == "MutationFailed" for row in rep.trace)
    assert rep.consumed == 3 + 2 * len(rep.trace)
    assert audit(rep) == rep.consumed
    assert not rep.incomplete


class Exploding(ScriptedTask):
    def mutate(self, prompt, rng):
        raise RuntimeError("endpoint melted")


def test_unexpected_error_marks_report_incomplete():
    base = fever_seed()
    task = Exploding(base, (1.0,) * 4, (1.0,) * 3)
    rep = run(base, EngineSettings(20, 2), make_strategy("greedy"), task)
    assert rep.incomplete and "endpoint melted" in rep.error
    assert rep.pool and rep.front


def test_minibatch_larger_than_train_is_a_contract_error():
    task = conflict_landscape()
    with pytest.raises(ContractError):
        run(task.seed_doc, EngineSettings(200, 50), make_strategy("mocha"), task)


def test_validation_size_truncates():
    task = conflict_landscape()
    rep = run(task.seed_doc, EngineSettings(100, 2, validation_size=4), make_strategy("greedy"), task)
    assert rep.validation_size == 4
    assert rep.trace[0]["budget_before"] == 4


def test_settings_validation():
    with pytest.raises(ContractError):
        EngineSettings(0, 2)
    with pytest.raises(ContractError):
        EngineSettings(10, 2, workers=0)


def test_identical_seeds_give_identical_traces():
    runs = []
    for _ in range(2):
        task = conflict_landscape()
        runs.append(run(task.seed_doc, EngineSettings(120, 2, seed=9), make_strategy("mocha"), task))
    assert runs[0].trace == runs[1].trace
    assert [c.validation_scores for c in runs[0].pool] == [c.validation_scores for c in runs[1].pool]


def test_mutation_error_is_runtime_error():
    assert issubclass(MutationError, RuntimeError)


def test_committed_candidates_are_validated():
    base = SkillDoc("s", description="d", body=(("a", "x"),))
    better = ScriptStep({"description": "", "body": {"a": ""}}, (1.0,) * 4, (1.0,) * 3)
    task = ScriptedTask(base, (0.0,) * 4, (0.0,) * 3, steps=[better])
    rep = run(base, EngineSettings(40, 2, limits=ComplianceLimits(10, 10)), make_strategy("greedy"), task)
    assert rep.commits >= 1
    assert rep.pool[1].validation_scores == (1.0, 1.0, 1.0)
    assert rep.front == [c for c in rep.pool if c.validation_scores == (1.0, 1.0, 1.0)]
