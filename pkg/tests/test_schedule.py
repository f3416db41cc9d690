import math
from dataclasses import dataclass

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skillopt.metrics import ContractError
from skillopt.schedule import AnnealSchedule, Decision, SpeculativeBuffer, buffer_insert, decide, tau


@dataclass
class Cand:
    id: int
    minibatch_scores: tuple


def test_tau_endpoints_and_midpoint():
    s = AnnealSchedule()
    assert s.tau(0, 1000) == 0.1
    assert s.tau(500, 1000) == pytest.approx(0.1 * math.exp(-5), abs=1e-15)
    assert abs(tau(s, 500, 1000) - 0.0007) < 1e-4
    assert s.tau(1000, 1000) == pytest.approx(0.1 * math.exp(-10))


@given(st.integers(0, 999), st.integers(1, 1000))
def test_tau_is_non_increasing(b, step):
    s = AnnealSchedule()
    assert s.tau(b + step, 1000) <= s.tau(b, 1000)


def test_mode_switch_point():
    s = AnnealSchedule()
    assert s.exploring(s.tau(0, 1000))
    assert not s.exploring(s.tau(500, 1000))
    # tau crosses 1e-3 where exp(-10 b/B) = 0.01
    crossing = math.log(100) / 10
    assert s.exploring(s.tau(crossing * 1000 - 1, 1000))
    assert not s.exploring(s.tau(crossing * 1000 + 1, 1000))


def test_schedule_validation():
    with pytest.raises(ContractError):
        AnnealSchedule(tau0=0.0, tau_end=0.1)
    with pytest.raises(ContractError):
        AnnealSchedule(lam=0)
    with pytest.raises(ContractError):
        AnnealSchedule().tau(1, 0)


def test_buffer_orders_and_evicts_lowest():
    buf = SpeculativeBuffer(capacity=2)
    a, b, c = Cand(1, ()), Cand(2, ()), Cand(3, ())
    assert buf.insert(a, 0.1) is None
    assert buf.insert(b, 0.3) is None
    assert buf.candidates() == [b, a]
    assert buf.insert(c, 0.2) is a
    assert buf.candidates() == [b, c]
    assert buf.best_hvc() == 0.3
    assert buf.pop_best() is b and len(buf) == 1


def test_buffer_insert_newcomer_can_be_evicted():
    buf = SpeculativeBuffer(capacity=1)
    a, b = Cand(1, ()), Cand(2, ())
    buffer_insert(buf, a, 0.5)
    assert buffer_insert(buf, b, 0.5) is b  # ties rank after existing entries
    assert buf.candidates() == [a]


def test_buffer_rejects_non_positive_hvc_and_empty_pop():
    buf = SpeculativeBuffer()
    with pytest.raises(ContractError):
        buf.insert(Cand(1, ()), 0.0)
    with pytest.raises(ContractError):
        buf.pop_best()
    with pytest.raises(ContractError):
        SpeculativeBuffer(capacity=0)


@given(st.lists(st.floats(1e-6, 1.0), max_size=30), st.integers(1, 6))
def test_buffer_never_exceeds_capacity_and_stays_sorted(gains, k):
    buf = SpeculativeBuffer(capacity=k)
    for i, g in enumerate(gains):
        buf.insert(Cand(i, ()), g)
        assert len(buf) <= k
        stored = [h for h, _ in buf.entries]
        assert stored == sorted(stored, reverse=True)


SEED = (0.632, 0.962890625, 0.9866)
W = (1 / 3, 1 / 3, 1 / 3)


def test_explore_buffers_below_threshold():
    buf = SpeculativeBuffer()
    c = Cand(1, (0.70, 0.77, 0.38))
    j = decide(0.1, c, [SEED], buf, W, 0.2)
    assert j.decision is Decision.BUFFERED and j.exploring
    assert j.hvc_pool == pytest.approx(0.068 * 0.77 * 0.38)
    assert buf.candidates() == [c]


def test_explore_commits_best_buffered_once_threshold_is_exceeded():
    buf = SpeculativeBuffer()
    weak = Cand(1, (0.70, 0.77, 0.38))
    decide(0.1, weak, [SEED], buf, W, 0.2)
    strong = Cand(2, (0.95, 0.8, 0.7))
    j = decide(0.1, strong, [SEED], buf, W, 0.2)
    assert j.hvc_pool > 0.1
    assert j.decision is Decision.COMMIT_FROM_BUFFER
    assert j.commit is strong
    assert buf.candidates() == [weak]


def test_explore_rejects_dominated_candidate():
    buf = SpeculativeBuffer()
    j = decide(0.1, Cand(1, (0.5, 0.5, 0.5)), [SEED], buf, W, 0.2)
    assert j.decision is Decision.REJECT and j.hvc_pool == 0.0 and len(buf) == 0


def test_exploit_requires_strict_chebyshev_improvement():
    buf = SpeculativeBuffer()
    parent = (0.6, 0.6, 0.6)
    parent_score = 0.4 / 3
    better = decide(1e-4, Cand(1, (0.7, 0.6, 0.6)), [SEED], buf, W, parent_score)
    assert better.decision is Decision.REJECT  # max term unchanged
    best = decide(1e-4, Cand(2, (0.7, 0.7, 0.7)), [SEED], buf, W, parent_score)
    assert best.decision is Decision.COMMIT_CANDIDATE and not best.exploring
    same = decide(1e-4, Cand(3, parent), [SEED], buf, W, parent_score)
    assert same.decision is Decision.REJECT


def test_decision_commit_flags():
    assert Decision.COMMIT_FROM_BUFFER.commits and Decision.COMMIT_CANDIDATE.commits
    assert not Decision.BUFFERED.commits and not Decision.REJECT.commits
