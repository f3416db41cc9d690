"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
Each check returns ``(ok, detail)``; the pytest wrappers print the line and assert.
"""

from __future__ import annotations

import json
import math
import statistics
import sys
from pathlib import Path

import numpy as np

from skillopt.engine import EngineSettings, run
from skillopt.hypervolume import hv_exact, hv_monte_carlo, hvc
from skillopt.metrics import ComplianceLimits, compliance_score, dominates
from skillopt.report import read_pool, read_trace, write_report
from skillopt.scalarize import argmin_ties, chebyshev, linear
from skillopt.schedule import AnnealSchedule
from skillopt.skill_doc import compliance_report, measure, render_mutation_prompt, serialize
from skillopt.strategies import make_strategy
from skillopt.tasks import (
    ConcaveConfig,
    TradeoffConfig,
    TradeoffLandscape,
    concave_front_landscape,
    conflict_landscape,
    fever_seed,
)

BASELINES = ("greedy", "ucb_beam", "stochastic_pareto")
MOCHA_FAMILY = ("mocha", "mocha_no_hvc", "mocha_no_anneal")

CONFLICT = dict(total=200, n=2, validation=10)
# scripted landscape for the ablation ordering; see TradeoffConfig defaults
ABLATION_BUDGET = 300
ABLATION_N = 2
ABLATION_SEEDS = range(5)

_runs: dict[tuple, object] = {}


def conflict_run(variant, seed=0):
    key = ("conflict", variant, seed)
    if key not in _runs:
        task = conflict_landscape()
        settings = EngineSettings(CONFLICT["total"], CONFLICT["n"], validation_size=CONFLICT["validation"], seed=seed)
        _runs[key] = run(task.seed_doc, settings, make_strategy(variant), task)
    return _runs[key]


def ablation_run(variant, seed):
    key = ("ablation", variant, seed)
    if key not in _runs:
        task = TradeoffLandscape(TradeoffConfig())
        _runs[key] = run(task.seed_doc, EngineSettings(ABLATION_BUDGET, ABLATION_N, seed=seed),
                         make_strategy(variant), task)
    return _runs[key]


def line(number, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"


# --- checks -------------------------------------------------------------------


def check_1():
    s = AnnealSchedule()
    mid = s.tau(100, 200)
    ok = abs(mid - 0.1 * math.exp(-5)) <= 1e-6 and s.tau(0, 200) == 0.1
    return ok, f"tau(B/2)={mid:.7f} tau(0)={s.tau(0, 200)!r}"


def check_2():
    rng = np.random.default_rng(2024)
    mc_rng = np.random.default_rng(99)
    inside = 0
    for _ in range(200):
        pts = [tuple(p) for p in rng.random((3, 3))]
        est, half = hv_monte_carlo(pts, 10**6, mc_rng)
        inside += abs(hv_exact(pts) - est) <= half
    hand = hv_exact([(1, 1, 0.5), (0.5, 0.5, 1)])
    ok = inside >= 196 and abs(hand - 0.625) <= 1e-12
    return ok, f"{inside}/200 within the 99% half-width; hand-derived set = {hand!r}"


def _grid_pair(rng):
    grid = np.linspace(0.2, 1.0, 5)
    pool = [tuple(rng.choice(grid, 3)) for _ in range(int(rng.integers(1, 6)))]
    kind = rng.integers(4)
    if kind == 0:
        cand = pool[int(rng.integers(len(pool)))]
    elif kind == 1:
        base = np.array(pool[int(rng.integers(len(pool)))])
        cand = tuple(np.maximum(0.2, base - rng.choice([0.0, 0.2], 3)))
    else:
        cand = tuple(rng.choice(grid, 3))
    return tuple(float(x) for x in cand), [tuple(float(x) for x in p) for p in pool]


def check_3():
    rng = np.random.default_rng(3)
    bad = 0
    positives = 0
    for _ in range(10_000):
        cand, pool = _grid_pair(rng)
        expected = not any(dominates(p, cand) or p == cand for p in pool)
        got = hvc(cand, pool) > 0
        positives += got
        bad += got != expected
    return bad == 0, f"{bad} mismatches over 10,000 pairs ({positives} with positive HVC)"


def check_4():
    rng = np.random.default_rng(4)
    bad = 0
    for _ in range(1000):
        p = [tuple(x) for x in rng.uniform(0.01, 0.99, (int(rng.integers(1, 7)), 3))]
        front = [i for i, a in enumerate(p) if not any(dominates(b, a) for b in p)]
        lift = rng.uniform(0, 1, (len(p), 1)) * rng.integers(0, 2, (len(p), 1))
        lift[front[int(rng.integers(len(front)))]] = rng.uniform(0.05, 1)
        p2 = [tuple(float(a + u * (1 - a)) for a in pt) for pt, (u,) in zip(p, lift)]
        bad += not hv_exact(p2) > hv_exact(p)
    return bad == 0, f"{1000 - bad}/1000 dominating sets strictly increase HV"


def _front_points(front):
    cfg = ConcaveConfig(front=front)
    task = concave_front_landscape(cfg)
    limits = ComplianceLimits(cfg.description_limit, 5000)
    prompt = render_mutation_prompt(task.seed_doc, compliance_report(task.seed_doc, limits), "", [])
    pts = []
    for _ in front:
        child = task.mutate(prompt, None)
        val = task._scores[serialize(child)]["validation"]
        pts.append((sum(val) / len(val), *measure(child, limits)))
    return pts


def _sweep(points):
    cheb, lin = set(), set()
    for t in np.linspace(0, 1, 1001):
        w = (float(t), float(1 - t), 0.0)
        cheb.update(argmin_ties([chebyshev(p, w) for p in points]))
        lin.update(argmin_ties([-linear(p, w) for p in points]))
    return cheb, lin


def check_5(front=((1.0, 0.0), (0.6, 0.6), (0.0, 1.0))):
    pts = _front_points(front)
    cheb, lin = _sweep(pts)
    ok = cheb == set(range(len(pts))) and 1 not in lin
    reached = sorted(tuple(round(x, 3) for x in pts[i][:2]) for i in lin)
    return ok, f"front {list(front)}: Chebyshev reaches {len(cheb)}/{len(pts)}; linear reaches {reached}"


def check_6():
    seed_hv = None
    parts = []
    ok = True
    for v in BASELINES + MOCHA_FAMILY:
        rep = conflict_run(v)
        seed_hv = hv_exact([rep.pool[0].validation_scores])
        if v in BASELINES:
            ok &= rep.commits == 0 and len(rep.pool) == 1
        else:
            ok &= rep.commits >= 1 and rep.hv > seed_hv
        parts.append(f"{v} commits={rep.commits} hv={rep.hv:.4f}")
    return ok, f"seed hv={seed_hv:.4f}; " + ", ".join(parts)


def check_7():
    means = {}
    for v in MOCHA_FAMILY:
        reps = [ablation_run(v, s) for s in ABLATION_SEEDS]
        means[v] = (statistics.mean(len(r.front) for r in reps), statistics.mean(r.best_correctness for r in reps))
    size = {v: m[0] for v, m in means.items()}
    corr = {v: m[1] for v, m in means.items()}
    ok = (size["mocha_no_anneal"] >= size["mocha"] >= size["mocha_no_hvc"]
          and corr["mocha_no_hvc"] >= corr["mocha"])
    detail = ", ".join(f"{v} front={size[v]:.1f} best_corr={corr[v]:.3f}" for v in MOCHA_FAMILY)
    return ok, detail


def _replay(run_dir):
    pool = read_pool(run_dir / "pool.json")
    trace = read_trace(run_dir / "trace.csv")
    summary = json.loads((run_dir / "summary.json").read_text())
    n, v, total = summary["minibatch_size"], summary["validation_size"], summary["budget"]
    consumed = v
    for row in trace:
        failed = row["mutation_failed"] == "1"
        spent = n if failed else 2 * n
        if row["committed_id"] != "":
            spent += v
        if int(row["budget_after"]) - int(row["budget_before"]) != spent or int(row["budget_before"]) != consumed:
            return False, consumed
        consumed += spent
    commits = sum(row["committed_id"] != "" for row in trace)
    ok = (consumed == summary["consumed"] and commits == len(pool) - 1
          and consumed - total < v + 2 * n)
    return ok, consumed


def check_8(tmp):
    keys = [("conflict", v, 0) for v in BASELINES + MOCHA_FAMILY]
    keys += [("ablation", v, s) for v in MOCHA_FAMILY for s in ABLATION_SEEDS]
    bad = []
    for key in keys:
        rep = conflict_run(key[1]) if key[0] == "conflict" else ablation_run(key[1], key[2])
        d = write_report(rep, Path(tmp) / "-".join(map(str, key)))
        ok, _ = _replay(Path(d))
        if not ok:
            bad.append(key)
    return not bad, f"{len(keys) - len(bad)}/{len(keys)} runs replay to the recorded budget"


def check_9():
    values = [compliance_score(0, 1024), compliance_score(1024, 1024),
              round(compliance_score(38, 1024), 4), compliance_score(6412, 5000)]
    doc = fever_seed().replace(body=(("execute.predict", "x" * 6412),))
    rendered = compliance_report(doc).render().splitlines()[1]
    ok = values == [1.0, 0.0, 0.9629, 0.0] and rendered == "body: FAIL (6,412/5,000 chars)"
    return ok, f"scores={values} line={rendered!r}"


def check_10(tmp):
    blobs = []
    for k in range(2):
        task = conflict_landscape()
        settings = EngineSettings(CONFLICT["total"], CONFLICT["n"], validation_size=CONFLICT["validation"], seed=11)
        rep = run(task.seed_doc, settings, make_strategy("mocha"), task)
        d = Path(write_report(rep, Path(tmp) / f"det{k}"))
        blobs.append(((d / "trace.csv").read_bytes(), (d / "pool.json").read_bytes()))
    return blobs[0] == blobs[1], "trace.csv and pool.json byte-identical across two invocations"


# --- pytest -----------------------------------------------------------------------


def report(capsys, number, result):
    ok, detail = result
    with capsys.disabled():
        print("\n" + line(number, ok, detail))
    assert ok, detail


def test_criterion_1_annealing(capsys):
    report(capsys, 1, check_1())


def test_criterion_2_hypervolume_oracle(capsys):
    report(capsys, 2, check_2())


def test_criterion_3_hvc_dominance_law(capsys):
    report(capsys, 3, check_3())


def test_criterion_4_strict_monotonicity(capsys):
    report(capsys, 4, check_4())


def test_criterion_5_chebyshev_vs_linear(capsys):
    report(capsys, 5, check_5())


def test_criterion_5_variant_concave_front(capsys):
    # the same contrast on a front whose middle point lies below the chord
    report(capsys, "5 (variant, middle point (0.4, 0.4))", check_5(ConcaveConfig().front))


def test_criterion_6_stuck_baselines(capsys):
    report(capsys, 6, check_6())


def test_criterion_7_ablation_ordering(capsys):
    report(capsys, 7, check_7())


def test_criterion_8_budget_audit(capsys, tmp_path):
    report(capsys, 8, check_8(tmp_path))


def test_criterion_9_compliance(capsys):
    report(capsys, 9, check_9())


def test_criterion_10_determinism(capsys, tmp_path):
    report(capsys, 10, check_10(tmp_path))


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        checks = [(1, check_1), (2, check_2), (3, check_3), (4, check_4), (5, check_5),
                  ("5 (variant, middle point (0.4, 0.4))", lambda: check_5(ConcaveConfig().front)),
                  (6, check_6), (7, check_7), (8, lambda: check_8(tmp)), (9, check_9),
                  (10, lambda: check_10(tmp))]
        results = [(n, fn()) for n, fn in checks]
    for n, (ok, detail) in results:
        print(line(n, ok, detail))
    sys.exit(0 if all(ok for _, (ok, _) in results) else 1)
