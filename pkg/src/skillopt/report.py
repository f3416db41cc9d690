"""Run-directory output and the cross-run comparison table.

A run directory holds::

    summary.json     run metadata with the final front
    pool.json        every committed candidate with scores and SKILL.md text
    trace.csv        one row per iteration (see ``engine.TRACE_FIELDS``)
    front.csv        final front members and their validation vectors
    tree.dot         commit lineage, front members filled
    config.ini       resolved run configuration
    skills/<id>/SKILL.md
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from pathlib import Path
from typing import Iterable, Sequence

from .engine import TRACE_FIELDS, RunReport
from .hypervolume import hv_exact
from .metrics import METRIC_NAMES, ContractError, pareto_front_indices
from .skill_doc import serialize

log = logging.getLogger(__name__)

TABLE_FIELDS = ("strategy", "seed", "correctness", "hv", "front_size")


class CorruptReport(ContractError):
    pass


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _csv_text(fields: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def pool_records(report: RunReport) -> list[dict]:
    return [
        {
            "id": c.id,
            "parent_id": c.parent_id,
            "created_at_budget": c.created_at_budget,
            "minibatch_scores": list(c.minibatch_scores) if c.minibatch_scores else None,
            "validation_scores": list(c.validation_scores),
            "validation_correctness": list(c.validation_correctness),
            "skill_md": serialize(c.doc),
        }
        for c in report.pool
    ]


def summary_record(report: RunReport) -> dict:
    return {
        "strategy": report.strategy,
        "seed": report.seed,
        "budget": report.total,
        "consumed": report.consumed,
        "minibatch_size": report.minibatch_size,
        "validation_size": report.validation_size,
        "commits": report.commits,
        "iterations": len(report.trace),
        "front_ids": [c.id for c in report.front],
        "front_size": len(report.front),
        "hv": report.hv,
        "best_correctness": report.best_correctness,
        "incomplete": report.incomplete,
        "error": report.error,
    }


def lineage_dot(report: RunReport) -> str:
    front = {c.id for c in report.front}
    lines = ["digraph lineage {", "  node [shape=box, fontname=monospace];"]
    for c in report.pool:
        v = c.validation_scores
        label = f"{c.id}\\n" + " ".join(f"{x:.3f}" for x in v)
        style = ', style=filled, fillcolor="#cde4ff"' if c.id in front else ""
        lines.append(f'  n{c.id} [label="{label}"{style}];')
    for c in report.pool:
        if c.parent_id is not None:
            lines.append(f"  n{c.parent_id} -> n{c.id};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, outdir, config_text: str | None = None) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(summary_record(report), out / "summary.json")
    _dump_json(pool_records(report), out / "pool.json")
    (out / "trace.csv").write_text(_csv_text(TRACE_FIELDS, report.trace), encoding="utf-8")
    front_rows = [
        {"id": c.id, **{name: repr(x) for name, x in zip(METRIC_NAMES, c.validation_scores)}}
        for c in report.front
    ]
    (out / "front.csv").write_text(_csv_text(("id",) + METRIC_NAMES, front_rows), encoding="utf-8")
    (out / "tree.dot").write_text(lineage_dot(report), encoding="utf-8")
    if config_text is not None:
        (out / "config.ini").write_text(config_text, encoding="utf-8")
    for c in report.pool:
        d = out / "skills" / str(c.id)
        d.mkdir(parents=True, exist_ok=True)
        (d / "SKILL.md").write_text(serialize(c.doc), encoding="utf-8")
    return out


def read_pool(path) -> list[dict]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        for rec in data:
            rec["validation_scores"] = [float(x) for x in rec["validation_scores"]]
            int(rec["id"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptReport(f"{path}: {exc}") from exc
    if not data:
        raise CorruptReport(f"{path}: empty pool")
    return data


def read_trace(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def front_of_pool(records: Sequence[dict]) -> tuple[list[dict], float]:
    """Recompute the final front and its exact HV from pool records."""
    idx = pareto_front_indices([r["validation_scores"] for r in records])
    front = [records[i] for i in idx]
    return front, hv_exact([r["validation_scores"] for r in front])


def table_row(run_dir) -> dict:
    run_dir = Path(run_dir)
    try:
        summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
        strategy, seed = str(summary["strategy"]), int(summary["seed"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptReport(f"{run_dir}: {exc}") from exc
    front, hv = front_of_pool(read_pool(run_dir / "pool.json"))
    return {
        "strategy": strategy,
        "seed": seed,
        "correctness": max(r["validation_scores"][0] for r in front),
        "hv": hv,
        "front_size": len(front),
    }


def _fmt_num(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def comparison_table(run_dirs: Iterable) -> str:
    """One CSV row per run; strategies with several runs get mean/std rows.

    Unreadable directories are skipped with a warning. Summary rows appear for
    strategies with at least two runs and use the sample standard deviation.
    """
    rows = []
    for d in run_dirs:
        try:
            rows.append(table_row(d))
        except CorruptReport as exc:
            log.warning("skipping corrupt report: %s", exc)
    rows.sort(key=lambda r: (r["strategy"], r["seed"]))
    out = [dict(r) for r in rows]
    for strategy in sorted({r["strategy"] for r in rows}):
        group = [r for r in rows if r["strategy"] == strategy]
        if len(group) < 2:
            continue
        for label, fn in (("mean", statistics.mean), ("std", statistics.stdev)):
            out.append({
                "strategy": strategy,
                "seed": label,
                **{k: fn([float(r[k]) for r in group]) for k in ("correctness", "hv", "front_size")},
            })
    return _csv_text(TABLE_FIELDS, ({k: _fmt_num(v) for k, v in r.items()} for r in out))
