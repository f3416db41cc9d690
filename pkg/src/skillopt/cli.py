"""Command line entry point: ``skillopt run|report|validate-skill|front``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, split_overrides
from .engine import EngineSettings, run
from .metrics import ComplianceLimits, ContractError
from .report import CorruptReport, comparison_table, front_of_pool, read_pool, write_report
from .schedule import AnnealSchedule
from .skill_doc import SkillParseError, compliance_report, load
from .strategies import make_strategy
from .tasks import (
    ConcaveConfig,
    ConflictConfig,
    EndpointConfig,
    JsonlTask,
    TradeoffConfig,
    TradeoffLandscape,
    concave_front_landscape,
    conflict_landscape,
    llm_executor,
    llm_mutator,
    load_script,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("skillopt")


def build_task(cfg: RunConfig, seed_doc):
    adapter = cfg["task.adapter"]
    if adapter == "conflict":
        return conflict_landscape(ConflictConfig(), seed_doc)
    if adapter == "concave":
        return concave_front_landscape(ConcaveConfig(description_limit=cfg["limits.description"]))
    if adapter == "tradeoff":
        return TradeoffLandscape(TradeoffConfig(landscape_seed=cfg["task.landscape_seed"]), seed_doc)
    if adapter == "script":
        return load_script(cfg["task.script"])
    endpoint = EndpointConfig(
        url=cfg["task.endpoint"],
        model=cfg["task.model"],
        api_key_env=cfg["task.api_key_env"],
        timeout=cfg["task.timeout"],
        max_tokens=cfg["task.max_tokens"],
        tries=cfg["task.tries"],
    )
    return JsonlTask(cfg["task.train"], cfg["task.validation"], llm_executor(endpoint), llm_mutator(endpoint))


def build(cfg: RunConfig):
    """Everything ``run`` needs, built from a validated config."""
    seed_doc = load(cfg["run.seed_skill"]) if cfg["run.seed_skill"] else None
    task = build_task(cfg, seed_doc)
    if seed_doc is None:
        seed_doc = task.seed_doc
    limits = ComplianceLimits(cfg["limits.description"], cfg["limits.body"])
    settings = EngineSettings(
        budget=cfg["run.budget"],
        minibatch_size=cfg["run.minibatch_size"],
        limits=limits,
        seed=cfg["run.seed"],
        workers=cfg["run.workers"],
        validation_size=cfg["run.validation_size"],
    )
    schedule = AnnealSchedule(
        cfg["annealing.tau0"], cfg["annealing.tau_end"], cfg["annealing.lambda"], cfg["annealing.mode_epsilon"]
    )
    strategy = make_strategy(
        cfg["strategy.variant"],
        schedule,
        cfg["strategy.buffer_capacity"],
        cfg["strategy.beam_width"],
        cfg["strategy.exploration_constant"],
    )
    return seed_doc, settings, strategy, task


def cmd_run(args, extra) -> int:
    tokens = list(extra)
    config_path = tokens.pop(0) if tokens and not tokens[0].startswith("-") else None
    try:
        text = Path(config_path).read_text(encoding="utf-8") if config_path else None
        cfg = load_config(text, split_overrides(tokens))
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        seed_doc, settings, strategy, task = build(cfg)
    except (OSError, ValueError) as exc:
        # bad seed skill or unreadable task inputs
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run(seed_doc, settings, strategy, task)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = write_report(report, cfg["run.output_dir"], cfg.to_ini())
    print(report.summary() + f" out={out}")
    if report.incomplete:
        print(f"error: run incomplete: {report.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args, extra) -> int:
    table = comparison_table(args.runs)
    if args.output:
        Path(args.output).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    return EXIT_OK


def cmd_validate(args, extra) -> int:
    try:
        doc = load(args.skill)
    except SkillParseError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        print(f"error: {args.skill}{where}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    limits = ComplianceLimits(args.description_limit, args.body_limit)
    print(compliance_report(doc, limits).render())
    return EXIT_OK


def cmd_front(args, extra) -> int:
    try:
        records = read_pool(args.pool)
    except CorruptReport as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    front, hv = front_of_pool(records)
    print("id,correctness,description_compliance,body_compliance")
    for r in front:
        print(",".join([str(r["id"])] + [repr(x) for x in r["validation_scores"]]))
    print(f"# front_size={len(front)} hv={hv!r}")
    return EXIT_OK


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skillopt", description="Multi-objective SKILL.md optimizer.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser(
        "run",
        help="run one optimization",
        usage="skillopt run [CONFIG.ini] [--key=value | --section.key value ...]",
        description="Run one optimization. Keys missing from CONFIG take their defaults; "
        "any key can be overridden with --key=value or --section.key=value.",
    )
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="compare run directories as CSV")
    rep.add_argument("runs", nargs="+")
    rep.add_argument("-o", "--output")
    rep.set_defaults(func=cmd_report)

    v = sub.add_parser("validate-skill", help="print the compliance report for a SKILL.md")
    v.add_argument("skill")
    v.add_argument("--description-limit", type=int, default=1024)
    v.add_argument("--body-limit", type=int, default=5000)
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("front", help="recompute the Pareto front and HV from pool.json")
    f.add_argument("pool")
    f.set_defaults(func=cmd_front)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    p = parser()
    extra: list[str] = []
    # override flags are open-ended, so everything after `run` bypasses argparse
    if "run" in argv and not {"-h", "--help"} & set(argv):
        i = argv.index("run")
        argv, extra = argv[: i + 1], argv[i + 1:]
    args = p.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args, extra)


if __name__ == "__main__":
    sys.exit(main())
