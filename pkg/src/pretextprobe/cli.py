"""Command line entry point: ``pretextprobe <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation (including bound violations).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from pretextprobe import __version__
from pretextprobe.bench import build_context, estimate_task, run_benchmark, train_task
from pretextprobe.config import BenchConfig
from pretextprobe.data import write_dataset
from pretextprobe.errors import ConfigError, DataError, InvariantViolation, TaskError
from pretextprobe.models import evaluate_error, save_model
from pretextprobe.report import emit_report
from pretextprobe.trainers import PIPELINES
from pretextprobe.worlds.finite import KINDS, sweep
from pretextprobe.worlds.synth import gen_synthetic

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
log = logging.getLogger("pretextprobe")


class UsageError(Exception):
    def __init__(self, message: str, usage: str = ""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    g.add_argument("--config", help="JSON config file or preset name (reference, desk)")
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("--tasks", help='comma-separated task names such as "Hue:3", or "all"')
    g.add_argument("--data", type=Path, help="directory with labeled.kpd, unlabeled.kpd, test.kpd")
    g.add_argument("--quiet", action="store_true", help="only print results")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="pretextprobe", description="Pretext-task usefulness estimation and benchmarking.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("estimate", parents=[common], help="indicator estimates for tasks (JSON lines)")

    p = sub.add_parser("train-ssl", parents=[common], help="train one pipeline per task, print test error")
    p.add_argument("--pipeline", choices=PIPELINES, default="semi")

    p = sub.add_parser("bench", parents=[common], help="predicted vs actual benchmark with report files")
    p.add_argument("--workers", type=int, help="worker processes (overrides config)")
    p.add_argument("--no-resume", action="store_true", help="ignore rows checkpointed by an earlier run")

    p = sub.add_parser("verify-bounds", parents=[common], help="exhaustive bound check on random finite worlds")
    p.add_argument("--worlds", type=int, default=100, help="worlds per kind (default 100)")
    p.add_argument("--max-inputs", type=int, default=6)
    p.add_argument("--max-labels", type=int, default=3)
    p.add_argument("--kinds", default=",".join(KINDS), help=f"comma list from {', '.join(KINDS)}")

    p = sub.add_parser("gen-synth", parents=[common], help="write a synthetic world as dataset files")
    p.add_argument("--invariant-fraction", type=float, help="override synth.invariant_class_fraction")
    p.add_argument("--classes-per-cell", type=int, help="override synth.classes_per_knowledge_cell")
    return parser


def _load_config(args) -> BenchConfig:
    cfg = BenchConfig.load(args.config)
    if args.tasks:
        cfg = cfg.override(tasks=args.tasks)
    return cfg


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True), flush=True)


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    ctx = build_context(cfg, args.seed, args.data)
    for task in cfg.task_list():
        est = estimate_task(ctx, task)
        _emit({"task": task.name, **est.to_dict()})
    return EXIT_OK


def cmd_train_ssl(args) -> int:
    cfg = _load_config(args)
    ctx = build_context(cfg, args.seed, args.data)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for task in cfg.task_list():
        model = train_task(ctx, task, args.pipeline)
        err = evaluate_error(model, ctx.data.test)
        if args.out:
            save_model(args.out / f"{task.name.replace(':', '_')}__{args.pipeline}.kpm", model)
        _emit({"task": task.name, "pipeline": args.pipeline, "test_error": err, "config_hash": cfg.hash()})
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    if args.workers is not None:
        cfg = cfg.override(workers=args.workers)
    out = args.out or Path("bench_out")
    t0 = time.perf_counter()
    report = run_benchmark(cfg, seed=args.seed, out_dir=out, data_dir=args.data, resume=not args.no_resume)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    emit_report(report, out)
    for p, r in report.pearson.items():
        print(f"pearson {p}: {'undefined' if r is None else f'{r:.4f}'}")
    print(f"tasks: {len(report.rows)}  config: {report.config_hash}  time: {time.perf_counter() - t0:.1f}s")
    print(f"report: {out / 'report.csv'}")
    return EXIT_OK


def cmd_verify_bounds(args) -> int:
    kinds = [k for k in args.kinds.split(",") if k]
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise UsageError(f"unknown world kind(s): {', '.join(bad)}")
    if args.worlds < 1 or args.max_inputs < 1 or args.max_labels < 1:
        raise UsageError("--worlds, --max-inputs and --max-labels must be positive")
    t0 = time.perf_counter()
    results = {}
    for kind in kinds:
        rep = sweep(args.worlds, args.max_inputs, args.max_labels, args.seed, kind)
        results[kind] = rep.to_dict()
        log.info(
            "%-18s worlds %d  hypotheses %d  max slack %.3g",
            kind,
            args.worlds,
            rep.hypotheses,
            rep.max_slack,
        )
    total = sum(r["total_violations"] for r in results.values())
    elapsed = time.perf_counter() - t0
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bounds.json").write_text(json.dumps({"kinds": results, "violations": total}, indent=2) + "\n")
    print(f"worlds: {args.worlds * len(kinds)}  hypotheses: {sum(r['hypotheses'] for r in results.values())}")
    print(f"violations: {total}")
    print(f"time: {elapsed:.2f}s")
    return EXIT_OK if total == 0 else EXIT_INVARIANT


def cmd_gen_synth(args) -> int:
    cfg = BenchConfig.load(args.config)
    changes = {"seed": args.seed}
    if args.invariant_fraction is not None:
        changes["invariant_class_fraction"] = args.invariant_fraction
    if args.classes_per_cell is not None:
        changes["classes_per_knowledge_cell"] = args.classes_per_cell
    spec = cfg.override(synth=changes).synth_spec()
    world = gen_synthetic(spec)
    out = args.out or Path("synth_data")
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("labeled", world.labeled), ("unlabeled", world.unlabeled), ("test", world.test)):
        write_dataset(out / f"{name}.kpd", ds)
    (out / "synth.json").write_text(json.dumps(asdict(spec), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(world.labeled)}/{len(world.unlabeled)}/{len(world.test)} labeled/unlabeled/test images to {out}")
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "train-ssl": cmd_train_ssl,
    "bench": cmd_bench,
    "verify-bounds": cmd_verify_bounds,
    "gen-synth": cmd_gen_synth,
}


def _setup_logging(quiet: bool) -> None:
    log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _setup_logging(args.quiet)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write((exc.usage or parser.format_usage()) + f"pretextprobe: error: {exc}\n")
        return EXIT_USAGE
    except (ConfigError, TaskError) as exc:
        sys.stderr.write(f"pretextprobe: error: {exc}\n")
        return EXIT_USAGE
    except DataError as exc:
        sys.stderr.write(f"pretextprobe: data error: {exc}\n")
        return EXIT_DATA
    except InvariantViolation as exc:
        sys.stderr.write(f"pretextprobe: invariant violation: {exc}\n")
        return EXIT_INVARIANT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
