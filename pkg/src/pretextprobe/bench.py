"""Predicted-vs-actual benchmark over a list of pretext tasks.

For every task the indicator estimates come from the small samples (a few
labeled examples per class, a few dozen unlabeled) and the actual error from
full semi- and self-supervised training. Rows are appended to ``rows.jsonl``
as tasks finish, so an interrupted run resumes where it stopped.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from pretextprobe.augment import PretextTask, task_grid
from pretextprobe.config import BenchConfig
from pretextprobe.data import Dataset, read_dataset, stratified_sample
from pretextprobe.errors import DataError, DegenerateError, DimensionError
from pretextprobe.estimators import IndicatorEstimates, run_estimation_pipeline, train_proxy
from pretextprobe.models import MlpModel, evaluate_error, save_model
from pretextprobe.numerics import derive_seed, make_rng, pearson_r
from pretextprobe.trainers import train_pipeline
from pretextprobe.worlds.synth import gen_synthetic

log = logging.getLogger(__name__)

DATA_FILES = ("labeled.kpd", "unlabeled.kpd", "test.kpd")
ROWS_FILE = "rows.jsonl"
_GRID_INDEX = {t: i for i, t in enumerate(task_grid())}


@dataclass
class BenchData:
    labeled: Dataset
    unlabeled: Dataset
    test: Dataset
    sample: Dataset

    def check(self, pipelines):
        if len(self.test) == 0:
            raise DataError("empty test set")
        self.test.require_labels()
        if len(self.unlabeled) == 0 and pipelines:
            raise DataError("empty unlabeled set")
        self.labeled.require_coverage()
        if len(self.sample) == 0:
            raise DataError("empty estimation sample")


def read_data_dir(path) -> tuple[Dataset, Dataset, Dataset]:
    path = Path(path)
    missing = [f for f in DATA_FILES if not (path / f).is_file()]
    if missing:
        raise DataError(f"{path}: missing {', '.join(missing)}")
    return tuple(read_dataset(path / f) for f in DATA_FILES)


def prepare_data(cfg: BenchConfig, seed: int, data_dir=None) -> BenchData:
    """Load the three splits and draw the labeled set and the estimation sample.

    The unlabeled split may carry labels (the synthetic world keeps them); they
    are only used to stratify the estimation sample and never reach training.
    """
    data_dir = data_dir or cfg.doc["data"]
    if data_dir:
        labeled, unlabeled, test = read_data_dir(data_dir)
    else:
        world = gen_synthetic(cfg.synth_spec())
        labeled, unlabeled, test = world.labeled, world.unlabeled, world.test
    labeled.require_labels()
    sizes = cfg.doc["sampling"]
    counts = labeled.class_counts()
    if counts.max(initial=0) > sizes["labeled_per_class"]:
        labeled = stratified_sample(labeled, sizes["labeled_per_class"], make_rng(seed, "labeled"))
    sample = stratified_sample(unlabeled, sizes["unlabeled_per_class"], make_rng(seed, "sample")).unlabeled()
    data = BenchData(labeled, unlabeled.unlabeled(), test, sample)
    data.check(cfg.pipelines)
    return data


def task_seed(seed: int, task: PretextTask) -> int:
    """Keyed on the task's position in the full grid, so a task gets the same
    seed whichever subset it runs in."""
    return derive_seed(seed, "task", _GRID_INDEX[task])


def _file_stem(task: PretextTask) -> str:
    return task.name.replace(":", "_")


@dataclass
class BenchContext:
    cfg: BenchConfig
    seed: int
    data: BenchData
    proxy: MlpModel
    checkpoint_dir: Path | None = None


def estimate_task(ctx: BenchContext, task: PretextTask, timings: dict | None = None) -> IndicatorEstimates:
    ts = task_seed(ctx.seed, task)
    return run_estimation_pipeline(
        ctx.data.labeled,
        ctx.data.sample,
        task,
        ctx.cfg.train_config(derive_seed(ts, "estimate")),
        ctx.cfg.satisfaction(),
        seed=derive_seed(ts, "satisfaction"),
        proxy=ctx.proxy,
        timings=timings,
        backbone=ctx.proxy if ctx.cfg.warm_start else None,
    )


def train_task(ctx: BenchContext, task: PretextTask, pipeline: str) -> MlpModel:
    return train_pipeline(
        pipeline,
        ctx.data.labeled,
        ctx.data.unlabeled,
        task,
        ctx.cfg.ssl_config(derive_seed(task_seed(ctx.seed, task), pipeline)),
        init=ctx.proxy if ctx.cfg.warm_start else None,
    )


def run_task(ctx: BenchContext, task: PretextTask) -> dict:
    timings: dict = {}
    t0 = time.perf_counter()
    est = estimate_task(ctx, task, timings)
    row = {
        "task": task.name,
        "family": task.family,
        "strength": task.strength,
        "r_unlearnable": est.r_unlearnable,
        "r_unreliable": est.r_unreliable,
        "r_incomplete": est.r_incomplete,
        "predicted": est.predicted_risk,
        "n_sample": est.n_sample,
        "n_learnable": est.n_learnable,
        "n_reliable": est.n_reliable,
        "estimate_time": timings["wall_time"],
    }
    for pipeline in ("semi", "self"):
        if pipeline not in ctx.cfg.pipelines:
            row[f"actual_{pipeline}"] = None
            continue
        model = train_task(ctx, task, pipeline)
        if ctx.checkpoint_dir is not None:
            save_model(ctx.checkpoint_dir / f"{_file_stem(task)}__{pipeline}.kpm", model)
        row[f"actual_{pipeline}"] = evaluate_error(model, ctx.data.test)
    row["wall_time"] = time.perf_counter() - t0
    return row


def build_context(cfg: BenchConfig, seed: int, data_dir=None, checkpoint_dir=None) -> BenchContext:
    """Load data and train the shared proxy once."""
    data = prepare_data(cfg, seed, data_dir)
    proxy = train_proxy(data.labeled, cfg.proxy_config(derive_seed(seed, "proxy")))
    log.info("proxy test error %.4f", evaluate_error(proxy, data.test))
    if checkpoint_dir is not None:
        save_model(Path(checkpoint_dir) / "proxy.kpm", proxy)
    return BenchContext(cfg, seed, data, proxy, Path(checkpoint_dir) if checkpoint_dir is not None else None)


# worker-process state, set once per process by the pool initializer
_CTX: BenchContext | None = None


def _init_worker(ctx: BenchContext):
    global _CTX
    _CTX = ctx


def _run_in_worker(task: PretextTask) -> dict:
    return run_task(_CTX, task)


def safe_pearson(xs, ys) -> float | None:
    """Pearson over pairs where both sides are present; None when undefined."""
    pairs = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None]
    if len(pairs) < 2:
        return None
    try:
        return pearson_r([p[0] for p in pairs], [p[1] for p in pairs])
    except (DegenerateError, DimensionError):
        return None


@dataclass
class BenchReport:
    rows: list[dict]
    pipelines: list[str]
    config_hash: str
    seed: int
    config: dict = field(default_factory=dict)

    def column(self, key: str) -> list:
        return [r[key] for r in self.rows]

    @property
    def pearson(self) -> dict[str, float | None]:
        pred = self.column("predicted")
        return {p: safe_pearson(pred, self.column(f"actual_{p}")) for p in self.pipelines}

    @property
    def per_family(self) -> dict[str, dict[str, float | None]]:
        out: dict = {}
        for fam in dict.fromkeys(r["family"] for r in self.rows):
            rows = [r for r in self.rows if r["family"] == fam]
            pred = [r["predicted"] for r in rows]
            out[fam] = {p: safe_pearson(pred, [r[f"actual_{p}"] for r in rows]) for p in self.pipelines}
        return out

    def summary(self) -> dict:
        return {
            "pearson": self.pearson,
            "per_family_pearson": self.per_family,
            "tasks": len(self.rows),
            "pipelines": self.pipelines,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "config": self.config,
        }


def _load_checkpoint(path: Path, config_hash: str, seed: int) -> dict[str, dict]:
    done: dict[str, dict] = {}
    if not path.is_file():
        return done
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            log.warning("ignoring unreadable line in %s", path)
            continue
        if rec.get("config_hash") == config_hash and rec.get("seed") == seed:
            done[rec["row"]["task"]] = rec["row"]
    return done


def run_benchmark(cfg: BenchConfig, seed: int = 0, out_dir=None, data_dir=None, resume: bool = True) -> BenchReport:
    """Run every configured task and return the report (rows in task order).

    With ``out_dir`` each finished row is checkpointed; rows already present
    for the same config hash and seed are reused when ``resume`` is set.
    """
    tasks = cfg.task_list()
    chash = cfg.hash()
    out = Path(out_dir) if out_dir is not None else None
    done: dict[str, dict] = {}
    ckpt_dir = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        rows_path = out / ROWS_FILE
        if resume:
            done = _load_checkpoint(rows_path, chash, seed)
        elif rows_path.exists():
            rows_path.unlink()
        if cfg.doc["checkpoints"]:
            ckpt_dir = out / "checkpoints"
            ckpt_dir.mkdir(exist_ok=True)

    todo = [t for t in tasks if t.name not in done]
    if done:
        log.info("resuming: %d of %d tasks already done", len(tasks) - len(todo), len(tasks))
    if todo:
        ctx = build_context(cfg, seed, data_dir, ckpt_dir)

        def record(row):
            done[row["task"]] = row
            log.info(
                "%-22s predicted %.3f  %s  (%.1fs)",
                row["task"],
                row["predicted"],
                "  ".join(f"{p} {row[f'actual_{p}']:.3f}" for p in cfg.pipelines),
                row["wall_time"],
            )
            if out is not None:
                with open(out / ROWS_FILE, "a") as fh:
                    fh.write(json.dumps({"config_hash": chash, "seed": seed, "row": row}) + "\n")

        if cfg.workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(ctx,)) as pool:
                futures = [pool.submit(_run_in_worker, t) for t in todo]
                for fut in as_completed(futures):
                    record(fut.result())
        else:
            for t in todo:
                record(run_task(ctx, t))

    rows = [done[t.name] for t in tasks]
    report = BenchReport(rows, cfg.pipelines, chash, seed, cfg.doc)
    if out is not None:
        write_run_tables(report, out)
    return report


def write_run_tables(report: BenchReport, out_dir) -> None:
    """``estimates.csv`` (one row per task, with timings) and ``runs.csv``
    (one row per task and pipeline)."""
    out = Path(out_dir)
    cw = report.config.get("ssl", {}).get("consistency_weight")
    with open(out / "estimates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["task", "r_unlearnable", "r_unreliable", "r_incomplete", "predicted",
             "n_sample", "n_learnable", "n_reliable", "wall_time"]
        )
        for r in report.rows:
            w.writerow(
                [r["task"], r["r_unlearnable"], r["r_unreliable"], r["r_incomplete"], r["predicted"],
                 r["n_sample"], r["n_learnable"], r["n_reliable"], f"{r['estimate_time']:.3f}"]
            )
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "pipeline", "test_error", "consistency_weight", "config_hash"])
        for r in report.rows:
            for p in report.pipelines:
                w.writerow([r["task"], p, r[f"actual_{p}"], cw, report.config_hash])
