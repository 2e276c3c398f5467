"""Acceptance checks, one per headline criterion.

Each check records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary (and immediately with ``-s``); the test itself fails when
the criterion does, so a green suite means every line reads PASS.
"""

import time

import numpy as np
import pytest

from pretextprobe.augment import task_grid
from pretextprobe.cli import main
from pretextprobe.config import BenchConfig
from pretextprobe.data import stratified_sample
from pretextprobe.estimators import estimate_unlearnable, estimate_unreliable
from pretextprobe.knowledge import SatisfactionParams
from pretextprobe.models import grad_consistency_mse, grad_cross_entropy, init_model
from pretextprobe.augment import PretextTask
from pretextprobe.data import Dataset
from pretextprobe.numerics import make_rng
from pretextprobe.report import read_report_csv
from pretextprobe.worlds.finite import bound_of, sum_form, sweep
from pretextprobe.worlds.synth import SynthSpec, gen_synthetic

from test_models import finite_difference, kink_free_model, rel_err

RESULTS: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_bound_verification():
    t0 = time.perf_counter()
    rep = sweep(100, 6, 3, seed=0, kind="generic")
    elapsed = time.perf_counter() - t0
    ok = rep.violations == 0 and elapsed < 60
    record("bound verification", ok, f"100 worlds, {rep.hypotheses} hypotheses, {rep.violations} violations, min slack {rep.min_slack:.3g}, {elapsed:.1f}s (limit 60s)")


def test_bound_verification_cli(capsys):
    t0 = time.perf_counter()
    code = main(["verify-bounds", "--worlds", "100", "--max-inputs", "6", "--max-labels", "3", "--quiet"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    record("verify-bounds command", code == 0 and "violations: 0" in out and elapsed < 60, f"exit {code}, {out.splitlines()[1]}, {elapsed:.1f}s for 300 worlds")


def test_specializations():
    rc = sweep(100, 6, 3, seed=1, kind="reliable_complete")
    c = sweep(100, 6, 3, seed=2, kind="complete")
    ok = (
        rc.reliable_complete_checked == rc.hypotheses > 0
        and c.complete_checked == c.hypotheses > 0
        and rc.total_violations == 0
        and c.total_violations == 0
    )
    record(
        "specializations",
        ok,
        f"reliable+complete: {rc.reliable_complete_violations}/{rc.reliable_complete_checked} violations; "
        f"complete: {c.complete_violations}/{c.complete_checked} violations",
    )


def test_algebraic_identity():
    a, b, c = make_rng(0, "identity").random((3, 100_000))
    worst = float(np.max(np.abs(sum_form(a, b, c) - bound_of(a, b, c))))
    record("algebraic identity", worst <= 1e-12, f"max |sum - product| over 1e5 triples = {worst:.2e} (limit 1e-12)")


def test_gradient_correctness():
    errs = []
    for seed, dims in enumerate([[8, 6, 4, 3], [12, 5, 4, 4], [4, 6, 5, 3, 2]]):
        r = np.random.default_rng(seed)
        x = r.random((6, 1, 1, dims[0]))
        y = r.integers(0, dims[-1], 6)
        v = x + r.normal(0, 0.3, x.shape)
        m = kink_free_model(seed, dims, [x, v])
        assert m.num_params() <= 200
        ce = lambda mm: grad_cross_entropy(mm, x, y, 0.01)[0]  # noqa: E731
        mse = lambda mm: grad_consistency_mse(mm, x, v, 0.01)[0]  # noqa: E731
        errs.append(rel_err(grad_cross_entropy(m, x, y, 0.01)[1], finite_difference(ce, m)))
        errs.append(rel_err(grad_consistency_mse(m, x, v, 0.01)[1], finite_difference(mse, m)))
    worst = max(errs)
    record("gradient correctness", worst < 1e-4, f"3 models (<=200 params), CE and MSE, h=1e-3, worst relative error {worst:.2e} (limit 1e-4)")


def test_identity_tasks():
    identity = [t for t in task_grid() if t.is_identity]
    x = Dataset(make_rng(0, "imgs").random((40, 3, 8, 8)).astype(np.float32), num_classes=4)
    worst = 0.0
    for seed in range(5):
        model = init_model(3 * 8 * 8, 4, hidden=(16,), embedding_dim=8, seed=seed)
        for t in identity:
            r, _ = estimate_unlearnable(model, x, t, SatisfactionParams(4), seed)
            worst = max(worst, r)
    names = ", ".join(t.name for t in identity)
    record("identity tasks", worst == 0.0 and len(identity) == 11, f"{len(identity)} tasks ({names}) x 5 models/seeds, max r_unlearnable {worst}")


def test_oracle_substitution():
    w = gen_synthetic(SynthSpec(unlabeled_per_class=100, invariant_class_fraction=0.5))
    sample = stratified_sample(w.unlabeled, 50, make_rng(0, "sample"))
    rates = []
    for seed in range(3):
        r, _ = estimate_unreliable(w.truth, sample, PretextTask("RandomVerticalFlip", 5), SatisfactionParams(4), seed)
        rates.append(r)
    worst = max(abs(r - 0.5) for r in rates)
    record("oracle substitution", len(sample) == 200 and worst <= 0.1, f"f=0.5, 200 samples, r_unreliable {', '.join(f'{r:.3f}' for r in rates)} (target 0.5 +- 0.1)")


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    out = []
    for name in ("first", "second"):
        d = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        code = main(["bench", "--config", "desk", "--seed", "0", "--out", str(d), "--no-resume", "--quiet"])
        out.append((d, code, time.perf_counter() - t0))
    return out


@pytest.mark.slow
def test_desk_correlation(desk_runs):
    from pretextprobe.numerics import pearson_r

    d, code, elapsed = desk_runs[0]
    rows = read_report_csv(d / "report.csv")
    pred = [r["predicted"] for r in rows]
    semi = pearson_r(pred, [r["actual_semi"] for r in rows])
    self_ = pearson_r(pred, [r["actual_self"] for r in rows])
    cfg = BenchConfig.preset("desk")
    spec = cfg.synth_spec()
    ok = code == 0 and len(rows) >= 24 and semi >= 0.5 and self_ >= 0.5 and elapsed < 600
    record(
        "desk correlation",
        ok,
        f"{len(rows)} tasks, {spec.image_size}x{spec.image_size} {spec.num_classes}-class world, f={spec.invariant_class_fraction}: "
        f"Pearson semi {semi:.3f}, self {self_:.3f} (limit 0.5), {elapsed:.0f}s (limit 600s)",
    )


@pytest.mark.slow
def test_determinism(desk_runs):
    (a, ca, _), (b, cb, _) = desk_runs
    same = (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    record("determinism", ca == cb == 0 and same, f"two bench runs, report.csv byte-identical: {same}")


# strength ranges of the benchmark table, written out independently
TABLE = {
    "RandomResizedCrop": range(0, 11),
    "RandomRotation": range(0, 11),
    "Translate": range(0, 11),
    "Shear": range(0, 11),
    "Scale": range(1, 11),
    "Brightness": range(0, 11),
    "Contrast": range(0, 11),
    "Saturation": range(0, 11),
    "Hue": range(0, 6),
    "RandomHorizontalFlip": range(0, 11),
    "RandomVerticalFlip": range(0, 11),
}


def test_grid_fidelity():
    grid = task_grid()
    want = [(f, s) for f, r in TABLE.items() for s in r]
    got = [(t.family, t.strength) for t in grid]
    record("grid fidelity", len(grid) == 115 and got == want, f"{len(grid)} tasks, ranges match the table: {got == want}")
