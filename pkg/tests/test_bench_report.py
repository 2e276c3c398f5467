import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pretextprobe.bench import ROWS_FILE, BenchReport, prepare_data, run_benchmark, safe_pearson, task_seed
from pretextprobe.augment import PretextTask
from pretextprobe.config import BenchConfig
from pretextprobe.data import write_dataset
from pretextprobe.errors import DataError
from pretextprobe.numerics import pearson_r
from pretextprobe.report import POINTS_GID, REPORT_COLUMNS, emit_report, read_report_csv

SMALL = {
    "preset": "desk",
    "tasks": ["RandomRotation:0", "RandomRotation:6", "Contrast:10"],
    "train": {"epochs": 5},
    "proxy_epochs": 20,
    "ssl": {"semi_epochs": 1, "pretrain_epochs": 1, "finetune_epochs": 2},
    "synth": {"unlabeled_per_class": 40, "test_per_class": 20},
    "sampling": {"labeled_per_class": 5, "unlabeled_per_class": 10},
}


def small_cfg(**changes):
    doc = dict(SMALL)
    base = doc.pop("preset")
    return BenchConfig.from_dict(doc, base).override(**changes)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    report = run_benchmark(small_cfg(), seed=0, out_dir=out)
    emit_report(report, out)
    return report, out


def test_rows_in_task_order(run):
    report, _ = run
    assert [r["task"] for r in report.rows] == SMALL["tasks"]
    for r in report.rows:
        assert r["n_sample"] >= r["n_learnable"] >= r["n_reliable"]
        for p in ("semi", "self"):
            assert 0.0 <= r[f"actual_{p}"] <= 1.0


def test_identity_row_has_zero_unlearnable(run):
    assert run[0].rows[0]["r_unlearnable"] == 0.0


def test_report_csv_round_trip(run):
    report, out = run
    rows = read_report_csv(out / "report.csv")
    assert (out / "report.csv").read_text().splitlines()[0] == ",".join(REPORT_COLUMNS)
    for got, want in zip(rows, report.rows):
        for k in REPORT_COLUMNS[2:]:
            assert got[k] == want[k]
        a, b, c = got["r_unlearnable"], got["r_unreliable"], got["r_incomplete"]
        assert abs(got["predicted"] - (1 - (1 - a) * (1 - b) * (1 - c))) <= 1e-9


def test_summary_pearson_matches_csv(run):
    _, out = run
    rows = read_report_csv(out / "report.csv")
    summary = json.loads((out / "summary.json").read_text())
    for p in ("semi", "self"):
        want = pearson_r([r["predicted"] for r in rows], [r[f"actual_{p}"] for r in rows])
        assert summary["pearson"][p] == pytest.approx(want, abs=1e-12)
    assert summary["tasks"] == 3


def test_scatter_svg_has_one_marker_per_task(run):
    _, out = run
    for p in ("semi", "self"):
        root = ET.parse(out / f"scatter_{p}.svg").getroot()
        ns = {"svg": "http://www.w3.org/2000/svg"}
        group = [g for g in root.iter("{http://www.w3.org/2000/svg}g") if g.get("id") == POINTS_GID]
        assert len(group) == 1
        # one marker definition, then one <use> per plotted task
        assert len(group[0].findall(".//svg:use", ns)) == 3


def test_run_tables(run):
    _, out = run
    est = (out / "estimates.csv").read_text().splitlines()
    runs = (out / "runs.csv").read_text().splitlines()
    assert len(est) == 4 and est[0].startswith("task,r_unlearnable")
    assert len(runs) == 7 and runs[0] == "task,pipeline,test_error,consistency_weight,config_hash"
    assert sorted((out / "checkpoints").iterdir())[0].suffix == ".kpm"


def test_resume_reuses_rows_and_gives_identical_report(run, tmp_path):
    report, out = run
    again = run_benchmark(small_cfg(), seed=0, out_dir=out)
    assert again.rows == report.rows
    emit_report(again, tmp_path)
    assert (tmp_path / "report.csv").read_bytes() == (out / "report.csv").read_bytes()
    assert (tmp_path / "scatter_semi.svg").read_bytes() == (out / "scatter_semi.svg").read_bytes()


def test_partial_checkpoint_resumes_the_rest(run, tmp_path):
    report, out = run
    lines = (out / ROWS_FILE).read_text().splitlines()
    (tmp_path / ROWS_FILE).write_text(lines[0] + "\n" + "garbage\n")
    again = run_benchmark(small_cfg(), seed=0, out_dir=tmp_path)
    assert again.rows[1:] == [dict(r, wall_time=a["wall_time"], estimate_time=a["estimate_time"]) for r, a in zip(report.rows[1:], again.rows[1:])]
    assert again.rows[0] == report.rows[0]


def test_task_seed_does_not_depend_on_subset():
    t = PretextTask("Contrast", 10)
    assert task_seed(0, t) == task_seed(0, PretextTask.parse("Contrast:10"))
    assert task_seed(0, t) != task_seed(1, t)


def test_subset_rows_match_full_run(run, tmp_path):
    report, _ = run
    sub = run_benchmark(small_cfg(tasks=["Contrast:10"]), seed=0)
    for k in ("r_unlearnable", "r_unreliable", "r_incomplete", "actual_semi", "actual_self"):
        assert sub.rows[0][k] == report.rows[2][k]


def test_workers_give_same_rows(run):
    report, _ = run
    par = run_benchmark(small_cfg(workers=2), seed=0)
    strip = lambda rows: [{k: v for k, v in r.items() if not k.endswith("time")} for r in rows]  # noqa: E731
    assert strip(par.rows) == strip(report.rows)


def test_data_dir_input(tmp_path):
    from pretextprobe.worlds.synth import gen_synthetic

    cfg = small_cfg()
    w = gen_synthetic(cfg.synth_spec())
    for name in ("labeled", "unlabeled", "test"):
        write_dataset(tmp_path / f"{name}.kpd", getattr(w, name))
    a = prepare_data(cfg, 0, tmp_path)
    b = prepare_data(cfg, 0)
    assert np.array_equal(a.sample.images, b.sample.images)
    (tmp_path / "test.kpd").unlink()
    with pytest.raises(DataError):
        prepare_data(cfg, 0, tmp_path)


def test_safe_pearson_edge_cases():
    assert safe_pearson([0.1], [0.2]) is None
    assert safe_pearson([0.1, 0.1], [0.2, 0.3]) is None
    assert safe_pearson([0.1, None, 0.3], [0.2, 0.5, 0.4]) == pytest.approx(1.0)


def test_single_pipeline_report(tmp_path):
    rows = [{"task": "Hue:1", "family": "Hue", "strength": 1, "predicted": 0.1, "actual_semi": 0.2, "actual_self": None,
             "r_unlearnable": 0.1, "r_unreliable": 0.0, "r_incomplete": 0.0}]
    paths = emit_report(BenchReport(rows, ["semi"], "abc", 0), tmp_path)
    assert "scatter_self" not in paths
    assert read_report_csv(paths["csv"])[0]["actual_self"] is None
