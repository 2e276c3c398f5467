"""Report files: ``report.csv``, ``summary.json`` and one scatter plot per
pipeline (SVG).

Nothing time-dependent is written, so equal rows give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from pretextprobe.bench import BenchReport  # noqa: E402

REPORT_COLUMNS = (
    "task",
    "strength",
    "r_unlearnable",
    "r_unreliable",
    "r_incomplete",
    "predicted",
    "actual_semi",
    "actual_self",
)
POINTS_GID = "points"

_STYLE = {
    "svg.hashsalt": "pretextprobe",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def fmt(x) -> str:
    """Shortest round-tripping text, so values survive a reread exactly and
    equal rows give equal bytes. Empty for missing."""
    if x is None:
        return ""
    if isinstance(x, int) and not isinstance(x, bool):
        return str(x)
    return repr(float(x))


def write_report_csv(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            w.writerow([r["task"]] + [fmt(r.get(k)) for k in REPORT_COLUMNS[1:]])


def read_report_csv(path) -> list[dict]:
    """Parse a report.csv back into dicts of floats (None for blanks)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d = {"task": r["task"], "strength": int(r["strength"])}
        for k in REPORT_COLUMNS[2:]:
            d[k] = float(r[k]) if r[k] != "" else None
        out.append(d)
    return out


def scatter_svg(report: BenchReport, pipeline: str, path) -> None:
    """Predicted risk (x) against actual test error (y), one marker per task,
    plus the identity line."""
    xs = [r["predicted"] for r in report.rows if r.get(f"actual_{pipeline}") is not None]
    ys = [r[f"actual_{pipeline}"] for r in report.rows if r.get(f"actual_{pipeline}") is not None]
    r = report.pearson.get(pipeline)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        ax.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--", gid="identity")
        ax.scatter(xs, ys, s=18, color="#1f5a96", alpha=0.85, edgecolors="none", gid=POINTS_GID)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_aspect("equal")
        ax.set_xlabel("predicted risk")
        ax.set_ylabel(f"actual test error ({pipeline})")
        title = f"{pipeline}: {len(xs)} tasks"
        if r is not None:
            title += f", Pearson r = {r:.3f}"
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_report(report: BenchReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "report.csv", "summary": out / "summary.json"}
    write_report_csv(report, paths["csv"])
    paths["summary"].write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    for p in report.pipelines:
        paths[f"scatter_{p}"] = out / f"scatter_{p}.svg"
        scatter_svg(report, p, paths[f"scatter_{p}"])
    return paths
