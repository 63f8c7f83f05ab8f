#!/usr/bin/env python3
"""
Report Service - summary table, full dump and accuracy chart

Version: 1.0.0
Author: SpecLab Development Team
Description: Writes summary.csv, report.json and accuracy.svg for a matrix
             report, and re-renders them from a saved report.json
License: [To be determined]

summary.csv, report.json and accuracy.svg are byte-reproducible for a
given report; wall-clock timings go to timings.json only.
"""

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import structlog  # noqa: E402

from app.core.config import get_settings  # noqa: E402
from app.core.error_handling import ReportWriteError, error_handler  # noqa: E402
from app.core.logging import experiment_logger  # noqa: E402
from app.models.report_models import MatrixReport  # noqa: E402

logger = structlog.get_logger()

SUMMARY_FILE = "summary.csv"
REPORT_FILE = "report.json"
CHART_FILE = "accuracy.svg"
TIMINGS_FILE = "timings.json"

STRATEGY_COLORS = {"inter_date": "#c0392b", "same_view": "#2e6da4"}
BASELINE_COLOR = "#7f8c8d"
SVG_RC = {"svg.hashsalt": "speclab", "svg.fonttype": "none"}


def summary_frame(report: MatrixReport) -> pd.DataFrame:
    """One row per cell, per-seed bests as seed_<s>_best columns"""
    seeds = sorted({s.seed for cell in report.cells for s in cell.seeds})
    rows = []
    for cell in report.cells:
        bests = {s.seed: s.best_test_accuracy for s in cell.seeds}
        gap = (
            None
            if cell.mean is None or cell.mean_train_accuracy is None
            else cell.mean_train_accuracy - cell.mean
        )
        row = {
            "strategy": cell.strategy,
            "augmentation": cell.augmentation,
            "status": cell.status,
            "mean": cell.mean,
            "std": cell.std,
            "mean_train_accuracy": cell.mean_train_accuracy,
            "robustness_gap": gap,
        }
        row.update({f"seed_{seed}_best": bests.get(seed) for seed in seeds})
        row.update(
            {
                "baseline_train_accuracy": report.baseline.train_accuracy,
                "baseline_test_accuracy": report.baseline.test_accuracy,
                "baseline_robustness_gap": report.baseline.robustness_gap,
            }
        )
        rows.append(row)
    return pd.DataFrame.from_records(rows)


def write_summary(report: MatrixReport, path: Path) -> Path:
    frame = summary_frame(report)
    frame.to_csv(path, index=False, float_format=get_settings().float_format, lineterminator="\n")
    return path


def write_chart(report: MatrixReport, path: Path) -> Path:
    """
    Grouped bars of mean best T2 accuracy per augmentation set, error bars
    at one std, strategies side by side, a baseline bar on the left and
    dotted baseline train (grey) and test (black) lines.
    """
    augmentations = list(dict.fromkeys(cell.augmentation for cell in report.cells))
    strategies = list(dict.fromkeys(cell.strategy for cell in report.cells))
    width = 0.8 / max(len(strategies), 1)

    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * (len(augmentations) + 1)), 4.0))
        baseline = ax.bar(
            [0.0],
            [report.baseline.test_accuracy],
            width=width,
            color=BASELINE_COLOR,
            label="reflectance",
        )
        baseline.patches[0].set_gid("bar-baseline")

        for index, cell in enumerate(report.cells):
            group = augmentations.index(cell.augmentation) + 1
            slot = strategies.index(cell.strategy)
            x = group - 0.4 + width * (slot + 0.5)
            ok = cell.status == "ok"
            bars = ax.bar(
                [x],
                [cell.mean if ok else 0.0],
                width=width,
                yerr=[cell.std] if ok else None,
                capsize=3,
                color=STRATEGY_COLORS.get(cell.strategy, "#555555"),
                hatch=None if ok else "//",
                label=cell.strategy if cell.augmentation == augmentations[0] else None,
            )
            bars.patches[0].set_gid(f"bar-{index}")

        ax.axhline(report.baseline.train_accuracy, color="grey", linestyle=":", linewidth=1)
        ax.axhline(report.baseline.test_accuracy, color="black", linestyle=":", linewidth=1)
        ax.set_xticks(np.arange(len(augmentations) + 1))
        ax.set_xticklabels(["baseline", *augmentations], rotation=30, ha="right")
        ax.set_ylabel("mean class accuracy (T2)")
        ax.set_ylim(0.0, 1.0)
        ax.set_title(report.name)
        ax.legend(loc="lower right", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def write_report_json(report: MatrixReport, path: Path) -> Path:
    path.write_text(report.model_dump_json(indent=2, exclude={"timings"}) + "\n", encoding="utf-8")
    return path


def write_timings(report: MatrixReport, path: Path) -> Path:
    path.write_text(json.dumps(report.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def emit_report(report: MatrixReport, out_dir: str | Path) -> dict[str, Path]:
    """
    Write summary.csv, report.json, accuracy.svg (and timings.json).

    Raises:
        ReportWriteError: Any file could not be written; names the path
    """
    out_dir = Path(out_dir)
    targets = {
        "summary": (write_summary, out_dir / SUMMARY_FILE),
        "report": (write_report_json, out_dir / REPORT_FILE),
        "chart": (write_chart, out_dir / CHART_FILE),
        "timings": (write_timings, out_dir / TIMINGS_FILE),
    }
    written: dict[str, Path] = {}
    for kind, (writer, path) in targets.items():
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            written[kind] = writer(report, path)
        except OSError as e:
            raise error_handler.wrap_io_error(e, path, "write") from e
        experiment_logger.log_artifact_written(kind, str(path))
    return written


def load_report(path: str | Path) -> MatrixReport:
    """Read a report.json dump"""
    path = Path(path)
    try:
        return MatrixReport.model_validate_json(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ReportWriteError(
            f"Failed to read {path}", details=[{"path": str(path), "error": str(e)}]
        ) from e


def rerender_report(report_json: str | Path, out_dir: str | Path | None = None) -> dict[str, Path]:
    """Rebuild summary.csv and accuracy.svg from a saved report.json"""
    report_json = Path(report_json)
    out_dir = Path(out_dir) if out_dir is not None else report_json.parent
    report = load_report(report_json)
    written: dict[str, Path] = {}
    for kind, writer, name in (
        ("summary", write_summary, SUMMARY_FILE),
        ("chart", write_chart, CHART_FILE),
    ):
        path = out_dir / name
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            written[kind] = writer(report, path)
        except OSError as e:
            raise error_handler.wrap_io_error(e, path, "write") from e
        experiment_logger.log_artifact_written(kind, str(path))
    return written
