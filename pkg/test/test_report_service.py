#!/usr/bin/env python3
"""
Test report emission: summary table, full dump and chart
"""

import re

import pandas as pd
import pytest

from app.core.error_handling import ReportWriteError
from app.models.report_models import (
    BaselineResult,
    CellReport,
    CheckpointScore,
    MatrixReport,
    SeedResult,
)
from app.services.report_service import (
    CHART_FILE,
    REPORT_FILE,
    SUMMARY_FILE,
    TIMINGS_FILE,
    emit_report,
    load_report,
    rerender_report,
)


def seed_result(seed, accuracies):
    curve = [
        CheckpointScore(
            epoch=epoch,
            train_loss=10.0 / epoch,
            train_accuracy=0.9,
            test_accuracy=accuracy,
            test_overall_accuracy=accuracy,
        )
        for epoch, accuracy in enumerate(accuracies, start=1)
    ]
    return SeedResult.from_curve(seed, curve)


def matrix(cells):
    return MatrixReport(
        name="unit",
        baseline=BaselineResult(
            train_accuracy=0.95,
            test_accuracy=0.6123456789012345,
            train_overall_accuracy=0.96,
            test_overall_accuracy=0.65,
        ),
        cells=cells,
        tool_version={"version": "1.0.0"},
        timings={"cell": {"count": 1.0, "total_seconds": 0.25}},
    )


@pytest.fixture
def one_cell():
    seeds = [seed_result(0, [0.5, 0.7123456789012345]), seed_result(1, [0.66, 0.6])]
    return matrix([CellReport.aggregate("inter_date", "none", seeds)])


@pytest.fixture
def mixed_cells():
    ok = CellReport.aggregate(
        "inter_date", "none", [seed_result(0, [0.7]), seed_result(1, [0.8])]
    )
    same = CellReport.aggregate(
        "same_view", "none", [seed_result(0, [0.5]), seed_result(1, [0.55])]
    )
    failed = CellReport.failed(
        "same_view", "noise", {"message": "boom", "error_code": "CONFIGURATION_ERROR"}
    )
    return matrix([ok, same, failed])


class TestEmitReport:
    """Test emit_report"""

    def test_single_cell_files(self, one_cell, tmp_path):
        """Test one cell writes the table, dump and chart with one data row"""
        paths = emit_report(one_cell, tmp_path)
        for name in (SUMMARY_FILE, REPORT_FILE, CHART_FILE):
            assert (tmp_path / name).is_file()
        assert paths["timings"].name == TIMINGS_FILE
        frame = pd.read_csv(paths["summary"], float_precision="round_trip")
        assert len(frame) == 1
        assert list(frame.columns[:4]) == ["strategy", "augmentation", "status", "mean"]

    def test_full_precision_round_trip(self, one_cell, tmp_path):
        """Test printed means and seed bests parse back exactly"""
        paths = emit_report(one_cell, tmp_path)
        row = pd.read_csv(paths["summary"], float_precision="round_trip").iloc[0]
        cell = one_cell.cells[0]
        assert row["mean"] == cell.mean
        assert row["std"] == cell.std
        assert row["seed_0_best"] == 0.7123456789012345
        assert row["seed_1_best"] == 0.66
        assert row["baseline_test_accuracy"] == 0.6123456789012345

    def test_dump_excludes_timings(self, one_cell, tmp_path):
        """Test report.json holds curves but no wall-clock data"""
        paths = emit_report(one_cell, tmp_path)
        text = paths["report"].read_text()
        assert "total_seconds" not in text
        loaded = load_report(paths["report"])
        assert loaded.cells[0].seeds[0].curve == one_cell.cells[0].seeds[0].curve
        assert loaded.timings == {}

    def test_bar_count(self, mixed_cells, tmp_path):
        """Test the chart holds one bar per cell plus the baseline bar"""
        paths = emit_report(mixed_cells, tmp_path)
        svg = paths["chart"].read_text()
        bars = set(re.findall(r'<g id="(bar-[^"]+)"', svg))
        assert bars == {"bar-baseline", "bar-0", "bar-1", "bar-2"}
        assert len(bars) == len(mixed_cells.cells) + 1

    def test_failed_cell_row(self, mixed_cells, tmp_path):
        """Test a failed cell is listed with empty statistics"""
        frame = pd.read_csv(emit_report(mixed_cells, tmp_path)["summary"])
        assert len(frame) == 3
        failed = frame.iloc[2]
        assert failed["status"] == "failed"
        assert pd.isna(failed["mean"])
        assert pd.isna(failed["seed_0_best"])

    def test_emission_is_reproducible(self, mixed_cells, tmp_path):
        """Test two emissions of one report are byte-identical"""
        first = emit_report(mixed_cells, tmp_path / "a")
        second = emit_report(mixed_cells, tmp_path / "b")
        for kind in ("summary", "report", "chart"):
            assert first[kind].read_bytes() == second[kind].read_bytes(), kind

    def test_unwritable_directory(self, one_cell, tmp_path):
        """Test an output path that is a file"""
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        with pytest.raises(ReportWriteError) as info:
            emit_report(one_cell, blocker)
        assert "blocker" in str(info.value)


class TestRerender:
    """Test re-rendering from report.json"""

    def test_rerender_is_identical(self, mixed_cells, tmp_path):
        """Test the table and chart rebuilt from the dump match the originals"""
        original = emit_report(mixed_cells, tmp_path / "run")
        rebuilt = rerender_report(original["report"], tmp_path / "again")
        assert rebuilt["summary"].read_bytes() == original["summary"].read_bytes()
        assert rebuilt["chart"].read_bytes() == original["chart"].read_bytes()

    def test_rerender_in_place(self, one_cell, tmp_path):
        """Test the default output directory is the dump's own"""
        original = emit_report(one_cell, tmp_path)
        summary = original["summary"].read_bytes()
        original["summary"].unlink()
        rebuilt = rerender_report(original["report"])
        assert rebuilt["summary"] == original["summary"]
        assert rebuilt["summary"].read_bytes() == summary

    def test_missing_dump(self, tmp_path):
        """Test a missing report.json"""
        with pytest.raises(ReportWriteError):
            load_report(tmp_path / "absent.json")
