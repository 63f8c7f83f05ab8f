#!/usr/bin/env python3
"""
Test the experiment harness: baseline, single runs and the experiment matrix
"""

from pathlib import Path

import numpy as np
import pytest

from app.core.error_handling import ConfigurationError
from app.models.experiment_models import (
    AugmentationKind,
    AugmentationSet,
    AugmentationSpec,
    EncoderConfig,
    PairingConfig,
    PairStrategy,
    ProjectorConfig,
    SceneSource,
    SweepGrid,
    load_experiment_config,
    noise_sweep_sets,
)
from app.services.experiment_service import (
    ExperimentService,
    is_evaluation_epoch,
    prepare_scene,
    run_baseline,
    run_matrix,
    run_single,
)
from app.services.report_service import REPORT_FILE, SUMMARY_FILE, emit_report

PROJECT_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def service(tiny_config, tiny_scene):
    return ExperimentService(tiny_config, tiny_scene)


class TestBaseline:
    """Test the reflectance baseline"""

    def test_unperturbed_scene_scores_equal(self, tiny_config, quiet_scene_config):
        """Test identical dates give identical train and test accuracy"""
        config = tiny_config.model_copy(
            update={"scene": SceneSource(synthetic=quiet_scene_config)}
        )
        baseline = ExperimentService(config).run_baseline()
        assert baseline.test_accuracy == baseline.train_accuracy
        assert baseline.test_overall_accuracy == baseline.train_overall_accuracy

    def test_accuracies_in_range(self, service):
        """Test macro accuracies are probabilities"""
        baseline = service.run_baseline()
        assert 0.0 <= baseline.test_accuracy <= 1.0
        assert 0.0 <= baseline.train_accuracy <= 1.0
        assert baseline.robustness_gap == baseline.train_accuracy - baseline.test_accuracy

    def test_prepared_scene_labels(self, tiny_config, tiny_scene):
        """Test train and test spectra share labels on a fully covered scene"""
        prepared = prepare_scene(tiny_config, tiny_scene)
        np.testing.assert_array_equal(prepared.train.labels, prepared.test.labels)
        assert prepared.train.date_id == "T1"
        assert prepared.test.date_id == "T2"


class TestSingleRun:
    """Test run_single"""

    def test_curve_of_one(self, tiny_config, tiny_scene):
        """Test eval_every = n_epochs evaluates the last checkpoint only"""
        config = tiny_config.model_copy(update={"eval_every": tiny_config.n_epochs})
        result = ExperimentService(config, tiny_scene).run_single(0)
        assert len(result.curve) == 1
        assert result.best_epoch == config.n_epochs
        assert result.best_test_accuracy == result.curve[0].test_accuracy

    def test_best_is_curve_maximum(self, service, tiny_config):
        """Test eval_every = 1 records every epoch and best is the maximum"""
        result = service.run_single(0)
        assert [s.epoch for s in result.curve] == list(range(1, tiny_config.n_epochs + 1))
        assert result.best_test_accuracy == max(s.test_accuracy for s in result.curve)
        best = next(s for s in result.curve if s.epoch == result.best_epoch)
        assert result.train_accuracy_at_best == best.train_accuracy

    def test_evaluation_epochs(self, tiny_config):
        """Test eval_every = 3 over 7 epochs evaluates 3, 6 and 7"""
        config = tiny_config.model_copy(update={"n_epochs": 7, "eval_every": 3})
        assert [e for e in range(1, 8) if is_evaluation_epoch(e, config)] == [3, 6, 7]

    def test_deterministic(self, tiny_config, tiny_scene):
        """Test reruns with one seed produce identical results"""
        first = ExperimentService(tiny_config, tiny_scene).run_single(1)
        second = ExperimentService(tiny_config, tiny_scene).run_single(1)
        assert first == second

    def test_checkpoint_directory(self, service, tmp_path):
        """Test checkpoints are written per seed and epoch"""
        service.run_single(0, checkpoint_dir=tmp_path / "ckpt")
        written = sorted(p.name for p in (tmp_path / "ckpt" / "seed-0").iterdir())
        assert written == ["epoch-1.ckpt", "epoch-2.ckpt"]


class TestMatrix:
    """Test run_matrix"""

    def test_single_cell_two_seeds(self, service):
        """Test one cell aggregates two seeds with population std"""
        report = service.run_matrix()
        assert len(report.cells) == 1
        cell = report.cells[0]
        assert cell.status == "ok"
        assert [s.seed for s in cell.seeds] == [0, 1]
        bests = np.array([s.best_test_accuracy for s in cell.seeds])
        assert cell.mean == pytest.approx(bests.mean(), abs=1e-15)
        assert cell.std == pytest.approx(abs(bests[0] - bests[1]) / 2, abs=1e-15)
        assert service.get_run_metrics() == {"runs_completed": 2, "cells_failed": 0}

    def test_cell_count_is_grid_product(self, tiny_config, tiny_scene):
        """Test a 2 x 2 grid yields 4 cells in strategy-major order"""
        noise = AugmentationSet.symmetric(
            "noise", [AugmentationSpec(kind=AugmentationKind.GAUSSIAN_NOISE)]
        )
        grid = SweepGrid(
            strategies=[PairStrategy.INTER_DATE, PairStrategy.SAME_VIEW],
            augmentation_sets=[AugmentationSet(name="none"), noise],
        )
        config = tiny_config.model_copy(update={"seeds": [0]})
        report = ExperimentService(config, tiny_scene).run_matrix(grid)
        assert grid.cell_count == 4
        assert [(c.strategy, c.augmentation) for c in report.cells] == [
            ("inter_date", "none"),
            ("inter_date", "noise"),
            ("same_view", "none"),
            ("same_view", "noise"),
        ]
        assert all(c.status == "ok" for c in report.cells)

    def test_failed_cell_does_not_abort(self, service, monkeypatch):
        """Test a failing cell is recorded and the matrix continues"""

        def broken(*args, **kwargs):
            raise ConfigurationError("pretraining exploded")

        monkeypatch.setattr("app.services.experiment_service.pretrain", broken)
        report = service.run_matrix()
        cell = report.cells[0]
        assert cell.status == "failed"
        assert cell.error["error_code"] == "CONFIGURATION_ERROR"
        assert cell.error["message"] == "pretraining exploded"
        assert "timestamp" not in cell.error
        assert cell.mean is None
        assert service.get_run_metrics()["cells_failed"] == 1

    def test_noise_sweep_completes(self, tiny_config, tiny_scene):
        """Test the noise-magnitude sweep cells all complete"""
        grid = SweepGrid(strategies=[PairStrategy.INTER_DATE], augmentation_sets=noise_sweep_sets())
        config = tiny_config.model_copy(update={"seeds": [0], "n_epochs": 1})
        report = ExperimentService(config, tiny_scene).run_matrix(grid)
        names = [c.augmentation for c in report.cells]
        assert names == ["noise_0.001", "noise_0.005", "noise_0.02"]
        assert all(c.status == "ok" for c in report.cells)

    def test_reports_byte_identical(self, tiny_config, tmp_path):
        """Test two full runs emit byte-identical report files"""
        first = emit_report(ExperimentService(tiny_config).run_matrix(), tmp_path / "a")
        second = emit_report(ExperimentService(tiny_config).run_matrix(), tmp_path / "b")
        for kind in ("summary", "report", "chart"):
            assert first[kind].read_bytes() == second[kind].read_bytes(), kind


class TestModuleFunctions:
    """Test the module-level harness entry points"""

    def test_match_service_methods(self, tiny_config, tiny_scene, service):
        """Test each function equals the service method it wraps"""
        assert run_baseline(tiny_config, tiny_scene) == service.run_baseline()
        assert run_single(tiny_config, 0, tiny_scene) == service.run_single(0)

    def test_run_matrix(self, tiny_config, tiny_scene):
        """Test run_matrix reports the configured grid"""
        config = tiny_config.model_copy(update={"seeds": [0], "n_epochs": 1})
        report = run_matrix(config, scene=tiny_scene)
        assert [(c.strategy, c.augmentation) for c in report.cells] == [("inter_date", "none")]


@pytest.mark.slow
class TestAcceptance:
    """Full-size experiment on the default synthetic scene"""

    def test_result_ordering(self, tmp_path):
        """Test inter-date pretraining beats the baseline, which beats same-view"""
        config = load_experiment_config(PROJECT_ROOT / "configs" / "default.json")
        grid = SweepGrid(
            strategies=[PairStrategy.INTER_DATE, PairStrategy.SAME_VIEW],
            augmentation_sets=[config.augmentation],
        )
        report = ExperimentService(config).run_matrix(grid)
        inter, same = report.cells
        assert report.baseline.robustness_gap > 0.02
        baseline = report.baseline.test_accuracy
        assert inter.mean > baseline > same.mean
        margins = [s.best_test_accuracy - baseline for s in inter.seeds]
        assert sum(m > 0 for m in margins) >= 3

        paths = emit_report(report, tmp_path)
        assert paths["report"].name == REPORT_FILE
        assert paths["summary"].name == SUMMARY_FILE


class TestDefaultScene:
    """Test the default configuration's scene against the reflectance baseline"""

    def test_default_config_shape(self):
        """Test the default run is 30 epochs over four seeds"""
        config = load_experiment_config(PROJECT_ROOT / "configs" / "default.json")
        assert config.n_epochs == 30
        assert config.seeds == [0, 1, 2, 3]

    def test_baseline_drops_across_dates(self):
        """Test the perturbed default scene costs the baseline accuracy on T2"""
        config = load_experiment_config(PROJECT_ROOT / "configs" / "default.json")
        baseline = ExperimentService(config).run_baseline()
        assert baseline.test_accuracy < baseline.train_accuracy
        assert baseline.robustness_gap > 0.02


@pytest.mark.slow
class TestDefaultReproducibility:
    """Test byte-identical reports from repeated runs on the default scene"""

    def test_default_scene_reports_byte_identical(self, tmp_path):
        """Test two runs of one config emit identical report.json and summary.csv"""
        config = load_experiment_config(PROJECT_ROOT / "configs" / "default.json")
        config = config.model_copy(
            update={
                "encoder": EncoderConfig(widths=[4, 4, 8, 8, 8], kernel_size=7, stride=2),
                "projector": ProjectorConfig(hidden_dim=16, output_dim=16),
                "pairing": PairingConfig(batch_size=64, max_pairs_per_epoch=128),
                "n_epochs": 2,
            }
        )
        grid = SweepGrid(
            strategies=[PairStrategy.INTER_DATE, PairStrategy.SAME_VIEW],
            augmentation_sets=[AugmentationSet(name="none")],
        )
        outputs = []
        for run in ("first", "second"):
            report = ExperimentService(config).run_matrix(grid)
            outputs.append(emit_report(report, tmp_path / run))
        for name in ("report", "summary"):
            assert outputs[0][name].read_bytes() == outputs[1][name].read_bytes()
