#!/usr/bin/env python3
"""
Experiment Service - baseline, single runs and the experiment matrix

Version: 1.0.0
Author: SpecLab Development Team
Description: Protocol orchestration: reflectance LDA baseline, per-seed
             pretraining with checkpoint evaluation, and the strategy x
             augmentation x seed matrix
License: [To be determined]

Train on the first date, test on the second: LDA is always fitted on T1
features and scored on T2 features. The best checkpoint is selected on the
T2 macro accuracy; the whole curve is kept so stricter selections can be
recomputed from the report.
"""

from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog

from app.core.error_handling import error_handler
from app.core.logging import experiment_logger
from app.core.performance import performance_monitor
from app.core.version import get_version_info
from app.models.cube_models import LabeledSpectra
from app.models.experiment_models import (
    AugmentationSet,
    ClassifierConfig,
    ExperimentConfig,
    PairStrategy,
    SweepGrid,
)
from app.models.report_models import (
    BaselineResult,
    CellReport,
    CheckpointScore,
    MatrixReport,
    SeedResult,
)
from app.services.classification_service import (
    lda_fit,
    lda_predict,
    mean_class_accuracy,
    overall_accuracy,
)
from app.services.cube_service import apply_standardizer, extract_labeled_spectra, fit_standardizer
from app.services.pretraining_service import (
    Checkpoint,
    checkpoint_paths,
    embed_dataset,
    pretrain,
    save_checkpoint,
)
from app.services.scene_generation_service import PairedScene, materialize_scene

logger = structlog.get_logger()


@dataclass(frozen=True, eq=False)
class PreparedScene:
    """Paired scene with its labeled spectra on both dates"""

    scene: PairedScene
    train: LabeledSpectra
    test: LabeledSpectra


@dataclass(frozen=True)
class Scores:
    train_accuracy: float
    test_accuracy: float
    train_overall_accuracy: float
    test_overall_accuracy: float


def prepare_scene(config: ExperimentConfig, scene: PairedScene | None = None) -> PreparedScene:
    """Materialize the scene and extract labeled spectra from T1 (train) and T2 (test)"""
    if scene is None:
        scene = materialize_scene(config.scene)
    train = extract_labeled_spectra(scene.t1, scene.crowns)
    test = extract_labeled_spectra(scene.t2, scene.crowns)
    logger.info(
        "Scene prepared",
        train_spectra=len(train),
        test_spectra=len(test),
        species=int(np.unique(train.labels).size),
    )
    return PreparedScene(scene=scene, train=train, test=test)


def score_features(
    train_features: np.ndarray,
    train_labels: np.ndarray,
    test_features: np.ndarray,
    test_labels: np.ndarray,
    classifier: ClassifierConfig,
) -> Scores:
    """Fit LDA on the train features, score macro and overall accuracy on both sets"""
    model = lda_fit(
        train_features,
        train_labels,
        shrinkage=classifier.shrinkage,
        covariance_normalization=classifier.covariance_normalization,
    )
    train_pred = lda_predict(model, train_features)
    test_pred = lda_predict(model, test_features)
    return Scores(
        train_accuracy=mean_class_accuracy(train_labels, train_pred),
        test_accuracy=mean_class_accuracy(test_labels, test_pred),
        train_overall_accuracy=overall_accuracy(train_labels, train_pred),
        test_overall_accuracy=overall_accuracy(test_labels, test_pred),
    )


def evaluate_checkpoint(
    checkpoint: Checkpoint, prepared: PreparedScene, config: ExperimentConfig
) -> CheckpointScore:
    """Embed both dates with frozen weights, fit LDA on T1, score T2"""
    train_h = embed_dataset(checkpoint, prepared.train.matrix, config.embed_batch_size)
    test_h = embed_dataset(checkpoint, prepared.test.matrix, config.embed_batch_size)
    scores = score_features(
        train_h, prepared.train.labels, test_h, prepared.test.labels, config.classifier
    )
    return CheckpointScore(
        epoch=checkpoint.epoch,
        train_loss=checkpoint.train_loss,
        train_accuracy=scores.train_accuracy,
        test_accuracy=scores.test_accuracy,
        test_overall_accuracy=scores.test_overall_accuracy,
    )


def is_evaluation_epoch(epoch: int, config: ExperimentConfig) -> bool:
    """Every eval_every epochs, and always the last epoch"""
    return epoch % config.eval_every == 0 or epoch == config.n_epochs


class ExperimentService:
    """Runs the train-on-T1, test-on-T2 protocol"""

    def __init__(self, config: ExperimentConfig, scene: PairedScene | None = None):
        """Prepare the scene once; every run of this service shares it"""
        self.config = config
        self.prepared = prepare_scene(config, scene)
        self.runs_completed = 0
        self.cells_failed = 0

    def run_baseline(self) -> BaselineResult:
        """LDA on standardized reflectance; standardizer fitted on T1 only"""
        prepared = self.prepared
        standardizer = fit_standardizer(prepared.train)
        with performance_monitor.measure("baseline"):
            scores = score_features(
                apply_standardizer(standardizer, prepared.train.matrix),
                prepared.train.labels,
                apply_standardizer(standardizer, prepared.test.matrix),
                prepared.test.labels,
                self.config.classifier,
            )
        logger.info(
            "Baseline evaluated",
            train_accuracy=scores.train_accuracy,
            test_accuracy=scores.test_accuracy,
        )
        return BaselineResult(
            train_accuracy=scores.train_accuracy,
            test_accuracy=scores.test_accuracy,
            train_overall_accuracy=scores.train_overall_accuracy,
            test_overall_accuracy=scores.test_overall_accuracy,
        )

    def run_single(
        self,
        seed: int,
        config: ExperimentConfig | None = None,
        checkpoint_dir: str | Path | None = None,
        on_checkpoint: Callable[[Checkpoint], None] | None = None,
    ) -> SeedResult:
        """
        Pretrain one seed and evaluate its checkpoints.

        Args:
            seed: Training seed
            config: Cell configuration; defaults to the service config
            checkpoint_dir: Also write every checkpoint below this directory
            on_checkpoint: Extra per-checkpoint hook
        """
        config = config or self.config
        curve: list[CheckpointScore] = []

        def _handle(checkpoint: Checkpoint):
            if checkpoint_dir is not None:
                (path,) = checkpoint_paths(checkpoint_dir, seed, [checkpoint.epoch])
                save_checkpoint(checkpoint, path)
                experiment_logger.log_artifact_written("checkpoint", str(path))
            if on_checkpoint is not None:
                on_checkpoint(checkpoint)
            if is_evaluation_epoch(checkpoint.epoch, config):
                with performance_monitor.measure("evaluate", seed=seed, epoch=checkpoint.epoch):
                    score = evaluate_checkpoint(checkpoint, self.prepared, config)
                curve.append(score)
                experiment_logger.log_checkpoint_evaluation(
                    seed, checkpoint.epoch, score.train_accuracy, score.test_accuracy
                )

        pretrain(config, seed, scene=self.prepared.scene, on_checkpoint=_handle, retain=False)
        self.runs_completed += 1
        result = SeedResult.from_curve(seed, curve)
        logger.info(
            "Run completed",
            seed=seed,
            strategy=config.pairing.strategy.value,
            augmentation=config.augmentation.name,
            best_test_accuracy=result.best_test_accuracy,
            best_epoch=result.best_epoch,
        )
        return result

    def run_cell(self, strategy: PairStrategy, augmentation: AugmentationSet) -> CellReport:
        """All seeds of one cell; any failure marks the whole cell failed"""
        config = self.config.for_cell(strategy, augmentation)
        try:
            with performance_monitor.measure(
                "cell", strategy=strategy.value, augmentation=augmentation.name
            ):
                seeds = [self.run_single(seed, config) for seed in config.seeds]
            cell = CellReport.aggregate(strategy.value, augmentation.name, seeds)
        except Exception as e:
            self.cells_failed += 1
            response = error_handler.log_error(
                e, strategy=strategy.value, augmentation=augmentation.name
            )
            response.pop("timestamp", None)
            cell = CellReport.failed(strategy.value, augmentation.name, response)
        experiment_logger.log_cell_result(
            cell.strategy,
            cell.augmentation,
            cell.status,
            cell.mean,
            cell.std,
            None if cell.error is None else cell.error["message"],
        )
        return cell

    def run_matrix(self, grid: SweepGrid | None = None) -> MatrixReport:
        """Baseline plus every (strategy, augmentation set) cell over all seeds"""
        grid = grid or self.config.sweep
        performance_monitor.reset()
        logger.info(
            "Matrix started",
            cells=grid.cell_count,
            seeds=len(self.config.seeds),
            name=self.config.name,
        )
        baseline = self.run_baseline()
        cells = [
            self.run_cell(strategy, augmentation)
            for strategy in grid.strategies
            for augmentation in grid.augmentation_sets
        ]
        return MatrixReport(
            name=self.config.name,
            baseline=baseline,
            cells=cells,
            tool_version=get_version_info(),
            timings=performance_monitor.summary(),
        )

    def get_run_metrics(self) -> dict[str, int]:
        return {"runs_completed": self.runs_completed, "cells_failed": self.cells_failed}


def run_baseline(config: ExperimentConfig, scene: PairedScene | None = None) -> BaselineResult:
    return ExperimentService(config, scene).run_baseline()


def run_single(
    config: ExperimentConfig, seed: int, scene: PairedScene | None = None
) -> SeedResult:
    return ExperimentService(config, scene).run_single(seed)


def run_matrix(
    config: ExperimentConfig, grid: SweepGrid | None = None, scene: PairedScene | None = None
) -> MatrixReport:
    return ExperimentService(config, scene).run_matrix(grid)
