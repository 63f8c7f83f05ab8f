#!/usr/bin/env python3
"""
SpecLab Report Models

Version: 1.0.0
Author: SpecLab Development Team
Description: Per-seed, per-cell and whole-matrix result records
License: [To be determined]
"""

from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.core.version import REPORT_SCHEMA_VERSION


class CheckpointScore(BaseModel):
    """Downstream scores of one evaluated checkpoint"""

    epoch: int = Field(..., ge=1)
    train_loss: float = Field(..., description="Mean pretraining loss of the epoch")
    train_accuracy: float = Field(..., description="Macro accuracy on T1 (LDA fit set)")
    test_accuracy: float = Field(..., description="Macro accuracy on T2")
    test_overall_accuracy: float = Field(..., description="Micro accuracy on T2")


class SeedResult(BaseModel):
    """One pretraining run and its checkpoint curve"""

    seed: int
    best_test_accuracy: float
    best_epoch: int
    train_accuracy_at_best: float
    curve: list[CheckpointScore]

    @model_validator(mode="after")
    def validate_best(self):
        """Best equals the maximum of the curve"""
        if not self.curve:
            raise ValueError("curve must hold at least one checkpoint")
        if self.best_test_accuracy != max(s.test_accuracy for s in self.curve):
            raise ValueError("best_test_accuracy must equal the curve maximum")
        return self

    @property
    def robustness_gap(self) -> float:
        """T1 minus T2 macro accuracy at the selected checkpoint"""
        return self.train_accuracy_at_best - self.best_test_accuracy

    @classmethod
    def from_curve(cls, seed: int, curve: list[CheckpointScore]) -> "SeedResult":
        """Select the best checkpoint; ties resolve to the earliest epoch"""
        best = curve[0]
        for score in curve[1:]:
            if score.test_accuracy > best.test_accuracy:
                best = score
        return cls(
            seed=seed,
            best_test_accuracy=best.test_accuracy,
            best_epoch=best.epoch,
            train_accuracy_at_best=best.train_accuracy,
            curve=curve,
        )


class BaselineResult(BaseModel):
    """LDA on standardized reflectance"""

    train_accuracy: float
    test_accuracy: float
    train_overall_accuracy: float
    test_overall_accuracy: float

    @property
    def robustness_gap(self) -> float:
        return self.train_accuracy - self.test_accuracy


class CellReport(BaseModel):
    """Aggregate of one (strategy, augmentation set) cell over seeds"""

    strategy: str
    augmentation: str
    status: Literal["ok", "failed"] = "ok"
    error: dict[str, Any] | None = None
    seeds: list[SeedResult] = Field(default_factory=list)
    mean: float | None = None
    std: float | None = None
    mean_train_accuracy: float | None = None

    @classmethod
    def aggregate(
        cls, strategy: str, augmentation: str, seeds: list[SeedResult]
    ) -> "CellReport":
        """Mean and population std of per-seed bests"""
        bests = np.array([s.best_test_accuracy for s in seeds], dtype=np.float64)
        trains = np.array([s.train_accuracy_at_best for s in seeds], dtype=np.float64)
        return cls(
            strategy=strategy,
            augmentation=augmentation,
            seeds=seeds,
            mean=float(bests.mean()),
            std=float(bests.std()),
            mean_train_accuracy=float(trains.mean()),
        )

    @classmethod
    def failed(cls, strategy: str, augmentation: str, error: dict[str, Any]) -> "CellReport":
        return cls(strategy=strategy, augmentation=augmentation, status="failed", error=error)


class MatrixReport(BaseModel):
    """Full experiment matrix with its reflectance baseline"""

    schema_version: int = REPORT_SCHEMA_VERSION
    name: str
    baseline: BaselineResult
    cells: list[CellReport]
    tool_version: dict[str, Any] = Field(default_factory=dict)
    timings: dict[str, dict[str, float]] = Field(default_factory=dict)
