#!/usr/bin/env python3
"""
SpecLab Data Models Package

Version: 1.0.0
Author: SpecLab Development Team
Description: Cube containers, experiment configuration and report records
License: [To be determined]
"""

from .cube_models import (
    BandDomain,
    BandLayout,
    Crown,
    CrownMap,
    HyperCube,
    LabeledSpectra,
    Standardizer,
)
from .experiment_models import (
    AbioticConfig,
    AugmentationKind,
    AugmentationSet,
    AugmentationSpec,
    ExperimentConfig,
    PairStrategy,
    SyntheticSceneConfig,
)
from .report_models import (
    BaselineResult,
    CellReport,
    CheckpointScore,
    MatrixReport,
    SeedResult,
)

__all__ = [
    # Cube Models
    "BandDomain",
    "BandLayout",
    "Crown",
    "CrownMap",
    "HyperCube",
    "LabeledSpectra",
    "Standardizer",
    # Experiment Models
    "AbioticConfig",
    "AugmentationKind",
    "AugmentationSet",
    "AugmentationSpec",
    "ExperimentConfig",
    "PairStrategy",
    "SyntheticSceneConfig",
    # Report Models
    "BaselineResult",
    "CellReport",
    "CheckpointScore",
    "MatrixReport",
    "SeedResult",
]
