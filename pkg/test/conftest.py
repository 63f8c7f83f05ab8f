#!/usr/bin/env python3
"""
Shared fixtures: a two-domain 16-band layout, a tiny paired scene and an
experiment config small enough to pretrain in well under a second per epoch.
"""

import numpy as np
import pytest

from app.models.cube_models import BandDomain, BandLayout, HyperCube
from app.models.experiment_models import (
    AbioticConfig,
    AugmentationSet,
    BandDomainConfig,
    EncoderConfig,
    ExperimentConfig,
    PairingConfig,
    PairStrategy,
    ProjectorConfig,
    SceneSource,
    SweepGrid,
    SyntheticSceneConfig,
)
from app.services.scene_generation_service import generate_paired_scene

SMALL_DOMAINS = [
    {"name": "VNIR", "wavelength_start": 400.0, "wavelength_end": 950.0, "band_count": 10},
    {"name": "SWIR1", "wavelength_start": 1500.0, "wavelength_end": 1780.0, "band_count": 6},
]


def make_cube(reflectance, layout, valid_mask=None, date_id="T1") -> HyperCube:
    """Cube over an explicit layout, values at float32 precision so files round-trip exactly"""
    reflectance = np.asarray(reflectance, dtype=np.float32)
    if valid_mask is None:
        valid_mask = np.ones(reflectance.shape[:2], dtype=bool)
    return HyperCube(
        reflectance=reflectance, date_id=date_id, layout=layout, valid_mask=valid_mask
    )


@pytest.fixture
def small_layout():
    """VNIR (10 bands) + SWIR1 (6 bands)"""
    return BandLayout(tuple(BandDomain(**d) for d in SMALL_DOMAINS))


@pytest.fixture
def tiny_scene_config():
    """16 x 16 scene, 3 species, perturbed on both dates"""
    return SyntheticSceneConfig(
        rows=16,
        cols=16,
        species_count=3,
        crowns_per_species=[3, 2, 2],
        crown_radius=(1.5, 2.0),
        layout=[BandDomainConfig(**d) for d in SMALL_DOMAINS],
        seed=3,
    )


@pytest.fixture
def quiet_scene_config(tiny_scene_config):
    """Same scene with every abiotic perturbation switched off"""
    return tiny_scene_config.model_copy(
        update={"abiotic_t1": AbioticConfig.zero(), "abiotic_t2": AbioticConfig.zero()}
    )


@pytest.fixture
def tiny_scene(tiny_scene_config):
    return generate_paired_scene(tiny_scene_config)


@pytest.fixture
def tiny_config(tiny_scene_config, tmp_path):
    """Experiment over the tiny scene: 2 epochs, 2 seeds, one matrix cell"""
    return ExperimentConfig(
        name="tiny",
        scene=SceneSource(synthetic=tiny_scene_config),
        pairing=PairingConfig(batch_size=16, max_pairs_per_epoch=64),
        augmentation=AugmentationSet(name="none"),
        encoder=EncoderConfig(widths=[4, 4, 8, 8, 8], kernel_size=3, stride=2),
        projector=ProjectorConfig(hidden_dim=8, output_dim=8),
        n_epochs=2,
        seeds=[0, 1],
        embed_batch_size=64,
        output_dir=str(tmp_path / "runs"),
        sweep=SweepGrid(
            strategies=[PairStrategy.INTER_DATE],
            augmentation_sets=[AugmentationSet(name="none")],
        ),
    )


@pytest.fixture
def cube_factory():
    """make_cube as a fixture"""
    return make_cube
