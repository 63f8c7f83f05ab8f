#!/usr/bin/env python3
"""
SpecLab Experiment Models

Version: 1.0.0
Author: SpecLab Development Team
Description: Versioned experiment configuration schema (scene, augmentations,
             model, optimizer, classifier, sweep grid)
License: [To be determined]

ToDo List:
- [x] Create scene and abiotic models
- [x] Add augmentation set models
- [x] Add model / loss / optimizer models
- [x] Add sweep grid model
- [x] Add validation rules
- [x] Add JSON load/dump helpers
- [ ] Add migration for schema_version 2 when the format changes

Progress: 85% (6/7 tasks completed)
"""

import json
from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.error_handling import ConfigurationError
from app.core.version import CONFIG_SCHEMA_VERSION
from app.models.cube_models import BandLayout


class PairStrategy(str, Enum):
    """Positive pair construction"""

    INTER_DATE = "inter_date"
    SAME_VIEW = "same_view"


class AugmentationKind(str, Enum):
    """Spectral augmentation kinds"""

    BAND_SWAP = "band_swap"
    GAUSSIAN_NOISE = "gaussian_noise"
    DOMAIN_SCALING = "domain_scaling"


class AugmentationSpec(BaseModel):
    """One stochastic spectral augmentation"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: AugmentationKind = Field(..., description="Augmentation kind")
    p: float = Field(default=0.5, ge=0.0, le=1.0, description="Apply probability")
    n_swaps: int = Field(default=5, ge=0, description="Adjacent band swaps (band_swap)")
    sigma_rel: float = Field(default=0.005, ge=0.0, description="Noise sigma (gaussian_noise)")
    relative: bool = Field(
        default=True, description="Noise sigma relative to band value, absolute otherwise"
    )
    scale_range: tuple[float, float] = Field(
        default=(0.9, 1.1), description="Factor range [lo, hi] (domain_scaling)"
    )
    per_domain: bool = Field(
        default=False, description="One factor per domain instead of VNIR/SWIR pair"
    )

    @field_validator("scale_range")
    @classmethod
    def validate_scale_range(cls, v):
        """Validate 0 < lo <= hi"""
        lo, hi = v
        if not 0.0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < lo <= hi")
        return v


class AugmentationSet(BaseModel):
    """Named pair of per-branch augmentation pipelines"""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., description="Label used in reports")
    t1: list[AugmentationSpec] = Field(default_factory=list, description="Branch T1 pipeline")
    t2: list[AugmentationSpec] = Field(default_factory=list, description="Branch T2 pipeline")

    @classmethod
    def symmetric(cls, name: str, specs: list[AugmentationSpec]) -> "AugmentationSet":
        return cls(name=name, t1=list(specs), t2=list(specs))


def default_augmentation_sets() -> list[AugmentationSet]:
    """Augmentation strategies compared along the result figure's x-axis"""
    swap = AugmentationSpec(kind=AugmentationKind.BAND_SWAP)
    noise = AugmentationSpec(kind=AugmentationKind.GAUSSIAN_NOISE)
    scaling = AugmentationSpec(kind=AugmentationKind.DOMAIN_SCALING)
    return [
        AugmentationSet.symmetric("none", []),
        AugmentationSet.symmetric("band_swap", [swap]),
        AugmentationSet.symmetric("noise", [noise]),
        AugmentationSet.symmetric("scaling", [scaling]),
        AugmentationSet.symmetric("scaling+noise", [scaling, noise]),
        AugmentationSet.symmetric("all", [swap, noise, scaling]),
    ]


def noise_sweep_sets(sigmas: tuple[float, ...] = (0.001, 0.005, 0.02)) -> list[AugmentationSet]:
    """Gaussian-noise magnitude sweep"""
    return [
        AugmentationSet.symmetric(
            f"noise_{sigma:g}",
            [AugmentationSpec(kind=AugmentationKind.GAUSSIAN_NOISE, sigma_rel=sigma)],
        )
        for sigma in sigmas
    ]


class BandDomainConfig(BaseModel):
    """Band domain as declared in a config file"""

    model_config = ConfigDict(extra="forbid")

    name: str
    wavelength_start: float
    wavelength_end: float
    band_count: int = Field(..., ge=1)


def _default_layout() -> list[BandDomainConfig]:
    return [BandDomainConfig(**record) for record in BandLayout.default().to_records()]


class AbioticConfig(BaseModel):
    """Magnitudes of one date's abiotic perturbations"""

    model_config = ConfigDict(extra="forbid")

    gain_vnir: float = Field(default=0.05, ge=0.0, description="Gain field amplitude, VNIR")
    gain_swir: float = Field(default=0.08, ge=0.0, description="Gain field amplitude, SWIR*")
    offset: float = Field(default=0.01, ge=0.0, description="Path-radiance offset amplitude")
    ramp: float = Field(default=0.05, ge=0.0, lt=1.0, description="Cross-track ramp amplitude")
    noise: float = Field(default=0.01, ge=0.0, description="Relative sensor noise")
    residual: float = Field(
        default=0.1, ge=0.0, lt=1.0, description="Smooth spectral correction residual amplitude"
    )
    control_points: int = Field(default=5, ge=2, description="Gain field control grid size")

    @classmethod
    def zero(cls) -> "AbioticConfig":
        return cls(gain_vnir=0.0, gain_swir=0.0, offset=0.0, ramp=0.0, noise=0.0, residual=0.0)

    def gain_for(self, domain_name: str) -> float:
        return self.gain_vnir if domain_name.upper().startswith("VNIR") else self.gain_swir


class SyntheticSceneConfig(BaseModel):
    """Synthetic two-date scene"""

    model_config = ConfigDict(extra="forbid")

    rows: int = Field(default=96, ge=1)
    cols: int = Field(default=96, ge=1)
    species_count: int = Field(default=20, ge=2)
    crowns_per_species: list[int] | None = Field(
        default=None, description="Explicit per-species crown counts"
    )
    max_crowns_per_species: int = Field(default=30, ge=1)
    imbalance_ratio: float = Field(default=0.7, gt=0.0, le=1.0)
    min_crowns_per_species: int = Field(default=3, ge=1)
    crown_radius: tuple[float, float] = Field(default=(2.0, 4.0))
    layout: list[BandDomainConfig] = Field(default_factory=_default_layout)
    sigma_species: float = Field(default=0.02, ge=0.0, description="Intra-species jitter")
    separation: float = Field(default=0.05, ge=0.0, description="Minimum species L2 distance")
    t2_coverage: float = Field(default=1.0, gt=0.0, le=1.0, description="T2 column coverage")
    abiotic_t1: AbioticConfig = Field(default_factory=AbioticConfig)
    abiotic_t2: AbioticConfig = Field(default_factory=AbioticConfig)
    seed: int = Field(default=0, description="Scene seed, shared by all training seeds")
    max_placement_retries: int = Field(default=2000, ge=1)
    max_library_retries: int = Field(default=200, ge=1)

    @field_validator("crown_radius")
    @classmethod
    def validate_crown_radius(cls, v):
        """Validate 0 < r_min <= r_max"""
        lo, hi = v
        if not 0.0 < lo <= hi:
            raise ValueError("crown_radius must satisfy 0 < min <= max")
        return v

    @model_validator(mode="after")
    def validate_profile(self):
        """Explicit crown profile must cover every species"""
        if self.crowns_per_species is not None:
            if len(self.crowns_per_species) != self.species_count:
                raise ValueError("crowns_per_species needs one count per species")
            if any(count < 0 for count in self.crowns_per_species):
                raise ValueError("crowns_per_species entries must be >= 0")
            if sum(self.crowns_per_species) < 1:
                raise ValueError("crowns_per_species must place at least one crown")
        return self

    def crown_profile(self) -> list[int]:
        """Per-species crown counts, geometric and floored unless given explicitly"""
        if self.crowns_per_species is not None:
            return list(self.crowns_per_species)
        return [
            max(
                self.min_crowns_per_species,
                int(round(self.max_crowns_per_species * self.imbalance_ratio**k)),
            )
            for k in range(self.species_count)
        ]

    def band_layout(self) -> BandLayout:
        return BandLayout.from_records([d.model_dump() for d in self.layout])


class SceneSource(BaseModel):
    """Either a synthetic scene or paths to saved cubes and crowns"""

    model_config = ConfigDict(extra="forbid")

    synthetic: SyntheticSceneConfig | None = Field(default_factory=SyntheticSceneConfig)
    cube_t1: str | None = None
    cube_t2: str | None = None
    crowns: str | None = None

    @model_validator(mode="after")
    def validate_source(self):
        """Exactly one source kind"""
        paths = [self.cube_t1, self.cube_t2, self.crowns]
        if any(p is not None for p in paths):
            if not all(p is not None for p in paths):
                raise ValueError("cube_t1, cube_t2 and crowns must be given together")
            self.synthetic = None
        elif self.synthetic is None:
            raise ValueError("scene needs a synthetic config or cube paths")
        return self


class EncoderConfig(BaseModel):
    """Five-layer 1-D convolutional encoder"""

    model_config = ConfigDict(extra="forbid")

    widths: list[int] = Field(default=[32, 64, 128, 256, 256])
    kernel_size: int = Field(default=7, ge=1)
    stride: int = Field(default=2, ge=1)
    padding: int | None = Field(default=None, ge=0, description="Defaults to kernel_size // 2")

    @field_validator("widths")
    @classmethod
    def validate_widths(cls, v):
        """Exactly five positive widths"""
        if len(v) != 5 or any(w < 1 for w in v):
            raise ValueError("encoder needs exactly 5 positive conv widths")
        return v

    @property
    def effective_padding(self) -> int:
        return self.kernel_size // 2 if self.padding is None else self.padding

    @property
    def representation_dim(self) -> int:
        return self.widths[-1]


class ProjectorConfig(BaseModel):
    """Two-layer projector head"""

    model_config = ConfigDict(extra="forbid")

    hidden_dim: int = Field(default=2056, ge=1)
    output_dim: int = Field(default=2056, ge=1)


class LossConfig(BaseModel):
    """Redundancy-reduction objective"""

    model_config = ConfigDict(extra="forbid")

    lam: float = Field(default=5e-3, ge=0.0, description="Off-diagonal trade-off weight")
    mean_center: bool = Field(default=False, description="Center columns before correlating")
    eps: float = Field(default=1e-12, gt=0.0, description="Denominator guard")


class OptimizerConfig(BaseModel):
    """Adam hyperparameters"""

    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=1e-3, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class PairingConfig(BaseModel):
    """Pair construction and batching"""

    model_config = ConfigDict(extra="forbid")

    strategy: PairStrategy = Field(default=PairStrategy.INTER_DATE)
    batch_size: int = Field(default=256, ge=2)
    max_pairs_per_epoch: int | None = Field(default=None, ge=2)


class ClassifierConfig(BaseModel):
    """Shrinkage LDA"""

    model_config = ConfigDict(extra="forbid")

    shrinkage: float = Field(default=1e-3, ge=0.0, le=1.0)
    covariance_normalization: Literal["unbiased", "mle"] = Field(
        default="unbiased", description="Pooled scatter divided by n - K or by n"
    )


class SweepGrid(BaseModel):
    """Cells of the experiment matrix"""

    model_config = ConfigDict(extra="forbid")

    strategies: list[PairStrategy] = Field(
        default_factory=lambda: [PairStrategy.INTER_DATE, PairStrategy.SAME_VIEW]
    )
    augmentation_sets: list[AugmentationSet] = Field(default_factory=default_augmentation_sets)

    @field_validator("strategies", "augmentation_sets")
    @classmethod
    def validate_nonempty(cls, v):
        """Grid axes must be nonempty"""
        if not v:
            raise ValueError("sweep grid axes must be nonempty")
        return v

    @property
    def cell_count(self) -> int:
        return len(self.strategies) * len(self.augmentation_sets)


class ExperimentConfig(BaseModel):
    """Complete experiment description"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(default=CONFIG_SCHEMA_VERSION)
    name: str = Field(default="experiment")
    scene: SceneSource = Field(default_factory=SceneSource)
    pairing: PairingConfig = Field(default_factory=PairingConfig)
    augmentation: AugmentationSet = Field(
        default_factory=lambda: default_augmentation_sets()[4],
        description="Augmentation set of a single run",
    )
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    projector: ProjectorConfig = Field(default_factory=ProjectorConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    n_epochs: int = Field(default=30, ge=1)
    eval_every: int = Field(default=1, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3])
    embed_batch_size: int = Field(default=1024, ge=1)
    output_dir: str = Field(default="runs/default")
    sweep: SweepGrid = Field(default_factory=SweepGrid)

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, v):
        """Only the current schema is understood"""
        if v != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}, expected {CONFIG_SCHEMA_VERSION}")
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v):
        """Seeds nonempty"""
        if not v:
            raise ValueError("seeds must be nonempty")
        return v

    def for_cell(self, strategy: PairStrategy, augmentation: AugmentationSet) -> "ExperimentConfig":
        """Copy bound to one matrix cell"""
        return self.model_copy(
            update={
                "pairing": self.pairing.model_copy(update={"strategy": strategy}),
                "augmentation": augmentation,
            }
        )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """
    Read and validate an experiment config file.

    Raises:
        ConfigurationError: Unreadable file, invalid JSON or schema violations
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(
            f"Cannot read config {path}", details=[{"path": str(path), "error": str(e)}]
        ) from e
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigurationError(
            f"Invalid experiment config {path}",
            details=[
                {"location": ".".join(str(p) for p in err["loc"]), "error": err["msg"]}
                for err in e.errors()
            ],
        ) from e


def dump_experiment_config(config: ExperimentConfig, path: str | Path) -> Path:
    """Write a config file that load_experiment_config reads back unchanged"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(config.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8"
    )
    return path
