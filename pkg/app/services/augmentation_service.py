#!/usr/bin/env python3
"""
Augmentation Service - stochastic spectral augmentations

Version: 1.0.0
Author: SpecLab Development Team
Description: Adjacent band swapping, additive Gaussian noise and per-domain
             multiplicative scaling, composed into per-branch pipelines
License: [To be determined]

All augmentations are pure: the input spectrum is never modified and the
only state consumed is the caller's numpy Generator.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from app.core.error_handling import ConfigurationError, ShapeMismatchError
from app.models.cube_models import BandLayout
from app.models.experiment_models import AugmentationKind, AugmentationSpec


def band_swap(
    spectrum: np.ndarray,
    n_swaps: int,
    rng: np.random.Generator,
    positions: Sequence[int] | None = None,
) -> np.ndarray:
    """
    Transpose n_swaps adjacent band pairs (k, k+1), one after the other.

    Args:
        spectrum: [C] spectrum, C >= 2
        n_swaps: Number of swaps drawn from rng
        rng: Random stream
        positions: Forced swap indices k; rng is not consumed when given
    """
    out = np.array(spectrum, dtype=np.float64, copy=True)
    if out.ndim != 1 or out.shape[0] < 2:
        raise ShapeMismatchError(
            "Band swapping needs a spectrum of at least 2 bands",
            details=[{"shape": list(out.shape)}],
        )
    if positions is None:
        positions = rng.integers(0, out.shape[0] - 1, size=n_swaps)
    for k in positions:
        out[k], out[k + 1] = out[k + 1], out[k]
    return out


def gaussian_noise(
    spectrum: np.ndarray,
    sigma_rel: float,
    rng: np.random.Generator,
    relative: bool = True,
) -> np.ndarray:
    """x + eps, eps ~ N(0, (sigma_rel * |x|)^2), or N(0, sigma_rel^2) when not relative"""
    x = np.asarray(spectrum, dtype=np.float64)
    scale = sigma_rel * np.abs(x) if relative else sigma_rel
    return x + scale * rng.standard_normal(x.shape)


def scaling_factors(
    layout: BandLayout,
    lo: float,
    hi: float,
    rng: np.random.Generator,
    per_domain: bool = False,
    factors: Sequence[float] | None = None,
) -> np.ndarray:
    """Per-band factor vector: (VNIR, SWIR) pair, or one factor per domain"""
    n_factors = len(layout.domains) if per_domain else 2
    if factors is None:
        drawn = rng.uniform(lo, hi, size=n_factors)
    else:
        drawn = np.asarray(factors, dtype=np.float64)
        if drawn.shape != (n_factors,):
            raise ShapeMismatchError(
                "Wrong number of forced scaling factors",
                details=[{"expected": n_factors, "given": list(drawn.shape)}],
            )
    per_band = np.empty(layout.band_count)
    for index, (domain, band_slice) in enumerate(layout.domain_slices()):
        if per_domain:
            per_band[band_slice] = drawn[index]
        else:
            per_band[band_slice] = drawn[0] if domain.is_vnir else drawn[1]
    return per_band


def domain_scaling(
    spectrum: np.ndarray,
    layout: BandLayout,
    lo: float,
    hi: float,
    rng: np.random.Generator,
    per_domain: bool = False,
    factors: Sequence[float] | None = None,
) -> np.ndarray:
    """
    Multiply VNIR bands by one Uniform[lo, hi] factor and all SWIR bands by another.

    With per_domain each band domain draws its own factor. Forced factors
    follow the same order: (VNIR, SWIR), or one per domain.
    """
    x = np.asarray(spectrum, dtype=np.float64)
    if x.shape[-1] != layout.band_count:
        raise ShapeMismatchError(
            "Spectrum length differs from layout",
            details=[{"length": x.shape[-1], "layout_bands": layout.band_count}],
        )
    return x * scaling_factors(layout, lo, hi, rng, per_domain=per_domain, factors=factors)


@dataclass(frozen=True)
class AugmentationPipeline:
    """Ordered augmentations of one branch"""

    specs: tuple[AugmentationSpec, ...]
    layout: BandLayout

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        scaling = any(s.kind is AugmentationKind.DOMAIN_SCALING for s in self.specs)
        if scaling and len(self.layout.domains) < 2:
            raise ConfigurationError(
                "Domain scaling needs a layout with at least 2 domains",
                details=[{"domains": [d.name for d in self.layout.domains]}],
            )

    @classmethod
    def identity(cls, layout: BandLayout) -> "AugmentationPipeline":
        return cls((), layout)

    def __len__(self) -> int:
        return len(self.specs)


def _apply_spec(
    x: np.ndarray, spec: AugmentationSpec, layout: BandLayout, rng: np.random.Generator
) -> np.ndarray:
    if spec.kind is AugmentationKind.BAND_SWAP:
        return band_swap(x, spec.n_swaps, rng)
    if spec.kind is AugmentationKind.GAUSSIAN_NOISE:
        return gaussian_noise(x, spec.sigma_rel, rng, relative=spec.relative)
    lo, hi = spec.scale_range
    return domain_scaling(x, layout, lo, hi, rng, per_domain=spec.per_domain)


def apply_pipeline(
    spectrum: np.ndarray, pipeline: AugmentationPipeline, rng: np.random.Generator
) -> np.ndarray:
    """
    Apply each spec in order with its probability p.

    One gate draw is taken per spec whether or not it fires.

    Raises:
        ShapeMismatchError: Spectrum length differs from the pipeline layout
    """
    x = np.asarray(spectrum, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != pipeline.layout.band_count:
        raise ShapeMismatchError(
            "Spectrum length differs from pipeline layout",
            details=[{"shape": list(x.shape), "layout_bands": pipeline.layout.band_count}],
        )
    for spec in pipeline.specs:
        if rng.random() < spec.p:
            x = _apply_spec(x, spec, pipeline.layout, rng)
    return x
