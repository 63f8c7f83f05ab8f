#!/usr/bin/env python3
"""
Scene Generation Service - synthetic two-date canopy scenes

Version: 1.0.0
Author: SpecLab Development Team
Description: Species spectral library, crown rasterization and per-date
             rendering under abiotic variability (atmosphere, illumination,
             view angle, sensor noise)
License: [To be determined]

Rendering model, per pixel (i, j) and band k of domain d:

    x = gain_d(i, j) * ramp(j) * residual[k] * (mean_s[k] + jitter_crown[k])
        + offset[k] + noise

gain_d is a smooth positive field of mean 1 (bilinear interpolation of a
coarse random grid), ramp a cross-track multiplicative slope, residual a
smooth spectral distortion shared by every pixel of the date (what an
atmospheric correction leaves behind), offset a path-radiance term decaying
with wavelength, noise relative to the signal. With every amplitude at zero
each factor is exactly 1 and x is the clean spectrum. Everything is a pure
function of (config, seed).
"""

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import structlog
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import gaussian_filter1d

from app.core.error_handling import ConfigurationError, PlacementError, SeparationError
from app.core.seeding import SeedLike, child_seeds
from app.models.cube_models import BandLayout, Crown, CrownMap, HyperCube
from app.models.experiment_models import AbioticConfig, SceneSource, SyntheticSceneConfig
from app.services.cube_service import (
    load_crowns,
    load_cube,
    save_crowns,
    save_cube,
    valid_pair_coordinates,
)

logger = structlog.get_logger()

SPECTRUM_MIN = 0.01
SPECTRUM_MAX = 0.99
JITTER_SMOOTHING_BANDS = 6.0
RESIDUAL_BANDS_PER_SIGMA = 12.0


@dataclass(frozen=True, eq=False)
class SpeciesSpectrumModel:
    """Mean reflectance of one species plus its intra-species variation scale"""

    species_id: int
    mean: np.ndarray
    sigma_species: float


@dataclass(frozen=True, eq=False)
class PairedScene:
    """Two co-registered dates over one crown map"""

    t1: HyperCube
    t2: HyperCube
    crowns: CrownMap
    library: tuple[SpeciesSpectrumModel, ...] = ()

    def __iter__(self) -> Iterator:
        return iter((self.t1, self.t2, self.crowns))


# ---------------------------------------------------------------------------
# Species library
# ---------------------------------------------------------------------------


def vegetation_baseline(wavelengths: np.ndarray) -> np.ndarray:
    """Smooth green-vegetation reflectance: green peak, red edge, SWIR water decline"""
    wl = np.asarray(wavelengths, dtype=np.float64)
    green = 0.05 * np.exp(-(((wl - 550.0) / 40.0) ** 2))
    red_edge = 0.40 / (1.0 + np.exp(-(wl - 715.0) / 15.0))
    swir_decline = (1.0 - 0.45 / (1.0 + np.exp(-(wl - 1350.0) / 80.0))) * (
        1.0 - 0.35 / (1.0 + np.exp(-(wl - 1900.0) / 60.0))
    )
    return 0.03 + green + red_edge * swir_decline


def background_spectrum(wavelengths: np.ndarray) -> np.ndarray:
    """Dark, flat understory/shadow spectrum for non-crown pixels"""
    wl = np.asarray(wavelengths, dtype=np.float64)
    return 0.04 + 0.06 * (wl - wl.min()) / max(float(wl.max() - wl.min()), 1.0)


def _draw_species_mean(
    baseline: np.ndarray, wavelengths: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    brightness = rng.uniform(0.9, 1.1)
    n_bumps = int(rng.integers(4, 9))
    centers = rng.uniform(wavelengths.min(), wavelengths.max(), size=n_bumps)
    widths = rng.uniform(15.0, 120.0, size=n_bumps)
    amplitudes = rng.uniform(-0.08, 0.08, size=n_bumps)
    bumps = (
        amplitudes[:, None]
        * np.exp(-(((wavelengths[None, :] - centers[:, None]) / widths[:, None]) ** 2))
    ).sum(axis=0)
    return np.clip(baseline * brightness * (1.0 + bumps), SPECTRUM_MIN, SPECTRUM_MAX)


def generate_species_library(
    k: int,
    layout: BandLayout,
    seed: SeedLike,
    sigma_species: float = 0.02,
    separation: float = 0.05,
    max_retries: int = 200,
) -> list[SpeciesSpectrumModel]:
    """
    Draw k species means that are pairwise at least `separation` apart (L2).

    Raises:
        ConfigurationError: k < 2
        SeparationError: A species could not be separated within max_retries
    """
    if k < 2:
        raise ConfigurationError("Species library needs k >= 2", details=[{"k": k}])
    rng = np.random.default_rng(seed)
    wavelengths = layout.wavelengths()
    baseline = vegetation_baseline(wavelengths)
    library: list[SpeciesSpectrumModel] = []
    for species_id in range(k):
        for _ in range(max_retries):
            mean = _draw_species_mean(baseline, wavelengths, rng)
            if all(np.linalg.norm(mean - other.mean) >= separation for other in library):
                break
        else:
            raise SeparationError(
                "Species separation not reached within retry budget",
                details=[
                    {"species_id": species_id, "separation": separation, "retries": max_retries}
                ],
            )
        library.append(SpeciesSpectrumModel(species_id, mean, sigma_species))
    return library


# ---------------------------------------------------------------------------
# Crowns
# ---------------------------------------------------------------------------


def _ellipse_pixels(
    rows: int,
    cols: int,
    center: tuple[int, int],
    radii: tuple[float, float],
    theta: float,
) -> np.ndarray:
    ci, cj = center
    r_i, r_j = radii
    reach = int(math.ceil(max(r_i, r_j)))
    i0, i1 = max(0, ci - reach), min(rows, ci + reach + 1)
    j0, j1 = max(0, cj - reach), min(cols, cj + reach + 1)
    ii, jj = np.mgrid[i0:i1, j0:j1]
    di, dj = ii - ci, jj - cj
    u = di * math.cos(theta) + dj * math.sin(theta)
    v = -di * math.sin(theta) + dj * math.cos(theta)
    inside = (u / r_i) ** 2 + (v / r_j) ** 2 <= 1.0
    return np.stack([ii[inside], jj[inside]], axis=1)


def rasterize_crowns(
    config: SyntheticSceneConfig, seed: SeedLike
) -> CrownMap:
    """
    Place pixel-disjoint elliptical crowns following the configured profile.

    Raises:
        PlacementError: A crown found no free spot within the retry budget
    """
    rng = np.random.default_rng(seed)
    rows, cols = config.rows, config.cols
    r_lo, r_hi = config.crown_radius
    occupied = np.zeros((rows, cols), dtype=bool)
    crowns: list[Crown] = []
    for species_id, count in enumerate(config.crown_profile()):
        for _ in range(count):
            for _attempt in range(config.max_placement_retries):
                center = (int(rng.integers(0, rows)), int(rng.integers(0, cols)))
                radii = (float(rng.uniform(r_lo, r_hi)), float(rng.uniform(r_lo, r_hi)))
                theta = float(rng.uniform(0.0, math.pi))
                pixels = _ellipse_pixels(rows, cols, center, radii, theta)
                if not occupied[pixels[:, 0], pixels[:, 1]].any():
                    break
            else:
                raise PlacementError(
                    "Could not place crown disjointly",
                    details=[
                        {
                            "species_id": species_id,
                            "placed": len(crowns),
                            "retries": config.max_placement_retries,
                        }
                    ],
                )
            occupied[pixels[:, 0], pixels[:, 1]] = True
            crowns.append(
                Crown(
                    crown_id=len(crowns),
                    species_id=species_id,
                    pixels=tuple((int(i), int(j)) for i, j in pixels),
                    mapped_on_both_dates=True,
                )
            )
    logger.debug("Crowns rasterized", crowns=len(crowns), pixels=int(occupied.sum()))
    return CrownMap(tuple(crowns))


def draw_crown_jitter(
    crowns: CrownMap,
    library: Sequence[SpeciesSpectrumModel],
    seed: SeedLike,
) -> np.ndarray:
    """Smooth per-crown deviation from the species mean, [n_crowns, C]"""
    rng = np.random.default_rng(seed)
    n_bands = library[0].mean.shape[0]
    jitter = np.zeros((len(crowns.crowns), n_bands))
    norm = math.sqrt(2.0 * math.sqrt(math.pi) * JITTER_SMOOTHING_BANDS)
    for index, crown in enumerate(crowns.crowns):
        model = library[crown.species_id]
        level = rng.standard_normal()
        shape = gaussian_filter1d(
            rng.standard_normal(n_bands), JITTER_SMOOTHING_BANDS, mode="nearest"
        )
        jitter[index] = model.sigma_species * model.mean * (level + norm * shape)
    return jitter


# ---------------------------------------------------------------------------
# Abiotic perturbations
# ---------------------------------------------------------------------------


def gain_field(
    rows: int, cols: int, amplitude: float, control_points: int, rng: np.random.Generator
) -> np.ndarray:
    """Strictly positive smooth field with mean exactly 1"""
    grid = rng.standard_normal((control_points, control_points))
    axis_i = np.linspace(0.0, max(rows - 1, 1), control_points)
    axis_j = np.linspace(0.0, max(cols - 1, 1), control_points)
    interpolator = RegularGridInterpolator((axis_i, axis_j), grid, method="linear")
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    smooth = interpolator(np.stack([ii.ravel(), jj.ravel()], axis=1)).reshape(rows, cols)
    field = np.exp(amplitude * smooth)
    return field / field.mean()


def cross_track_ramp(cols: int, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """1 + amplitude * s * x over columns, x in [-1, 1], s a random flight direction"""
    direction = 1.0 if rng.random() < 0.5 else -1.0
    return 1.0 + amplitude * direction * np.linspace(-1.0, 1.0, cols)


def path_radiance_offset(
    wavelengths: np.ndarray, amplitude: float, rng: np.random.Generator
) -> np.ndarray:
    """Additive offset strongest at short wavelengths"""
    level = rng.uniform(0.5, 1.5)
    return amplitude * level * (wavelengths.min() / wavelengths) ** 4


def correction_residual(n_bands: int, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """1 + amplitude * c over bands, c a smooth random curve with max |c| = 1"""
    curve = gaussian_filter1d(
        rng.standard_normal(n_bands), max(n_bands / RESIDUAL_BANDS_PER_SIGMA, 1.0), mode="nearest"
    )
    peak = float(np.max(np.abs(curve)))
    if peak > 0.0:
        curve = curve / peak
    return 1.0 + amplitude * curve


def render_date(
    crowns: CrownMap,
    library: Sequence[SpeciesSpectrumModel],
    abiotic: AbioticConfig,
    layout: BandLayout,
    seed: SeedLike,
    *,
    shape: tuple[int, int],
    date_id: str = "T1",
    jitter: np.ndarray | None = None,
    valid_mask: np.ndarray | None = None,
) -> HyperCube:
    """
    Render one acquisition of the scene.

    Args:
        crowns: Crown map; species ids index into library
        library: Species models
        abiotic: Perturbation magnitudes of this date
        layout: Band layout; domains select the gain field per band
        seed: Seed of this date's abiotic and noise draws
        shape: (rows, cols)
        date_id: Identifier stored in the cube
        jitter: Per-crown deviations; drawn from seed when omitted
        valid_mask: Defaults to all-valid

    Returns:
        Cube with reflectance clipped at 0
    """
    rows, cols = shape
    n_bands = layout.band_count
    if any(m.mean.shape != (n_bands,) for m in library):
        raise ConfigurationError(
            "Library spectra do not match layout", details=[{"bands": n_bands}]
        )
    crowns.validate_bounds(rows, cols)
    unknown = [c.species_id for c in crowns.crowns if not 0 <= c.species_id < len(library)]
    if unknown:
        raise ConfigurationError(
            "Crown species missing from library",
            details=[{"species_ids": sorted(set(unknown)), "library_size": len(library)}],
        )
    jitter_seed, abiotic_seed, noise_seed = child_seeds(seed, 3)
    if jitter is None:
        jitter = draw_crown_jitter(crowns, library, jitter_seed)

    wavelengths = layout.wavelengths()
    clean = np.empty((rows, cols, n_bands))
    clean[:, :] = background_spectrum(wavelengths)
    for index, crown in enumerate(crowns.crowns):
        if crown.pixels:
            pixels = np.asarray(crown.pixels)
            clean[pixels[:, 0], pixels[:, 1]] = library[crown.species_id].mean + jitter[index]

    abiotic_rng = np.random.default_rng(abiotic_seed)
    gain = np.empty((rows, cols, n_bands))
    for domain, band_slice in layout.domain_slices():
        field = gain_field(
            rows, cols, abiotic.gain_for(domain.name), abiotic.control_points, abiotic_rng
        )
        gain[:, :, band_slice] = field[:, :, None]
    ramp = cross_track_ramp(cols, abiotic.ramp, abiotic_rng)
    offset = path_radiance_offset(wavelengths, abiotic.offset, abiotic_rng)
    residual = correction_residual(n_bands, abiotic.residual, abiotic_rng)

    signal = gain * ramp[None, :, None] * residual * clean
    noise = abiotic.noise * signal * np.random.default_rng(noise_seed).standard_normal(
        signal.shape
    )
    reflectance = np.maximum(signal + offset + noise, 0.0)
    if valid_mask is None:
        valid_mask = np.ones((rows, cols), dtype=bool)
    return HyperCube(
        reflectance=reflectance,
        date_id=date_id,
        layout=layout,
        valid_mask=valid_mask,
    )


# ---------------------------------------------------------------------------
# Paired scene
# ---------------------------------------------------------------------------


def _flag_partial_crowns(crowns: CrownMap, valid_mask: np.ndarray) -> CrownMap:
    flagged = []
    for crown in crowns.crowns:
        covered = all(valid_mask[i, j] for i, j in crown.pixels)
        flagged.append(replace(crown, mapped_on_both_dates=crown.mapped_on_both_dates and covered))
    return CrownMap(tuple(flagged))


def generate_paired_scene(
    config: SyntheticSceneConfig,
    abiotic_t1: AbioticConfig | None = None,
    abiotic_t2: AbioticConfig | None = None,
    seed: int | None = None,
) -> PairedScene:
    """
    Render both dates over one crown map and one jitter draw.

    Abiotic draws and noise are independent per date. With t2_coverage < 1
    the second date only covers the leading columns, and crowns reaching
    past its coverage are flagged as not mapped on both dates.
    """
    layout = config.band_layout()
    abiotic_t1 = abiotic_t1 if abiotic_t1 is not None else config.abiotic_t1
    abiotic_t2 = abiotic_t2 if abiotic_t2 is not None else config.abiotic_t2
    library_seed, crown_seed, jitter_seed, t1_seed, t2_seed = child_seeds(
        config.seed if seed is None else seed, 5
    )

    library = generate_species_library(
        config.species_count,
        layout,
        library_seed,
        sigma_species=config.sigma_species,
        separation=config.separation,
        max_retries=config.max_library_retries,
    )
    crowns = rasterize_crowns(config, crown_seed)
    jitter = draw_crown_jitter(crowns, library, jitter_seed)

    shape = (config.rows, config.cols)
    t2_mask = np.ones(shape, dtype=bool)
    covered_cols = int(math.ceil(config.t2_coverage * config.cols))
    t2_mask[:, covered_cols:] = False

    t1 = render_date(
        crowns, library, abiotic_t1, layout, t1_seed, shape=shape, date_id="T1", jitter=jitter
    )
    t2 = render_date(
        crowns,
        library,
        abiotic_t2,
        layout,
        t2_seed,
        shape=shape,
        date_id="T2",
        jitter=jitter,
        valid_mask=t2_mask,
    )
    crowns = _flag_partial_crowns(crowns, t2_mask)
    logger.info(
        "Paired scene generated",
        rows=config.rows,
        cols=config.cols,
        species=config.species_count,
        crowns=len(crowns.crowns),
        crown_pixels=sum(len(c.pixels) for c in crowns.crowns),
    )
    return PairedScene(t1=t1, t2=t2, crowns=crowns, library=tuple(library))


# ---------------------------------------------------------------------------
# Scene directories
# ---------------------------------------------------------------------------

SCENE_T1_FILE = "t1.hsc"
SCENE_T2_FILE = "t2.hsc"
SCENE_CROWNS_FILE = "scene.crowns.tsv"


def save_scene(scene: PairedScene, directory: str | Path) -> dict[str, Path]:
    """Write t1.hsc, t2.hsc and scene.crowns.tsv into directory"""
    directory = Path(directory)
    paths = {
        "t1": save_cube(scene.t1, directory / SCENE_T1_FILE),
        "t2": save_cube(scene.t2, directory / SCENE_T2_FILE),
        "crowns": save_crowns(scene.crowns, directory / SCENE_CROWNS_FILE),
    }
    logger.info("Scene saved", directory=str(directory))
    return paths


def load_scene(
    cube_t1: str | Path, cube_t2: str | Path, crowns: str | Path
) -> PairedScene:
    """Read a paired scene from explicit paths; cubes must be co-registered"""
    t1, t2 = load_cube(cube_t1), load_cube(cube_t2)
    crown_map = load_crowns(crowns)
    valid_pair_coordinates(t1, t2)
    crown_map.validate_bounds(t1.rows, t1.cols)
    return PairedScene(t1=t1, t2=t2, crowns=crown_map)


def load_scene_directory(directory: str | Path) -> PairedScene:
    directory = Path(directory)
    return load_scene(
        directory / SCENE_T1_FILE, directory / SCENE_T2_FILE, directory / SCENE_CROWNS_FILE
    )


def materialize_scene(source: SceneSource) -> PairedScene:
    """Generate the configured synthetic scene or read the configured files"""
    if source.synthetic is not None:
        return generate_paired_scene(source.synthetic)
    return load_scene(source.cube_t1, source.cube_t2, source.crowns)
