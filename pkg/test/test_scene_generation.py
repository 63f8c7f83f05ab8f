#!/usr/bin/env python3
"""
Test synthetic two-date scene generation
"""

import numpy as np
import pytest
from scipy import ndimage

from app.core.error_handling import ConfigurationError, PlacementError, SeparationError
from app.models.cube_models import CrownMap
from app.models.experiment_models import AbioticConfig, SceneSource
from app.services.cube_service import extract_labeled_spectra
from app.services.scene_generation_service import (
    SPECTRUM_MAX,
    SPECTRUM_MIN,
    correction_residual,
    draw_crown_jitter,
    gain_field,
    generate_paired_scene,
    generate_species_library,
    load_scene_directory,
    materialize_scene,
    rasterize_crowns,
    render_date,
    save_scene,
)

GAIN_ONLY = AbioticConfig(
    gain_vnir=0.1, gain_swir=0.15, offset=0.0, ramp=0.0, noise=0.0, residual=0.0
)
RESIDUAL_ONLY = AbioticConfig.zero().model_copy(update={"residual": 0.2})


def domain_ratios_constant(a: np.ndarray, b: np.ndarray, layout) -> bool:
    """Per-pixel a/b is constant across bands inside every domain"""
    ratio = a.astype(np.float64) / b.astype(np.float64)
    for _, band_slice in layout.domain_slices():
        block = ratio[..., band_slice]
        if not np.allclose(block, block[..., :1], rtol=1e-5, atol=0):
            return False
    return True


def stored_precision(reflectance: np.ndarray) -> np.ndarray:
    """Values as a cube file stores them"""
    return reflectance.astype(np.float32).astype(np.float64)


class TestSpeciesLibrary:
    """Test species spectral library generation"""

    def test_two_species_separated(self, small_layout):
        """Test K = 2 meets the separation threshold"""
        library = generate_species_library(2, small_layout, seed=7, separation=0.05)
        assert len(library) == 2
        assert np.linalg.norm(library[0].mean - library[1].mean) >= 0.05

    def test_same_seed_same_library(self, small_layout):
        """Test determinism"""
        first = generate_species_library(4, small_layout, seed=3)
        second = generate_species_library(4, small_layout, seed=3)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.mean, b.mean)

    def test_values_in_range_over_seeds(self, small_layout):
        """Test every mean stays inside [0.01, 0.99] for 100 seeds"""
        for seed in range(100):
            for model in generate_species_library(3, small_layout, seed=seed):
                assert model.mean.min() >= SPECTRUM_MIN
                assert model.mean.max() <= SPECTRUM_MAX

    def test_needs_two_species(self, small_layout):
        """Test K < 2"""
        with pytest.raises(ConfigurationError):
            generate_species_library(1, small_layout, seed=0)

    def test_unreachable_separation(self, small_layout):
        """Test separation that cannot be met within the retry budget"""
        with pytest.raises(SeparationError):
            generate_species_library(3, small_layout, seed=0, separation=100.0, max_retries=3)


class TestCrownRasterization:
    """Test crown placement"""

    def test_single_crown_is_connected(self, tiny_scene_config):
        """Test one radius-2 crown forms one connected blob"""
        config = tiny_scene_config.model_copy(
            update={"species_count": 2, "crowns_per_species": [1, 0], "crown_radius": (2.0, 2.0)}
        )
        crowns = rasterize_crowns(config, seed=0)
        assert len(crowns.crowns) == 1
        raster = crowns.label_raster(config.rows, config.cols) >= 0
        _, components = ndimage.label(raster)
        assert components == 1

    def test_profile_counts_match(self, tiny_scene_config):
        """Test a (12, 7, 4, 3, 3) profile is placed exactly"""
        config = tiny_scene_config.model_copy(
            update={
                "rows": 48,
                "cols": 48,
                "species_count": 5,
                "crowns_per_species": [12, 7, 4, 3, 3],
                "crown_radius": (1.5, 2.5),
            }
        )
        crowns = rasterize_crowns(config, seed=1)
        counts = np.bincount([c.species_id for c in crowns.crowns], minlength=5)
        assert counts.tolist() == [12, 7, 4, 3, 3]
        assert all(c.mapped_on_both_dates for c in crowns.crowns)

    def test_crowns_are_disjoint(self, tiny_scene_config):
        """Test pairwise pixel intersections are empty"""
        crowns = rasterize_crowns(tiny_scene_config, seed=2)
        pixel_sets = [set(c.pixels) for c in crowns.crowns]
        for a in range(len(pixel_sets)):
            for b in range(a + 1, len(pixel_sets)):
                assert not pixel_sets[a] & pixel_sets[b]

    def test_geometric_profile(self):
        """Test the default profile decays by 0.7 and is floored at 3"""
        from app.models.experiment_models import SyntheticSceneConfig

        profile = SyntheticSceneConfig().crown_profile()
        assert len(profile) == 20
        assert profile[0] == 30
        assert profile[1] == 21
        assert min(profile) == 3
        assert profile == sorted(profile, reverse=True)

    def test_placement_failure(self, tiny_scene_config):
        """Test an overfull scene"""
        config = tiny_scene_config.model_copy(
            update={
                "rows": 4,
                "cols": 4,
                "crowns_per_species": [10, 10, 10],
                "crown_radius": (2.0, 2.0),
                "max_placement_retries": 5,
            }
        )
        with pytest.raises(PlacementError):
            rasterize_crowns(config, seed=0)


class TestRendering:
    """Test single-date rendering"""

    @pytest.fixture
    def parts(self, tiny_scene_config):
        layout = tiny_scene_config.band_layout()
        library = generate_species_library(3, layout, seed=5, sigma_species=0.0)
        crowns = rasterize_crowns(tiny_scene_config, seed=6)
        return layout, library, crowns

    def test_unperturbed_crowns_equal_species_mean(self, parts):
        """Test every crown pixel equals its species mean with perturbations off"""
        layout, library, crowns = parts
        cube = render_date(crowns, library, AbioticConfig.zero(), layout, 9, shape=(16, 16))
        assert cube.reflectance.dtype == np.float64
        for crown in crowns.crowns:
            expected = library[crown.species_id].mean
            for i, j in crown.pixels:
                np.testing.assert_array_equal(cube.reflectance[i, j], expected)

    def test_background_is_distinct(self, parts):
        """Test non-crown pixels carry the background spectrum"""
        layout, library, crowns = parts
        cube = render_date(crowns, library, AbioticConfig.zero(), layout, 9, shape=(16, 16))
        background = np.argwhere(crowns.label_raster(16, 16) < 0)
        i, j = background[0]
        for model in library:
            assert not np.array_equal(cube.reflectance[i, j], model.mean)

    def test_gain_only_ratio_constant_per_domain(self, parts):
        """Test two gain-only renders differ by a band-constant ratio per domain"""
        layout, library, crowns = parts
        a = render_date(crowns, library, GAIN_ONLY, layout, 1, shape=(16, 16))
        b = render_date(crowns, library, GAIN_ONLY, layout, 2, shape=(16, 16))
        assert not np.array_equal(a.reflectance, b.reflectance)
        assert domain_ratios_constant(a.reflectance, b.reflectance, layout)

    def test_residual_is_one_factor_per_band(self, parts):
        """Test residual-only renders differ by one pixel-independent factor per band"""
        layout, library, crowns = parts
        a = render_date(crowns, library, RESIDUAL_ONLY, layout, 1, shape=(16, 16))
        b = render_date(crowns, library, RESIDUAL_ONLY, layout, 2, shape=(16, 16))
        ratio = a.reflectance / b.reflectance
        np.testing.assert_allclose(ratio, np.broadcast_to(ratio[0, 0], ratio.shape), rtol=1e-12)
        assert np.ptp(ratio[0, 0]) > 0.01

    def test_residual_leaves_other_draws_unchanged(self, parts):
        """Test adding a residual rescales each band without moving the gain fields"""
        layout, library, crowns = parts
        with_residual = GAIN_ONLY.model_copy(update={"residual": 0.2})
        a = render_date(crowns, library, GAIN_ONLY, layout, 3, shape=(16, 16))
        b = render_date(crowns, library, with_residual, layout, 3, shape=(16, 16))
        ratio = b.reflectance / a.reflectance
        np.testing.assert_allclose(ratio, np.broadcast_to(ratio[0, 0], ratio.shape), rtol=1e-12)

    def test_correction_residual_shape(self):
        """Test the residual peaks at the amplitude and is exactly 1 at amplitude 0"""
        residual = correction_residual(343, 0.1, np.random.default_rng(0))
        assert residual.shape == (343,)
        assert np.max(np.abs(residual - 1.0)) == pytest.approx(0.1)
        np.testing.assert_array_equal(
            correction_residual(343, 0.0, np.random.default_rng(0)), np.ones(343)
        )

    def test_same_seed_bit_identical(self, parts):
        """Test determinism of a perturbed render"""
        layout, library, crowns = parts
        first = render_date(crowns, library, AbioticConfig(), layout, 4, shape=(16, 16))
        second = render_date(crowns, library, AbioticConfig(), layout, 4, shape=(16, 16))
        assert first.reflectance.tobytes() == second.reflectance.tobytes()

    def test_nonnegative(self, parts):
        """Test heavy noise is clipped at 0"""
        layout, library, crowns = parts
        noisy = AbioticConfig(noise=3.0)
        cube = render_date(crowns, library, noisy, layout, 4, shape=(16, 16))
        assert cube.reflectance.min() >= 0.0

    def test_unknown_species(self, parts):
        """Test crowns referencing a species outside the library"""
        layout, library, crowns = parts
        with pytest.raises(ConfigurationError):
            render_date(crowns, library[:1], AbioticConfig.zero(), layout, 0, shape=(16, 16))

    def test_gain_field_properties(self):
        """Test the gain field is positive with mean 1"""
        field = gain_field(20, 30, 0.5, 5, np.random.default_rng(0))
        assert field.min() > 0.0
        assert field.mean() == pytest.approx(1.0, abs=1e-12)

    def test_zero_sigma_no_jitter(self, parts):
        """Test zero sigma gives zero jitter"""
        _, library, crowns = parts
        assert not draw_crown_jitter(crowns, library, 0).any()


class TestPairedScene:
    """Test paired scene generation"""

    def test_unperturbed_dates_identical(self, quiet_scene_config):
        """Test T1 equals T2 bit-exactly when both dates are unperturbed"""
        scene = generate_paired_scene(quiet_scene_config)
        assert scene.t1.reflectance.tobytes() == scene.t2.reflectance.tobytes()
        assert scene.t1.date_id == "T1"
        assert scene.t2.date_id == "T2"

    def test_gain_only_dates(self, tiny_scene_config):
        """Test per-pixel T1/T2 ratio is band-constant inside each domain"""
        scene = generate_paired_scene(tiny_scene_config, GAIN_ONLY, GAIN_ONLY)
        assert domain_ratios_constant(
            scene.t1.reflectance, scene.t2.reflectance, scene.t1.layout
        )

    def test_label_vectors_match(self, tiny_scene):
        """Test both dates yield identical label vectors"""
        t1 = extract_labeled_spectra(tiny_scene.t1, tiny_scene.crowns)
        t2 = extract_labeled_spectra(tiny_scene.t2, tiny_scene.crowns)
        np.testing.assert_array_equal(t1.labels, t2.labels)
        np.testing.assert_array_equal(t1.crown_ids, t2.crown_ids)

    def test_deterministic(self, tiny_scene_config):
        """Test identical config and seed reproduce both cubes"""
        first = generate_paired_scene(tiny_scene_config)
        second = generate_paired_scene(tiny_scene_config)
        assert first.t1.reflectance.tobytes() == second.t1.reflectance.tobytes()
        assert first.t2.reflectance.tobytes() == second.t2.reflectance.tobytes()
        assert first.crowns == second.crowns

    def test_seed_override(self, tiny_scene_config):
        """Test an explicit seed replaces the configured one"""
        first = generate_paired_scene(tiny_scene_config)
        second = generate_paired_scene(tiny_scene_config, seed=tiny_scene_config.seed + 1)
        assert first.t1.reflectance.tobytes() != second.t1.reflectance.tobytes()

    def test_partial_second_date_coverage(self, tiny_scene_config):
        """Test crowns past the T2 footprint are flagged and excluded"""
        config = tiny_scene_config.model_copy(update={"t2_coverage": 0.5})
        scene = generate_paired_scene(config)
        assert scene.t1.valid_mask.all()
        assert not scene.t2.valid_mask[:, 8:].any()
        assert scene.t2.valid_mask[:, :8].all()
        for crown in scene.crowns.crowns:
            inside = all(j < 8 for _, j in crown.pixels)
            assert crown.mapped_on_both_dates == inside

    def test_iterates_as_triple(self, tiny_scene):
        """Test unpacking into (T1, T2, crowns)"""
        t1, t2, crowns = tiny_scene
        assert t1 is tiny_scene.t1
        assert isinstance(crowns, CrownMap)


class TestSceneFiles:
    """Test scene directories"""

    def test_save_and_load(self, tiny_scene, tmp_path):
        """Test a saved scene reloads as its float32 rounding, widened to float64"""
        paths = save_scene(tiny_scene, tmp_path / "scene")
        assert sorted(p.name for p in paths.values()) == [
            "scene.crowns.tsv",
            "t1.hsc",
            "t2.hsc",
        ]
        loaded = load_scene_directory(tmp_path / "scene")
        for original, reloaded in ((tiny_scene.t1, loaded.t1), (tiny_scene.t2, loaded.t2)):
            assert reloaded.reflectance.dtype == np.float64
            np.testing.assert_array_equal(
                reloaded.reflectance, stored_precision(original.reflectance)
            )
        assert loaded.crowns == tiny_scene.crowns

    def test_save_precision(self, tiny_scene, tmp_path):
        """Test the reload error is within float32 rounding of each value"""
        save_scene(tiny_scene, tmp_path)
        loaded = load_scene_directory(tmp_path)
        original = tiny_scene.t1.reflectance
        error = np.abs(loaded.t1.reflectance - original)
        assert np.all(error <= np.finfo(np.float32).eps * np.abs(original))
        assert error.max() > 0.0

    def test_resave_is_bit_exact(self, tiny_scene, tmp_path):
        """Test saving a reloaded scene again changes nothing"""
        save_scene(tiny_scene, tmp_path / "first")
        once = load_scene_directory(tmp_path / "first")
        save_scene(once, tmp_path / "second")
        twice = load_scene_directory(tmp_path / "second")
        assert twice.t1.reflectance.tobytes() == once.t1.reflectance.tobytes()
        assert twice.t2.reflectance.tobytes() == once.t2.reflectance.tobytes()
        assert (tmp_path / "second" / "t1.hsc").read_bytes() == (
            tmp_path / "first" / "t1.hsc"
        ).read_bytes()

    def test_materialize_from_paths(self, tiny_scene, tmp_path):
        """Test a scene source naming cube files"""
        paths = save_scene(tiny_scene, tmp_path)
        source = SceneSource(
            cube_t1=str(paths["t1"]), cube_t2=str(paths["t2"]), crowns=str(paths["crowns"])
        )
        assert source.synthetic is None
        loaded = materialize_scene(source)
        np.testing.assert_array_equal(
            loaded.t1.reflectance, stored_precision(tiny_scene.t1.reflectance)
        )
