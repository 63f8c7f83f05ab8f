#!/usr/bin/env python3
"""
SpecLab Cube Models

Version: 1.0.0
Author: SpecLab Development Team
Description: Dated hyperspectral cubes, band-domain layout, crown ground truth
             and labeled spectra
License: [To be determined]

All containers are frozen after construction. Reflectance is held as
float64 in memory. Cube files store float32, so a saved cube reloads with
each value rounded to the nearest float32; reloading and saving again is
bit-exact.
"""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np

from app.core.error_handling import ConfigurationError, ShapeMismatchError

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class BandDomain:
    """Contiguous spectral domain sampled by band_count bands"""

    name: str
    wavelength_start: float
    wavelength_end: float
    band_count: int

    def __post_init__(self):
        if self.band_count < 1:
            raise ConfigurationError(
                "Band domain needs at least one band",
                details=[{"domain": self.name, "band_count": self.band_count}],
            )
        if self.wavelength_end < self.wavelength_start:
            raise ConfigurationError(
                "Band domain wavelength range is reversed",
                details=[
                    {
                        "domain": self.name,
                        "start": self.wavelength_start,
                        "end": self.wavelength_end,
                    }
                ],
            )

    @property
    def is_vnir(self) -> bool:
        return self.name.upper().startswith("VNIR")


@dataclass(frozen=True)
class BandLayout:
    """Ordered, non-overlapping band domains"""

    domains: tuple[BandDomain, ...]

    def __post_init__(self):
        if not self.domains:
            raise ConfigurationError("Band layout needs at least one domain")
        for previous, current in zip(self.domains, self.domains[1:]):
            if current.wavelength_start <= previous.wavelength_end:
                raise ConfigurationError(
                    "Band domains must be strictly increasing and non-overlapping",
                    details=[{"previous": previous.name, "current": current.name}],
                )

    @classmethod
    def default(cls) -> "BandLayout":
        """Post-pruning VNIR + three SWIR domains, 343 bands"""
        return cls(
            (
                BandDomain("VNIR", 414.7, 975.0, 154),
                BandDomain("SWIR0", 976.9, 1329.7, 66),
                BandDomain("SWIR1", 1497.9, 1774.8, 52),
                BandDomain("SWIR2", 1981.0, 2361.0, 71),
            )
        )

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "BandLayout":
        return cls(
            tuple(
                BandDomain(
                    name=str(r["name"]),
                    wavelength_start=float(r["wavelength_start"]),
                    wavelength_end=float(r["wavelength_end"]),
                    band_count=int(r["band_count"]),
                )
                for r in records
            )
        )

    def to_records(self) -> list[dict]:
        return [
            {
                "name": d.name,
                "wavelength_start": d.wavelength_start,
                "wavelength_end": d.wavelength_end,
                "band_count": d.band_count,
            }
            for d in self.domains
        ]

    @property
    def band_count(self) -> int:
        return sum(d.band_count for d in self.domains)

    def domain_slices(self) -> Iterator[tuple[BandDomain, slice]]:
        start = 0
        for domain in self.domains:
            yield domain, slice(start, start + domain.band_count)
            start += domain.band_count

    def wavelengths(self) -> np.ndarray:
        """Band centers, evenly spaced inside each domain"""
        return np.concatenate(
            [
                np.linspace(d.wavelength_start, d.wavelength_end, d.band_count)
                for d in self.domains
            ]
        )

    def vnir_mask(self) -> np.ndarray:
        mask = np.zeros(self.band_count, dtype=bool)
        for domain, band_slice in self.domain_slices():
            mask[band_slice] = domain.is_vnir
        return mask


@dataclass(frozen=True, eq=False)
class HyperCube:
    """Dated N x M x C reflectance cube with validity mask"""

    reflectance: np.ndarray
    date_id: str
    layout: BandLayout
    valid_mask: np.ndarray

    def __post_init__(self):
        reflectance = np.asarray(self.reflectance, dtype=np.float64)
        valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if reflectance.ndim != 3:
            raise ShapeMismatchError(
                "Reflectance must be N x M x C",
                details=[{"shape": list(reflectance.shape)}],
            )
        if valid_mask.shape != reflectance.shape[:2]:
            raise ShapeMismatchError(
                "Validity mask must be N x M",
                details=[
                    {"mask": list(valid_mask.shape), "cube": list(reflectance.shape[:2])}
                ],
            )
        if self.layout.band_count != reflectance.shape[2]:
            raise ShapeMismatchError(
                "Layout band total differs from cube channel count",
                details=[
                    {"layout_bands": self.layout.band_count, "channels": reflectance.shape[2]}
                ],
            )
        valid_values = reflectance[valid_mask]
        if valid_values.size and (
            not np.all(np.isfinite(valid_values)) or np.any(valid_values < 0)
        ):
            raise ConfigurationError(
                "Reflectance must be finite and non-negative on valid pixels",
                details=[{"date_id": self.date_id}],
            )
        reflectance.setflags(write=False)
        valid_mask.setflags(write=False)
        object.__setattr__(self, "reflectance", reflectance)
        object.__setattr__(self, "valid_mask", valid_mask)

    @property
    def rows(self) -> int:
        return self.reflectance.shape[0]

    @property
    def cols(self) -> int:
        return self.reflectance.shape[1]

    @property
    def channels(self) -> int:
        return self.reflectance.shape[2]

    def spectrum(self, i: int, j: int) -> np.ndarray:
        """Pixel (i, j) as a float64 spectrum"""
        return self.reflectance[i, j].astype(np.float64)


@dataclass(frozen=True)
class Crown:
    """Labeled canopy extent of one tree"""

    crown_id: int
    species_id: int
    pixels: tuple[tuple[int, int], ...]
    mapped_on_both_dates: bool = True


@dataclass(frozen=True)
class CrownMap:
    """Pixel-disjoint crowns of a scene"""

    crowns: tuple[Crown, ...]

    def __post_init__(self):
        seen: dict[tuple[int, int], int] = {}
        ids = set()
        for crown in self.crowns:
            if crown.crown_id in ids:
                raise ConfigurationError(
                    "Duplicate crown id", details=[{"crown_id": crown.crown_id}]
                )
            ids.add(crown.crown_id)
            for pixel in crown.pixels:
                if pixel in seen:
                    raise ConfigurationError(
                        "Crowns overlap",
                        details=[
                            {
                                "pixel": list(pixel),
                                "crowns": [seen[pixel], crown.crown_id],
                            }
                        ],
                    )
                seen[pixel] = crown.crown_id

    def validate_bounds(self, rows: int, cols: int):
        for crown in self.crowns:
            for i, j in crown.pixels:
                if not (0 <= i < rows and 0 <= j < cols):
                    raise ShapeMismatchError(
                        "Crown pixel outside the cube",
                        details=[
                            {"crown_id": crown.crown_id, "pixel": [i, j], "dims": [rows, cols]}
                        ],
                    )

    @property
    def species(self) -> list[int]:
        return sorted({c.species_id for c in self.crowns})

    def label_raster(self, rows: int, cols: int) -> np.ndarray:
        """crown index raster, -1 on background"""
        raster = np.full((rows, cols), -1, dtype=np.int64)
        for index, crown in enumerate(self.crowns):
            for i, j in crown.pixels:
                raster[i, j] = index
        return raster


@dataclass(frozen=True, eq=False)
class LabeledSpectra:
    """Labeled pixel spectra of one date"""

    matrix: np.ndarray
    labels: np.ndarray
    crown_ids: np.ndarray
    date_id: str
    coordinates: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        n = self.matrix.shape[0]
        if self.labels.shape != (n,) or self.crown_ids.shape != (n,):
            raise ShapeMismatchError(
                "Labels and crown ids must have one entry per spectrum",
                details=[
                    {
                        "rows": n,
                        "labels": list(self.labels.shape),
                        "crown_ids": list(self.crown_ids.shape),
                    }
                ],
            )

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-band affine normalization fitted on T1"""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise ShapeMismatchError(
                "Standardizer mean and std differ in shape",
                details=[{"mean": list(self.mean.shape), "std": list(self.std.shape)}],
            )
        if np.any(self.std < STD_FLOOR):
            raise ConfigurationError("Standardizer std below floor")
