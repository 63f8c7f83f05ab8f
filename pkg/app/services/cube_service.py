#!/usr/bin/env python3
"""
Cube Service - cube files, crown tables and labeled spectra

Version: 1.0.0
Author: SpecLab Development Team
Description: .hsc binary cube I/O, .crowns.tsv ground truth, labeled spectra
             extraction, inter-date pair coordinates and band standardization
License: [To be determined]

.hsc layout (little-endian, see docs/Cube_File_Format.md):
    8 bytes   magic b"\\x89HSC\\r\\n\\x1a\\n"
    u16       format version
    u32       header length H
    H bytes   UTF-8 JSON header {rows, cols, channels, date_id, layout}
    ceil(N*M/8) bytes  valid mask, packed bits, row-major, MSB first
    N*M*C*4 bytes      reflectance float32, band-interleaved-by-pixel

In-memory float64 reflectance is rounded to float32 on save and widened
back to float64 on load.
"""

import json
import struct
from pathlib import Path

import numpy as np
import pandas as pd
import structlog

from app.core.error_handling import (
    CubeFormatError,
    DimensionOverflowError,
    GroundTruthError,
    ShapeMismatchError,
    TruncatedPayloadError,
    error_handler,
)
from app.core.version import CUBE_FORMAT_VERSION
from app.models.cube_models import (
    STD_FLOOR,
    BandLayout,
    Crown,
    CrownMap,
    HyperCube,
    LabeledSpectra,
    Standardizer,
)

logger = structlog.get_logger()

CUBE_MAGIC = b"\x89HSC\r\n\x1a\n"
_PREAMBLE = struct.Struct("<8sHI")
MAX_CUBE_VALUES = 1 << 34
CROWN_COLUMNS = ["crown_id", "species_id", "i", "j", "both_dates"]


# ---------------------------------------------------------------------------
# Cube files
# ---------------------------------------------------------------------------


def save_cube(cube: HyperCube, path: str | Path) -> Path:
    """Write a cube as .hsc"""
    path = Path(path)
    header = json.dumps(
        {
            "rows": cube.rows,
            "cols": cube.cols,
            "channels": cube.channels,
            "date_id": cube.date_id,
            "layout": cube.layout.to_records(),
        },
        sort_keys=True,
    ).encode("utf-8")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            handle.write(_PREAMBLE.pack(CUBE_MAGIC, CUBE_FORMAT_VERSION, len(header)))
            handle.write(header)
            handle.write(np.packbits(cube.valid_mask.reshape(-1)).tobytes())
            handle.write(cube.reflectance.astype("<f4").tobytes(order="C"))
    except OSError as e:
        raise error_handler.wrap_io_error(e, path, "write") from e
    logger.debug("Cube saved", path=str(path), date_id=cube.date_id)
    return path


def load_cube(path: str | Path) -> HyperCube:
    """
    Read a .hsc cube.

    Raises:
        CubeFormatError: Bad magic, unsupported version or malformed header
        TruncatedPayloadError: Payload shorter than the header claims
        DimensionOverflowError: Header dimensions beyond supported limits
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CubeFormatError(
            "Cannot read cube file", details=[{"path": str(path), "error": str(e)}]
        ) from e
    if len(data) < _PREAMBLE.size:
        raise TruncatedPayloadError(
            "Cube file shorter than its preamble", details=[{"path": str(path)}]
        )
    magic, version, header_length = _PREAMBLE.unpack_from(data)
    if magic != CUBE_MAGIC:
        raise CubeFormatError("Not a cube file (bad magic)", details=[{"path": str(path)}])
    if version != CUBE_FORMAT_VERSION:
        raise CubeFormatError(
            "Unsupported cube format version",
            details=[{"path": str(path), "version": version, "expected": CUBE_FORMAT_VERSION}],
        )
    offset = _PREAMBLE.size
    if len(data) < offset + header_length:
        raise TruncatedPayloadError("Cube header truncated", details=[{"path": str(path)}])
    try:
        header = json.loads(data[offset : offset + header_length].decode("utf-8"))
        rows, cols, channels = int(header["rows"]), int(header["cols"]), int(header["channels"])
        date_id = str(header["date_id"])
        layout = BandLayout.from_records(header["layout"])
    except (ValueError, KeyError, TypeError) as e:
        raise CubeFormatError(
            "Malformed cube header", details=[{"path": str(path), "error": str(e)}]
        ) from e
    offset += header_length

    if min(rows, cols, channels) < 1 or rows * cols * channels > MAX_CUBE_VALUES:
        raise DimensionOverflowError(
            "Cube dimensions out of range",
            details=[{"rows": rows, "cols": cols, "channels": channels}],
        )
    mask_bytes = (rows * cols + 7) // 8
    value_bytes = rows * cols * channels * 4
    if len(data) < offset + mask_bytes + value_bytes:
        raise TruncatedPayloadError(
            "Cube payload shorter than header dimensions",
            details=[
                {
                    "path": str(path),
                    "expected_bytes": offset + mask_bytes + value_bytes,
                    "actual_bytes": len(data),
                }
            ],
        )
    mask_bits = np.frombuffer(data, dtype=np.uint8, count=mask_bytes, offset=offset)
    valid_mask = np.unpackbits(mask_bits, count=rows * cols).astype(bool).reshape(rows, cols)
    offset += mask_bytes
    reflectance = (
        np.frombuffer(data, dtype="<f4", count=rows * cols * channels, offset=offset)
        .astype(np.float64)
        .reshape(rows, cols, channels)
    )
    return HyperCube(
        reflectance=reflectance, date_id=date_id, layout=layout, valid_mask=valid_mask
    )


# ---------------------------------------------------------------------------
# Crown tables
# ---------------------------------------------------------------------------


def save_crowns(crowns: CrownMap, path: str | Path) -> Path:
    """Write ground truth as a tab-separated table, one row per crown pixel"""
    path = Path(path)
    records = [
        (crown.crown_id, crown.species_id, i, j, int(crown.mapped_on_both_dates))
        for crown in crowns.crowns
        for i, j in crown.pixels
    ]
    frame = pd.DataFrame.from_records(records, columns=CROWN_COLUMNS)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, sep="\t", index=False)
    except OSError as e:
        raise error_handler.wrap_io_error(e, path, "write") from e
    return path


def load_crowns(path: str | Path) -> CrownMap:
    """Read a .crowns.tsv table"""
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep="\t")
    except (OSError, ValueError) as e:
        raise CubeFormatError(
            "Cannot read crown table", details=[{"path": str(path), "error": str(e)}]
        ) from e
    missing = [c for c in CROWN_COLUMNS if c not in frame.columns]
    if missing:
        raise CubeFormatError(
            "Crown table lacks required columns",
            details=[{"path": str(path), "missing": missing}],
        )
    crowns = []
    for crown_id, group in frame.groupby("crown_id", sort=True):
        species = group["species_id"].unique()
        flags = group["both_dates"].unique()
        if len(species) != 1 or len(flags) != 1:
            raise CubeFormatError(
                "Crown rows disagree on species or date flag",
                details=[{"path": str(path), "crown_id": int(crown_id)}],
            )
        crowns.append(
            Crown(
                crown_id=int(crown_id),
                species_id=int(species[0]),
                pixels=tuple(
                    (int(i), int(j)) for i, j in zip(group["i"], group["j"])
                ),
                mapped_on_both_dates=bool(flags[0]),
            )
        )
    return CrownMap(tuple(crowns))


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


def extract_labeled_spectra(cube: HyperCube, crowns: CrownMap) -> LabeledSpectra:
    """
    One row per valid pixel of every crown mapped on both dates.

    Rows are ordered by crown id, then row-major pixel order.

    Raises:
        GroundTruthError: No crown pixel survives the filters
    """
    crowns.validate_bounds(cube.rows, cube.cols)
    rows: list[tuple[int, int]] = []
    labels: list[int] = []
    crown_ids: list[int] = []
    for crown in sorted(crowns.crowns, key=lambda c: c.crown_id):
        if not crown.mapped_on_both_dates:
            continue
        for i, j in sorted(crown.pixels):
            if cube.valid_mask[i, j]:
                rows.append((i, j))
                labels.append(crown.species_id)
                crown_ids.append(crown.crown_id)
    if not rows:
        raise GroundTruthError(
            "No usable ground truth: no valid pixel in crowns mapped on both dates",
            details=[{"date_id": cube.date_id, "crowns": len(crowns.crowns)}],
        )
    coordinates = np.array(rows, dtype=np.int64)
    matrix = cube.reflectance[coordinates[:, 0], coordinates[:, 1]].astype(np.float64)
    return LabeledSpectra(
        matrix=matrix,
        labels=np.array(labels, dtype=np.int64),
        crown_ids=np.array(crown_ids, dtype=np.int64),
        date_id=cube.date_id,
        coordinates=coordinates,
    )


def valid_pair_coordinates(a: HyperCube, b: HyperCube) -> np.ndarray:
    """
    Row-major (i, j) coordinates valid on both cubes, as an [n, 2] array.

    Raises:
        ShapeMismatchError: Cubes differ in dimensions or layout
    """
    if a.reflectance.shape != b.reflectance.shape or a.layout != b.layout:
        raise ShapeMismatchError(
            "Cubes are not co-registered on the same grid and layout",
            details=[
                {
                    "a": list(a.reflectance.shape),
                    "b": list(b.reflectance.shape),
                    "same_layout": a.layout == b.layout,
                }
            ],
        )
    return np.argwhere(a.valid_mask & b.valid_mask).astype(np.int64)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


def fit_standardizer(spectra: LabeledSpectra | np.ndarray) -> Standardizer:
    """Per-band mean and population std, std floored at STD_FLOOR"""
    matrix = spectra.matrix if isinstance(spectra, LabeledSpectra) else np.asarray(spectra)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ShapeMismatchError(
            "Standardizer needs at least 2 spectra",
            details=[{"shape": list(matrix.shape)}],
        )
    mean = matrix.mean(axis=0)
    std = np.maximum(matrix.std(axis=0), STD_FLOOR)
    return Standardizer(mean=mean, std=std)


def apply_standardizer(standardizer: Standardizer, matrix: np.ndarray) -> np.ndarray:
    """(x - mean) / std per band"""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[-1] != standardizer.mean.shape[0]:
        raise ShapeMismatchError(
            "Spectra width differs from standardizer",
            details=[{"width": matrix.shape[-1], "bands": standardizer.mean.shape[0]}],
        )
    return (matrix - standardizer.mean) / standardizer.std
