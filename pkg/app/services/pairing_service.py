#!/usr/bin/env python3
"""
Pairing Service - positive view pairs and shuffled batches

Version: 1.0.0
Author: SpecLab Development Team
Description: Inter-date and same-view pair construction, epoch sampling and
             batch assembly for pretraining
License: [To be determined]
"""

from dataclasses import dataclass

import numpy as np

from app.core.error_handling import InvalidCoordinateError, ShapeMismatchError
from app.models.cube_models import HyperCube
from app.models.experiment_models import PairStrategy
from app.services.augmentation_service import AugmentationPipeline, apply_pipeline

MIN_BATCH = 2


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Two views of B coordinates"""

    view1: np.ndarray
    view2: np.ndarray
    coordinates: np.ndarray

    def __post_init__(self):
        if self.view1.shape != self.view2.shape:
            raise ShapeMismatchError(
                "Pair views differ in shape",
                details=[{"view1": list(self.view1.shape), "view2": list(self.view2.shape)}],
            )
        if self.view1.shape[0] < MIN_BATCH:
            raise ShapeMismatchError(
                "Pair batch needs at least 2 rows", details=[{"rows": self.view1.shape[0]}]
            )

    def __len__(self) -> int:
        return self.view1.shape[0]


def _check_coordinate(cube: HyperCube, coord: tuple[int, int]):
    i, j = int(coord[0]), int(coord[1])
    if not (0 <= i < cube.rows and 0 <= j < cube.cols) or not cube.valid_mask[i, j]:
        raise InvalidCoordinateError(
            "Coordinate outside the cube or not valid",
            details=[{"coordinate": [i, j], "date_id": cube.date_id}],
        )


def make_pair(
    coord: tuple[int, int],
    cube_t1: HyperCube,
    cube_t2: HyperCube | None,
    strategy: PairStrategy,
    pipeline_t1: AugmentationPipeline,
    pipeline_t2: AugmentationPipeline,
    streams: tuple[np.random.Generator, np.random.Generator],
) -> tuple[np.ndarray, np.ndarray]:
    """
    Two augmented views of the spectrum at coord.

    InterDate views come from the same (i, j) of both dates; SameView draws
    both views from cube_t1 and never reads cube_t2.

    Args:
        streams: (T1 branch, T2 branch) generators
    """
    i, j = int(coord[0]), int(coord[1])
    _check_coordinate(cube_t1, (i, j))
    first = cube_t1.spectrum(i, j)
    if strategy is PairStrategy.INTER_DATE:
        if cube_t2 is None:
            raise InvalidCoordinateError("Inter-date pairing needs a second date")
        _check_coordinate(cube_t2, (i, j))
        second = cube_t2.spectrum(i, j)
    else:
        second = first
    stream_t1, stream_t2 = streams
    return (
        apply_pipeline(first, pipeline_t1, stream_t1),
        apply_pipeline(second, pipeline_t2, stream_t2),
    )


def sample_epoch(
    coords: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
    max_pairs: int | None = None,
) -> list[np.ndarray]:
    """
    Shuffle coordinates without replacement and cut them into batches.

    A final batch shorter than 2 is dropped. max_pairs caps the coordinates
    visited per epoch.

    Raises:
        ShapeMismatchError: batch_size < 2 or fewer than 2 coordinates
    """
    coords = np.asarray(coords)
    if batch_size < MIN_BATCH:
        raise ShapeMismatchError("Batch size must be >= 2", details=[{"batch_size": batch_size}])
    if coords.shape[0] < MIN_BATCH:
        raise ShapeMismatchError(
            "Need at least 2 coordinates to pair", details=[{"coordinates": coords.shape[0]}]
        )
    shuffled = coords[rng.permutation(coords.shape[0])]
    if max_pairs is not None:
        shuffled = shuffled[:max_pairs]
    batches = [
        shuffled[start : start + batch_size] for start in range(0, len(shuffled), batch_size)
    ]
    if batches and len(batches[-1]) < MIN_BATCH:
        batches.pop()
    return batches


def assemble_batch(
    coord_batch: np.ndarray,
    cube_t1: HyperCube,
    cube_t2: HyperCube | None,
    strategy: PairStrategy,
    pipelines: tuple[AugmentationPipeline, AugmentationPipeline],
    streams: tuple[np.random.Generator, np.random.Generator],
) -> PairBatch:
    """Stack make_pair outputs in coordinate order"""
    pairs = [
        make_pair(coord, cube_t1, cube_t2, strategy, pipelines[0], pipelines[1], streams)
        for coord in coord_batch
    ]
    return PairBatch(
        view1=np.stack([p[0] for p in pairs]),
        view2=np.stack([p[1] for p in pairs]),
        coordinates=np.asarray(coord_batch, dtype=np.int64),
    )
