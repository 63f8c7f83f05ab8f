#!/usr/bin/env python3
"""
Pretraining Service - redundancy-reduction self-supervised pretraining

Version: 1.0.0
Author: SpecLab Development Team
Description: Five-layer 1-D convolutional spectral encoder, two-layer
             projector, cross-correlation objective, per-epoch checkpoints
             and frozen-encoder embedding
License: [To be determined]

ToDo List:
- [x] Encoder and projector on the differentiation engine
- [x] Cross-correlation objective
- [x] Epoch loop with Adam
- [x] Checkpoint files
- [x] Frozen embedding
- [ ] Run independent seeds in worker processes

Progress: 83% (5/6 tasks completed)
"""

import json
import struct
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import structlog

from app.core.config import get_settings
from app.core.error_handling import (
    ConfigurationError,
    CubeFormatError,
    ShapeMismatchError,
    TruncatedPayloadError,
    error_handler,
)
from app.core.logging import experiment_logger
from app.core.performance import performance_monitor
from app.core.seeding import SeedLike, Stream, branch_generators, make_rng
from app.core.version import CHECKPOINT_FORMAT_VERSION
from app.models.cube_models import Standardizer
from app.models.experiment_models import (
    EncoderConfig,
    ExperimentConfig,
    LossConfig,
    PairStrategy,
    ProjectorConfig,
)
from app.services import diffcalc
from app.services.augmentation_service import AugmentationPipeline
from app.services.cube_service import (
    apply_standardizer,
    extract_labeled_spectra,
    fit_standardizer,
    valid_pair_coordinates,
)
from app.services.diffcalc import Recording, Tensor
from app.services.pairing_service import assemble_batch, sample_epoch
from app.services.scene_generation_service import PairedScene, materialize_scene

logger = structlog.get_logger()

CHECKPOINT_MAGIC = b"\x89HSCK\r\n\n"
_PREAMBLE = struct.Struct("<8sHI")


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class SpectralNetwork:
    """Encoder f (conv stack + global pooling) and optional projector head"""

    def __init__(
        self,
        encoder: EncoderConfig,
        projector: ProjectorConfig,
        n_bands: int,
        parameters: dict[str, Tensor],
    ):
        self.encoder_config = encoder
        self.projector_config = projector
        self.n_bands = n_bands
        self.layer_lengths = self.conv_lengths(encoder, n_bands)
        self.params = parameters

    @staticmethod
    def conv_lengths(encoder: EncoderConfig, n_bands: int) -> list[int]:
        """Signal length after each conv layer"""
        lengths = []
        length = n_bands
        padding = encoder.effective_padding
        for layer in range(len(encoder.widths)):
            padded = length + 2 * padding
            if padded < encoder.kernel_size:
                raise ConfigurationError(
                    "Spectrum too short for the conv stack",
                    details=[{"layer": layer, "length": length, "kernel": encoder.kernel_size}],
                )
            length = (padded - encoder.kernel_size) // encoder.stride + 1
            lengths.append(length)
        return lengths

    @staticmethod
    def parameter_shapes(
        encoder: EncoderConfig, projector: ProjectorConfig, with_projector: bool = True
    ) -> list[tuple[str, tuple[int, ...]]]:
        """Declared parameter order; checkpoint blobs follow it"""
        shapes: list[tuple[str, tuple[int, ...]]] = []
        c_in = 1
        for index, width in enumerate(encoder.widths):
            shapes.append((f"encoder.conv{index}.weight", (width, c_in, encoder.kernel_size)))
            shapes.append((f"encoder.conv{index}.bias", (width,)))
            c_in = width
        if with_projector:
            d_in = encoder.representation_dim
            for index, width in enumerate((projector.hidden_dim, projector.output_dim)):
                shapes.append((f"projector.fc{index}.weight", (width, d_in)))
                shapes.append((f"projector.fc{index}.bias", (width,)))
                d_in = width
        return shapes

    @classmethod
    def initialize(
        cls,
        encoder: EncoderConfig,
        projector: ProjectorConfig,
        n_bands: int,
        rng: np.random.Generator,
    ) -> "SpectralNetwork":
        """He-normal weights, zero biases"""
        parameters = {}
        for name, shape in cls.parameter_shapes(encoder, projector):
            if name.endswith(".bias"):
                values = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                values = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
            parameters[name] = Tensor(values, requires_grad=True)
        return cls(encoder, projector, n_bands, parameters)

    @classmethod
    def from_weights(
        cls,
        encoder: EncoderConfig,
        projector: ProjectorConfig,
        n_bands: int,
        weights: dict[str, np.ndarray],
    ) -> "SpectralNetwork":
        with_projector = any(name.startswith("projector.") for name in weights)
        expected = cls.parameter_shapes(encoder, projector, with_projector)
        parameters = {}
        for name, shape in expected:
            if name not in weights or weights[name].shape != shape:
                raise ShapeMismatchError(
                    "Weights do not match the network configuration",
                    details=[{"parameter": name, "expected": list(shape)}],
                )
            parameters[name] = Tensor(weights[name].copy(), requires_grad=True)
        return cls(encoder, projector, n_bands, parameters)

    @property
    def has_projector(self) -> bool:
        return "projector.fc0.weight" in self.params

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def weights(self, include_projector: bool = True) -> dict[str, np.ndarray]:
        """Copies of the parameter values"""
        return {
            name: tensor.values.copy()
            for name, tensor in self.params.items()
            if include_projector or name.startswith("encoder.")
        }

    def encode(self, batch: Tensor | np.ndarray) -> Tensor:
        """[B, C] spectra to [B, D_H] representations"""
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.values.ndim != 2 or x.shape[1] != self.n_bands:
            raise ShapeMismatchError(
                "Encoder input must be [B, C] with C the layout band count",
                details=[{"shape": list(x.shape), "bands": self.n_bands}],
            )
        h = diffcalc.reshape(x, (x.shape[0], 1, self.n_bands))
        for index in range(len(self.encoder_config.widths)):
            h = diffcalc.relu(
                diffcalc.conv1d(
                    h,
                    self.params[f"encoder.conv{index}.weight"],
                    self.params[f"encoder.conv{index}.bias"],
                    stride=self.encoder_config.stride,
                    padding=self.encoder_config.effective_padding,
                )
            )
        return diffcalc.global_avg_pool(h)

    def project(self, h: Tensor) -> Tensor:
        """[B, D_H] to [B, D_Z]"""
        if not self.has_projector:
            raise ConfigurationError("Network was restored without its projector")
        hidden = diffcalc.relu(
            diffcalc.affine(
                h, self.params["projector.fc0.weight"], self.params["projector.fc0.bias"]
            )
        )
        return diffcalc.affine(
            hidden, self.params["projector.fc1.weight"], self.params["projector.fc1.bias"]
        )


def cross_correlation(
    z1: Tensor, z2: Tensor, eps: float = 1e-12, mean_center: bool = False
) -> Tensor:
    """[D, D] batch-normalized cross-correlation of two view embeddings"""
    return diffcalc.normalized_cross_correlation(z1, z2, eps=eps, mean_center=mean_center)


def barlow_loss(corr: Tensor, lam: float) -> Tensor:
    """Invariance term on the diagonal plus lam times the squared off-diagonal"""
    return diffcalc.redundancy_loss(corr, lam)


def view_loss(
    network: SpectralNetwork, view1: np.ndarray, view2: np.ndarray, loss: LossConfig
) -> Tensor:
    """Loss of one standardized pair batch, recorded if a Recording is active"""
    z1 = network.project(network.encode(view1))
    z2 = network.project(network.encode(view2))
    corr = cross_correlation(z1, z2, eps=loss.eps, mean_center=loss.mean_center)
    return barlow_loss(corr, loss.lam)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Model state at the end of an epoch"""

    epoch: int
    train_loss: float
    weights: dict[str, np.ndarray]
    standardizer: Standardizer
    config: ExperimentConfig
    n_bands: int

    def __post_init__(self):
        if not 1 <= self.epoch <= self.config.n_epochs:
            raise ConfigurationError(
                "Checkpoint epoch outside [1, n_epochs]",
                details=[{"epoch": self.epoch, "n_epochs": self.config.n_epochs}],
            )

    @property
    def has_projector(self) -> bool:
        return any(name.startswith("projector.") for name in self.weights)

    def network(self) -> SpectralNetwork:
        return SpectralNetwork.from_weights(
            self.config.encoder, self.config.projector, self.n_bands, self.weights
        )


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    """magic, u16 version, u32 header length, JSON header, float64 blobs"""
    path = Path(path)
    names = list(checkpoint.weights)
    header = json.dumps(
        {
            "epoch": checkpoint.epoch,
            "train_loss": checkpoint.train_loss,
            "n_bands": checkpoint.n_bands,
            "config": checkpoint.config.model_dump(mode="json"),
            "tensors": [
                {"name": name, "shape": list(checkpoint.weights[name].shape)} for name in names
            ],
        },
        sort_keys=True,
    ).encode("utf-8")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            handle.write(_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_FORMAT_VERSION, len(header)))
            handle.write(header)
            handle.write(checkpoint.standardizer.mean.astype("<f8").tobytes())
            handle.write(checkpoint.standardizer.std.astype("<f8").tobytes())
            for name in names:
                blob = np.ascontiguousarray(checkpoint.weights[name], dtype="<f8")
                handle.write(blob.tobytes())
    except OSError as e:
        raise error_handler.wrap_io_error(e, path, "write") from e
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Read a checkpoint file bit-exactly.

    Raises:
        CubeFormatError: Bad magic, version or header
        TruncatedPayloadError: Fewer bytes than the header declares
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CubeFormatError(
            "Cannot read checkpoint", details=[{"path": str(path), "error": str(e)}]
        ) from e
    if len(data) < _PREAMBLE.size:
        raise TruncatedPayloadError(
            "Checkpoint shorter than its preamble", details=[{"path": str(path)}]
        )
    magic, version, header_length = _PREAMBLE.unpack_from(data)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_FORMAT_VERSION:
        raise CubeFormatError(
            "Not a supported checkpoint file",
            details=[{"path": str(path), "version": version}],
        )
    offset = _PREAMBLE.size
    try:
        header = json.loads(data[offset : offset + header_length].decode("utf-8"))
        config = ExperimentConfig.model_validate(header["config"])
        n_bands = int(header["n_bands"])
        tensors = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    except (ValueError, KeyError, TypeError) as e:
        raise CubeFormatError(
            "Malformed checkpoint header", details=[{"path": str(path), "error": str(e)}]
        ) from e
    offset += header_length

    def _take(count: int) -> np.ndarray:
        nonlocal offset
        if len(data) < offset + 8 * count:
            raise TruncatedPayloadError(
                "Checkpoint payload truncated", details=[{"path": str(path), "offset": offset}]
            )
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64)
        offset += 8 * count
        return values

    standardizer = Standardizer(mean=_take(n_bands), std=_take(n_bands))
    weights = {name: _take(int(np.prod(shape))).reshape(shape) for name, shape in tensors}
    return Checkpoint(
        epoch=int(header["epoch"]),
        train_loss=float(header["train_loss"]),
        weights=weights,
        standardizer=standardizer,
        config=config,
        n_bands=n_bands,
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def pair_coordinates(scene: PairedScene, strategy: PairStrategy) -> np.ndarray:
    """Coordinates eligible for pairing; same-view pairs only need T1"""
    if strategy is PairStrategy.SAME_VIEW:
        return np.argwhere(scene.t1.valid_mask).astype(np.int64)
    return valid_pair_coordinates(scene.t1, scene.t2)


@dataclass
class TrainingState:
    """Mutable state of one pretraining run"""

    network: SpectralNetwork
    optimizer: diffcalc.AdamState
    standardizer: Standardizer
    pipelines: tuple[AugmentationPipeline, AugmentationPipeline]
    streams: tuple[np.random.Generator, np.random.Generator]
    coordinates: np.ndarray
    epochs_completed: int = 0
    batches_completed: int = 0
    losses: list[float] = field(default_factory=list)


def build_training_state(
    config: ExperimentConfig, scene: PairedScene, seed: SeedLike
) -> TrainingState:
    """
    Initialize weights, optimizer, standardizer and branch streams for a seed.

    The standardizer is fit on the T1 labeled spectra, the same fitting set
    the reflectance baseline uses.
    """
    layout = scene.t1.layout
    network = SpectralNetwork.initialize(
        config.encoder, config.projector, layout.band_count, make_rng(seed, Stream.INIT)
    )
    optimizer = diffcalc.init_adam(
        network.parameters(),
        lr=config.optimizer.lr,
        beta1=config.optimizer.beta1,
        beta2=config.optimizer.beta2,
        eps=config.optimizer.eps,
    )
    pipelines = (
        AugmentationPipeline(tuple(config.augmentation.t1), layout),
        AugmentationPipeline(tuple(config.augmentation.t2), layout),
    )
    return TrainingState(
        network=network,
        optimizer=optimizer,
        standardizer=fit_standardizer(extract_labeled_spectra(scene.t1, scene.crowns)),
        pipelines=pipelines,
        streams=branch_generators(seed),
        coordinates=pair_coordinates(scene, config.pairing.strategy),
    )


def train_epoch(
    state: TrainingState,
    scene: PairedScene,
    config: ExperimentConfig,
    rng: np.random.Generator,
) -> float:
    """
    One pass over the shuffled pair batches.

    Each batch: assemble views, standardize, encode and project both, loss,
    backward, Adam step.

    Returns:
        Batch-size-weighted mean loss
    """
    strategy = config.pairing.strategy
    cube_t2 = None if strategy is PairStrategy.SAME_VIEW else scene.t2
    params = state.network.parameters()
    total, count = 0.0, 0
    for coord_batch in sample_epoch(
        state.coordinates, config.pairing.batch_size, rng, config.pairing.max_pairs_per_epoch
    ):
        batch = assemble_batch(
            coord_batch, scene.t1, cube_t2, strategy, state.pipelines, state.streams
        )
        view1 = apply_standardizer(state.standardizer, batch.view1)
        view2 = apply_standardizer(state.standardizer, batch.view2)
        diffcalc.zero_grad(params)
        with Recording():
            loss = view_loss(state.network, view1, view2, config.loss)
            diffcalc.backward(loss)
        diffcalc.adam_step(params, state.optimizer)
        total += loss.item() * len(batch)
        count += len(batch)
        state.batches_completed += 1
    mean_loss = total / count
    state.epochs_completed += 1
    state.losses.append(mean_loss)
    return mean_loss


def pretrain(
    config: ExperimentConfig,
    seed: int,
    scene: PairedScene | None = None,
    on_checkpoint: Callable[[Checkpoint], None] | None = None,
    keep_projector: bool | None = None,
    retain: bool = True,
) -> list[Checkpoint]:
    """
    Train for config.n_epochs epochs, checkpointing after each.

    Args:
        config: Experiment configuration
        seed: Training seed (weights, shuffling, augmentation streams)
        scene: Paired scene; materialized from config.scene when omitted
        on_checkpoint: Called with every checkpoint as it is taken
        keep_projector: Store projector weights in checkpoints; defaults to
            the checkpoint_retention setting
        retain: Return the checkpoints; with False only the callback sees them

    Returns:
        One checkpoint per epoch (empty when retain is False)
    """
    if scene is None:
        scene = materialize_scene(config.scene)
    if keep_projector is None:
        keep_projector = get_settings().checkpoint_retention == "full"
    state = build_training_state(config, scene, seed)
    logger.info(
        "Pretraining started",
        seed=seed,
        strategy=config.pairing.strategy.value,
        augmentation=config.augmentation.name,
        epochs=config.n_epochs,
        pairs=int(state.coordinates.shape[0]),
    )
    checkpoints: list[Checkpoint] = []
    for epoch in range(1, config.n_epochs + 1):
        batches_before = state.batches_completed
        with performance_monitor.measure("pretrain_epoch", seed=seed, epoch=epoch):
            mean_loss = train_epoch(state, scene, config, make_rng(seed, Stream.SHUFFLE, epoch))
        experiment_logger.log_epoch(
            seed, epoch, mean_loss, state.batches_completed - batches_before
        )
        checkpoint = Checkpoint(
            epoch=epoch,
            train_loss=mean_loss,
            weights=state.network.weights(include_projector=keep_projector),
            standardizer=state.standardizer,
            config=config,
            n_bands=state.network.n_bands,
        )
        if on_checkpoint is not None:
            on_checkpoint(checkpoint)
        if retain:
            checkpoints.append(checkpoint)
    return checkpoints


# ---------------------------------------------------------------------------
# Embedding
# ---------------------------------------------------------------------------


def embed_dataset(
    checkpoint: Checkpoint | SpectralNetwork,
    spectra: np.ndarray,
    batch_size: int = 1024,
    standardizer: Standardizer | None = None,
) -> np.ndarray:
    """
    Encoder representations H of raw spectra with frozen weights.

    Spectra are standardized with the checkpoint's T1 standardizer (or the
    one given) and encoded batch by batch; the projector is never used.
    """
    if isinstance(checkpoint, Checkpoint):
        network = checkpoint.network()
        standardizer = checkpoint.standardizer
    else:
        network = checkpoint
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim != 2 or spectra.shape[1] != network.n_bands:
        raise ShapeMismatchError(
            "Spectra width differs from the encoder input",
            details=[{"shape": list(spectra.shape), "bands": network.n_bands}],
        )
    if standardizer is not None:
        spectra = apply_standardizer(standardizer, spectra)
    out = np.empty((spectra.shape[0], network.encoder_config.representation_dim))
    with diffcalc.no_recording():
        for start in range(0, spectra.shape[0], batch_size):
            chunk = spectra[start : start + batch_size]
            out[start : start + batch_size] = network.encode(chunk).values
    return out


def checkpoint_paths(directory: str | Path, seed: int, epochs: Sequence[int]) -> list[Path]:
    """<directory>/seed-<s>/epoch-<e>.ckpt"""
    return [Path(directory) / f"seed-{seed}" / f"epoch-{epoch}.ckpt" for epoch in epochs]
