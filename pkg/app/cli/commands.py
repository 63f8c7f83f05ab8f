#!/usr/bin/env python3
"""
SpecLab command line

Version: 1.0.0
Author: SpecLab Development Team
Description: gen, pretrain, embed, fit-lda, eval, sweep and report subcommands
License: [To be determined]

Exit codes: 0 success, 1 lab error (logged in standardized form),
2 argument errors.
"""

import argparse
import json
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import structlog

from app.core.config import get_settings
from app.core.error_handling import ConfigurationError, SpecLabError, error_handler
from app.core.logging import experiment_logger, setup_logging
from app.core.version import get_version
from app.models.experiment_models import ExperimentConfig, load_experiment_config
from app.services.classification_service import (
    lda_fit,
    lda_predict,
    load_lda,
    mean_class_accuracy,
    overall_accuracy,
    save_lda,
)
from app.services.cube_service import apply_standardizer, fit_standardizer
from app.services.experiment_service import ExperimentService, prepare_scene
from app.services.pretraining_service import (
    checkpoint_paths,
    embed_dataset,
    load_checkpoint,
    pretrain,
    save_checkpoint,
)
from app.services.report_service import REPORT_FILE, emit_report, rerender_report
from app.services.scene_generation_service import (
    generate_paired_scene,
    materialize_scene,
    save_scene,
)

logger = structlog.get_logger()

Handler = Callable[[argparse.Namespace, ExperimentConfig, Path], int]


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = load_experiment_config(args.config)
    else:
        config = ExperimentConfig(output_dir=str(Path(get_settings().output_dir) / "default"))
    if args.out:
        config = config.model_copy(update={"output_dir": args.out})
    return config


def _seed(args: argparse.Namespace) -> int:
    return get_settings().default_seed if args.seed is None else args.seed


def save_features(
    path: Path,
    features: np.ndarray,
    labels: np.ndarray,
    crown_ids: np.ndarray,
    coordinates: np.ndarray,
) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            np.savez(
                handle,
                features=features,
                labels=labels,
                crown_ids=crown_ids,
                coordinates=coordinates,
            )
    except OSError as e:
        raise error_handler.wrap_io_error(e, path, "write") from e
    experiment_logger.log_artifact_written("features", str(path))
    return path


def load_features(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """(features, labels) of a features archive"""
    path = Path(path)
    try:
        with np.load(path) as archive:
            return archive["features"], archive["labels"]
    except (OSError, KeyError, ValueError) as e:
        raise ConfigurationError(
            "Unreadable features file", details=[{"path": str(path), "error": str(e)}]
        ) from e


def _write_json(payload: dict, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise error_handler.wrap_io_error(e, path, "write") from e
    experiment_logger.log_artifact_written("json", str(path))
    return path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    """Generate and save a synthetic paired scene"""
    if config.scene.synthetic is None:
        raise ConfigurationError("gen needs a synthetic scene section in the config")
    scene = generate_paired_scene(config.scene.synthetic, seed=args.seed)
    paths = save_scene(scene, out / "scene")
    for kind, path in paths.items():
        experiment_logger.log_artifact_written(kind, str(path))
    print(f"scene written to {out / 'scene'} ({len(scene.crowns.crowns)} crowns)")
    return 0


def cmd_pretrain(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    """Pretrain one seed, one checkpoint file per epoch"""
    seed = _seed(args)
    directory = out / "checkpoints"

    def _save(checkpoint):
        (path,) = checkpoint_paths(directory, seed, [checkpoint.epoch])
        save_checkpoint(checkpoint, path)
        experiment_logger.log_artifact_written("checkpoint", str(path))

    pretrain(config, seed, scene=materialize_scene(config.scene), on_checkpoint=_save, retain=False)
    print(f"{config.n_epochs} checkpoints written to {directory / f'seed-{seed}'}")
    return 0


def cmd_embed(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    """Embed T1 and T2 labeled spectra with a frozen checkpoint"""
    checkpoint = load_checkpoint(args.checkpoint)
    prepared = prepare_scene(config)
    directory = out / "embeddings"
    for name, spectra in (("t1", prepared.train), ("t2", prepared.test)):
        features = embed_dataset(checkpoint, spectra.matrix, config.embed_batch_size)
        save_features(
            directory / f"epoch-{checkpoint.epoch}-{name}.npz",
            features,
            spectra.labels,
            spectra.crown_ids,
            spectra.coordinates,
        )
    print(f"embeddings written to {directory}")
    return 0


def cmd_fit_lda(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    """Fit LDA on T1 features; standardized reflectance when --features is omitted"""
    if args.features:
        features, labels = load_features(args.features)
    else:
        prepared = prepare_scene(config)
        standardizer = fit_standardizer(prepared.train)
        directory = out / "embeddings"
        for name, spectra in (("t1", prepared.train), ("t2", prepared.test)):
            save_features(
                directory / f"reflectance-{name}.npz",
                apply_standardizer(standardizer, spectra.matrix),
                spectra.labels,
                spectra.crown_ids,
                spectra.coordinates,
            )
        features, labels = load_features(directory / "reflectance-t1.npz")
    model = lda_fit(
        features,
        labels,
        shrinkage=config.classifier.shrinkage,
        covariance_normalization=config.classifier.covariance_normalization,
    )
    path = save_lda(model, out / "lda.npz")
    experiment_logger.log_artifact_written("lda", str(path))
    train_accuracy = mean_class_accuracy(labels, lda_predict(model, features))
    print(f"LDA written to {path}; train mean class accuracy {train_accuracy:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    """Score a saved LDA model on test features"""
    model = load_lda(args.model or out / "lda.npz")
    features, labels = load_features(args.features)
    predictions = lda_predict(model, features)
    result = {
        "features": str(args.features),
        "mean_class_accuracy": mean_class_accuracy(labels, predictions),
        "overall_accuracy": overall_accuracy(labels, predictions),
        "samples": int(labels.shape[0]),
    }
    _write_json(result, out / "eval.json")
    print(
        f"mean class accuracy {result['mean_class_accuracy']:.4f}, "
        f"overall accuracy {result['overall_accuracy']:.4f}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    """Run the experiment matrix and emit its report"""
    if args.seed is not None:
        config = config.model_copy(update={"seeds": [args.seed]})
    report = ExperimentService(config).run_matrix()
    paths = emit_report(report, out)
    failed = sum(cell.status == "failed" for cell in report.cells)
    print(
        f"{len(report.cells)} cells ({failed} failed), baseline test accuracy "
        f"{report.baseline.test_accuracy:.4f}; report in {paths['report'].parent}"
    )
    return 0


def cmd_report(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    """Re-render summary.csv and accuracy.svg from report.json"""
    source = Path(args.report) if args.report else out / REPORT_FILE
    paths = rerender_report(source, out)
    print(f"report re-rendered: {', '.join(str(p) for p in paths.values())}")
    return 0


COMMANDS: dict[str, tuple[Handler, str]] = {
    "gen": (cmd_gen, "generate a synthetic paired scene"),
    "pretrain": (cmd_pretrain, "pretrain one seed and write per-epoch checkpoints"),
    "embed": (cmd_embed, "embed labeled spectra with a checkpoint"),
    "fit-lda": (cmd_fit_lda, "fit LDA on first-date features"),
    "eval": (cmd_eval, "evaluate a saved LDA on second-date features"),
    "sweep": (cmd_sweep, "run the experiment matrix and write reports"),
    "report": (cmd_report, "re-render reports from report.json"),
}


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subparser per command"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Experiment config file (JSON)")
    common.add_argument("--seed", type=int, default=None, help="Seed")
    common.add_argument("--out", type=str, default=None, help="Output directory override")
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="Logging level",
    )

    parser = argparse.ArgumentParser(
        prog="speclab",
        description="Cross-date self-supervised hyperspectral species classification lab",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {get_version()}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        if name == "embed":
            sub.add_argument("--checkpoint", type=str, required=True, help="Checkpoint file")
        elif name == "fit-lda":
            sub.add_argument("--features", type=str, default=None, help="T1 features (.npz)")
        elif name == "eval":
            sub.add_argument("--features", type=str, required=True, help="T2 features (.npz)")
            sub.add_argument("--model", type=str, default=None, help="LDA model (.npz)")
        elif name == "report":
            sub.add_argument("--report", type=str, default=None, help="report.json to render")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse, dispatch, and map lab errors to exit code 1"""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(
        log_level=args.log_level or settings.log_level,
        log_file=settings.log_file,
        log_format=settings.log_format,
    )
    handler, _ = COMMANDS[args.command]
    try:
        config = _resolve_config(args)
        out = Path(config.output_dir)
        logger.info("Command started", command=args.command, config=args.config, seed=args.seed)
        return handler(args, config, out)
    except SpecLabError as e:
        error_handler.log_error(e, command=args.command)
        print(f"error: {e}", file=sys.stderr)
        return 1
