#!/usr/bin/env python3
"""
SpecLab Logging Configuration Module

Version: 1.0.0
Author: SpecLab Development Team
Description: Structured logging configuration for the lab
License: [To be determined]

ToDo List:
- [x] Create logging configuration
- [x] Add log level filtering
- [x] Add experiment event logging
- [x] Add console and file handlers
- [ ] Add log rotation for long sweeps

Progress: 80% (4/5 tasks completed)
"""

import logging
import sys
from pathlib import Path
from typing import Any

import structlog
from structlog.processors import (
    JSONRenderer,
    StackInfoRenderer,
    TimeStamper,
    UnicodeDecoder,
    format_exc_info,
)
from structlog.stdlib import LoggerFactory


class LoggingConfig:
    """Logging configuration manager"""

    def __init__(self, log_format: str = "console"):
        """Initialize logging configuration"""
        self.log_format = log_format
        self.logger: structlog.stdlib.BoundLogger | None = None
        self._setup_logging()

    def _processors(self) -> list[Any]:
        renderer = (
            JSONRenderer()
            if self.log_format == "json"
            else structlog.dev.ConsoleRenderer(colors=False)
        )
        return [
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            TimeStamper(fmt="iso"),
            StackInfoRenderer(),
            format_exc_info,
            UnicodeDecoder(),
            renderer,
        ]

    def _setup_logging(self):
        """Setup structured logging configuration"""
        structlog.configure(
            processors=self._processors(),
            context_class=dict,
            logger_factory=LoggerFactory(),
            wrapper_class=structlog.stdlib.BoundLogger,
            cache_logger_on_first_use=False,
        )
        self.logger = structlog.get_logger("speclab")

    def set_log_format(self, log_format: str):
        """Switch between JSON and console rendering"""
        self.log_format = log_format
        self._setup_logging()

    def set_log_level(self, level: str):
        """Set logging level for all loggers"""
        numeric_level = getattr(logging, level.upper(), logging.INFO)
        logging.getLogger().setLevel(numeric_level)
        if self.logger is not None:
            self.logger.debug(
                "Log level updated", level=level, numeric_level=numeric_level
            )

    def get_logger(self, name: str | None = None) -> structlog.stdlib.BoundLogger:
        """Get structured logger"""
        if name:
            return structlog.get_logger(name)
        if self.logger is None:
            return structlog.get_logger("speclab")
        return self.logger

    def setup_file_logging(self, log_file: str, log_level: str = "INFO"):
        """Setup file logging"""
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(getattr(logging, log_level.upper()))
        logging.getLogger().addHandler(file_handler)

    def setup_console_logging(self, log_level: str = "INFO"):
        """Setup console logging on stderr so stdout stays for results"""
        root = logging.getLogger()
        for handler in list(root.handlers):
            if getattr(handler, "_speclab_console", False):
                root.removeHandler(handler)
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(getattr(logging, log_level.upper()))
        console_handler._speclab_console = True  # type: ignore[attr-defined]
        root.addHandler(console_handler)


class ExperimentLogger:
    """Training and evaluation event logging with a stable key schema"""

    def __init__(self, logger: structlog.stdlib.BoundLogger):
        """Initialize experiment logger"""
        self.logger = logger

    def log_epoch(
        self,
        seed: int,
        epoch: int,
        loss: float,
        n_batches: int,
        details: dict[str, Any] | None = None,
    ):
        """Log the end of one pretraining epoch"""
        self.logger.info(
            "Epoch completed",
            seed=seed,
            epoch=epoch,
            loss=loss,
            n_batches=n_batches,
            details=details or {},
            category="training",
        )

    def log_checkpoint_evaluation(
        self,
        seed: int,
        epoch: int,
        train_accuracy: float,
        test_accuracy: float,
    ):
        """Log the downstream evaluation of one checkpoint"""
        self.logger.info(
            "Checkpoint evaluated",
            seed=seed,
            epoch=epoch,
            train_accuracy=train_accuracy,
            test_accuracy=test_accuracy,
            category="evaluation",
        )

    def log_cell_result(
        self,
        strategy: str,
        augmentation: str,
        status: str,
        mean: float | None,
        std: float | None,
        error: str | None = None,
    ):
        """Log the aggregate result of one matrix cell"""
        log = self.logger.info if status == "ok" else self.logger.warning
        log(
            "Cell completed",
            strategy=strategy,
            augmentation=augmentation,
            status=status,
            mean=mean,
            std=std,
            error=error,
            category="evaluation",
        )

    def log_artifact_written(self, kind: str, path: str):
        """Log a written artifact"""
        self.logger.info("Artifact written", kind=kind, path=path, category="io")


# Global logging configuration
logging_config = LoggingConfig()

# Get main logger
logger = logging_config.get_logger()

# Create specialized loggers
experiment_logger = ExperimentLogger(logger)


def setup_logging(
    log_level: str = "INFO",
    log_file: str | None = None,
    log_format: str = "console",
):
    """Setup logging configuration"""
    logging_config.set_log_format(log_format)
    logging_config.setup_console_logging(log_level)
    if log_file:
        logging_config.setup_file_logging(log_file, log_level)
    logging_config.set_log_level(log_level)

    logger.debug("Logging system initialized", log_level=log_level, log_file=log_file)


def get_logger(name: str | None = None) -> structlog.stdlib.BoundLogger:
    """Get logger instance"""
    return logging_config.get_logger(name)


__all__ = [
    "logger",
    "experiment_logger",
    "setup_logging",
    "get_logger",
]
