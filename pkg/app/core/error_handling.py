#!/usr/bin/env python3
"""
SpecLab Error Handling - Standardized Errors

Version: 1.0.0
Author: SpecLab Development Team
Description: Exception hierarchy and standardized error rendering for the lab
License: [To be determined]

ToDo List:
- [x] Create exception hierarchy with error codes
- [x] Add standardized error rendering
- [x] Add logging integration
- [x] Wrap I/O errors with offending paths
- [ ] Map error codes to distinct CLI exit codes

Progress: 80% (4/5 tasks completed)
"""

import datetime
from pathlib import Path
from typing import Any

import structlog

logger = structlog.get_logger()


class SpecLabError(Exception):
    """Base class for every error raised by the lab."""

    error_code = "SPECLAB_ERROR"
    severity = "error"

    def __init__(
        self,
        message: str,
        details: list[dict[str, Any]] | None = None,
        error_code: str | None = None,
    ):
        super().__init__(message)
        self.message = message
        self.details = details or []
        if error_code is not None:
            self.error_code = error_code

    def __str__(self) -> str:
        if not self.details:
            return self.message
        rendered = "; ".join(
            ", ".join(f"{key}={value}" for key, value in detail.items())
            for detail in self.details
        )
        return f"{self.message} ({rendered})"


class ShapeMismatchError(SpecLabError):
    """Operand shapes do not conform"""

    error_code = "SHAPE_MISMATCH"


class RecordingError(SpecLabError):
    """Differentiation requested outside a valid recording"""

    error_code = "RECORDING_ERROR"


class MissingGradientError(SpecLabError):
    """Optimizer step on a parameter without gradient"""

    error_code = "MISSING_GRADIENT"


class CubeFormatError(SpecLabError):
    """Malformed cube or checkpoint file"""

    error_code = "CUBE_FORMAT"


class TruncatedPayloadError(CubeFormatError):
    """File shorter than its header claims"""

    error_code = "TRUNCATED_PAYLOAD"


class DimensionOverflowError(CubeFormatError):
    """Header dimensions exceed supported limits"""

    error_code = "DIMENSION_OVERFLOW"


class GroundTruthError(SpecLabError):
    """No usable labeled pixels"""

    error_code = "NO_GROUND_TRUTH"


class ConfigurationError(SpecLabError):
    """Invalid configuration or incompatible parameters"""

    error_code = "CONFIGURATION_ERROR"


class PlacementError(SpecLabError):
    """Crowns could not be placed disjointly"""

    error_code = "PLACEMENT_FAILED"


class SeparationError(SpecLabError):
    """Species library separation not reachable"""

    error_code = "SEPARATION_FAILED"


class InvalidCoordinateError(SpecLabError):
    """Pixel coordinate out of bounds or masked"""

    error_code = "INVALID_COORDINATE"


class SingularCovarianceError(SpecLabError):
    """Shrunk covariance is not positive definite"""

    error_code = "SINGULAR_COVARIANCE"


class ClassCoverageError(SpecLabError):
    """A class has no samples, or too few samples overall"""

    error_code = "CLASS_COVERAGE"


class ReportWriteError(SpecLabError):
    """Output artifact could not be written"""

    error_code = "REPORT_IO"


class LabErrorHandler:
    """
    Standardized error renderer.

    Produces the same response layout for every failure so that CLI output,
    failed matrix cells and logs can be compared field by field.
    """

    @staticmethod
    def create_error_response(
        error: BaseException,
        severity: str | None = None,
    ) -> dict[str, Any]:
        """
        Render an exception as a standardized error dictionary.

        Args:
            error: Exception to render
            severity: Override for the error's own severity

        Returns:
            Dictionary with message, error_code, details, timestamp and severity
        """
        if isinstance(error, SpecLabError):
            message = error.message
            error_code = error.error_code
            details = list(error.details)
            default_severity = error.severity
        else:
            message = str(error) or type(error).__name__
            error_code = "INTERNAL_ERROR"
            details = [{"exception": type(error).__name__}]
            default_severity = "error"

        return {
            "message": message,
            "error_code": error_code,
            "details": details,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "severity": severity or default_severity,
        }

    @staticmethod
    def log_error(error: BaseException, **context: Any) -> dict[str, Any]:
        """Log an exception in standardized form and return the rendered response"""
        response = LabErrorHandler.create_error_response(error)
        logger.error(
            "Operation failed",
            error_code=response["error_code"],
            message=response["message"],
            details=response["details"],
            **context,
        )
        return response

    @staticmethod
    def wrap_io_error(error: OSError, path: Path | str, action: str) -> ReportWriteError:
        """Wrap an OSError into a ReportWriteError naming the path"""
        return ReportWriteError(
            f"Failed to {action} {path}",
            details=[{"path": str(path), "error": str(error)}],
        )


# Global error handler instance
error_handler = LabErrorHandler()
