#!/usr/bin/env python3
"""
Classification Service - shrinkage LDA and accuracy metrics

Version: 1.0.0
Author: SpecLab Development Team
Description: Linear discriminant analysis with pooled, trace-shrunk
             covariance and empirical priors; macro and overall accuracy
License: [To be determined]
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import structlog
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.core.error_handling import (
    ClassCoverageError,
    ConfigurationError,
    CubeFormatError,
    ShapeMismatchError,
    SingularCovarianceError,
    error_handler,
)

logger = structlog.get_logger()

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class LDAModel:
    """Fitted discriminant: delta_c(x) = x . coef_c + intercept_c"""

    classes: np.ndarray
    means: np.ndarray
    covariance: np.ndarray
    log_priors: np.ndarray
    coef: np.ndarray
    intercept: np.ndarray

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    @property
    def priors(self) -> np.ndarray:
        return np.exp(self.log_priors)

    @classmethod
    def from_parameters(
        cls,
        classes: np.ndarray,
        means: np.ndarray,
        covariance: np.ndarray,
        priors: np.ndarray,
    ) -> "LDAModel":
        """
        Solve the linear coefficients for given means, covariance and priors.

        Priors are normalized to sum to 1.

        Raises:
            SingularCovarianceError: covariance not positive definite or
                too ill-conditioned to solve
        """
        classes = np.asarray(classes)
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        covariance = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
        priors = np.asarray(priors, dtype=np.float64)
        k, d = means.shape
        if classes.shape != (k,) or priors.shape != (k,) or covariance.shape != (d, d):
            raise ShapeMismatchError(
                "LDA parameters do not conform",
                details=[
                    {
                        "classes": list(classes.shape),
                        "means": [k, d],
                        "covariance": list(covariance.shape),
                        "priors": list(priors.shape),
                    }
                ],
            )
        if np.any(priors <= 0):
            raise ConfigurationError("LDA priors must be positive")
        priors = priors / priors.sum()

        condition = np.linalg.cond(covariance)
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise SingularCovarianceError(
                "Shrunk covariance is numerically singular",
                details=[{"condition_number": float(condition), "dimension": d}],
            )
        try:
            factor = cho_factor(covariance, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as e:
            raise SingularCovarianceError(
                "Shrunk covariance is not positive definite",
                details=[{"dimension": d, "error": str(e)}],
            ) from e
        coef = cho_solve(factor, means.T).T
        log_priors = np.log(priors)
        intercept = -0.5 * np.sum(means * coef, axis=1) + log_priors
        return cls(
            classes=classes,
            means=means,
            covariance=covariance,
            log_priors=log_priors,
            coef=coef,
            intercept=intercept,
        )


def lda_fit(
    x: np.ndarray,
    y: np.ndarray,
    shrinkage: float = 1e-3,
    covariance_normalization: Literal["unbiased", "mle"] = "unbiased",
    classes: np.ndarray | None = None,
) -> LDAModel:
    """
    Fit shrinkage LDA.

    Pooled within-class scatter is divided by n - K ("unbiased") or n
    ("mle"), then shrunk: (1 - a) S + a * tr(S) / D * I. Priors are the
    empirical class frequencies.

    Args:
        x: [n, D] features
        y: [n] labels
        shrinkage: a in [0, 1]
        covariance_normalization: Divisor of the pooled scatter
        classes: Classes the model must cover; defaults to the labels seen

    Raises:
        ClassCoverageError: A required class has no sample, or n <= K
        SingularCovarianceError: Covariance singular after shrinkage
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeMismatchError(
            "LDA expects X [n, D] and y [n]",
            details=[{"x": list(x.shape), "y": list(y.shape)}],
        )
    if not 0.0 <= shrinkage <= 1.0:
        raise ConfigurationError(
            "Shrinkage must lie in [0, 1]", details=[{"shrinkage": shrinkage}]
        )
    seen = np.unique(y)
    classes = seen if classes is None else np.unique(classes)
    missing = np.setdiff1d(classes, seen)
    unknown = np.setdiff1d(seen, classes)
    if missing.size or unknown.size:
        raise ClassCoverageError(
            "Training labels do not match the required classes",
            details=[{"missing_classes": missing.tolist(), "unknown_labels": unknown.tolist()}],
        )
    n, d = x.shape
    k = classes.shape[0]
    if k < 2 or n <= k:
        raise ClassCoverageError("LDA needs n > K >= 2", details=[{"n": n, "classes": k}])

    index = np.searchsorted(classes, y)
    counts = np.bincount(index, minlength=k).astype(np.float64)
    means = np.zeros((k, d))
    np.add.at(means, index, x)
    means /= counts[:, None]
    centered = x - means[index]
    divisor = n - k if covariance_normalization == "unbiased" else n
    covariance = centered.T @ centered / divisor
    if shrinkage > 0.0:
        covariance = (1.0 - shrinkage) * covariance + shrinkage * (
            np.trace(covariance) / d
        ) * np.eye(d)
    model = LDAModel.from_parameters(classes, means, covariance, counts / n)
    logger.debug("LDA fitted", n=n, features=d, classes=k, shrinkage=shrinkage)
    return model


def discriminant_scores(model: LDAModel, x: np.ndarray) -> np.ndarray:
    """[m, K] scores delta_c(x)"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ShapeMismatchError(
            "Feature width differs from LDA model",
            details=[{"shape": list(x.shape), "features": model.n_features}],
        )
    return x @ model.coef.T + model.intercept


def lda_predict(model: LDAModel, x: np.ndarray) -> np.ndarray:
    """Class of maximal score; ties go to the lowest class index"""
    return model.classes[np.argmax(discriminant_scores(model, x), axis=1)]


def mean_class_accuracy(
    y_true: np.ndarray, y_pred: np.ndarray, classes: np.ndarray | None = None
) -> float:
    """
    Unweighted mean over classes of within-class accuracy.

    Raises:
        ClassCoverageError: A class to score has no true sample
    """
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatchError(
            "Label vectors differ in length",
            details=[{"y_true": list(y_true.shape), "y_pred": list(y_pred.shape)}],
        )
    classes = np.unique(y_true) if classes is None else np.asarray(classes)
    if classes.size == 0:
        raise ClassCoverageError("No class to score")
    per_class = []
    for label in classes:
        members = y_true == label
        if not members.any():
            raise ClassCoverageError(
                "Class without true samples", details=[{"class": label.item()}]
            )
        per_class.append(np.mean(y_pred[members] == label))
    return float(np.mean(per_class))


def overall_accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Fraction of correct predictions"""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ShapeMismatchError(
            "Label vectors must be nonempty and equally long",
            details=[{"y_true": list(y_true.shape), "y_pred": list(y_pred.shape)}],
        )
    return float(np.mean(y_true == y_pred))


def save_lda(model: LDAModel, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            np.savez(
                handle,
                classes=model.classes,
                means=model.means,
                covariance=model.covariance,
                priors=model.priors,
            )
    except OSError as e:
        raise error_handler.wrap_io_error(e, path, "write") from e
    return path


def load_lda(path: str | Path) -> LDAModel:
    """Rebuild a saved model; coefficients are re-solved"""
    path = Path(path)
    try:
        with np.load(path) as archive:
            return LDAModel.from_parameters(
                archive["classes"], archive["means"], archive["covariance"], archive["priors"]
            )
    except (KeyError, ValueError, OSError) as e:
        raise CubeFormatError(
            "Unreadable LDA model file", details=[{"path": str(path), "error": str(e)}]
        ) from e
