"""Failure-rate and error metrics for support recovery."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySet
from .synth import GroundTruth

__all__ = ["TrialOutcome", "top_k_support", "is_failure", "failure_rate", "relative_mse"]


@dataclass(frozen=True)
class TrialOutcome:
    """Result of running one algorithm on one trial instance."""

    algorithm: str
    failed: bool
    iterations: int
    runtime: float
    mse: float

    def __post_init__(self):
        if not np.isfinite(self.mse):
            raise ValueError(f"mse must be finite, got {self.mse}")
        if self.runtime < 0.0:
            raise ValueError(f"runtime must be >= 0, got {self.runtime}")


def top_k_support(x_hat: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest row norms, ascending.

    Ties are broken in favor of the lower index, so an all-zero estimate
    yields ``{0, ..., k-1}``.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if not (1 <= k <= x_hat.shape[0]):
        raise ValueError(f"k must lie in [1, {x_hat.shape[0]}], got {k}")
    norms = np.linalg.norm(x_hat, axis=1)
    order = np.argsort(-norms, kind="stable")
    return np.sort(order[:k])


def is_failure(x_hat: np.ndarray, truth: GroundTruth) -> bool:
    """Whether the K largest estimated row norms miss the true support."""
    found = top_k_support(x_hat, truth.k)
    return not np.array_equal(found, truth.support)


def failure_rate(outcomes: Sequence[TrialOutcome]) -> float:
    """Fraction of failed trials. Raises ``EmptySet`` on an empty sequence."""
    if len(outcomes) == 0:
        raise EmptySet("failure_rate needs at least one outcome")
    return sum(o.failed for o in outcomes) / len(outcomes)


def relative_mse(x_hat: np.ndarray, x_gen: np.ndarray) -> float:
    """Squared recovery error ``||X_hat - X_gen||_F^2 / ||X_gen||_F^2``."""
    denom = float(np.linalg.norm(x_gen) ** 2)
    if denom == 0.0:
        return float(np.linalg.norm(x_hat) ** 2)
    return float(np.linalg.norm(np.asarray(x_hat) - x_gen) ** 2) / denom
