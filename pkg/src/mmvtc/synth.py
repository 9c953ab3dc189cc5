"""Deterministic generation of synthetic experiment instances.

Every generator is a pure function of its parameters and seed: the same
inputs reproduce bitwise-identical outputs. Trials in a sweep derive
non-overlapping streams from ``(base_seed, axis value, trial index)``, so
instances can be generated concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InvalidSpec
from .model import MMVProblem

__all__ = ["GroundTruth", "gen_dictionary", "gen_ar1_row", "gen_instance", "trial_seed"]

Seed = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class GroundTruth:
    """Generating sources of a synthetic instance.

    ``x_gen`` has exactly K nonzero rows of unit Euclidean norm at the
    strictly increasing indices in ``support``; ``betas[j]`` is the AR(1)
    coefficient used for the j-th support row. ``snr_db`` is ``None`` for
    noiseless instances.
    """

    x_gen: np.ndarray
    support: np.ndarray
    betas: np.ndarray
    snr_db: Optional[float] = None

    def __post_init__(self):
        x_gen = np.array(self.x_gen, dtype=float, copy=True)
        support = np.array(self.support, dtype=int, copy=True)
        betas = np.array(self.betas, dtype=float, copy=True)
        if x_gen.ndim != 2:
            raise ValueError(f"x_gen must be 2-d, got shape {x_gen.shape}")
        if support.ndim != 1 or betas.shape != support.shape:
            raise ValueError("support and betas must be 1-d arrays of equal length")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support indices must be strictly increasing")
        if support.size and (support[0] < 0 or support[-1] >= x_gen.shape[0]):
            raise ValueError("support indices out of range")
        norms = np.linalg.norm(x_gen, axis=1)
        if np.any(np.abs(norms[support] - 1.0) > 1e-12):
            raise ValueError("support rows must have unit norm")
        off = np.ones(x_gen.shape[0], dtype=bool)
        off[support] = False
        if np.any(x_gen[off] != 0.0):
            raise ValueError("rows off the support must be exactly zero")
        for name, arr in (("x_gen", x_gen), ("support", support), ("betas", betas)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.snr_db is not None:
            object.__setattr__(self, "snr_db", float(self.snr_db))

    @property
    def k(self) -> int:
        return int(self.support.size)


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_seed(base_seed: int, axis_value: float, trial_index: int) -> np.random.SeedSequence:
    """Derived, non-overlapping stream for one trial of a sweep cell."""
    value_bits = int(np.float64(axis_value).view(np.uint64))
    return np.random.SeedSequence(entropy=(int(base_seed), value_bits, int(trial_index)))


def _unit_columns(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    phi = rng.standard_normal((n, m))
    norms = np.linalg.norm(phi, axis=0)
    while np.any(norms == 0.0):  # probability zero, but keep the contract exact
        bad = norms == 0.0
        phi[:, bad] = rng.standard_normal((n, int(bad.sum())))
        norms = np.linalg.norm(phi, axis=0)
    return phi / norms


def gen_dictionary(n: int, m: int, seed: Seed) -> np.ndarray:
    """Matrix with columns drawn uniformly from the unit sphere in R^n.

    Columns are iid standard Gaussian vectors rescaled to unit norm;
    deterministic per seed.
    """
    if n < 1 or m < 1:
        raise InvalidSpec(f"dictionary dimensions must be >= 1, got n={n}, m={m}")
    return _unit_columns(_rng(seed), n, m)


def _ar1(rng: np.random.Generator, l: int, beta: float) -> np.ndarray:
    row = np.empty(l)
    row[0] = rng.standard_normal()
    scale = np.sqrt(1.0 - beta * beta)
    for t in range(1, l):
        row[t] = beta * row[t - 1] + scale * rng.standard_normal()
    return row


def gen_ar1_row(l: int, beta: float, seed: Seed) -> np.ndarray:
    """Unit-norm sample of a stationary unit-variance AR(1) process.

    ``s_1 ~ N(0,1)`` and ``s_t = beta s_{t-1} + sqrt(1 - beta^2) e_t`` with
    iid standard normal innovations, then the whole row is rescaled to unit
    Euclidean norm.
    """
    if not (0.0 <= beta < 1.0):
        raise InvalidSpec(f"beta must lie in [0, 1), got {beta}")
    if l < 1:
        raise InvalidSpec(f"l must be >= 1, got {l}")
    row = _ar1(_rng(seed), l, beta)
    return row / np.linalg.norm(row)


def gen_instance(
    n: int,
    m: int,
    l: int,
    k: int,
    beta_low: float,
    beta_high: float,
    snr_db: Optional[float],
    seed: Seed,
) -> tuple[MMVProblem, GroundTruth]:
    """One synthetic trial: dictionary, row-sparse sources and noisy data.

    The support is drawn uniformly without replacement and sorted; each
    support row gets its own AR(1) coefficient from
    ``U[beta_low, beta_high)`` and unit norm. Noise is iid Gaussian scaled
    exactly so that ``20 log10(||Phi X||_F / ||V||_F) = snr_db``;
    ``snr_db=None`` means noiseless (``V = 0`` and ``noise_level = 0``).
    The stored ``noise_level`` is the realized per-entry noise variance.
    """
    if n < 1 or m < 1 or l < 1:
        raise InvalidSpec(f"dimensions must be >= 1, got n={n}, m={m}, l={l}")
    if not (1 <= k <= min(n * l, m)):
        raise InvalidSpec(
            f"k must satisfy 1 <= k <= min(n*l, m) = {min(n * l, m)}, got {k}"
        )
    if not (0.0 <= beta_low <= beta_high <= 1.0):
        raise InvalidSpec(
            f"need 0 <= beta_low <= beta_high <= 1, got [{beta_low}, {beta_high})"
        )
    rng = _rng(seed)
    phi = _unit_columns(rng, n, m)
    support = np.sort(rng.choice(m, size=k, replace=False))
    # beta_high is the exclusive endpoint of the uniform draw; keep every
    # coefficient strictly below 1 so the AR(1) innovation variance is positive.
    betas = np.minimum(rng.uniform(beta_low, beta_high, size=k), np.nextafter(1.0, 0.0))
    x_gen = np.zeros((m, l))
    for idx, beta in zip(support, betas):
        row = _ar1(rng, l, beta)
        x_gen[idx] = row / np.linalg.norm(row)
    clean = phi @ x_gen
    if snr_db is None:
        problem = MMVProblem(phi, clean, noise_level=0.0)
        return problem, GroundTruth(x_gen, support, betas, None)
    noise = rng.standard_normal((n, l))
    scale = np.linalg.norm(clean) / (np.linalg.norm(noise) * 10.0 ** (snr_db / 20.0))
    noise = noise * scale
    problem = MMVProblem(phi, clean + noise, noise_level=float(np.mean(noise * noise)))
    return problem, GroundTruth(x_gen, support, betas, float(snr_db))
