"""Core value types shared by the solvers, the block-space oracle and the harness.

All types are immutable once constructed (arrays are copied and marked
read-only), so instances can be shared freely between concurrent workers.
Constructors validate their invariants and raise ``ValueError`` with a
diagnostic message on violation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "MMVProblem",
    "Hyperparameters",
    "SolverConfig",
    "RecoveryResult",
    "DEFAULT_CONFIG",
]


def _frozen_array(a, dtype=float, ndim=None, name="array") -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MMVProblem:
    """A multiple-measurement-vector inverse problem ``Y = Phi X + V``.

    Parameters
    ----------
    phi : (N, M) array
        Dictionary whose columns are candidate atoms. Every column must
        have nonzero Euclidean norm.
    y : (N, L) array
        Measurement matrix, one column per snapshot.
    noise_level : float, optional
        Noise variance per entry when it is known (treated as the fixed
        regularization weight by solvers in ``fixed`` mode). ``None``
        means unknown.
    """

    phi: np.ndarray
    y: np.ndarray
    noise_level: Optional[float] = None

    def __post_init__(self):
        phi = _frozen_array(self.phi, ndim=2, name="phi")
        y = _frozen_array(self.y, ndim=2, name="y")
        if phi.shape[0] < 1 or phi.shape[1] < 1:
            raise ValueError(f"phi must be at least 1x1, got {phi.shape}")
        if y.shape[0] != phi.shape[0]:
            raise ValueError(
                f"y has {y.shape[0]} rows but phi has {phi.shape[0]}"
            )
        if y.shape[1] < 1:
            raise ValueError("y must have at least one column")
        if not np.isfinite(phi).all():
            raise ValueError("phi contains non-finite entries")
        if not np.isfinite(y).all():
            raise ValueError("y contains non-finite entries")
        norms = np.linalg.norm(phi, axis=0)
        if np.any(norms == 0.0):
            bad = int(np.argmin(norms))
            raise ValueError(f"phi column {bad} has zero norm")
        if self.noise_level is not None:
            lv = float(self.noise_level)
            if not np.isfinite(lv) or lv < 0.0:
                raise ValueError(f"noise_level must be finite and >= 0, got {lv}")
            object.__setattr__(self, "noise_level", lv)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    @property
    def l(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class Hyperparameters:
    """Row-variance scales, snapshot correlation matrix and noise weight.

    ``gamma[i]`` is the nonnegative prior variance scale of row ``i``;
    an exact zero marks a pruned row. ``b`` is the shared L x L snapshot
    correlation matrix, symmetric positive definite with unit Frobenius
    norm. The diagonal row weighting used by the reweighted-l2 step is
    the elementwise reciprocal ``1 / gamma`` on unpruned rows.
    """

    gamma: np.ndarray
    b: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        gamma = _frozen_array(self.gamma, ndim=1, name="gamma")
        b = _frozen_array(self.b, ndim=2, name="b")
        if not np.isfinite(gamma).all() or np.any(gamma < 0.0):
            raise ValueError("gamma must be finite and componentwise >= 0")
        if b.shape[0] != b.shape[1]:
            raise ValueError(f"b must be square, got {b.shape}")
        if not np.isfinite(b).all():
            raise ValueError("b contains non-finite entries")
        if not np.array_equal(b, b.T):
            raise ValueError("b must be exactly symmetric")
        fro = float(np.linalg.norm(b))
        if abs(fro - 1.0) > 1e-12:
            raise ValueError(f"b must have unit Frobenius norm, got {fro!r}")
        if np.linalg.eigvalsh(b)[0] <= 0.0:
            raise ValueError("b must be positive definite")
        lam = float(self.lam)
        if not np.isfinite(lam) or lam < 0.0:
            raise ValueError(f"lam must be finite and >= 0, got {lam}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for all iterative solvers.

    Attributes
    ----------
    max_iter : int
        Cap on the total number of x-updates in a solve.
    tol : float
        Relative Frobenius-norm change of the estimate below which the
        iteration stops.
    prune_threshold : float
        A row is pruned when its variance scale falls below this fraction
        of the current largest one.
    p : float
        Exponent in [0, 2] for the FOCUSS-family weight rules.
    epsilon_initial, epsilon_floor, epsilon_factor : float
        Schedule of the smoothing constant for the epsilon-regularized
        solvers: start value, final value and per-stage divisor.
    b_ridge : float
        Diagonal loading added to the correlation matrix estimate before
        normalization; keeps it invertible when few rows are active.
    lambda_mode : str
        "fixed" keeps the regularization weight at its initial value,
        "learned" re-estimates it every iteration.
    lambda_freeze_after : int, optional
        In learned mode, stop re-estimating after this many iterations
        (None keeps the rule active for the whole run).
    learn_b : bool
        When False the correlation matrix stays pinned to the identity,
        which reduces the temporal solvers to their plain counterparts.
    """

    max_iter: int = 500
    tol: float = 1e-6
    prune_threshold: float = 1e-10
    p: float = 0.8
    epsilon_initial: float = 1.0
    epsilon_floor: float = 1e-8
    epsilon_factor: float = 10.0
    b_ridge: float = 1e-4
    lambda_mode: str = "fixed"
    lambda_freeze_after: Optional[int] = None
    learn_b: bool = True

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (self.tol > 0.0):
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if not (self.prune_threshold > 0.0):
            raise ValueError(f"prune_threshold must be > 0, got {self.prune_threshold}")
        if not (0.0 <= self.p <= 2.0):
            raise ValueError(f"p must lie in [0, 2], got {self.p}")
        if not (self.epsilon_initial > 0.0 and self.epsilon_floor > 0.0):
            raise ValueError("epsilon_initial and epsilon_floor must be > 0")
        if not (self.epsilon_floor < self.epsilon_initial):
            raise ValueError(
                f"epsilon_floor ({self.epsilon_floor}) must be below "
                f"epsilon_initial ({self.epsilon_initial})"
            )
        if not (self.epsilon_factor > 1.0):
            raise ValueError(f"epsilon_factor must be > 1, got {self.epsilon_factor}")
        if not (self.b_ridge > 0.0):
            raise ValueError(f"b_ridge must be > 0, got {self.b_ridge}")
        if self.lambda_mode not in ("fixed", "learned"):
            raise ValueError(
                f"lambda_mode must be 'fixed' or 'learned', got {self.lambda_mode!r}"
            )
        if self.lambda_freeze_after is not None and int(self.lambda_freeze_after) < 0:
            raise ValueError("lambda_freeze_after must be >= 0 or None")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class RecoveryResult:
    """Output of a solver run.

    ``x_hat`` rows whose ``hyper.gamma`` entry is exactly zero are exactly
    zero. ``objective_trace`` holds one solver-specific surrogate objective
    value per x-update (see each solver's docstring for the formula used).
    """

    x_hat: np.ndarray
    hyper: Hyperparameters
    iterations: int
    converged: bool
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        x_hat = _frozen_array(self.x_hat, ndim=2, name="x_hat")
        trace = _frozen_array(self.objective_trace, ndim=1, name="objective_trace")
        if not np.isfinite(x_hat).all():
            raise ValueError("x_hat contains non-finite entries")
        if x_hat.shape[0] != self.hyper.gamma.shape[0]:
            raise ValueError(
                f"x_hat has {x_hat.shape[0]} rows but gamma has "
                f"{self.hyper.gamma.shape[0]} entries"
            )
        dead = self.hyper.gamma == 0.0
        if np.any(x_hat[dead] != 0.0):
            raise ValueError("rows with gamma == 0 must be exactly zero")
        if int(self.iterations) < 0:
            raise ValueError("iterations must be >= 0")
        object.__setattr__(self, "x_hat", x_hat)
        object.__setattr__(self, "objective_trace", trace)
        object.__setattr__(self, "iterations", int(self.iterations))
        object.__setattr__(self, "converged", bool(self.converged))
