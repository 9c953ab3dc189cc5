"""Exact block-space solver used as a correctness oracle.

The MMV model is lifted to a single-vector block-sparse model
``y = D x + v`` with ``D = Phi (x) I_L``, ``y = vec(Y^T)`` and
``x = vec(X^T)``, whose i-th length-L block is the i-th row of X. The prior
covariance of block i is ``gamma_i * b``, giving the block-diagonal
``Sigma0``. The updates below work with the full NL x NL algebra and exist
for verification, not speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite
from .linalg import mahalanobis_rows, spd_logdet, spd_solve
from .model import Hyperparameters, MMVProblem, RecoveryResult, SolverConfig
from .solvers import _initial_lambda, _rel_change

__all__ = [
    "BlockModel",
    "build_block_model",
    "exact_x_update",
    "exact_z_update",
    "exact_gamma_update",
    "exact_b_update",
    "solve_exact",
]


@dataclass(frozen=True)
class BlockModel:
    """Vectorized block-sparse view of an MMV problem.

    ``d`` is the NL x ML lifted dictionary, ``sigma0`` the ML x ML
    block-diagonal prior covariance with i-th block ``gamma[i] * b``,
    ``y_vec`` the row-major vectorization of the measurements and ``x_vec``
    a source vector in the same layout (zeros until estimated). ``gamma``
    and ``b`` are kept alongside ``sigma0`` because the closed-form updates
    need the factorization, not just the product.
    """

    d: np.ndarray
    sigma0: np.ndarray
    y_vec: np.ndarray
    x_vec: np.ndarray
    gamma: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("d", "sigma0", "y_vec", "x_vec", "gamma", "b"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        l = self.b.shape[0]
        m = self.gamma.shape[0]
        if self.d.shape != (self.y_vec.shape[0], m * l):
            raise ValueError(
                f"d has shape {self.d.shape}, expected "
                f"({self.y_vec.shape[0]}, {m * l})"
            )
        if self.sigma0.shape != (m * l, m * l):
            raise ValueError(f"sigma0 has shape {self.sigma0.shape}, expected {(m * l, m * l)}")
        if self.x_vec.shape != (m * l,):
            raise ValueError(f"x_vec has shape {self.x_vec.shape}, expected {(m * l,)}")

    @property
    def l(self) -> int:
        return self.b.shape[0]

    @property
    def m(self) -> int:
        return self.gamma.shape[0]

    @property
    def n(self) -> int:
        return self.y_vec.shape[0] // self.l

    def x_matrix(self) -> np.ndarray:
        """Reshape ``x_vec`` back to the M x L source matrix (exact round trip)."""
        return self.x_vec.reshape(self.m, self.l)


def _make_block_model(phi, y, gamma, b, x_vec=None) -> BlockModel:
    l = y.shape[1]
    d = np.kron(phi, np.eye(l))
    sigma0 = np.kron(np.diag(gamma), b)
    if x_vec is None:
        x_vec = np.zeros(phi.shape[1] * l)
    return BlockModel(d, sigma0, y.reshape(-1), x_vec, gamma, b)


def build_block_model(problem: MMVProblem, hyper: Hyperparameters) -> BlockModel:
    """Lift a problem and hyperparameters into the block-space model."""
    if hyper.gamma.shape[0] != problem.m:
        raise ValueError(
            f"gamma has {hyper.gamma.shape[0]} entries but the problem has "
            f"{problem.m} dictionary columns"
        )
    if hyper.b.shape[0] != problem.l:
        raise ValueError(
            f"b is {hyper.b.shape[0]}x{hyper.b.shape[0]} but the problem has "
            f"{problem.l} snapshots"
        )
    return _make_block_model(problem.phi, problem.y, hyper.gamma, hyper.b)


def _system_matrix(model: BlockModel, lam: float) -> np.ndarray:
    s = model.d @ model.sigma0 @ model.d.T
    s[np.diag_indices_from(s)] += lam
    return s


def exact_x_update(model: BlockModel, lam: float) -> np.ndarray:
    """Posterior-mean source estimate ``Sigma0 D^T (lam I + D Sigma0 D^T)^{-1} y``.

    Blocks with ``gamma = 0`` come out exactly zero. With ``lam = 0`` and
    enough active blocks the NL x NL system must be invertible; once
    pruning leaves fewer active unknowns than measurements the fit is
    overdetermined and the unique least-squares interpolant is returned.

    Raises
    ------
    SingularSystem
        If the system matrix on the chosen route is numerically singular.
    """
    active = model.gamma > 0.0
    if lam == 0.0 and int(active.sum()) * model.l < model.y_vec.shape[0]:
        cols = np.repeat(active, model.l)
        d_a = model.d[:, cols]
        x = np.zeros(model.m * model.l)
        x[cols] = spd_solve(d_a.T @ d_a, d_a.T @ model.y_vec)
        return x
    s = _system_matrix(model, lam)
    return model.sigma0 @ (model.d.T @ spd_solve(s, model.y_vec))


def exact_z_update(model: BlockModel, lam: float) -> np.ndarray:
    """Per-block posterior-variance mass in the whitened metric.

    ``z_i = L gamma_i - gamma_i^2 tr[b D_i^T (lam I + D Sigma0 D^T)^{-1} D_i]``
    where ``D_i`` holds columns (i-1)L+1 .. iL of ``D``. Equals the gradient
    of ``log|(1/lam) D^T D + Sigma0^{-1}|`` with respect to ``1/gamma_i``.
    Componentwise nonnegative up to roundoff; tiny negatives are clamped to
    zero. With ``lam = 0`` and fewer active unknowns than measurements the
    posterior collapses and the limit is exactly zero.
    """
    l, m = model.l, model.m
    active = model.gamma > 0.0
    if lam == 0.0 and int(active.sum()) * l < model.y_vec.shape[0]:
        return np.zeros(m)
    s = _system_matrix(model, lam)
    sd = spd_solve(s, model.d)
    z = np.zeros(m)
    for i in np.flatnonzero(model.gamma > 0.0):
        cols = slice(i * l, (i + 1) * l)
        tr = float(np.trace(model.b @ model.d[:, cols].T @ sd[:, cols]))
        z[i] = l * model.gamma[i] - model.gamma[i] ** 2 * tr
    return np.maximum(z, 0.0)


def exact_gamma_update(
    model: BlockModel, x_vec: np.ndarray, z: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """Closed-form variance-scale update ``gamma_i = (x_i b^{-1} x_i^T + z_i) / L``."""
    l = model.l
    rows = np.asarray(x_vec, dtype=float).reshape(model.m, l)
    return (mahalanobis_rows(rows, b) + np.asarray(z, dtype=float)) / l


def exact_b_update(x_vec: np.ndarray, gamma: np.ndarray, ridge: float) -> np.ndarray:
    """Correlation-matrix update from block outer products.

    ``sum_i x_i x_i^T / gamma_i`` over blocks with ``gamma_i > 0``, plus a
    ridge, rescaled to unit Frobenius norm. Same ridge policy as
    ``solvers.update_b`` (the raw scatter has rank at most the number of
    active blocks).
    """
    if not (ridge > 0.0):
        raise ValueError(f"ridge must be > 0, got {ridge}")
    gamma = np.asarray(gamma, dtype=float)
    active = gamma > 0.0
    if not active.any():
        raise ValueError("exact_b_update requires at least one active block")
    m = gamma.shape[0]
    l = np.asarray(x_vec).shape[0] // m
    rows = np.asarray(x_vec, dtype=float).reshape(m, l)[active]
    bbar = (rows.T / gamma[active]) @ rows
    bbar[np.diag_indices_from(bbar)] += ridge
    bbar = 0.5 * (bbar + bbar.T)
    return bbar / np.linalg.norm(bbar)


def _cycle_objective(model: BlockModel, x_vec: np.ndarray, lam: float) -> float:
    """Marginal-likelihood bound with the dual variable eliminated.

    ``log|lam I + D Sigma0 D^T| + (1/lam) ||y - D x||^2 + x^T Sigma0^{-1} x``
    restricted to active blocks; additive constants that do not depend on
    the iterates are dropped. Falls back to the squared residual when
    ``lam = 0``.
    """
    resid = float(np.linalg.norm(model.y_vec - model.d @ x_vec) ** 2)
    if lam <= 0.0:
        return resid
    logdet = spd_logdet(_system_matrix(model, lam))
    l = model.l
    rows = np.asarray(x_vec).reshape(model.m, l)
    active = model.gamma > 0.0
    pen = 0.0
    if active.any():
        pen = float(
            np.sum(mahalanobis_rows(rows[active], model.b) / model.gamma[active])
        )
    return logdet + resid / lam + pen


def solve_exact(problem: MMVProblem, config: SolverConfig = SolverConfig()) -> RecoveryResult:
    """Coordinate-wise exact solver in the lifted block space.

    Cycles ``exact_x_update`` -> ``exact_z_update`` -> ``exact_gamma_update``
    -> ``exact_b_update`` from unit scales and an identity correlation
    matrix, with the noise weight held fixed at its initial value. Records
    the dual-eliminated marginal-likelihood bound once per cycle (the
    squared residual when ``lam = 0``). Dense NL x NL algebra throughout;
    intended for verification on small instances.

    Raises
    ------
    SingularSystem, NonFinite
        As for the iterative solvers.
    """
    phi, y = problem.phi, problem.y
    m, l = problem.m, problem.l
    lam = _initial_lambda(problem)
    gamma = np.ones(m)
    b = np.eye(l)
    x = np.zeros(m * l)
    trace = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        model = _make_block_model(phi, y, gamma, b, x)
        x_new = exact_x_update(model, lam)
        if not np.isfinite(x_new).all():
            raise NonFinite(f"estimate contains NaN/Inf at cycle {it}")
        rel = _rel_change(x_new.reshape(m, l), x.reshape(m, l))
        x = x_new
        trace.append(_cycle_objective(model, x, lam))
        if rel < config.tol:
            converged = True
            break
        z = exact_z_update(model, lam)
        gamma_new = exact_gamma_update(model, x, z, b)
        gmax = gamma_new.max()
        keep = gamma_new > config.prune_threshold * gmax if gmax > 0 else np.zeros(m, bool)
        gamma = np.where(keep, gamma_new, 0.0)
        x = np.where(np.repeat(gamma > 0.0, l), x, 0.0)
        if config.learn_b and (gamma > 0).any():
            b = exact_b_update(x, gamma, config.b_ridge)
    x_mat = x.reshape(m, l)
    fro = float(np.linalg.norm(b))
    hyper = Hyperparameters(gamma * fro, b / fro, lam)
    return RecoveryResult(x_mat, hyper, it, converged, np.asarray(trace))
