"""Reweighted-l2 solvers for row-sparse MMV recovery.

All solvers alternate one shared weighted ridge step with a weight rule:

* ``solve_resbl_qm``   - sparse-Bayesian weights from a Mahalanobis quadratic
  plus a posterior-variance correction, with a learned snapshot correlation
  matrix and an optional noise-weight learning rule.
* ``solve_mfocuss`` / ``solve_tmfocuss``   - power-law weights of the row
  energy, respectively of the correlation-whitened row energy.
* ``solve_iter_l2`` / ``solve_titer_l2``   - the same power-law weights
  smoothed by a constant ``epsilon`` that shrinks stage by stage.

Every solver starts from unit variance scales, an identity correlation
matrix and the problem's noise level (falling back to 1e-2 times the mean
per-snapshot variance of the data), and stops when the relative Frobenius
change of the estimate drops below ``config.tol`` or after
``config.max_iter`` x-updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite
from .linalg import mahalanobis_rows, spd_solve
from .model import Hyperparameters, MMVProblem, RecoveryResult, SolverConfig

__all__ = [
    "WeightVector",
    "reweighted_l2_step",
    "mahalanobis_row",
    "update_b",
    "update_weights_resbl",
    "update_lambda",
    "solve_resbl_qm",
    "solve_mfocuss",
    "solve_tmfocuss",
    "solve_iter_l2",
    "solve_titer_l2",
    "LAMBDA_FLOOR",
]

#: Lower clamp for the learned noise weight; the learning rule's fixed point
#: at zero residual is zero, which would destabilize the weight update.
LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Per-row penalty weights plus the pruned-row mask.

    ``w[i]`` is the ridge weight of row ``i`` (the diagonal of the weighting
    matrix in the x-step is ``1 / w``). Pruned rows carry ``w = inf`` and are
    excluded from the active subproblem; their variance scale ``gamma`` is
    exactly zero.
    """

    w: np.ndarray
    pruned: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float, copy=True)
        pruned = np.array(self.pruned, dtype=bool, copy=True)
        if w.ndim != 1 or pruned.shape != w.shape:
            raise ValueError("w and pruned must be 1-d arrays of equal length")
        active = ~pruned
        if np.any(~np.isfinite(w[active])) or np.any(w[active] <= 0.0):
            raise ValueError("w must be positive and finite on unpruned rows")
        w.setflags(write=False)
        pruned.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "pruned", pruned)

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        return cls(np.ones(m), np.zeros(m, dtype=bool))

    @classmethod
    def from_gamma(cls, gamma: np.ndarray) -> "WeightVector":
        """Build weights from variance scales; ``gamma <= 0`` marks pruned rows."""
        gamma = np.asarray(gamma, dtype=float)
        pruned = gamma <= 0.0
        w = np.where(pruned, np.inf, 1.0 / np.where(pruned, 1.0, gamma))
        return cls(w, pruned)

    @property
    def gamma(self) -> np.ndarray:
        """Variance scales ``1 / w`` with exact zeros on pruned rows."""
        return np.where(self.pruned, 0.0, 1.0 / self.w)

    @property
    def active(self) -> np.ndarray:
        return ~self.pruned


def reweighted_l2_step(
    problem: MMVProblem, weights: WeightVector, lam: float
) -> np.ndarray:
    """One weighted ridge solve of the data-fit objective.

    Returns the unique minimizer over active rows of

        ``|| Y - Phi X ||_F^2 + lam * sum_i w_i || X_i ||_2^2``

    computed in the dual N x N form ``X = W Phi^T (lam I + Phi W Phi^T)^{-1} Y``
    with ``W = diag(1 / w)``. Pruned rows of the output are exactly zero.
    With ``lam = 0`` and at least as many active rows as measurements the
    active-row system must be invertible; with fewer active rows than
    measurements the fit is overdetermined and the step returns its unique
    least-squares solution, on which the weights have no influence.

    Raises
    ------
    SingularSystem
        If the system matrix on the chosen route is numerically singular.
    """
    if lam < 0.0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    phi, y = problem.phi, problem.y
    x = np.zeros((problem.m, problem.l))
    active = weights.active
    if not active.any():
        return x
    phi_a = phi[:, active]
    if lam == 0.0 and phi_a.shape[1] < phi_a.shape[0]:
        gram = phi_a.T @ phi_a
        x[active] = spd_solve(gram, phi_a.T @ y)
        return x
    gamma_a = 1.0 / weights.w[active]
    s = (phi_a * gamma_a) @ phi_a.T
    s[np.diag_indices_from(s)] += lam
    x[active] = gamma_a[:, None] * (phi_a.T @ spd_solve(s, y))
    return x


def mahalanobis_row(x_row: np.ndarray, b: np.ndarray) -> float:
    """Quadratic Mahalanobis length ``x b^{-1} x^T`` of a single row.

    Nonnegative, and zero exactly when ``x_row`` is zero.

    Raises
    ------
    NotPositiveDefinite
        If ``b`` is not symmetric positive definite.
    """
    x_row = np.asarray(x_row, dtype=float)
    if x_row.ndim != 1:
        raise ValueError(f"x_row must be 1-d, got shape {x_row.shape}")
    return float(mahalanobis_rows(x_row[None, :], b)[0])


def update_b(x_hat: np.ndarray, weights: WeightVector, ridge: float) -> np.ndarray:
    """Re-estimate the shared snapshot correlation matrix.

    Computes the weighted scatter of the active rows,
    ``sum_i w_i X_i^T X_i + ridge * I``, and rescales it to unit Frobenius
    norm. The ridge keeps the estimate invertible when the scatter is rank
    deficient (fewer active rows than snapshots).
    """
    if not (ridge > 0.0):
        raise ValueError(f"ridge must be > 0, got {ridge}")
    active = weights.active
    if not active.any():
        raise ValueError("update_b requires at least one active row")
    x_a = x_hat[active]
    bbar = (x_a.T * weights.w[active]) @ x_a
    bbar[np.diag_indices_from(bbar)] += ridge
    bbar = 0.5 * (bbar + bbar.T)
    return bbar / np.linalg.norm(bbar)


def update_weights_resbl(
    x_hat: np.ndarray,
    weights: WeightVector,
    b: np.ndarray,
    problem: MMVProblem,
    lam: float,
    prune_threshold: float = 1e-10,
) -> WeightVector:
    """Sparse-Bayesian weight update with snapshot-correlation whitening.

    The new variance scale of an active row is

        ``gamma_i = (1/L) X_i b^{-1} X_i^T + gamma_i (1 - gamma_i q_i)``

    where ``q_i = phi_i^T (lam I + Phi W Phi^T)^{-1} phi_i``; the second
    term is the i-th diagonal of ``(W^{-1} + (1/lam) Phi^T Phi)^{-1}``
    evaluated through its N x N dual form, which stays well defined as
    ``lam`` approaches zero. With ``lam = 0`` and fewer active rows than
    measurements the posterior collapses and the correction is exactly
    zero. Rows whose updated scale falls below ``prune_threshold`` times
    the largest one are pruned, and pruned rows stay pruned.

    Raises
    ------
    SingularSystem
        If the N x N system matrix is numerically singular.
    """
    phi = problem.phi
    l = problem.l
    m = problem.m
    gamma_new = np.zeros(m)
    active = weights.active
    if active.any():
        phi_a = phi[:, active]
        gamma_a = 1.0 / weights.w[active]
        if lam == 0.0 and phi_a.shape[1] < phi_a.shape[0]:
            posterior = 0.0
        else:
            s = (phi_a * gamma_a) @ phi_a.T
            s[np.diag_indices_from(s)] += lam
            quad = np.einsum("ij,ij->j", phi_a, spd_solve(s, phi_a))
            posterior = np.maximum(gamma_a * (1.0 - gamma_a * quad), 0.0)
        mah = mahalanobis_rows(x_hat[active], b)
        gamma_new[active] = mah / l + posterior
    gmax = gamma_new.max()
    keep = gamma_new > prune_threshold * gmax if gmax > 0.0 else np.zeros(m, bool)
    gamma_new[~keep] = 0.0
    return WeightVector.from_gamma(gamma_new)


def update_lambda(
    problem: MMVProblem,
    x_hat: np.ndarray,
    weights: WeightVector,
    lam: float,
) -> float:
    """One step of the noise-weight learning rule.

    Returns ``||Y - Phi X||_F^2 / (N L) + (lam / N) tr[G (lam I + G)^{-1}]``
    with ``G = Phi W Phi^T`` over active rows, clamped below by
    ``LAMBDA_FLOOR``.
    """
    phi, y = problem.phi, problem.y
    n, l = problem.n, problem.l
    resid = float(np.linalg.norm(y - phi @ x_hat) ** 2)
    term = resid / (n * l)
    active = weights.active
    if lam > 0.0 and active.any():
        phi_a = phi[:, active]
        gamma_a = 1.0 / weights.w[active]
        s = (phi_a * gamma_a) @ phi_a.T
        s[np.diag_indices_from(s)] += lam
        # tr[G (lam I + G)^{-1}] = N - lam * tr[(lam I + G)^{-1}]
        tr = n - lam * float(np.trace(spd_solve(s, np.eye(n))))
        term += lam * tr / n
    return max(term, LAMBDA_FLOOR)


def _initial_lambda(problem: MMVProblem) -> float:
    if problem.noise_level is not None:
        return problem.noise_level
    return 1e-2 * float(np.mean(np.var(problem.y, axis=0)))


def _rel_change(x_new: np.ndarray, x_old: np.ndarray) -> float:
    denom = np.linalg.norm(x_new)
    diff = np.linalg.norm(x_new - x_old)
    if denom == 0.0:
        return 0.0 if diff == 0.0 else np.inf
    return float(diff / denom)


def _check_finite(x: np.ndarray, it: int):
    if not np.isfinite(x).all():
        raise NonFinite(f"estimate contains NaN/Inf at iteration {it}")


def _marginal_cost(phi, y, gamma, b, lam, x) -> float:
    """Type-II negative log evidence of the Gaussian row-prior model.

    Evaluates ``log|lam I + G (x) B| + y^T (lam I + G (x) B)^{-1} y`` with
    ``G = Phi diag(gamma) Phi^T`` through the eigendecompositions of the two
    Kronecker factors. Falls back to the squared data residual when
    ``lam = 0``, where the log-determinant need not exist.
    """
    if lam <= 0.0:
        return float(np.linalg.norm(y - phi @ x) ** 2)
    g = (phi * gamma) @ phi.T
    wa, ua = np.linalg.eigh(0.5 * (g + g.T))
    wb, ub = np.linalg.eigh(b)
    d = lam + np.outer(wa, wb)
    if np.any(d <= 0.0):
        return np.inf
    t = ua.T @ y @ ub
    return float(np.sum(np.log(d)) + np.sum(t * t / d))


def _surrogate_penalty(stat_active: np.ndarray, eps: float, p: float, lam: float) -> float:
    """Majorization-consistent penalty term matching the power-law weights.

    The antiderivative of the weight rule w(r) = (r + eps)^(p/2 - 1), scaled
    by lam: (2 lam / p) (r + eps)^(p/2) for p > 0 and lam log(r + eps) in
    the p = 0 limit.
    """
    if p > 0.0:
        return (2.0 * lam / p) * float(np.sum((stat_active + eps) ** (p / 2.0)))
    return lam * float(np.sum(np.log(np.maximum(stat_active + eps, 1e-300))))


def _result(x, gamma, b, lam, iterations, converged, trace, rescale_gamma):
    fro = float(np.linalg.norm(b))
    if rescale_gamma:
        # Preserve the prior covariances gamma_i * b under the unit-norm gauge.
        hyper = Hyperparameters(gamma * fro, b / fro, lam)
    else:
        hyper = Hyperparameters(gamma, b / fro, lam)
    return RecoveryResult(x, hyper, iterations, converged, np.asarray(trace))


def solve_resbl_qm(problem: MMVProblem, config: SolverConfig = SolverConfig()) -> RecoveryResult:
    """Reweighted-l2 sparse Bayesian solver with learned snapshot correlation.

    Cycles the weighted ridge step, the Bayesian weight update, the
    correlation-matrix update and, in learned mode, the noise-weight rule,
    starting from unit scales and an identity correlation matrix. The
    objective trace records the type-II negative log evidence of the
    current hyperparameters (the squared residual when ``lam = 0``).

    Raises
    ------
    SingularSystem
        Propagated from the linear solves.
    NonFinite
        If any iterate contains NaN/Inf.
    """
    phi, y = problem.phi, problem.y
    m, l = problem.m, problem.l
    lam = _initial_lambda(problem)
    weights = WeightVector.uniform(m)
    b = np.eye(l)
    x = np.zeros((m, l))
    trace = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        x_new = reweighted_l2_step(problem, weights, lam)
        _check_finite(x_new, it)
        rel = _rel_change(x_new, x)
        x = x_new
        trace.append(_marginal_cost(phi, y, weights.gamma, b, lam, x))
        if rel < config.tol:
            converged = True
            break
        weights = update_weights_resbl(
            x, weights, b, problem, lam, config.prune_threshold
        )
        x[weights.pruned] = 0.0  # commit newly pruned rows
        if config.learn_b and weights.active.any():
            b = update_b(x, weights, config.b_ridge)
        if config.lambda_mode == "learned" and (
            config.lambda_freeze_after is None or it <= config.lambda_freeze_after
        ):
            lam = update_lambda(problem, x, weights, lam)
    return _result(x, weights.gamma, b, lam, it, converged, trace, rescale_gamma=True)


def _row_energy(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x, x)


def _focuss_weights(stat: np.ndarray, pruned: np.ndarray, p: float) -> WeightVector:
    active = ~pruned
    w = np.full(stat.shape, np.inf)
    # 0^0 = 1 covers p = 2 on exactly-zero rows.
    w[active] = np.power(stat[active], p / 2.0 - 1.0)
    return WeightVector(w, pruned)


def _solve_focuss(problem, config, temporal) -> RecoveryResult:
    phi, y = problem.phi, problem.y
    m, l = problem.m, problem.l
    p = config.p
    lam = _initial_lambda(problem)
    weights = WeightVector.uniform(m)
    b = np.eye(l)
    x = np.zeros((m, l))
    trace = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        x_new = reweighted_l2_step(problem, weights, lam)
        _check_finite(x_new, it)
        rel = _rel_change(x_new, x)
        x = x_new
        stat = mahalanobis_rows(x, b) if temporal else _row_energy(x)
        resid = float(np.linalg.norm(y - phi @ x) ** 2)
        trace.append(resid + _surrogate_penalty(stat[~weights.pruned], 0.0, p, lam))
        if rel < config.tol:
            converged = True
            break
        smax = stat.max()
        if smax > 0:
            pruned = weights.pruned | (stat < config.prune_threshold * smax)
        else:
            pruned = np.ones(m, dtype=bool)
        weights = _focuss_weights(stat, pruned, p)
        x[pruned] = 0.0  # commit newly pruned rows
        if temporal and config.learn_b and weights.active.any():
            b = update_b(x, weights, config.b_ridge)
        if config.lambda_mode == "learned" and (
            config.lambda_freeze_after is None or it <= config.lambda_freeze_after
        ):
            lam = update_lambda(problem, x, weights, lam)
    return _result(x, weights.gamma, b, lam, it, converged, trace, rescale_gamma=False)


def solve_mfocuss(problem: MMVProblem, config: SolverConfig = SolverConfig()) -> RecoveryResult:
    """FOCUSS-family solver with weights ``w_i = (||X_i||_2^2)^(p/2 - 1)``.

    Rows whose energy falls below ``prune_threshold`` times the largest row
    energy are pruned (for p < 2 their weight would diverge). The objective
    trace records ``||Y - Phi X||_F^2 + (2 lam / p) sum_i (||X_i||_2^2)^(p/2)``,
    the quantity the iteration provably does not increase.
    """
    return _solve_focuss(problem, config, temporal=False)


def solve_tmfocuss(problem: MMVProblem, config: SolverConfig = SolverConfig()) -> RecoveryResult:
    """Correlation-whitened FOCUSS: ``w_i = (X_i b^{-1} X_i^T)^(p/2 - 1)``.

    Identical to ``solve_mfocuss`` except that row energies are measured in
    the Mahalanobis metric of a correlation matrix re-estimated from the
    current iterate each cycle (``update_b``). With the correlation matrix
    pinned to the identity (``learn_b=False``) the iterates coincide with
    the plain solver's.
    """
    return _solve_focuss(problem, config, temporal=True)


def _solve_iterative_l2(problem, config, temporal) -> RecoveryResult:
    phi, y = problem.phi, problem.y
    m, l = problem.m, problem.l
    p = config.p
    lam = _initial_lambda(problem)
    weights = WeightVector.uniform(m)
    b = np.eye(l)
    x = np.zeros((m, l))
    stat = np.zeros(m)
    trace = []
    eps = config.epsilon_initial
    total = 0
    converged = False
    while True:
        inner_tol = max(config.tol, np.sqrt(eps) / 100.0)
        stage_converged = False
        while total < config.max_iter:
            total += 1
            x_new = reweighted_l2_step(problem, weights, lam)
            _check_finite(x_new, total)
            rel = _rel_change(x_new, x)
            x = x_new
            stat = mahalanobis_rows(x, b) if temporal else _row_energy(x)
            resid = float(np.linalg.norm(y - phi @ x) ** 2)
            trace.append(resid + _surrogate_penalty(stat[~weights.pruned], eps, p, lam))
            if rel < inner_tol:
                stage_converged = True
                break
            pruned = weights.pruned
            if eps <= config.epsilon_floor and stat.max() > 0:
                # epsilon no longer regularizes the weights, so prune.
                pruned = pruned | (stat < config.prune_threshold * stat.max())
            w = np.full(m, np.inf)
            w[~pruned] = np.power(stat[~pruned] + eps, p / 2.0 - 1.0)
            weights = WeightVector(w, pruned)
            x[pruned] = 0.0  # commit newly pruned rows
            if temporal and config.learn_b and weights.active.any():
                b = update_b(x, weights, config.b_ridge)
            if config.lambda_mode == "learned" and (
                config.lambda_freeze_after is None or total <= config.lambda_freeze_after
            ):
                lam = update_lambda(problem, x, weights, lam)
        if eps <= config.epsilon_floor:
            converged = stage_converged
            break
        if total >= config.max_iter:
            break
        eps = eps / config.epsilon_factor
        # snap to the floor so accumulated rounding cannot add a stage
        if eps <= config.epsilon_floor * (1.0 + 1e-9):
            eps = config.epsilon_floor
        w = np.full(m, np.inf)
        w[~weights.pruned] = np.power(stat[~weights.pruned] + eps, p / 2.0 - 1.0)
        weights = WeightVector(w, weights.pruned)
    return _result(x, weights.gamma, b, lam, total, converged, trace, rescale_gamma=False)


def solve_iter_l2(problem: MMVProblem, config: SolverConfig = SolverConfig()) -> RecoveryResult:
    """Epsilon-smoothed reweighted l2 with a decreasing-epsilon outer loop.

    Weights are ``w_i = (||X_i||_2^2 + eps)^(p/2 - 1)``; each stage iterates
    to a relative change below ``max(tol, sqrt(eps)/100)``, then divides
    ``eps`` by ``epsilon_factor`` down to ``epsilon_floor``. No pruning
    happens while ``eps`` is above the floor, since epsilon keeps the
    weights bounded. ``converged`` means the full schedule finished with
    the final stage converged.
    """
    return _solve_iterative_l2(problem, config, temporal=False)


def solve_titer_l2(problem: MMVProblem, config: SolverConfig = SolverConfig()) -> RecoveryResult:
    """Correlation-whitened variant of ``solve_iter_l2``.

    Uses ``w_i = (X_i b^{-1} X_i^T + eps)^(p/2 - 1)`` with the correlation
    matrix re-estimated each iteration; reduces exactly to the plain solver
    when the correlation matrix is pinned to the identity.
    """
    return _solve_iterative_l2(problem, config, temporal=True)
