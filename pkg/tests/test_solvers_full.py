"""End-to-end behavior of the five iterative solvers."""

import numpy as np
import pytest

from mmvtc import (
    MMVProblem,
    SolverConfig,
    gen_instance,
    reweighted_l2_step,
    solve_iter_l2,
    solve_mfocuss,
    solve_resbl_qm,
    solve_titer_l2,
    solve_tmfocuss,
    top_k_support,
)
from mmvtc.solvers import WeightVector, _focuss_weights, mahalanobis_row

ALL_SOLVERS = [solve_resbl_qm, solve_mfocuss, solve_tmfocuss, solve_iter_l2, solve_titer_l2]


@pytest.mark.parametrize("solve", ALL_SOLVERS)
def test_zero_measurements_give_zero_estimate(solve):
    prob = MMVProblem(np.eye(4), np.zeros((4, 2)), noise_level=0.0)
    res = solve(prob)
    assert np.all(res.x_hat == 0.0)
    assert res.converged
    if solve in (solve_iter_l2, solve_titer_l2):
        # one instantly-converged pass per epsilon stage (1 down to 1e-8)
        assert res.iterations <= 9
    else:
        assert res.iterations <= 2


def test_resbl_identity_dictionary_recovers_support():
    rng = np.random.default_rng(0)
    m, l, k = 6, 3, 2
    x_gen = np.zeros((m, l))
    support = np.array([1, 4])
    for i in support:
        row = rng.standard_normal(l)
        x_gen[i] = row / np.linalg.norm(row)
    prob = MMVProblem(np.eye(m), x_gen, noise_level=0.0)
    res = solve_resbl_qm(prob)
    assert np.array_equal(top_k_support(res.x_hat, k), support)


def test_mfocuss_p2_is_single_ridge_step():
    prob = random_noisy(seed=4)
    cfg = SolverConfig(p=2.0)
    res = solve_mfocuss(prob, cfg)
    assert res.converged and res.iterations <= 2
    ridge = reweighted_l2_step(prob, WeightVector.uniform(prob.m), prob.noise_level)
    assert np.allclose(res.x_hat, ridge, atol=1e-12)


def test_focuss_weight_rule_values():
    stat = np.array([4.0])
    wv = _focuss_weights(stat, np.array([False]), p=1.0)
    assert wv.w[0] == pytest.approx(0.5)  # (4)^(1/2 - 1)


def test_iter_l2_weight_rule_values():
    # epsilon-dominated weights at a zero estimate, then a direct evaluation
    assert (0.0 + 1.0) ** (0.8 / 2 - 1) == pytest.approx(1.0)
    assert (3.0 + 1.0) ** (0.0 / 2 - 1) == pytest.approx(0.25)


def test_tmfocuss_weight_direct_evaluation():
    b = np.diag([1.0, 4.0])
    b = b / np.linalg.norm(b)
    x = np.array([1.0, 2.0])
    val = mahalanobis_row(x, b)
    wv = _focuss_weights(np.array([val]), np.array([False]), p=0.8)
    assert wv.w[0] == pytest.approx(val ** (0.8 / 2 - 1), rel=1e-13)


def test_titer_weight_direct_evaluation():
    b = np.diag([1.0, 4.0])
    b = b / np.linalg.norm(b)
    val = mahalanobis_row(np.array([1.0, 2.0]), b)
    w = (val + 1.0) ** (0.8 / 2 - 1)
    # b^{-1} = sqrt(17) diag(1, 1/4), so the quadratic form is 2 sqrt(17)
    direct = (2.0 * np.sqrt(17.0) + 1.0) ** (-0.6)
    assert w == pytest.approx(direct, rel=1e-12)


def random_noisy(seed, n=15, m=40, l=3, k=5, snr=20.0):
    prob, _ = gen_instance(n, m, l, k, 0.5, 1.0, snr, seed)
    return prob


def test_mfocuss_matches_stepwise_replay():
    """Independent scaled-pseudoinverse IRLS replay reproduces the estimate.

    The replay computes each x-step as W^{1/2} pinv(Phi W^{1/2}) Y (an SVD
    route to the same minimum-weighted-norm interpolator), never touching
    the solver's Cholesky path.
    """
    prob, truth = gen_instance(25, 100, 3, 6, 0.0, 0.0, None, 21)
    cfg = SolverConfig()
    res = solve_mfocuss(prob, cfg)
    assert np.array_equal(top_k_support(res.x_hat, 6), truth.support)

    phi, y = prob.phi, prob.y
    m = prob.m
    gamma = np.ones(m)
    pruned = np.zeros(m, dtype=bool)
    x = np.zeros((m, prob.l))
    for _ in range(cfg.max_iter):
        x_new = np.zeros_like(x)
        act = ~pruned
        half = np.sqrt(gamma[act])
        x_new[act] = half[:, None] * (np.linalg.pinv(phi[:, act] * half) @ y)
        rel = np.linalg.norm(x_new - x) / max(np.linalg.norm(x_new), 1e-300)
        x = x_new
        if rel < cfg.tol:
            break
        r = np.einsum("ij,ij->i", x, x)
        if r.max() > 0:
            pruned |= r < cfg.prune_threshold * r.max()
        gamma = np.where(pruned, 0.0, np.maximum(r, 1e-300) ** (1.0 - cfg.p / 2.0))
    assert np.linalg.norm(x - res.x_hat) / np.linalg.norm(x) < 1e-10


def test_iter_l2_noiseless_recovers_support_and_finishes_schedule():
    prob, truth = gen_instance(25, 100, 3, 6, 0.5, 1.0, None, 31)
    res = solve_iter_l2(prob)
    # converged means the epsilon schedule ran down to the floor (1e-8)
    assert res.converged
    assert np.array_equal(top_k_support(res.x_hat, 6), truth.support)


@pytest.mark.parametrize(
    "temporal, plain",
    [(solve_tmfocuss, solve_mfocuss), (solve_titer_l2, solve_iter_l2)],
)
def test_identity_pinned_b_reduces_to_plain_solver(temporal, plain):
    prob = random_noisy(seed=11)
    cfg = SolverConfig(max_iter=80, learn_b=False)
    ra, rb = plain(prob, cfg), temporal(prob, cfg)
    assert ra.iterations == rb.iterations
    scale = max(np.linalg.norm(ra.x_hat), 1.0)
    assert np.max(np.abs(ra.x_hat - rb.x_hat)) <= 1e-12 * scale


@pytest.mark.parametrize("solve", ALL_SOLVERS)
def test_permutation_equivariance(solve):
    prob, _ = gen_instance(12, 30, 3, 4, 0.5, 1.0, 25.0, 17)
    rng = np.random.default_rng(99)
    perm = rng.permutation(prob.m)
    permuted = MMVProblem(prob.phi[:, perm], prob.y, noise_level=prob.noise_level)
    cfg = SolverConfig(max_iter=120)
    base = solve(prob, cfg)
    shuffled = solve(permuted, cfg)
    scale = max(np.linalg.norm(base.x_hat), 1.0)
    assert np.max(np.abs(shuffled.x_hat - base.x_hat[perm])) <= 1e-10 * scale


def test_mfocuss_descent_of_majorization_surrogate():
    """The iteration never increases resid^2 + (2 lam / p) sum (row energy)^(p/2)."""
    for seed in range(5):
        prob, _ = gen_instance(20, 60, 3, 6, 0.5, 1.0, 25.0, 100 + seed)
        res = solve_mfocuss(prob)
        trace = res.objective_trace
        diffs = np.diff(trace)
        floor = 1e-9 * np.maximum(np.abs(trace[:-1]), 1e-300)
        assert np.all(diffs <= floor), f"seed {seed}: max rise {diffs.max():.3e}"


def test_pruned_rows_stay_pruned_across_iterations():
    # a loose prune threshold guarantees rows actually get pruned mid-run
    prob, truth = gen_instance(15, 50, 3, 4, 0.5, 1.0, None, 3)
    cfg = SolverConfig(max_iter=300, prune_threshold=1e-6)
    res = solve_resbl_qm(prob, cfg)
    dead = res.hyper.gamma == 0.0
    assert dead.any()
    assert np.all(res.x_hat[dead] == 0.0)
    assert np.array_equal(top_k_support(res.x_hat, 4), truth.support)


def test_learned_lambda_mode_runs_and_recovers():
    prob, truth = gen_instance(25, 100, 3, 6, 0.5, 1.0, 25.0, 55)
    cfg = SolverConfig(lambda_mode="learned")
    res = solve_resbl_qm(prob, cfg)
    assert res.hyper.lam > 0.0
    assert np.array_equal(top_k_support(res.x_hat, 6), truth.support)


def test_lambda_freeze_after_stops_updates():
    prob, _ = gen_instance(15, 40, 3, 4, 0.5, 1.0, 20.0, 56)
    frozen = solve_resbl_qm(prob, SolverConfig(lambda_mode="learned", lambda_freeze_after=0, max_iter=30))
    fixed = solve_resbl_qm(prob, SolverConfig(lambda_mode="fixed", max_iter=30))
    # freezing before the first update leaves the whole run in fixed mode
    assert np.allclose(frozen.x_hat, fixed.x_hat, atol=1e-14)


def test_result_iterations_bounded_by_config():
    prob = random_noisy(seed=8)
    cfg = SolverConfig(max_iter=7)
    for solve in ALL_SOLVERS:
        res = solve(prob, cfg)
        assert res.iterations <= 7
