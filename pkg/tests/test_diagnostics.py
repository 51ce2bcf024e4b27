import math

import numpy as np
import pytest
import sympy as sp

from lowrankeiv.datagen import (
    CorruptionSpec,
    gen_dataset,
    gen_ground_truth_exact,
    gen_ground_truth_lq,
    mix64,
)
from lowrankeiv.diagnostics import (
    _sample_direction,
    channel_constants_additive,
    channel_constants_missing,
    contraction_constants,
    decompose_error,
    deviation_statistic,
    effective_rank,
    fit_log_linear_decay,
    iteration_bound,
    recovery_bound_rhs,
    rsc_rsm_probe,
    theorem1_empirical_check,
    theory_report,
)
from lowrankeiv.kernels import (
    matrix_norm,
    project_subspace_A,
    svd,
    trace_inner,
)
from lowrankeiv.solver import SolverConfig, omega_rule_truth, solve
from lowrankeiv.surrogate import build_clean, build_for_instance

rng = np.random.default_rng(60601)


def operator_norm_by_power_iteration(a, iters=2000):
    v = np.full(a.shape[1], 1.0 / math.sqrt(a.shape[1]))
    sigma = 0.0
    for _ in range(iters):
        w = a @ v
        sigma = np.linalg.norm(w)
        if sigma == 0:
            return 0.0
        v = a.T @ w
        v /= np.linalg.norm(v)
    return float(sigma)


# ---------------------------------------------------------------------------
# deviation statistic
# ---------------------------------------------------------------------------

def test_deviation_zero_for_noiseless_clean_data():
    gt = gen_ground_truth_exact(6, 4, 2, seed=3)
    inst = gen_dataset(gt, 40, 1.0, 0.0, CorruptionSpec.clean(), seed=4)
    pair = build_clean(inst.X, inst.Y)
    assert deviation_statistic(pair, gt.theta_star) < 1e-10


def test_deviation_matches_power_iteration_oracle():
    gt = gen_ground_truth_exact(6, 5, 2, seed=13)
    inst = gen_dataset(gt, 30, 1.0, 0.2, CorruptionSpec.additive(0.2), seed=14)
    pair = build_for_instance(inst)
    residual = pair.upsilon_hat - pair.gamma_hat @ gt.theta_star
    value = deviation_statistic(pair, gt.theta_star)
    assert value == pytest.approx(operator_norm_by_power_iteration(residual),
                                  abs=1e-6)


def test_deviation_scales_like_inverse_sqrt_n():
    gt = gen_ground_truth_exact(8, 6, 2, seed=21)
    medians = {}
    for n in (250, 1000, 4000):
        stats = []
        for rep in range(50):
            inst = gen_dataset(gt, n, 1.0, 0.1, CorruptionSpec.additive(0.2),
                               seed=mix64(500, rep, n))
            pair = build_for_instance(inst)
            stats.append(deviation_statistic(pair, gt.theta_star))
        medians[n] = float(np.median(stats)) * math.sqrt(n)
    values = list(medians.values())
    assert max(values) / min(values) < 2.0


def test_deviation_invariant_under_response_rotation():
    gt = gen_ground_truth_exact(5, 4, 2, seed=8)
    inst = gen_dataset(gt, 60, 1.0, 0.1, CorruptionSpec.clean(), seed=9)
    pair = build_clean(inst.X, inst.Y)
    rot, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    pair_rot = build_clean(inst.X, inst.Y @ rot)
    a = deviation_statistic(pair, gt.theta_star)
    b = deviation_statistic(pair_rot, gt.theta_star @ rot)
    assert a == pytest.approx(b, rel=1e-10)


# ---------------------------------------------------------------------------
# RSC/RSM probe
# ---------------------------------------------------------------------------

def test_probe_zero_perturbation():
    sigma = np.diag([1.0, 2.0, 3.0])
    report = rsc_rsm_probe(sigma, sigma, r=1, num_samples=100, seed=5)
    assert report.max_quadratic_deviation == 0.0
    assert report.fitted_alpha1 >= 1.0 - 1e-8
    assert report.anchored_alpha1 == pytest.approx(0.5)
    assert report.anchored_tau == 0.0
    assert report.lemma_trigger


def test_probe_clean_gram_meets_lemma_trigger():
    x = np.random.default_rng(77).standard_normal((10_000, 16))
    gamma = x.T @ x / 10_000
    report = rsc_rsm_probe(gamma, 1.0, r=2, num_samples=500, seed=6)
    assert report.max_quadratic_deviation < 1.0 / 24.0
    assert report.lemma_trigger


def test_probe_directions_have_bounded_rank_and_unit_norm():
    for i in range(20):
        gen = np.random.default_rng(mix64(9, i))
        delta = _sample_direction(gen, 12, 10, 4)
        s = np.linalg.svd(delta, compute_uv=False)
        assert int(np.sum(s > 1e-8)) <= 4
        assert np.linalg.norm(delta, "fro") == pytest.approx(1.0, abs=1e-12)


def test_probe_validation():
    with pytest.raises(ValueError, match="r must"):
        rsc_rsm_probe(np.eye(3), 1.0, r=0)


# ---------------------------------------------------------------------------
# effective rank
# ---------------------------------------------------------------------------

def test_effective_rank_direct_count():
    theta = np.diag([5.0, 1.0, 0.1])
    er = effective_rank(theta, 0.5)
    assert er.cardinality == 2
    assert er.tail_nuclear == pytest.approx(0.1)


def test_effective_rank_empty_set():
    theta = np.diag([5.0, 1.0, 0.1])
    er = effective_rank(theta, 10.0)
    assert er.cardinality == 0
    assert er.tail_nuclear == pytest.approx(matrix_norm(theta, "nuclear"))


def test_effective_rank_threshold_bounds_with_certificate():
    gt = gen_ground_truth_lq(16, 16, q=0.5, rq=20.0, decay=2.0, seed=10)
    er = effective_rank(gt.theta_star, 0.3, q=gt.q, rq=gt.radius)
    assert er.card_bound_ok and er.tail_bound_ok


# ---------------------------------------------------------------------------
# recovery bounds and contraction constants
# ---------------------------------------------------------------------------

def test_recovery_bound_reference_constants():
    fro_sq, nuc = recovery_bound_rhs(0.0, 10.0, 0.5, 0.5)
    assert fro_sq == pytest.approx(5440.0)
    assert nuc == pytest.approx((4 + 32 * math.sqrt(17)) * 10.0)


def test_recovery_bound_zero_radius():
    assert recovery_bound_rhs(0.5, 0.0, 0.3, 1.0) == (0.0, 0.0)


def test_recovery_bound_q1_linear_in_ratio():
    fro_sq, _ = recovery_bound_rhs(1.0, 2.0, 0.3, 0.6)
    assert fro_sq == pytest.approx(544.0 * 2.0 * 0.5)


def test_contraction_tau_zero_collapse():
    c = contraction_constants(tau=0.0, lam=0.4, q=0.0, rq=3.0, alpha1=0.5,
                              v=2.0, stat_error_f=1.0)
    assert c.xi == 0.0
    assert c.kappa == pytest.approx(1.0 - 0.5 / 16.0)
    assert c.kappa_valid


def test_contraction_zero_radius():
    c = contraction_constants(tau=0.01, lam=0.4, q=0.0, rq=0.0, alpha1=0.5,
                              v=2.0, stat_error_f=1.0)
    assert c.epsilon_stat_bar == 0.0


def test_contraction_matches_symbolic_oracle():
    tau, lam, q, rq, alpha1, v = 0.01, 0.5, 0.0, 5.0, 0.5, 2.0
    stat_error = 0.3
    c = contraction_constants(tau, lam, q, rq, alpha1, v, stat_error)
    s_tau, s_lam, s_rq, s_alpha1, s_v = (sp.Rational(1, 100), sp.Rational(1, 2),
                                         sp.Integer(5), sp.Rational(1, 2),
                                         sp.Integer(2))
    s_err = sp.Rational(3, 10)
    denom = 1 - 256 * s_tau * s_rq / s_alpha1
    kappa = (1 - s_alpha1 / (8 * s_v) + 256 * s_tau * s_rq / s_alpha1) / denom
    xi = s_tau * (s_alpha1 / (8 * s_v) + 512 * s_tau * s_rq / s_alpha1 + 5) / denom
    eps = 8 * sp.sqrt(s_rq) * (sp.sqrt(2) * s_err + s_lam * sp.sqrt(s_rq))
    assert c.kappa == pytest.approx(float(sp.N(kappa, 30)), abs=1e-12)
    assert c.xi == pytest.approx(float(sp.N(xi, 30)), abs=1e-12)
    assert c.epsilon_stat_bar == pytest.approx(float(sp.N(eps, 30)), rel=1e-12)
    assert c.denominator < 0
    assert not c.kappa_valid


def test_constant_evaluation_is_pure():
    args = dict(tau=0.003, lam=0.4, q=0.5, rq=7.0, alpha1=0.6, v=2.5,
                stat_error_f=1.3)
    assert contraction_constants(**args) == contraction_constants(**args)
    add = dict(sigma_x=1.0, sigma_w=0.2, sigma_eps=0.1, omega=3.0, n=77,
               d1=9, d2=5)
    assert channel_constants_additive(**add) == channel_constants_additive(**add)


def test_iteration_bound_monotone_in_tolerance():
    t_loose = iteration_bound(0.9, 0.1, 10.0, 0.5, 100.0)
    t_tight = iteration_bound(0.9, 0.001, 10.0, 0.5, 100.0)
    assert t_tight > t_loose > 0
    with pytest.raises(ValueError, match="kappa"):
        iteration_bound(1.2, 0.1, 10.0, 0.5, 100.0)
    with pytest.raises(ValueError, match="omega"):
        iteration_bound(0.9, 100.0, 1.0, 0.5, 100.0)


# ---------------------------------------------------------------------------
# channel constants
# ---------------------------------------------------------------------------

def test_phi_additive_identity_covariance():
    _, phi = channel_constants_additive(1.0, 0.2, 0.1, 3.0, 100, 8, 8)
    assert phi == pytest.approx(math.sqrt(1 + 0.04) * (0.1 + 3.0 * 0.2))


def test_phi_additive_no_noise_sources():
    _, phi = channel_constants_additive(1.0, 0.0, 0.0, 7.0, 50, 6, 4)
    assert phi == 0.0


def test_tau_additive_hand_evaluation():
    tau, _ = channel_constants_additive(1.0, 0.2, 0.1, 3.0, 100, 8, 8)
    sz2 = 1.0 + 0.2 ** 2
    expected = 1.0 * max(64 * sz2 ** 2, 8 * sz2) * (16 + math.log(8)) / 100
    assert tau == pytest.approx(expected, rel=1e-15)


def test_missing_rho_zero_reduction():
    tau0, phi0 = channel_constants_missing(1.0, 0.0, 0.1, 3.0, 100, 8, 8)
    tau_add0, _ = channel_constants_additive(1.0, 0.0, 0.1, 3.0, 100, 8, 8)
    assert tau0 == pytest.approx(tau_add0, rel=1e-15)
    assert phi0 == pytest.approx(math.sqrt(1.0) * (3.0 * 1.0 + 0.1))


def test_missing_constants_symbolic_oracle():
    for rho in (0.2, 0.5):
        tau, phi = channel_constants_missing(1.0, rho, 0.1, 3.0, 200, 8, 6)
        r = sp.Rational(str(rho))
        one_minus = 1 - r
        dim = (2 * 8 + sp.log(6)) / 200
        s_tau = sp.Max(36 / one_minus ** 4, 6 / one_minus ** 2) * dim
        # Sigma_z = I * M elementwise has diagonal 1 - rho
        s_phi = sp.sqrt(one_minus) / one_minus * (3 / one_minus + sp.Rational(1, 10))
        assert tau == pytest.approx(float(sp.N(s_tau, 30)), rel=1e-12)
        assert phi == pytest.approx(float(sp.N(s_phi, 30)), rel=1e-12)


def test_missing_sigma_z_diagonal():
    # with Sigma_x = I the elementwise mask matrix leaves a 0.8 diagonal
    _, phi = channel_constants_missing(1.0, 0.2, 0.0, 1.0, 100, 4, 4)
    assert phi == pytest.approx(math.sqrt(0.8) / 0.8 * (1.0 / 0.8))


# ---------------------------------------------------------------------------
# error decomposition
# ---------------------------------------------------------------------------

def test_decompose_error_subspace_member():
    gt = gen_ground_truth_exact(8, 6, 2, seed=44)
    f = svd(gt.theta_star)
    ur, vr = f.u[:, :2], f.v[:, :2]
    delta = ur @ rng.standard_normal((2, 2)) @ vr.T
    prime, double = decompose_error(delta, gt.theta_star, 2)
    assert np.allclose(double, 0.0, atol=1e-12)
    assert np.allclose(prime, delta, atol=1e-12)


def test_decompose_error_reconstructs_and_bounds_rank():
    gt = gen_ground_truth_exact(9, 7, 3, seed=45)
    delta = rng.standard_normal((9, 7))
    prime, double = decompose_error(delta, gt.theta_star, 3)
    assert np.max(np.abs(prime + double - delta)) < 1e-12
    s = np.linalg.svd(prime, compute_uv=False)
    assert int(np.sum(s > 1e-8)) <= 6


def test_decompose_error_parts_are_trace_orthogonal():
    gt = gen_ground_truth_exact(8, 8, 2, seed=46)
    f = svd(gt.theta_star)
    ur, vr = f.u[:, :2], f.v[:, :2]
    delta = rng.standard_normal((8, 8))
    prime, double = decompose_error(delta, gt.theta_star, 2)
    assert abs(trace_inner(project_subspace_A(prime, ur, vr), double)) < 1e-10


def test_decompose_error_rank_range():
    gt = gen_ground_truth_exact(4, 4, 2, seed=47)
    with pytest.raises(ValueError, match="r must"):
        decompose_error(np.zeros((4, 4)), gt.theta_star, 5)


# ---------------------------------------------------------------------------
# theorem-1 empirical check and fits
# ---------------------------------------------------------------------------

def _solved_instance(seed=70):
    gt = gen_ground_truth_exact(12, 12, 2, seed=seed)
    inst = gen_dataset(gt, 240, 1.0, 0.1, CorruptionSpec.additive(0.2),
                       seed=seed + 1)
    pair = build_for_instance(inst)
    cfg = SolverConfig(lam=math.sqrt(12 / 240),
                       omega=omega_rule_truth(gt.theta_star), v=2.0)
    return inst, pair, solve(pair, cfg, reference=gt.theta_star)


def test_theorem1_check_perfect_recovery():
    inst, _, result = _solved_instance()
    result.theta_hat = inst.ground_truth.theta_star.copy()
    report = theorem1_empirical_check(inst, result, alpha1=0.5)
    assert report.error_frobenius_sq == 0.0
    assert report.frobenius_ok and report.nuclear_ok


def test_theorem1_check_end_to_end_holds_with_ratios():
    inst, _, result = _solved_instance(seed=80)
    report = theorem1_empirical_check(inst, result, alpha1=0.5)
    assert report.frobenius_ok and report.nuclear_ok
    assert 0.0 <= report.frobenius_ratio <= 1.0
    assert 0.0 <= report.nuclear_ratio <= 1.0


def test_fit_log_linear_decay_exact_geometric():
    its = np.arange(40)
    dists = 3.0 * 0.8 ** its
    fit = fit_log_linear_decay(its, dists)
    assert fit.slope == pytest.approx(math.log(0.8), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_log_linear_decay_excludes_floor():
    its = np.arange(50, dtype=float)
    dists = np.concatenate([3.0 * 0.5 ** np.arange(40), np.full(10, 3.0 * 0.5 ** 39)])
    fit = fit_log_linear_decay(its, dists)
    assert fit.n_points < 50
    assert fit.r_squared > 0.999


def test_theory_report_assembly():
    inst, pair, result = _solved_instance(seed=90)
    probe = rsc_rsm_probe(pair.gamma_hat, 1.0, r=2, num_samples=50, seed=91)
    report = theory_report(inst, pair, result, probe, delta_star=1e-3)
    assert report.phi_channel > 0 and report.tau_channel > 0
    assert report.deviation_statistic > 0
    assert isinstance(report.kappa_valid, bool)
    assert isinstance(report.lambda_vs_2_tau_omega_ok, bool)
    assert report.recovery_bound_frobenius_sq > 0
    if report.kappa_valid:
        assert report.t_delta_star is None or report.t_delta_star > 0
