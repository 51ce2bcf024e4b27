# Desk-scale probes of the estimator's theory: the deviation statistic that
# governs admissible regularization, empirical restricted strong convexity /
# smoothness probes over random low-rank directions, effective-rank
# accounting for near-low-rank truths, the recovery-bound right-hand sides,
# the contraction constants of the linear-convergence guarantee, and the
# channel-specific tolerance / noise constants for the additive and missing
# channels. Everything here is checkable arithmetic: probabilistic claims
# are probed by sampling, never re-proved, and unknown universal constants
# are reported as raw quantities rather than pass/fail thresholds.

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .datagen import mix64
from .kernels import (
    as_matrix,
    matrix_norm,
    project_subspace_B,
    singular_values,
    svd,
)
from .solver import SolverResult, relative_error
from .surrogate import SurrogatePair

NUCLEAR_BOUND_COEF = 4 + 32 * math.sqrt(17)  # recovery-bound constant
FROBENIUS_BOUND_COEF = 544.0


def _resolve_covariance(sigma_x, d1: int) -> np.ndarray:
    if np.isscalar(sigma_x):
        return float(sigma_x) * np.eye(d1)
    cov = as_matrix(sigma_x, "sigma_x")
    if cov.shape != (d1, d1):
        raise ValueError(f"sigma_x must be {d1}x{d1}, got {cov.shape}")
    return 0.5 * (cov + cov.T)


def _eig_extremes(cov: np.ndarray):
    eigs = np.linalg.eigvalsh(cov)
    return float(eigs[0]), float(eigs[-1])


def deviation_statistic(pair: SurrogatePair, theta_star) -> float:
    """Operator norm of upsilon_hat - gamma_hat @ theta_star.

    This is the residual whose scale dictates how large the regularization
    must be chosen; with clean noiseless data it is exactly zero.
    """
    theta_star = as_matrix(theta_star, "theta_star")
    residual = pair.upsilon_hat - pair.gamma_hat @ theta_star
    return matrix_norm(residual, "operator")


@dataclass(frozen=True)
class RscProbeReport:
    """Empirical curvature probe over random unit-Frobenius directions of
    rank <= 2r.

    max_quadratic_deviation is the sampled maximum of
    |<(gamma_hat - sigma_x) delta, delta>|; it lower-bounds the true
    supremum over the rank-constrained set. fitted_(alpha1, tau) is the
    least-squares lower envelope <gamma_hat delta, delta> >=
    alpha ||delta||_F^2 - tau ||delta||_*^2 over the samples, while
    anchored_(alpha1, tau) fixes the curvature at lambda_min(sigma_x) / 2
    and reports the smallest tolerance making the inequality hold on every
    sample. lemma_trigger records whether the max deviation clears the
    lambda_min(sigma_x) / 24 threshold under which the anchored constants
    are guaranteed.
    """

    r: int
    num_samples: int
    max_quadratic_deviation: float
    fitted_alpha1: float
    fitted_tau: float
    anchored_alpha1: float
    anchored_tau: float
    lemma_trigger: bool


def _sample_direction(rng, d1, d2, two_r):
    a = rng.standard_normal((d1, two_r))
    b = rng.standard_normal((d2, two_r))
    delta = a @ b.T
    return delta / np.linalg.norm(delta, "fro")


def _fit_lower_envelope(quads: np.ndarray, nuc_sq: np.ndarray):
    # least-squares line alpha - tau * s under alpha - tau * s_i <= q_i and
    # tau >= 0; for fixed tau the best feasible intercept is
    # min(mean(q + tau s), min(q + tau s)), so reduce to 1-D in tau.
    def intercept(tau):
        shifted = quads + tau * nuc_sq
        return min(float(np.mean(shifted)), float(np.min(shifted)))

    def cost(tau):
        alpha = intercept(tau)
        resid = quads - alpha + tau * nuc_sq
        return float(np.sum(resid ** 2))

    spread = float(np.max(quads) - np.min(quads))
    hi = spread / max(float(np.min(nuc_sq)), 1e-12) + 1.0
    res = minimize_scalar(cost, bounds=(0.0, hi), method="bounded")
    tau = float(res.x) if res.fun <= cost(0.0) else 0.0
    return intercept(tau), tau


def rsc_rsm_probe(gamma_hat, sigma_x, r: int, num_samples: int = 500,
                  seed: int = 0, d2: int | None = None) -> RscProbeReport:
    """Probe restricted curvature of gamma_hat against the target sigma_x.

    Directions are normalized products of Gaussian rank-2r factors, one
    independent stream per sample. d2 defaults to the covariate dimension.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    g = as_matrix(gamma_hat, "gamma_hat")
    d1 = g.shape[0]
    cov = _resolve_covariance(sigma_x, d1)
    if d2 is None:
        d2 = d1
    lam_min = _eig_extremes(cov)[0]
    diff = g - cov

    quads = np.empty(num_samples)
    devs = np.empty(num_samples)
    nuc_sq = np.empty(num_samples)
    for i in range(num_samples):
        rng = np.random.Generator(np.random.PCG64(mix64(seed, i)))
        delta = _sample_direction(rng, d1, d2, 2 * r)
        quads[i] = np.sum((g @ delta) * delta)
        devs[i] = abs(np.sum((diff @ delta) * delta))
        nuc_sq[i] = np.sum(singular_values(delta)) ** 2

    max_dev = float(np.max(devs))
    anchored_alpha1 = lam_min / 2.0
    anchored_tau = float(max(0.0, np.max((anchored_alpha1 - quads) / nuc_sq)))
    fitted_alpha1, fitted_tau = _fit_lower_envelope(quads, nuc_sq)
    return RscProbeReport(
        r=r,
        num_samples=num_samples,
        max_quadratic_deviation=max_dev,
        fitted_alpha1=fitted_alpha1,
        fitted_tau=fitted_tau,
        anchored_alpha1=anchored_alpha1,
        anchored_tau=anchored_tau,
        lemma_trigger=max_dev <= lam_min / 24.0,
    )


@dataclass(frozen=True)
class EffectiveRank:
    """Count and tail mass of the truth's spectrum above a threshold.

    When an lq certificate (q, radius) is supplied, card_bound_ok and
    tail_bound_ok record the standard threshold bounds
    cardinality <= eta^-q * radius and tail <= eta^(1-q) * radius.
    """

    cardinality: int
    tail_nuclear: float
    card_bound_ok: bool | None = None
    tail_bound_ok: bool | None = None


def effective_rank(theta_star, eta: float, q: float | None = None,
                   rq: float | None = None) -> EffectiveRank:
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    s = singular_values(theta_star)
    above = s > eta
    cardinality = int(np.sum(above))
    tail = float(np.sum(s[~above]))
    card_ok = tail_ok = None
    if q is not None and rq is not None:
        card_ok = cardinality <= eta ** (-q) * rq
        tail_ok = tail <= eta ** (1.0 - q) * rq
    return EffectiveRank(cardinality=cardinality, tail_nuclear=tail,
                         card_bound_ok=card_ok, tail_bound_ok=tail_ok)


def recovery_bound_rhs(q: float, rq: float, lam: float, alpha1: float):
    """Right-hand sides of the recovery guarantees.

    Returns (squared-Frobenius bound, nuclear bound):
    544 * rq * (lam / alpha1)^(2-q) and (4 + 32 sqrt(17)) * rq *
    (lam / alpha1)^(1-q).
    """
    if alpha1 <= 0:
        raise ValueError(f"alpha1 must be positive, got {alpha1}")
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    ratio = lam / alpha1
    fro_sq = FROBENIUS_BOUND_COEF * rq * ratio ** (2.0 - q)
    nuclear = NUCLEAR_BOUND_COEF * rq * ratio ** (1.0 - q)
    return fro_sq, nuclear


@dataclass(frozen=True)
class ContractionConstants:
    """Constants of the geometric-convergence guarantee.

    kappa is the contraction factor and is meaningful only when
    kappa_valid: the shared denominator 1 - 256 tau lam^(-q/2) rq / alpha1
    must be positive and kappa must lie in (0, 1). Out-of-range values are
    reported as computed, never clamped.
    """

    epsilon_stat_bar: float
    kappa: float
    xi: float
    denominator: float
    kappa_valid: bool


def _safe_div(num: float, den: float) -> float:
    if den == 0.0:
        return math.copysign(math.inf, num) if num != 0 else math.nan
    return num / den


def contraction_constants(tau: float, lam: float, q: float, rq: float,
                          alpha1: float, v: float,
                          stat_error_f: float) -> ContractionConstants:
    """Evaluate the statistical-error radius and the contraction pair.

    epsilon_stat_bar = 8 lam^(-q/2) sqrt(rq) (sqrt(2) stat_error_f +
    lam^(1-q/2) sqrt(rq)); kappa and xi follow the displayed formulas with
    shared denominator 1 - 256 tau lam^(-q/2) rq / alpha1.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if stat_error_f < 0:
        raise ValueError(f"stat_error_f must be >= 0, got {stat_error_f}")
    for label, value in (("lam", lam), ("alpha1", alpha1), ("v", v)):
        if value <= 0:
            raise ValueError(f"{label} must be positive, got {value}")
    if rq < 0:
        raise ValueError(f"rq must be >= 0, got {rq}")

    sqrt_rq = math.sqrt(rq)
    eps_bar = 8.0 * lam ** (-q / 2.0) * sqrt_rq * (
        math.sqrt(2.0) * stat_error_f + lam ** (1.0 - q / 2.0) * sqrt_rq
    )
    denom = 1.0 - 256.0 * tau * lam ** (-q / 2.0) * rq / alpha1
    kappa = _safe_div(
        1.0 - alpha1 / (8.0 * v) + 256.0 * tau * lam ** (-q) * rq / alpha1,
        denom,
    )
    xi = _safe_div(
        tau * (alpha1 / (8.0 * v) + 512.0 * tau * lam ** (q / 2.0) * rq / alpha1 + 5.0),
        denom,
    )
    valid = denom > 0 and 0.0 < kappa < 1.0
    return ContractionConstants(epsilon_stat_bar=eps_bar, kappa=kappa, xi=xi,
                                denominator=denom, kappa_valid=valid)


def iteration_bound(kappa: float, delta_star: float, omega: float, lam: float,
                    initial_gap: float) -> float:
    """Iteration count after which the objective gap is within delta_star.

    Requires a valid contraction factor in (0, 1), a positive initial
    objective gap, and delta_star < omega * lam (the bound's regime).
    """
    if not 0 < kappa < 1:
        raise ValueError(f"kappa must be in (0, 1), got {kappa}")
    if delta_star <= 0:
        raise ValueError(f"delta_star must be positive, got {delta_star}")
    if initial_gap <= 0:
        raise ValueError(f"initial_gap must be positive, got {initial_gap}")
    x = omega * lam / delta_star
    if x <= 1:
        raise ValueError("delta_star must be below omega * lam")
    log_inv_kappa = math.log(1.0 / kappa)
    # the inner log2 is positive since x > 1; the outer log2 may still be
    # negative (1 < x < 2), which is fine -- the second term dominates there
    term1 = math.log2(math.log2(x)) * (1.0 + math.log(2.0) / log_inv_kappa)
    term2 = math.log(initial_gap / delta_star) / log_inv_kappa
    return term1 + term2


def channel_constants_additive(sigma_x, sigma_w: float, sigma_eps: float,
                               omega: float, n: int, d1: int, d2: int):
    """Tolerance / integrated-noise constants for the additive channel.

    tau uses sigma_z^2 = ||sigma_x||_op^2 + sigma_w^2; phi uses
    Sigma_z = Sigma_x + sigma_w^2 I.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cov = _resolve_covariance(sigma_x, d1)
    lam_min, lam_max = _eig_extremes(cov)
    op = lam_max
    sz2 = op ** 2 + sigma_w ** 2
    dim_factor = (2.0 * max(d1, d2) + math.log(min(d1, d2))) / n
    tau = lam_min * max(d2 ** 2 * sz2 ** 2 / lam_min ** 2,
                        d2 * sz2 / lam_min) * dim_factor
    sigma_z = cov + sigma_w ** 2 * np.eye(d1)
    phi = math.sqrt(_eig_extremes(sigma_z)[1]) * (sigma_eps + omega * sigma_w)
    return tau, phi


def channel_constants_missing(sigma_x, rho: float, sigma_eps: float,
                              omega: float, n: int, d1: int, d2: int):
    """Tolerance / integrated-noise constants for the missing-data channel.

    Sigma_z = Sigma_x * M elementwise, where M has diagonal 1 - rho and
    off-diagonal (1 - rho)^2.
    """
    if not 0 <= rho < 1:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cov = _resolve_covariance(sigma_x, d1)
    lam_min, lam_max = _eig_extremes(cov)
    op = lam_max
    one_minus = 1.0 - rho
    dim_factor = (2.0 * max(d1, d2) + math.log(min(d1, d2))) / n
    tau = lam_min * max(d2 ** 2 * op ** 4 / (one_minus ** 4 * lam_min ** 2),
                        d2 * op ** 2 / (one_minus ** 2 * lam_min)) * dim_factor
    m = np.full((d1, d1), one_minus ** 2)
    np.fill_diagonal(m, one_minus)
    sigma_z = cov * m
    phi = math.sqrt(_eig_extremes(sigma_z)[1]) / one_minus * (
        omega * op / one_minus + sigma_eps
    )
    return tau, phi


def decompose_error(delta, theta_star, r: int):
    """Split delta into a rank <= 2r part and a complement-subspace part.

    The complement part projects through the top-r singular subspaces of
    theta_star; the remainder delta - complement has rank at most 2r and the
    two parts sum back to delta exactly.
    """
    delta = as_matrix(delta, "delta")
    theta_star = as_matrix(theta_star, "theta_star")
    d = min(theta_star.shape)
    if not 1 <= r <= d:
        raise ValueError(f"r must be in [1, {d}], got {r}")
    f = svd(theta_star)
    ur, vr = f.u[:, :r], f.v[:, :r]
    delta_double = project_subspace_B(delta, ur, vr)
    delta_prime = delta - delta_double
    return delta_prime, delta_double


@dataclass(frozen=True)
class Theorem1Report:
    """Realized errors against the recovery-bound right-hand sides."""

    error_frobenius_sq: float
    error_nuclear: float
    bound_frobenius_sq: float
    bound_nuclear: float
    frobenius_ok: bool
    nuclear_ok: bool
    frobenius_ratio: float
    nuclear_ratio: float


def theorem1_empirical_check(instance, result: SolverResult,
                             probe: RscProbeReport | None = None,
                             alpha1: float | None = None) -> Theorem1Report:
    """Check the recovery bounds on one solved instance.

    alpha1 defaults to the probe's anchored curvature
    lambda_min(sigma_x) / 2. The lq certificate (q, radius) comes from the
    instance's ground truth.
    """
    if alpha1 is None:
        if probe is None:
            raise ValueError("provide alpha1 or a probe report")
        alpha1 = probe.anchored_alpha1
    gt = instance.ground_truth
    delta = result.theta_hat - gt.theta_star
    err_f_sq = float(np.linalg.norm(delta, "fro") ** 2)
    err_nuc = matrix_norm(delta, "nuclear")
    bound_f_sq, bound_nuc = recovery_bound_rhs(gt.q, gt.radius,
                                               result.config.lam, alpha1)
    return Theorem1Report(
        error_frobenius_sq=err_f_sq,
        error_nuclear=err_nuc,
        bound_frobenius_sq=bound_f_sq,
        bound_nuclear=bound_nuc,
        frobenius_ok=err_f_sq <= bound_f_sq,
        nuclear_ok=err_nuc <= bound_nuc,
        frobenius_ratio=_safe_div(err_f_sq, bound_f_sq),
        nuclear_ratio=_safe_div(err_nuc, bound_nuc),
    )


@dataclass(frozen=True)
class LinearDecayFit:
    """Least-squares line through log(distance) versus iteration."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_log_linear_decay(iterations, distances,
                         floor_multiplier: float = 10.0) -> LinearDecayFit:
    """Fit log distance-to-final against iteration over the pre-floor segment.

    The floor is the smallest strictly positive distance; only points at or
    above floor_multiplier times the floor enter the fit, which excludes the
    terminal plateau where distances sit at numerical noise.
    """
    its = np.asarray(iterations, dtype=float)
    dist = np.asarray(distances, dtype=float)
    if its.shape != dist.shape or its.ndim != 1:
        raise ValueError("iterations and distances must be 1-D of equal length")
    positive = dist > 0
    if not positive.any():
        raise ValueError("no positive distances to fit")
    floor = float(dist[positive].min())
    keep = dist >= floor_multiplier * floor
    if int(keep.sum()) < 3:
        raise ValueError("fewer than 3 points above the floor segment")
    x = its[keep]
    y = np.log(dist[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_sq = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearDecayFit(slope=float(slope), intercept=float(intercept),
                          r_squared=r_sq, n_points=int(keep.sum()))


@dataclass(frozen=True)
class TheoryConstants:
    """One-instance theory report: channel constants, deviation statistic,
    contraction constants, recovery bounds, and the on-demand iteration
    bound (None unless a tolerance was supplied and kappa is valid)."""

    epsilon_stat_bar: float
    kappa: float
    xi: float
    kappa_valid: bool
    tau_channel: float
    phi_channel: float
    tau_empirical: float
    deviation_statistic: float
    recovery_bound_frobenius_sq: float
    recovery_bound_nuclear: float
    lambda_vs_2_tau_omega_ok: bool
    t_delta_star: float | None


def theory_report(instance, pair: SurrogatePair, result: SolverResult,
                  probe: RscProbeReport,
                  delta_star: float | None = None) -> TheoryConstants:
    """Assemble the full theory report for one solved instance.

    Channel constants follow the instance's corruption spec (the clean
    channel uses the additive formulas with sigma_w = 0, their exact
    reduction). The contraction constants use the probe's anchored
    curvature and empirical tolerance; tau_channel is reported alongside
    since its universal prefactor is unknown. The lambda >= 2 tau omega
    relation is reported with the empirical tau, never enforced.
    """
    gt = instance.ground_truth
    d1, d2 = gt.theta_star.shape
    cfg = result.config
    corruption = instance.corruption
    if corruption.channel == "missing":
        tau_ch, phi_ch = channel_constants_missing(
            instance.sigma_x, corruption.rho, instance.sigma_eps,
            cfg.omega, instance.n, d1, d2)
    else:
        tau_ch, phi_ch = channel_constants_additive(
            instance.sigma_x, corruption.sigma_w, instance.sigma_eps,
            cfg.omega, instance.n, d1, d2)

    stat_error = float(np.linalg.norm(result.theta_hat - gt.theta_star, "fro"))
    contraction = contraction_constants(
        tau=probe.anchored_tau, lam=cfg.lam, q=gt.q, rq=gt.radius,
        alpha1=probe.anchored_alpha1, v=cfg.v, stat_error_f=stat_error)
    bound_f_sq, bound_nuc = recovery_bound_rhs(gt.q, gt.radius, cfg.lam,
                                               probe.anchored_alpha1)
    t_bound = None
    if delta_star is not None and contraction.kappa_valid:
        initial_gap = result.trace.objectives[0] - result.final_objective
        if initial_gap > 0 and delta_star < cfg.omega * cfg.lam:
            t_bound = iteration_bound(contraction.kappa, delta_star,
                                      cfg.omega, cfg.lam, initial_gap)
    return TheoryConstants(
        epsilon_stat_bar=contraction.epsilon_stat_bar,
        kappa=contraction.kappa,
        xi=contraction.xi,
        kappa_valid=contraction.kappa_valid,
        tau_channel=tau_ch,
        phi_channel=phi_ch,
        tau_empirical=probe.anchored_tau,
        deviation_statistic=deviation_statistic(pair, gt.theta_star),
        recovery_bound_frobenius_sq=bound_f_sq,
        recovery_bound_nuclear=bound_nuc,
        lambda_vs_2_tau_omega_ok=cfg.lam >= 2.0 * probe.anchored_tau * cfg.omega,
        t_delta_star=t_bound,
    )
