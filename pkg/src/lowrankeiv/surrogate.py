# Plug-in surrogate pairs (gamma_hat, upsilon_hat) standing in for the
# unobservable Gram quantities (X^T X / n, X^T Y / n) under each corruption
# channel, plus covariance estimation from blank noise observations.
#
# gamma_hat is symmetrized on construction. In the high-dimensional regime
# (n < d1) the corrected surrogates are indefinite; that is a legal,
# first-class state (the estimator is designed for it) and is never
# repaired here -- min_eigenvalue exposes it as a diagnostic.

from dataclasses import dataclass

import numpy as np

from .datagen import CorruptionSpec
from .kernels import as_matrix

SYM_TOL = 1e-10


@dataclass(frozen=True)
class SurrogatePair:
    """Surrogate Gram pair for one corruption channel.

    gamma_hat is d1 x d1 symmetric (exactly, after construction), and
    upsilon_hat is d1 x d2.
    """

    gamma_hat: np.ndarray
    upsilon_hat: np.ndarray
    channel: CorruptionSpec
    n: int

    def __post_init__(self):
        if self.gamma_hat.shape[0] != self.gamma_hat.shape[1]:
            raise ValueError(f"gamma_hat must be square, got {self.gamma_hat.shape}")
        if self.upsilon_hat.shape[0] != self.gamma_hat.shape[0]:
            raise ValueError(
                f"upsilon_hat rows ({self.upsilon_hat.shape[0]}) must match "
                f"gamma_hat ({self.gamma_hat.shape[0]})")

    @property
    def d1(self) -> int:
        return self.gamma_hat.shape[0]

    @property
    def d2(self) -> int:
        return self.upsilon_hat.shape[1]


def _make_pair(gamma, upsilon, channel, n) -> SurrogatePair:
    gamma = 0.5 * (gamma + gamma.T)
    return SurrogatePair(gamma_hat=gamma, upsilon_hat=upsilon, channel=channel, n=n)


def build_clean(x, y) -> SurrogatePair:
    """Exact Gram pair from fully observed covariates."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    return _make_pair(x.T @ x / n, x.T @ y / n, CorruptionSpec.clean(), n)


def build_additive(z, y, sigma_w_cov) -> SurrogatePair:
    """Bias-corrected pair for additive covariate noise with known covariance.

    gamma_hat = Z^T Z / n - Sigma_w and upsilon_hat = Z^T Y / n. With n < d1
    the correction makes gamma_hat indefinite; that is reported (via
    min_eigenvalue), not treated as an error.
    """
    z = as_matrix(z, "z")
    y = as_matrix(y, "y")
    if z.shape[0] != y.shape[0]:
        raise ValueError(f"row counts differ: {z.shape[0]} vs {y.shape[0]}")
    cov = as_matrix(sigma_w_cov, "sigma_w_cov")
    d1 = z.shape[1]
    if cov.shape != (d1, d1):
        raise ValueError(f"sigma_w_cov must be {d1}x{d1}, got {cov.shape}")
    if np.max(np.abs(cov - cov.T)) > SYM_TOL:
        raise ValueError("sigma_w_cov must be symmetric")
    n = z.shape[0]
    sigma_w = float(np.sqrt(max(np.mean(np.diag(cov)), 0.0)))
    channel = CorruptionSpec.additive(sigma_w)
    return _make_pair(z.T @ z / n - cov, z.T @ y / n, channel, n)


def build_missing(z_masked, y, rho: float) -> SurrogatePair:
    """Bias-corrected pair for independently missing covariate entries.

    Operates on the zero-filled observation matrix: with Zt = Z / (1 - rho),
    gamma_hat = Zt^T Zt / n - rho * diag(Zt^T Zt / n) and
    upsilon_hat = Zt^T Y / n.
    """
    if not 0 <= rho < 1:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    z = as_matrix(z_masked, "z_masked")
    y = as_matrix(y, "y")
    if z.shape[0] != y.shape[0]:
        raise ValueError(f"row counts differ: {z.shape[0]} vs {y.shape[0]}")
    n = z.shape[0]
    zt = z / (1.0 - rho)
    gram = zt.T @ zt / n
    gamma = gram - rho * np.diag(np.diag(gram))
    return _make_pair(gamma, zt.T @ y / n, CorruptionSpec.missing(rho), n)


def build_for_instance(instance) -> SurrogatePair:
    """Surrogate pair for a generated instance, using its known channel
    parameters (sigma_w^2 I for additive noise, rho for missing data)."""
    c = instance.corruption
    if c.channel == "clean":
        return build_clean(instance.Z, instance.Y)
    if c.channel == "additive":
        d1 = instance.Z.shape[1]
        return build_additive(instance.Z, instance.Y,
                              c.sigma_w ** 2 * np.eye(d1))
    return build_missing(instance.Z, instance.Y, c.rho)


def estimate_sigma_w(w0) -> np.ndarray:
    """Estimate the additive-noise covariance from blank noise observations."""
    w0 = as_matrix(w0, "w0")
    n = w0.shape[0]
    est = w0.T @ w0 / n
    return 0.5 * (est + est.T)


def min_eigenvalue(gamma_hat) -> float:
    """Smallest eigenvalue of a symmetric matrix (nonconvexity diagnostic)."""
    g = as_matrix(gamma_hat, "gamma_hat")
    if g.shape[0] != g.shape[1]:
        raise ValueError(f"gamma_hat must be square, got {g.shape}")
    if np.max(np.abs(g - g.T)) > SYM_TOL:
        raise ValueError("gamma_hat must be symmetric")
    return float(np.linalg.eigvalsh(g)[0])
