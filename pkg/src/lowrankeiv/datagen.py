# Reproducible data generation for the simulation studies: ground-truth
# coefficient matrices (exact low-rank or geometric near-low-rank spectra),
# Gaussian covariates and responses, and the two covariate corruption
# channels (additive noise, missing entries).
#
# Seeding contract: every generator is a pure function of (arguments, seed).
# Child streams are derived with mix64, e.g. the harness uses
# child_seed = mix64(base_seed, replication_index, channel_tag); inside a
# dataset the covariate / response-noise / corruption streams use
# mix64(seed, tag) with the fixed tags below. Streams are realized with
# numpy's PCG64, whose seeding by distinct 64-bit keys gives independent
# streams.

from dataclasses import dataclass, field

import numpy as np

from .kernels import as_matrix, singular_values

_MASK64 = (1 << 64) - 1

# sub-stream tags within one dataset seed
TAG_TRUTH = 101
TAG_X = 102
TAG_EPS = 103
TAG_W = 104
TAG_MASK = 105

RANK_TOL = 1e-8


def mix64(*components: int) -> int:
    """Fold integers into one 64-bit seed with splitmix64 finalizer rounds."""
    z = 0x9E3779B97F4A7C15
    for c in components:
        z = (z ^ (int(c) & _MASK64)) & _MASK64
        z = (z * 0xBF58476D1CE4E5B9) & _MASK64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
        z = z ^ (z >> 31)
    return z


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(seed, tag)))


@dataclass(frozen=True)
class CorruptionSpec:
    """Covariate corruption channel: clean, additive noise, or missing data."""

    channel: str
    sigma_w: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        if self.channel not in ("clean", "additive", "missing"):
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.channel == "additive" and self.sigma_w < 0:
            raise ValueError(f"sigma_w must be >= 0, got {self.sigma_w}")
        if self.channel == "missing" and not 0 <= self.rho < 1:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")

    @classmethod
    def clean(cls):
        return cls("clean")

    @classmethod
    def additive(cls, sigma_w: float):
        return cls("additive", sigma_w=sigma_w)

    @classmethod
    def missing(cls, rho: float):
        return cls("missing", rho=rho)

    @property
    def tag(self) -> int:
        # stable integer used in seed derivations
        return {"clean": 0, "additive": 1, "missing": 2}[self.channel]


@dataclass(frozen=True)
class GroundTruth:
    """True coefficient matrix together with its low-rank certificate.

    kind is "exact_rank" (rank member, q = 0, radius = rank) or "lq_ball"
    (singular values satisfy sum sigma_i^q <= radius).
    """

    theta_star: np.ndarray
    kind: str
    rank: int
    q: float
    radius: float


@dataclass(frozen=True)
class ProblemInstance:
    """One generated regression problem, clean and corrupted views included.

    X is kept for diagnostics only; estimators must consume Z (and the
    missing mask) plus Y. mask is a boolean array marking missing entries
    (all False for the clean and additive channels).
    """

    ground_truth: GroundTruth
    n: int
    sigma_x: object           # float scale for isotropic, or SPD d1 x d1 array
    sigma_eps: float
    corruption: CorruptionSpec
    X: np.ndarray
    Z: np.ndarray
    mask: np.ndarray
    Y: np.ndarray
    seed: int = field(repr=False, default=0)


def gen_ground_truth_exact(d1: int, d2: int, r: int, scale: float = 1.0,
                           seed: int = 0) -> GroundTruth:
    """Exact rank-r truth: Theta* = A @ B.T with scaled standard-normal factors."""
    if not 1 <= r <= min(d1, d2):
        raise ValueError(f"rank {r} out of range for {d1}x{d2}")
    rng = _rng(seed, TAG_TRUTH)
    a = scale * rng.standard_normal((d1, r))
    b = scale * rng.standard_normal((d2, r))
    theta = a @ b.T
    return GroundTruth(theta_star=theta, kind="exact_rank", rank=r,
                       q=0.0, radius=float(r))


def gen_ground_truth_lq(d1: int, d2: int, q: float, rq: float,
                        decay: float = 2.0, seed: int = 0) -> GroundTruth:
    """Near-low-rank truth with geometric singular spectrum.

    Spectrum sigma_i = c * decay^-i with c rescaled so sum sigma_i^q equals
    0.95 * rq, composed with Haar-random orthonormal factors. The 5% slack
    keeps the construction strictly inside its own certificate.
    """
    if not 0 < q <= 1:
        raise ValueError(f"q must be in (0, 1], got {q}")
    if rq <= 0:
        raise ValueError(f"rq must be positive, got {rq}")
    if decay <= 1:
        raise ValueError(f"decay must exceed 1, got {decay}")
    d = min(d1, d2)
    raw = decay ** -np.arange(1, d + 1, dtype=float)
    mass = np.sum(raw ** q)
    c = (0.95 * rq / mass) ** (1.0 / q)
    spectrum = c * raw
    if not np.isfinite(spectrum).all() or spectrum.max() <= 0:
        raise ValueError("spectrum underflowed; infeasible (q, rq, decay)")
    rng = _rng(seed, TAG_TRUTH)
    qu, _ = np.linalg.qr(rng.standard_normal((d1, d)))
    qv, _ = np.linalg.qr(rng.standard_normal((d2, d)))
    theta = (qu * spectrum) @ qv.T
    effective_rank = int(np.sum(spectrum > RANK_TOL))
    return GroundTruth(theta_star=theta, kind="lq_ball", rank=effective_rank,
                       q=float(q), radius=float(rq))


def lq_ball_membership(theta, q: float, rq: float) -> bool:
    """Whether the singular values of theta satisfy the lq-ball constraint.

    q = 0 counts singular values above RANK_TOL against rq; q > 0 checks
    sum sigma_i^q <= rq.
    """
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    s = singular_values(theta)
    if q == 0:
        return int(np.sum(s > RANK_TOL)) <= rq
    return float(np.sum(s ** q)) <= rq


def _covariance_factor(sigma_x, d1: int) -> np.ndarray:
    # Lower-triangular factor L with Sigma_x = L @ L.T; rows of X are then
    # standard_normal @ L.T. Floats mean an isotropic scale * identity.
    if np.isscalar(sigma_x):
        if sigma_x <= 0:
            raise ValueError(f"isotropic covariance scale must be positive, got {sigma_x}")
        return np.sqrt(float(sigma_x)) * np.eye(d1)
    cov = as_matrix(sigma_x, "sigma_x")
    if cov.shape != (d1, d1):
        raise ValueError(f"sigma_x must be {d1}x{d1}, got {cov.shape}")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma_x is not symmetric positive definite") from exc


def apply_additive(x, sigma_w: float, seed: int = 0) -> np.ndarray:
    """Observe x through additive noise: Z = X + W, W entries N(0, sigma_w^2)."""
    if sigma_w < 0:
        raise ValueError(f"sigma_w must be >= 0, got {sigma_w}")
    x = as_matrix(x, "x")
    if sigma_w == 0:
        return x.copy()
    rng = _rng(seed, TAG_W)
    return x + sigma_w * rng.standard_normal(x.shape)


def apply_missing(x, rho: float, seed: int = 0):
    """Observe x with entries missing independently with probability rho.

    Missing entries are stored as 0 with the mask bit set; the surrogate
    construction for this channel operates on the zero-filled matrix.
    """
    if not 0 <= rho < 1:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    x = as_matrix(x, "x")
    rng = _rng(seed, TAG_MASK)
    mask = rng.random(x.shape) < rho
    z = np.where(mask, 0.0, x)
    return z, mask


def gen_dataset(gt: GroundTruth, n: int, sigma_x=1.0, sigma_eps: float = 0.0,
                corruption: CorruptionSpec = CorruptionSpec.clean(),
                seed: int = 0) -> ProblemInstance:
    """Draw one problem instance: X, Y = X Theta* + eps, and the corrupted Z."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if sigma_eps < 0:
        raise ValueError(f"sigma_eps must be >= 0, got {sigma_eps}")
    d1, d2 = gt.theta_star.shape
    chol = _covariance_factor(sigma_x, d1)
    x = _rng(seed, TAG_X).standard_normal((n, d1)) @ chol.T
    y = x @ gt.theta_star
    if sigma_eps > 0:
        y = y + sigma_eps * _rng(seed, TAG_EPS).standard_normal((n, d2))
    if corruption.channel == "clean":
        z, mask = x.copy(), np.zeros_like(x, dtype=bool)
    elif corruption.channel == "additive":
        z, mask = apply_additive(x, corruption.sigma_w, seed), np.zeros_like(x, dtype=bool)
    else:
        z, mask = apply_missing(x, corruption.rho, seed)
    return ProblemInstance(ground_truth=gt, n=n, sigma_x=sigma_x,
                           sigma_eps=sigma_eps, corruption=corruption,
                           X=x, Z=z, mask=mask, Y=y, seed=seed)


def regenerate_noise(instance: ProblemInstance) -> np.ndarray:
    """Rebuild the response noise matrix from the instance seed."""
    n, d2 = instance.Y.shape
    if instance.sigma_eps == 0:
        return np.zeros((n, d2))
    return instance.sigma_eps * _rng(instance.seed, TAG_EPS).standard_normal((n, d2))
