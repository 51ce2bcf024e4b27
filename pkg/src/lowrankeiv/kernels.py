# Dense linear-algebra kernels: SVD, singular-value norms, the nuclear-norm
# proximal map (singular value soft-thresholding), Euclidean projection onto
# the nuclear-norm ball, and the low-rank subspace projections used to split
# error matrices.

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-8       # column-Gram deviation allowed for orthonormal factors
FEAS_SLACK = 1e-10     # nuclear-ball feasibility slack after projection


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD A = u @ diag(s) @ v.T with k = min(d1, d2) columns.

    u is d1 x k and v is d2 x k with orthonormal columns; s is nonnegative
    and sorted nonincreasing.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite 2-D float array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def svd(a) -> SvdFactors:
    """Thin SVD of a dense matrix.

    Deterministic up to sign flips / rotations inside degenerate singular
    subspaces; all consumers in this package only use rotation-invariant
    quantities. A zero matrix yields zero singular values with arbitrary
    orthonormal factors.
    """
    arr = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        d1, d2 = arr.shape
        raise np.linalg.LinAlgError(
            f"SVD failed to converge on a {d1}x{d2} input"
        ) from exc
    return SvdFactors(u=u, s=s, v=vt.T)


def singular_values(a) -> np.ndarray:
    arr = as_matrix(a)
    try:
        return np.linalg.svd(arr, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        d1, d2 = arr.shape
        raise np.linalg.LinAlgError(
            f"SVD failed to converge on a {d1}x{d2} input"
        ) from exc


def matrix_norm(a, kind: str) -> float:
    """Matrix norm by kind: 'nuclear', 'operator' or 'frobenius'."""
    arr = as_matrix(a)
    if kind == "frobenius":
        return float(np.linalg.norm(arr, "fro"))
    if kind == "nuclear":
        return float(np.sum(singular_values(arr)))
    if kind == "operator":
        return float(singular_values(arr)[0])
    raise ValueError(f"unknown norm kind {kind!r}")


def trace_inner(a, b) -> float:
    """Trace inner product trace(A^T B) = sum_ij A_ij * B_ij."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def singular_value_soft_threshold(a, t: float) -> np.ndarray:
    """Soft-threshold the singular values of a by t >= 0.

    This is the exact proximal map of t * nuclear norm: the unique minimizer
    of 0.5 * ||Theta - a||_F^2 + t * ||Theta||_*.
    """
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    arr = as_matrix(a)
    if t == 0:
        return arr.copy()
    f = svd(arr)
    shrunk = np.maximum(f.s - t, 0.0)
    return (f.u * shrunk) @ f.v.T


def _project_l1_sorted(s: np.ndarray, radius: float) -> np.ndarray:
    # Euclidean projection of a nonincreasing nonnegative vector onto the
    # l1 ball of the given radius, by the sorted cumulative-sum rule.
    if s.sum() <= radius:
        return s.copy()
    cumsum = np.cumsum(s)
    k = np.arange(1, len(s) + 1)
    shifts = (cumsum - radius) / k
    rho = int(np.max(np.nonzero(s > shifts)[0])) + 1
    theta = (cumsum[rho - 1] - radius) / rho
    return np.maximum(s - theta, 0.0)


def project_nuclear_ball(a, omega: float) -> np.ndarray:
    """Euclidean (Frobenius) projection onto {Theta : ||Theta||_* <= omega}.

    Projects the singular-value vector onto the l1 ball of radius omega and
    recomposes with the original singular vectors. A feasible input is
    returned unchanged.
    """
    if omega < 0:
        raise ValueError(f"radius must be nonnegative, got {omega}")
    arr = as_matrix(a)
    if omega == 0:
        return np.zeros_like(arr)
    f = svd(arr)
    if f.s.sum() <= omega:
        return arr.copy()
    projected = _project_l1_sorted(f.s, omega)
    return (f.u * projected) @ f.v.T


def _check_orthonormal(m: np.ndarray, name: str) -> None:
    gram = m.T @ m
    if np.max(np.abs(gram - np.eye(m.shape[1]))) > ORTHO_TOL:
        raise ValueError(f"{name} does not have orthonormal columns")


def project_subspace_A(theta, ur, vr) -> np.ndarray:
    """Project onto the span subspace: Ur Ur^T Theta Vr Vr^T."""
    theta = as_matrix(theta, "theta")
    ur = as_matrix(ur, "ur")
    vr = as_matrix(vr, "vr")
    _check_orthonormal(ur, "ur")
    _check_orthonormal(vr, "vr")
    return ur @ (ur.T @ theta @ vr) @ vr.T


def project_subspace_B(theta, ur, vr) -> np.ndarray:
    """Project onto the complement subspace: (I - Ur Ur^T) Theta (I - Vr Vr^T)."""
    theta = as_matrix(theta, "theta")
    ur = as_matrix(ur, "ur")
    vr = as_matrix(vr, "vr")
    _check_orthonormal(ur, "ur")
    _check_orthonormal(vr, "vr")
    left = theta - ur @ (ur.T @ theta)
    return left - (left @ vr) @ vr.T
