# Constrained proximal gradient solver for the nuclear-norm regularized,
# possibly nonconvex surrogate objective
#     Psi(Theta) = 0.5 <gamma_hat Theta, Theta> - <upsilon_hat, Theta>
#                  + lam * ||Theta||_*
# over the nuclear ball ||Theta||_* <= omega. Each step forms the gradient
# point G = Theta - grad / v, soft-thresholds its singular values by lam / v,
# and falls back to the Euclidean nuclear-ball projection of G when the
# thresholded candidate is infeasible. The side constraint is what guarantees
# a minimizer exists when gamma_hat is indefinite.

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    as_matrix,
    matrix_norm,
    project_nuclear_ball,
    singular_value_soft_threshold,
)
from .surrogate import SurrogatePair

FEAS_TOL = 1e-10


class SolverDivergenceError(RuntimeError):
    """Raised when iterates produce a non-finite objective."""

    def __init__(self, iteration: int, last_objective: float):
        super().__init__(
            f"non-finite objective at iteration {iteration} "
            f"(last finite value {last_objective!r})"
        )
        self.iteration = iteration
        self.last_objective = last_objective


@dataclass(frozen=True)
class SolverConfig:
    """Tuning for one solve: lam (regularization), omega (nuclear-ball
    radius), v (inverse step size), and the stopping rule.

    Stopping is a relative objective-change criterion; the theoretical
    iteration count depends on unknown constants, so it is reported by the
    diagnostics instead of used here. lam = 0 is allowed for the degenerate
    unregularized step.
    """

    lam: float
    omega: float
    v: float
    max_iters: int = 2000
    stop_tol: float = 1e-9
    trace_every: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not self.omega > 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not self.v > 0:
            raise ValueError(f"v must be > 0, got {self.v}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.stop_tol > 0:
            raise ValueError(f"stop_tol must be > 0, got {self.stop_tol}")
        if self.trace_every < 1:
            raise ValueError(f"trace_every must be >= 1, got {self.trace_every}")


@dataclass
class SolverTrace:
    """Per-logged-iteration scalars; always includes the first and final
    iterate. ref_distances measures against the supplied reference matrix,
    or against the final iterate when none was supplied."""

    iterations: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    nuclear_norms: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    ref_distances: list = field(default_factory=list)

    def __len__(self):
        return len(self.iterations)


@dataclass
class SolverResult:
    theta_hat: np.ndarray
    iterations_run: int
    converged: bool
    final_objective: float
    trace: SolverTrace
    config: SolverConfig
    projected_start: bool = False


def objective(pair: SurrogatePair, lam: float, theta) -> float:
    theta = as_matrix(theta, "theta")
    _check_dims(pair, theta)
    # overflow here is the divergence signal; solve() aborts on non-finite
    with np.errstate(over="ignore", invalid="ignore"):
        quad = 0.5 * float(np.sum((pair.gamma_hat @ theta) * theta))
        lin = float(np.sum(pair.upsilon_hat * theta))
    return quad - lin + lam * matrix_norm(theta, "nuclear")


def loss_gradient(pair: SurrogatePair, theta) -> np.ndarray:
    theta = as_matrix(theta, "theta")
    _check_dims(pair, theta)
    return pair.gamma_hat @ theta - pair.upsilon_hat


def _check_dims(pair: SurrogatePair, theta: np.ndarray) -> None:
    if theta.shape != (pair.d1, pair.d2):
        raise ValueError(
            f"theta must be {pair.d1}x{pair.d2}, got {theta.shape}"
        )


def prox_step(pair: SurrogatePair, cfg: SolverConfig, theta_t) -> np.ndarray:
    """One constrained proximal gradient step from a feasible iterate.

    (1) soft-threshold the singular values of G = theta_t - grad / v by
    lam / v; (2) keep that candidate if it is feasible; (3) otherwise return
    the Euclidean projection of G onto the nuclear ball.
    """
    theta_t = as_matrix(theta_t, "theta_t")
    g = theta_t - loss_gradient(pair, theta_t) / cfg.v
    candidate = singular_value_soft_threshold(g, cfg.lam / cfg.v)
    if matrix_norm(candidate, "nuclear") <= cfg.omega:
        return candidate
    return project_nuclear_ball(g, cfg.omega)


def solve(pair: SurrogatePair, cfg: SolverConfig, theta0=None,
          reference=None) -> SolverResult:
    """Run the constrained proximal gradient iteration to tolerance.

    Stops when the objective change falls below
    stop_tol * max(1, |objective|) or after max_iters steps. An infeasible
    starting point is projected onto the ball and flagged on the result.
    Every iterate (hence every traced row) is feasible by construction.
    """
    if theta0 is None:
        theta = np.zeros((pair.d1, pair.d2))
    else:
        theta = as_matrix(theta0, "theta0").copy()
        _check_dims(pair, theta)
    projected_start = False
    if matrix_norm(theta, "nuclear") > cfg.omega + FEAS_TOL:
        theta = project_nuclear_ball(theta, cfg.omega)
        projected_start = True

    track_final = reference is None
    if reference is not None:
        reference = as_matrix(reference, "reference")
        _check_dims(pair, reference)

    trace = SolverTrace()
    snapshots = []  # logged iterates, only kept to fill distances-to-final

    def log(t, psi, theta_cur, step_norm):
        trace.iterations.append(t)
        trace.objectives.append(psi)
        trace.nuclear_norms.append(matrix_norm(theta_cur, "nuclear"))
        trace.step_norms.append(step_norm)
        if track_final:
            snapshots.append(theta_cur.copy())
        else:
            trace.ref_distances.append(
                float(np.linalg.norm(theta_cur - reference, "fro"))
            )

    psi = objective(pair, cfg.lam, theta)
    if not math.isfinite(psi):
        raise SolverDivergenceError(0, psi)
    log(0, psi, theta, 0.0)

    converged = False
    t = 0
    for t in range(1, cfg.max_iters + 1):
        theta_next = prox_step(pair, cfg, theta)
        psi_next = objective(pair, cfg.lam, theta_next)
        if not math.isfinite(psi_next):
            raise SolverDivergenceError(t, psi)
        step_norm = float(np.linalg.norm(theta_next - theta, "fro"))
        converged = abs(psi_next - psi) <= cfg.stop_tol * max(1.0, abs(psi))
        theta, psi = theta_next, psi_next
        if t % cfg.trace_every == 0 or converged or t == cfg.max_iters:
            log(t, psi, theta, step_norm)
        if converged:
            break

    if track_final:
        final = theta
        trace.ref_distances = [
            float(np.linalg.norm(snap - final, "fro")) for snap in snapshots
        ]

    return SolverResult(theta_hat=theta, iterations_run=t, converged=converged,
                        final_objective=psi, trace=trace, config=cfg,
                        projected_start=projected_start)


def relative_error(theta_hat, theta_star) -> float:
    """||theta_hat - theta_star||_F / ||theta_star||_F."""
    theta_hat = as_matrix(theta_hat, "theta_hat")
    theta_star = as_matrix(theta_star, "theta_star")
    denom = np.linalg.norm(theta_star, "fro")
    if denom == 0:
        raise ValueError("theta_star must be nonzero")
    return float(np.linalg.norm(theta_hat - theta_star, "fro") / denom)


def lambda_rule_sqrt(d1: int, d2: int, n: int) -> float:
    """Default regularization level sqrt(max(d1, d2) / n)."""
    return math.sqrt(max(d1, d2) / n)


def omega_rule_truth(theta_star, slack: float = 1.1) -> float:
    """Simulation-mode ball radius: slack * nuclear norm of the truth."""
    return slack * matrix_norm(theta_star, "nuclear")


def step_constant_from_sigma_x(sigma_x, d1: int) -> float:
    """Protocol inverse step size 2 * lambda_max(Sigma_x)."""
    if np.isscalar(sigma_x):
        return 2.0 * float(sigma_x)
    cov = as_matrix(sigma_x, "sigma_x")
    if cov.shape != (d1, d1):
        raise ValueError(f"sigma_x must be {d1}x{d1}, got {cov.shape}")
    return 2.0 * float(np.linalg.eigvalsh(0.5 * (cov + cov.T))[-1])


def step_constant_from_gamma(gamma_hat) -> float:
    """Data-driven inverse step size 2 * max(|eig_min|, eig_max) of gamma_hat.

    Heuristic stand-in for when Sigma_x is unknown.
    """
    g = as_matrix(gamma_hat, "gamma_hat")
    eigs = np.linalg.eigvalsh(0.5 * (g + g.T))
    return 2.0 * float(max(abs(eigs[0]), abs(eigs[-1])))
