"""Block-coordinate estimation of the kernel expansion and covariate weights.

The penalized objective over coefficient functions ``u = (u_1..u_n)`` and
nonnegative covariate weights ``theta = (theta_1..theta_p)`` is

    q(u, theta) = sum_i || y_i - sum_l sum_j theta_l g_l(x_j, x_i) T u_j ||^2
                + lambda1 * sum_l theta_l sum_{i,j} g_l(x_i, x_j) <T u_i, u_j>
                + lambda2 * sum_l theta_l

with all inner products taken in the quadrature L2 space of the response
grid.  The outer loop alternates two exact block solves until the relative
objective change drops below tolerance:

- ``solve_u``: with theta fixed the problem is ridge regression in the
  product space.  Writing G for the combined Gram matrix and (delta_q, w_q)
  for the operator eigenpairs, the solution lies in span{w_q} and follows
  from the joint eigendecomposition: with G = V diag(beta) V^T, the
  coefficient of u on (v_p, w_q) is <.,.>-projected data scaled by
  1 / (beta_p delta_q + lambda1).

- ``solve_theta_nncg``: with u fixed the objective is a convex quadratic
  over the nonnegative orthant, minimized by a projected conjugate-gradient
  method with modified Polak-Ribiere-Polyak directions, a boundary rule for
  active coordinates, and a geometric step ladder with sufficient-decrease
  test ``h(next) <= h(cur) - alpha^2 ||d||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import SolverNumericalError, ValidationError
from .funcspace import FunctionSample, values_matrix
from .kernels import FiniteRankOperator, KernelSpec, combine_gram, gram_matrices

__all__ = [
    "FitConfig",
    "SolverState",
    "ThetaQuadratic",
    "ThetaSolveResult",
    "objective_q",
    "solve_u",
    "build_theta_quadratic",
    "solve_theta_nncg",
    "fit_bcd",
]

# Relative slack allowed when validating that objective traces never increase.
TRACE_SLACK = 1e-10

# Combined-Gram eigenvalues below this fraction of the largest are zeroed
# before forming 1 / (beta * delta + lambda1).
EIGENVALUE_CLIP = 1e-12

# KKT tolerance certified for solve_theta_nncg output, and the tighter
# internal gate the stopping rule aims for (first-order error in the
# gradient maps to weight error through twice the smallest curvature, so
# the gate leaves headroom).
KKT_TOL = 1e-6
_KKT_GATE = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters and stopping rules for the block-coordinate fit."""

    lambda1: float = 0.1
    lambda2: float = 0.4
    bcd_tol: float = 1e-6
    bcd_max_iters: int = 3000
    cg_tol: float = 1e-8
    cg_max_iters: int = 2000
    backtrack_rho: float = 0.5
    backtrack_max: int = 50
    theta_init: str | tuple[float, ...] = "ones"

    def __post_init__(self) -> None:
        if not (self.lambda1 > 0):
            raise ValidationError("lambda1 must be > 0")
        if self.lambda2 < 0:
            raise ValidationError("lambda2 must be >= 0")
        for name in ("bcd_tol", "cg_tol"):
            if not (getattr(self, name) > 0):
                raise ValidationError(f"{name} must be > 0")
        for name in ("bcd_max_iters", "cg_max_iters", "backtrack_max"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not (0.0 < self.backtrack_rho < 1.0):
            raise ValidationError("backtrack_rho must lie in (0, 1)")
        if not isinstance(self.theta_init, str):
            arr = np.asarray(self.theta_init, dtype=np.float64)
            if arr.ndim != 1 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValidationError("theta_init must be a nonnegative vector")
            object.__setattr__(self, "theta_init", tuple(float(v) for v in arr))
        elif self.theta_init != "ones":
            raise ValidationError('theta_init must be "ones" or a nonnegative vector')

    def initial_theta(self, p: int) -> np.ndarray:
        if isinstance(self.theta_init, str):
            return np.ones(p)
        arr = np.asarray(self.theta_init, dtype=np.float64)
        if arr.size != p:
            raise ValidationError(
                f"theta_init has length {arr.size}, expected {p}"
            )
        return arr.copy()


@dataclass(frozen=True)
class ThetaQuadratic:
    """The weight subproblem as a convex quadratic, constant term dropped.

    ``h(theta) - const = theta^T Ktilde theta + (Dtilde + lambda2 * 1)^T theta``
    with gradient ``Dtilde + 2 Ktilde theta + lambda2 * 1``.
    """

    ktilde: np.ndarray
    dtilde: np.ndarray
    lambda2: float

    def __post_init__(self) -> None:
        k = np.ascontiguousarray(self.ktilde, dtype=np.float64)
        d = np.ascontiguousarray(self.dtilde, dtype=np.float64).ravel()
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] != d.size:
            raise ValidationError("ktilde must be square and match dtilde length")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(d))):
            raise SolverNumericalError("theta quadratic contains non-finite entries")
        scale = np.max(np.abs(k)) if k.size else 0.0
        if np.max(np.abs(k - k.T)) > 1e-10 * max(1.0, scale):
            raise ValidationError("ktilde must be symmetric")
        eigs = np.linalg.eigvalsh(0.5 * (k + k.T))
        if eigs[0] < -1e-8 * max(eigs[-1], 0.0):
            raise ValidationError("ktilde must be positive semidefinite")
        k.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "ktilde", k)
        object.__setattr__(self, "dtilde", d)

    @property
    def p(self) -> int:
        return int(self.dtilde.size)

    def value(self, theta: np.ndarray) -> float:
        """Objective up to the dropped constant."""
        lin = self.dtilde + self.lambda2
        return float(theta @ (self.ktilde @ theta) + lin @ theta)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return self.dtilde + 2.0 * (self.ktilde @ theta) + self.lambda2


@dataclass(frozen=True)
class ThetaSolveResult:
    """Output of the nonnegativity-constrained quadratic solve."""

    theta: np.ndarray
    converged: bool
    stalled: bool
    iterations: int
    objective: float
    # (alpha, ||d||^2, h before, h after) per accepted step
    steps: tuple[tuple[float, float, float, float], ...] = ()


@dataclass(frozen=True, eq=False)
class SolverState:
    """Fitted blocks with the per-iteration objective trace."""

    u: tuple[FunctionSample, ...]
    theta: np.ndarray
    objective_trace: tuple[float, ...]
    converged: bool
    iterations: int

    def __post_init__(self) -> None:
        th = np.ascontiguousarray(self.theta, dtype=np.float64).ravel()
        if np.any(th < 0) or np.any(np.signbit(th)):
            raise ValidationError("theta must be nonnegative with no -0 entries")
        trace = tuple(float(v) for v in self.objective_trace)
        for prev, cur in zip(trace, trace[1:]):
            if cur > prev + TRACE_SLACK * max(1.0, abs(prev)):
                raise ValidationError(
                    f"objective trace increased from {prev!r} to {cur!r}"
                )
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "u", tuple(self.u))
        object.__setattr__(self, "objective_trace", trace)


def _as_theta(theta: Sequence[float], p: int) -> np.ndarray:
    arr = np.asarray(theta, dtype=np.float64).ravel()
    if arr.size != p:
        raise ValidationError(f"theta has length {arr.size}, expected {p}")
    if not np.all(np.isfinite(arr)):
        raise SolverNumericalError("theta contains non-finite entries")
    if np.any(arr < 0):
        raise ValidationError("theta entries must be nonnegative")
    return arr


def _normalize_specs(
    specs: KernelSpec | Sequence[KernelSpec], p: int
) -> tuple[KernelSpec, ...]:
    if isinstance(specs, KernelSpec):
        return (specs,) * p
    out = tuple(specs)
    if len(out) != p:
        raise ValidationError(f"got {len(out)} kernel specs for {p} covariates")
    return out


class Workspace:
    """Quantities shared by every solver step for one dataset.

    Precomputes the covariate Gram matrices, the eigenfunction value matrix
    and its (near-identity) quadrature Gram, and the response projections, so
    repeated block updates cost dense linear algebra on small matrices only.
    """

    def __init__(
        self,
        data: Dataset,
        specs: KernelSpec | Sequence[KernelSpec],
        operator: FiniteRankOperator,
    ) -> None:
        if operator.grid != data.response_grid:
            raise ValidationError("operator grid must equal the response grid")
        self.data = data
        self.specs = _normalize_specs(specs, data.p)
        self.operator = operator
        self.grid = data.response_grid
        self.wts = self.grid.weights
        self.y_values = values_matrix(data.responses)  # (n, N)
        self.grams = gram_matrices(self.specs, data.covariates)  # p x (n, n)
        for l, g in enumerate(self.grams):
            if not np.all(np.isfinite(g)):
                raise SolverNumericalError(
                    f"covariate {l + 1}: Gram matrix has non-finite entries"
                )
        self.basis = operator.matrix  # (kappa, N)
        self.delta = operator.eigenvalues  # (kappa,)
        self.basis_gram = operator.quadrature_gram()  # (kappa, kappa)
        self.y_proj = self.project(self.y_values)  # (n, kappa)
        self.y_norms_sq = (self.y_values * self.y_values) @ self.wts  # (n,)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def p(self) -> int:
        return self.data.p

    def project(self, values: np.ndarray) -> np.ndarray:
        """Eigenfunction coefficients <w_q, row> for each row."""
        return (values * self.wts) @ self.basis.T

    def solve_u_values(self, theta: np.ndarray, lambda1: float) -> np.ndarray:
        """Exact minimizer of the u block on the eigenfunction span.

        Returns the (n, N) value matrix of the coefficient functions.
        """
        if not (lambda1 > 0):
            raise ValidationError("lambda1 must be > 0")
        gram = combine_gram(self.grams, theta)
        try:
            beta, vecs = np.linalg.eigh(gram)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise SolverNumericalError(f"Gram eigendecomposition failed: {exc}")
        # scrub eigensolver sign noise; lambda1 > 0 keeps denominators safe
        lam_max = beta[-1] if beta.size else 0.0
        beta = np.where(beta < EIGENVALUE_CLIP * max(lam_max, 0.0), 0.0, beta)
        denom = np.outer(beta, self.delta) + lambda1
        coeff = vecs @ ((vecs.T @ self.y_proj) / denom)  # (n, kappa)
        return coeff @ self.basis

    def u_samples(self, u_values: np.ndarray) -> tuple[FunctionSample, ...]:
        return tuple(FunctionSample(self.grid, row) for row in u_values)

    def component_coeffs(self, u_coeffs: np.ndarray) -> list[np.ndarray]:
        """Per-covariate coefficients of ``sum_j g_l(x_j, x_i) T u_j``.

        Entry ``l`` is the (n, kappa) matrix ``G_l @ (C * delta)`` where C
        holds the eigenfunction coefficients of u.
        """
        tu = u_coeffs * self.delta
        return [g @ tu for g in self.grams]

    def theta_quadratic(
        self,
        u_coeffs: np.ndarray,
        components: list[np.ndarray],
        lambda1: float,
        lambda2: float,
    ) -> ThetaQuadratic:
        p = self.p
        ktilde = np.empty((p, p))
        # cross terms go through the eigenfunction quadrature Gram so the
        # quadratic reproduces grid-quadrature inner products exactly
        smoothed = [e @ self.basis_gram for e in components]
        for l in range(p):
            for h in range(l, p):
                v = float(np.sum(smoothed[l] * components[h]))
                ktilde[l, h] = v
                ktilde[h, l] = v
        z = lambda1 * u_coeffs - 2.0 * self.y_proj
        dtilde = np.array([float(np.sum(z * e)) for e in components])
        return ThetaQuadratic(ktilde=ktilde, dtilde=dtilde, lambda2=lambda2)

    def objective(
        self,
        theta: np.ndarray,
        u_coeffs: np.ndarray,
        components: list[np.ndarray],
        lambda1: float,
        lambda2: float,
    ) -> float:
        fitted_coeffs = np.einsum("l,lnk->nk", theta, np.stack(components))
        residual = self.y_values - fitted_coeffs @ self.basis
        data_term = float(((residual * residual) @ self.wts).sum())
        penalty = sum(
            float(t) * float(np.sum(e * u_coeffs))
            for t, e in zip(theta, components)
        )
        return data_term + lambda1 * penalty + lambda2 * float(theta.sum())


def solve_u(
    theta: Sequence[float],
    data: Dataset,
    specs: KernelSpec | Sequence[KernelSpec],
    operator: FiniteRankOperator,
    lambda1: float,
) -> list[FunctionSample]:
    """Minimize the objective over the coefficient functions with theta fixed."""
    ws = Workspace(data, specs, operator)
    th = _as_theta(theta, ws.p)
    return list(ws.u_samples(ws.solve_u_values(th, lambda1)))


def build_theta_quadratic(
    u: Sequence[FunctionSample],
    data: Dataset,
    specs: KernelSpec | Sequence[KernelSpec],
    operator: FiniteRankOperator,
    lambda1: float,
    lambda2: float,
) -> ThetaQuadratic:
    """Reduce the weight subproblem to its quadratic normal form."""
    ws = Workspace(data, specs, operator)
    if len(u) != ws.n:
        raise ValidationError(f"u has {len(u)} entries, expected {ws.n}")
    for f in u:
        if f.grid != ws.grid:
            raise ValidationError("u samples must live on the response grid")
    coeffs = ws.project(values_matrix(u))
    return ws.theta_quadratic(coeffs, ws.component_coeffs(coeffs), lambda1, lambda2)


def objective_q(
    u: Sequence[FunctionSample],
    theta: Sequence[float],
    data: Dataset,
    specs: KernelSpec | Sequence[KernelSpec],
    operator: FiniteRankOperator,
    lambda1: float,
    lambda2: float,
) -> float:
    """Evaluate the penalized objective at (u, theta)."""
    ws = Workspace(data, specs, operator)
    th = _as_theta(theta, ws.p)
    if len(u) != ws.n:
        raise ValidationError(f"u has {len(u)} entries, expected {ws.n}")
    for f in u:
        if f.grid != ws.grid:
            raise ValidationError("u samples must live on the response grid")
    u_values = values_matrix(u)
    coeffs = ws.project(u_values)
    components = ws.component_coeffs(coeffs)
    # the data term must see u exactly as given, including any component
    # outside the eigenfunction span (which the operator annihilates)
    fitted = np.einsum("l,lnk->nk", th, np.stack(components)) @ ws.basis
    residual = ws.y_values - fitted
    data_term = float(((residual * residual) @ ws.wts).sum())
    penalty = sum(
        float(t) * float(np.sum(e * coeffs)) for t, e in zip(th, components)
    )
    return data_term + lambda1 * penalty + lambda2 * float(th.sum())


def _kkt_satisfied(theta: np.ndarray, grad: np.ndarray, tol: float) -> bool:
    gnorm = float(np.linalg.norm(grad))
    active = theta == 0.0
    if np.any(grad[active] < -tol):
        return False
    return bool(np.all(np.abs(grad[~active]) <= tol * (1.0 + gnorm)))


def solve_theta_nncg(
    quad: ThetaQuadratic,
    theta0: Sequence[float],
    cfg: FitConfig,
) -> ThetaSolveResult:
    """Minimize the weight quadratic over the nonnegative orthant.

    Directions follow the modified Polak-Ribiere-Polyak recursion on the
    inactive coordinates and the sign rule on active ones; the recursion
    restarts to projected steepest descent when the active set changes or
    the direction fails to descend.  Step sizes come from a geometric
    ladder; a trial point is projected onto the orthant, which lands
    boundary coordinates on exact zeros, and is accepted under the
    sufficient-decrease test ``h(trial) <= h(theta) - alpha^2 ||d||^2``.

    On regular convergence the output satisfies first-order optimality:
    nonnegative gradient entries on the boundary and vanishing ones in the
    interior (both within ``KKT_TOL``).  If backtracking cannot find an
    admissible step the current iterate is returned with ``stalled`` set,
    which on a convex quadratic only happens at numerical stationarity.
    """
    theta = _as_theta(theta0, quad.p)
    h_cur = quad.value(theta)
    grad_prev: np.ndarray | None = None
    dir_prev: np.ndarray | None = None
    inactive_prev: np.ndarray | None = None
    steps: list[tuple[float, float, float, float]] = []
    converged = False
    stalled = False
    iterations = 0
    stall_streak = 0
    alphas = cfg.backtrack_rho ** np.arange(cfg.backtrack_max)

    for iterations in range(1, cfg.cg_max_iters + 1):
        grad = quad.gradient(theta)
        if not np.all(np.isfinite(grad)):
            raise SolverNumericalError("non-finite gradient in the theta solve")
        active = theta == 0.0
        inactive = ~active

        direction = np.zeros_like(theta)
        push = active & (grad <= 0.0)
        direction[push] = -grad[push]
        if np.any(inactive):
            prev_norm_sq = (
                float(grad_prev @ grad_prev) if grad_prev is not None else 0.0
            )
            same_set = (
                inactive_prev is not None and bool(np.all(inactive == inactive_prev))
            )
            if dir_prev is not None and same_set and prev_norm_sq > 0.0:
                g_in = grad[inactive]
                gamma = g_in - grad_prev[inactive]
                beta_c = float(g_in @ gamma) / prev_norm_sq
                theta_c = float(g_in @ dir_prev[inactive]) / prev_norm_sq
                direction[inactive] = (
                    -g_in + beta_c * dir_prev[inactive] - theta_c * gamma
                )
            else:
                direction[inactive] = -grad[inactive]
            if float(grad @ direction) >= 0.0:
                # not a descent direction: restart to projected steepest descent
                direction[inactive] = -grad[inactive]

        if not np.any(direction != 0.0):
            converged = True  # exact first-order point
            break

        # guard against runaway recursion directions, which drive the
        # admissible step to zero; the bound is loose so that steps can
        # still overshoot the boundary and land coordinates on exact zeros
        g_norm = float(np.linalg.norm(grad))
        d_norm = float(np.linalg.norm(direction))
        if d_norm > 1e3 * g_norm:
            direction *= 1e3 * g_norm / d_norm

        # scan the geometric step ladder in blocks; the accepted step is the
        # largest admissible one, exactly as a sequential scan finds
        dir_norm_sq = float(direction @ direction)
        lin = quad.dtilde + quad.lambda2
        j = -1
        for start in range(0, cfg.backtrack_max, 16):
            block = alphas[start : start + 16]
            raw = theta[None, :] + block[:, None] * direction[None, :]
            trials = np.where(raw > 0.0, raw, 0.0)
            h_vals = (
                np.einsum("bi,ij,bj->b", trials, quad.ktilde, trials)
                + trials @ lin
            )
            admissible = h_vals <= h_cur - (block * block) * dir_norm_sq
            if np.any(admissible):
                k = int(np.argmax(admissible))
                j = start + k
                alpha = float(block[k])
                trial = trials[k]
                h_trial = float(h_vals[k])
                break
        if j < 0:
            stalled = True
            break

        steps.append((alpha, dir_norm_sq, h_cur, h_trial))
        if abs(h_trial - h_cur) <= 1e-15 * (1.0 + abs(h_cur)):
            # progress at roundoff level: restart the recursion; several
            # fruitless restarts in a row mean numerical stationarity
            stall_streak += 1
            grad_prev = dir_prev = inactive_prev = None
        else:
            stall_streak = 0
            grad_prev = grad
            dir_prev = direction
            inactive_prev = inactive
        small_change = abs(h_trial - h_cur) <= cfg.cg_tol * abs(h_cur)
        theta = trial
        h_cur = h_trial
        if small_change and _kkt_satisfied(theta, quad.gradient(theta), _KKT_GATE):
            converged = True
            break
        if stall_streak >= 3:
            if _kkt_satisfied(theta, quad.gradient(theta), KKT_TOL):
                converged = True
            else:
                stalled = True
            break

    return ThetaSolveResult(
        theta=theta,
        converged=converged,
        stalled=stalled,
        iterations=iterations,
        objective=h_cur,
        steps=tuple(steps),
    )


def fit_bcd(
    data: Dataset,
    specs: KernelSpec | Sequence[KernelSpec],
    operator: FiniteRankOperator,
    cfg: FitConfig | None = None,
) -> SolverState:
    """Alternate the exact u solve and the constrained theta solve.

    Records the objective after every full iteration and stops when its
    relative change drops below ``cfg.bcd_tol`` (or at ``bcd_max_iters``,
    reported through ``converged=False``).
    """
    cfg = cfg or FitConfig()
    ws = Workspace(data, specs, operator)
    theta = cfg.initial_theta(ws.p)
    trace: list[float] = []
    u_values = np.zeros((ws.n, ws.grid.node_count))
    converged = False
    iterations = 0

    for iterations in range(1, cfg.bcd_max_iters + 1):
        u_values = ws.solve_u_values(theta, cfg.lambda1)
        u_coeffs = ws.project(u_values)
        components = ws.component_coeffs(u_coeffs)
        quad = ws.theta_quadratic(u_coeffs, components, cfg.lambda1, cfg.lambda2)
        theta = solve_theta_nncg(quad, theta, cfg).theta
        q_now = ws.objective(theta, u_coeffs, components, cfg.lambda1, cfg.lambda2)
        trace.append(q_now)
        if iterations >= 2:
            q_prev = trace[-2]
            if abs(q_now - q_prev) <= cfg.bcd_tol * abs(q_prev):
                converged = True
                break

    return SolverState(
        u=ws.u_samples(u_values),
        theta=theta,
        objective_trace=tuple(trace),
        converged=converged,
        iterations=iterations,
    )
