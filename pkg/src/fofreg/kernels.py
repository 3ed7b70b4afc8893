"""Scalar kernels, Gram matrices, and finite-rank operators on the response space.

The regression machinery uses operator-valued kernels of the separable form
``K_l(w, z) = g_l(w, z) * T``: a scalar kernel ``g_l`` between covariate
samples times one fixed finite-rank self-adjoint operator ``T`` acting on
response-space functions.  ``T`` is stored spectrally, as positive
eigenvalues with quadrature-orthonormal eigenfunctions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ResolutionError, ValidationError
from .funcspace import FunctionSample, Grid, require_same_grid, values_matrix

__all__ = [
    "KERNEL_FAMILIES",
    "ORTHONORMALITY_TOL",
    "KernelSpec",
    "FiniteRankOperator",
    "scalar_kernel",
    "kernel_values",
    "gram_matrices",
    "combine_gram",
    "operator_apply",
    "make_sine_projection",
]

KERNEL_FAMILIES = ("gaussian", "cauchy", "exponential")

# Maximum allowed deviation of <w_q, w_r> from the identity at construction.
ORTHONORMALITY_TOL = 1e-6


@dataclass(frozen=True)
class KernelSpec:
    """A scalar kernel family with its bandwidth.

    Families (``d2`` is the squared quadrature L2 distance, ``s`` the
    bandwidth):

    - ``gaussian``:     exp(-d2 / s^2)
    - ``cauchy``:       1 / (1 + d2 / s^2)
    - ``exponential``:  exp(-sqrt(d2) / s^2)  (unsquared distance over s^2)
    """

    family: str
    bandwidth: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise ValidationError(
                f"unknown kernel family {self.family!r}; "
                f"expected one of {KERNEL_FAMILIES}"
            )
        if not (self.bandwidth > 0):
            raise ValidationError("kernel bandwidth must be > 0")


def kernel_values(spec: KernelSpec, d2):
    """Evaluate the kernel on squared distances (scalar or array, >= 0)."""
    s2 = spec.bandwidth * spec.bandwidth
    if spec.family == "gaussian":
        return np.exp(-d2 / s2)
    if spec.family == "cauchy":
        return 1.0 / (1.0 + d2 / s2)
    return np.exp(-np.sqrt(d2) / s2)


def scalar_kernel(spec: KernelSpec, x: FunctionSample, z: FunctionSample) -> float:
    """Kernel value between two covariate samples on a shared grid."""
    require_same_grid(x, z)
    diff = x.values - z.values
    d2 = float(np.dot(x.grid.weights, diff * diff))
    return float(kernel_values(spec, max(d2, 0.0)))


def _pairwise_sq_dists(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Symmetric matrix of squared quadrature distances between rows."""
    vw = values * weights
    sq = np.einsum("ij,ij->i", vw, values)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (vw @ values.T)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def gram_matrices(
    specs: Sequence[KernelSpec],
    covariates: Sequence[Sequence[FunctionSample]],
) -> list[np.ndarray]:
    """Per-covariate kernel Gram matrices.

    ``covariates`` holds p lists of n samples; matrix ``l`` has entry
    ``(i, j) = g_l(x_i, x_j)``.  Each output is exactly symmetric with unit
    diagonal.
    """
    if len(covariates) == 0 or len(specs) != len(covariates):
        raise ValidationError(
            f"need one kernel spec per covariate, got {len(specs)} specs "
            f"and {len(covariates)} covariates"
        )
    n = len(covariates[0])
    if n == 0:
        raise ValidationError("covariate lists must be non-empty")
    grams = []
    for l, (spec, samples) in enumerate(zip(specs, covariates)):
        if len(samples) != n:
            raise ValidationError(
                f"covariate {l + 1} has {len(samples)} samples, expected {n}"
            )
        for s in samples[1:]:
            require_same_grid(samples[0], s)
        d2 = _pairwise_sq_dists(values_matrix(samples), samples[0].grid.weights)
        grams.append(np.asarray(kernel_values(spec, d2)))
    return grams


def combine_gram(grams: Sequence[np.ndarray], theta: Sequence[float]) -> np.ndarray:
    """Nonnegative combination ``sum_l theta[l] * grams[l]``."""
    th = np.asarray(theta, dtype=np.float64)
    if th.ndim != 1 or th.size != len(grams):
        raise ValidationError("theta length must match the number of matrices")
    if np.any(th < 0):
        raise ValidationError("theta entries must be nonnegative")
    shape = grams[0].shape
    for g in grams:
        if g.shape != shape:
            raise ValidationError("Gram matrices must share one shape")
    return np.einsum("l,lij->ij", th, np.stack(grams))


@dataclass(frozen=True, eq=False)
class FiniteRankOperator:
    """Finite-rank self-adjoint operator stored as orthonormal eigenpairs.

    Applies as ``T u = sum_q eigenvalues[q] * <w_q, u> * w_q`` where the
    eigenfunctions ``w_q`` live on ``grid`` and are orthonormal under the
    grid quadrature (validated at construction to ``ORTHONORMALITY_TOL``).
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: tuple[FunctionSample, ...]
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        ev = np.ascontiguousarray(self.eigenvalues, dtype=np.float64).ravel()
        if ev.size < 1:
            raise ValidationError("operator needs at least one eigenpair")
        if not np.all(np.isfinite(ev)) or np.any(ev <= 0):
            raise ValidationError("operator eigenvalues must be finite and > 0")
        if len(self.eigenfunctions) != ev.size:
            raise ValidationError(
                f"{ev.size} eigenvalues but {len(self.eigenfunctions)} eigenfunctions"
            )
        for q, w in enumerate(self.eigenfunctions):
            if w.grid != self.grid:
                raise ValidationError(f"eigenfunction {q + 1} is not on the operator grid")
        mat = values_matrix(self.eigenfunctions)
        gram = (mat * self.grid.weights) @ mat.T
        dev = np.max(np.abs(gram - np.eye(ev.size)))
        if dev > ORTHONORMALITY_TOL:
            raise ValidationError(
                f"eigenfunctions are not orthonormal under the grid quadrature "
                f"(max deviation {dev:.3e} > {ORTHONORMALITY_TOL:.0e})"
            )
        ev.setflags(write=False)
        mat.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "matrix", mat)

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    def project_coeffs(self, values: np.ndarray) -> np.ndarray:
        """Quadrature coefficients ``<w_q, v>`` for rows ``v`` of ``values``."""
        return (values * self.grid.weights) @ self.matrix.T

    def quadrature_gram(self) -> np.ndarray:
        """Exactly symmetric quadrature Gram of the eigenfunctions (near identity)."""
        g = (self.matrix * self.grid.weights) @ self.matrix.T
        return 0.5 * (g + g.T)


def operator_apply(op: FiniteRankOperator, u: FunctionSample) -> FunctionSample:
    """Apply the operator: ``sum_q delta_q <w_q, u> w_q``."""
    if u.grid != op.grid:
        raise ValidationError("sample is not on the operator grid")
    coeffs = op.matrix @ (op.grid.weights * u.values)
    return FunctionSample(op.grid, (op.eigenvalues * coeffs) @ op.matrix)


def make_sine_projection(counts: Sequence[int], grid: Grid) -> FiniteRankOperator:
    """Projection operator onto tensor sine modes over the unit cube.

    For per-axis frequency counts ``(c_1, ..., c_d)`` the operator has rank
    ``prod(c_a)``.  Its eigenfunctions are the unit-norm tensor sines
    ``2^(d/2) * prod_a sin(2 pi h_a t_a)`` for ``1 <= h_a <= c_a`` and every
    eigenvalue equals ``2^(-d)``, so applying it reproduces the unnormalized
    projection ``u -> sum_h <b_h, u> b_h`` with ``b_h = prod_a sin(2 pi h_a t_a)``
    exactly.

    The grid must cover ``[0, 1]^d`` with at least ``2 * max(counts) + 1``
    points per axis; coarser grids raise :class:`ResolutionError`.
    """
    c = [int(k) for k in counts]
    if len(c) != grid.ndim:
        raise ValidationError(
            f"counts has length {len(c)} but the grid has {grid.ndim} axes"
        )
    if any(k <= 0 for k in c):
        raise ValidationError("per-axis counts must be positive")
    needed = 2 * max(c) + 1
    for a, axis in enumerate(grid.axes):
        if abs(axis[0]) > 1e-12 or abs(axis[-1] - 1.0) > 1e-12:
            raise ValidationError(
                f"axis {a}: the sine projection requires a grid over [0, 1]"
            )
        if axis.size < needed:
            raise ResolutionError(
                f"axis {a} has {axis.size} points; resolving frequency "
                f"{max(c)} needs at least {needed}"
            )

    d = grid.ndim
    tensor = np.ones((1, 1))
    for k, axis in zip(c, grid.axes):
        table = np.sin(2.0 * np.pi * np.outer(np.arange(1, k + 1), axis))
        tensor = (tensor[:, None, :, None] * table[None, :, None, :]).reshape(
            tensor.shape[0] * k, tensor.shape[1] * axis.size
        )
    tensor *= 2.0 ** (d / 2.0)

    funcs = tuple(FunctionSample(grid, row) for row in tensor)
    eigenvalues = np.full(tensor.shape[0], 2.0 ** (-d))
    return FiniteRankOperator(grid=grid, eigenvalues=eigenvalues, eigenfunctions=funcs)
