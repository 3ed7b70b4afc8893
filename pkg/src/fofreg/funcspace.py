"""Discretized function spaces: grids, quadrature, and sample arithmetic.

A function over a rectangular domain is represented by its values on a
tensor-product grid.  L2 inner products, norms, and distances are computed
with composite trapezoid quadrature, whose weights are the tensor product of
the per-axis trapezoid weights.  Samples are stored flat in row-major order
(last axis fastest), which fixes one canonical layout for file formats.

Everything here is immutable after construction and every operation is a
pure function, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GridMismatchError, InvalidGridError, ValidationError

__all__ = [
    "Grid",
    "FunctionSample",
    "make_grid",
    "inner_product",
    "norm_sq",
    "linear_combine",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor-product grid with trapezoid quadrature weights.

    Attributes
    ----------
    axes : tuple of ndarray
        Per-axis strictly increasing coordinate vectors.
    weights : ndarray
        Flat vector of quadrature weights, one per node, row-major
        (last axis fastest).
    """

    axes: tuple[np.ndarray, ...]
    weights: np.ndarray

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def measure(self) -> float:
        """Total quadrature mass, equal to the domain volume."""
        return float(self.weights.sum())

    def nodes(self) -> np.ndarray:
        """All grid nodes as a (node_count, ndim) array, row-major order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return len(self.axes) == len(other.axes) and all(
            np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )

    def __hash__(self) -> int:  # identity hash; equality is structural
        return id(self)

    def __repr__(self) -> str:
        return f"Grid(shape={self.shape})"


def make_grid(axes: Sequence[Sequence[float]]) -> Grid:
    """Build a grid from per-axis coordinate vectors.

    Each axis must be strictly increasing with at least 2 points.  The
    quadrature weights are the tensor product of per-axis composite
    trapezoid weights, so ``measure`` equals the domain volume.
    """
    if len(axes) == 0:
        raise InvalidGridError("a grid needs at least one axis")
    clean: list[np.ndarray] = []
    for k, axis in enumerate(axes):
        arr = np.asarray(axis, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise InvalidGridError(f"axis {k}: need a 1-D vector with >= 2 points")
        if not np.all(np.isfinite(arr)):
            raise InvalidGridError(f"axis {k}: coordinates must be finite")
        if not np.all(np.diff(arr) > 0):
            raise InvalidGridError(f"axis {k}: coordinates must be strictly increasing")
        clean.append(_readonly(arr))

    weights = np.array([1.0])
    for arr in clean:
        w = np.empty(arr.size)
        w[0] = (arr[1] - arr[0]) / 2.0
        w[-1] = (arr[-1] - arr[-2]) / 2.0
        if arr.size > 2:
            w[1:-1] = (arr[2:] - arr[:-2]) / 2.0
        weights = np.multiply.outer(weights, w).ravel()
    return Grid(axes=tuple(clean), weights=_readonly(weights))


@dataclass(frozen=True, eq=False)
class FunctionSample:
    """Values of one function on a :class:`Grid`, stored flat (row-major)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if vals.size != self.grid.node_count:
            raise ValidationError(
                f"sample has {vals.size} values but the grid has "
                f"{self.grid.node_count} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError("sample values must all be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "FunctionSample") -> "FunctionSample":
        require_same_grid(self, other)
        return FunctionSample(self.grid, self.values + other.values)

    def __sub__(self, other: "FunctionSample") -> "FunctionSample":
        require_same_grid(self, other)
        return FunctionSample(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "FunctionSample":
        return FunctionSample(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "FunctionSample":
        return FunctionSample(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"FunctionSample(grid={self.grid!r})"


def require_same_grid(f: FunctionSample, g: FunctionSample) -> None:
    """Raise :class:`GridMismatchError` unless both samples share a grid."""
    if f.grid is g.grid:
        return
    if f.grid != g.grid:
        raise GridMismatchError("function samples live on different grids")


def inner_product(f: FunctionSample, g: FunctionSample) -> float:
    """Quadrature L2 inner product of two samples on the same grid.

    Computed as ``sum_k w_k * f_k * g_k``; exactly symmetric in its
    arguments because the pointwise product commutes.
    """
    require_same_grid(f, g)
    return float(np.dot(f.grid.weights, f.values * g.values))


def norm_sq(f: FunctionSample) -> float:
    """Squared quadrature L2 norm, ``inner_product(f, f)``."""
    return inner_product(f, f)


def linear_combine(
    coeffs: Sequence[float], fs: Sequence[FunctionSample]
) -> FunctionSample:
    """Pointwise linear combination ``sum_j coeffs[j] * fs[j]``.

    All samples must share one grid and the two lists must have equal,
    nonzero length.
    """
    if len(fs) == 0 or len(coeffs) != len(fs):
        raise ValidationError(
            f"need equally many coefficients and samples, got "
            f"{len(coeffs)} and {len(fs)}"
        )
    grid = fs[0].grid
    for f in fs[1:]:
        require_same_grid(fs[0], f)
    stacked = np.stack([f.values for f in fs])
    c = np.asarray(coeffs, dtype=np.float64)
    return FunctionSample(grid, np.tensordot(c, stacked, axes=1))


def values_matrix(fs: Iterable[FunctionSample]) -> np.ndarray:
    """Stack sample values into a (count, node_count) matrix."""
    return np.stack([f.values for f in fs])
