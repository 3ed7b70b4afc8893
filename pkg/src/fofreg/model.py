"""User-facing regression model: fit, predict, select, and score."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import ValidationError
from .funcspace import FunctionSample, norm_sq, values_matrix
from .kernels import FiniteRankOperator, KernelSpec, kernel_values
from .solver import FitConfig, SolverState, fit_bcd

__all__ = [
    "SELECTION_THRESHOLD",
    "FitReport",
    "MfRkhsModel",
    "fit",
    "model_from_state",
    "predict",
    "selected_variables",
    "evaluate_mse",
    "rescaled",
]

# Weights above this count as selected; the constrained solver produces exact
# zeros, so the threshold only guards against numerical dust.
SELECTION_THRESHOLD = 1e-8


@dataclass(frozen=True)
class FitReport:
    iterations: int
    final_objective: float
    converged: bool


@dataclass(frozen=True, eq=False)
class MfRkhsModel:
    """A fitted function-on-function regression model.

    Prediction sums kernel evaluations against the retained training
    covariates:  ``y_hat(x) = T( sum_j [sum_l theta_l g_l(x_train_j, x)] u_j )``.
    """

    specs: tuple[KernelSpec, ...]
    operator: FiniteRankOperator
    theta: np.ndarray
    u: tuple[FunctionSample, ...]
    train_x: tuple[tuple[FunctionSample, ...], ...]  # p lists of n samples
    names: tuple[str, ...]
    config: FitConfig
    report: FitReport

    def __post_init__(self) -> None:
        th = np.ascontiguousarray(self.theta, dtype=np.float64).ravel()
        p = len(self.specs)
        if th.size != p or len(self.train_x) != p or len(self.names) != p:
            raise ValidationError("theta, kernel specs, names, and covariates disagree on p")
        if np.any(th < 0):
            raise ValidationError("model theta must be nonnegative")
        n = len(self.u)
        for cov in self.train_x:
            if len(cov) != n:
                raise ValidationError("every covariate needs one sample per training point")
        for f in self.u:
            if f.grid != self.operator.grid:
                raise ValidationError("u samples must live on the operator grid")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "u", tuple(self.u))
        object.__setattr__(self, "train_x", tuple(tuple(c) for c in self.train_x))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return len(self.u)

    @property
    def p(self) -> int:
        return len(self.specs)


def model_from_state(
    data: Dataset,
    specs: KernelSpec | Sequence[KernelSpec],
    operator: FiniteRankOperator,
    cfg: FitConfig,
    state: SolverState,
) -> MfRkhsModel:
    """Wrap a solver state and the retained training covariates as a model."""
    spec_tuple = (specs,) * data.p if isinstance(specs, KernelSpec) else tuple(specs)
    return MfRkhsModel(
        specs=spec_tuple,
        operator=operator,
        theta=state.theta,
        u=state.u,
        train_x=data.covariates,
        names=data.names,
        config=cfg,
        report=FitReport(
            iterations=state.iterations,
            final_objective=state.objective_trace[-1],
            converged=state.converged,
        ),
    )


def fit(
    data: Dataset,
    specs: KernelSpec | Sequence[KernelSpec],
    operator: FiniteRankOperator,
    cfg: FitConfig | None = None,
) -> MfRkhsModel:
    """Fit the model by block coordinate descent; deterministic given inputs."""
    cfg = cfg or FitConfig()
    state = fit_bcd(data, specs, operator, cfg)
    return model_from_state(data, specs, operator, cfg, state)


def _combined_kernel_vector(
    model: MfRkhsModel, x_new: Sequence[FunctionSample]
) -> np.ndarray:
    """``s_j = sum_l theta_l g_l(x_train_j, x_new)`` for all training j."""
    if len(x_new) != model.p:
        raise ValidationError(f"expected {model.p} covariate samples, got {len(x_new)}")
    s = np.zeros(model.n)
    for spec, weight, train, x in zip(model.specs, model.theta, model.train_x, x_new):
        if x.grid != train[0].grid:
            raise ValidationError(
                "new covariate sample is not on the training covariate grid"
            )
        if weight == 0.0:
            continue  # discarded covariate: no contribution
        train_values = values_matrix(train)
        diff = train_values - x.values
        d2 = np.maximum((diff * diff) @ x.grid.weights, 0.0)
        s += weight * np.asarray(kernel_values(spec, d2))
    return s


def predict(model: MfRkhsModel, x_new: Sequence[FunctionSample]) -> FunctionSample:
    """Predict the response function for one new covariate tuple."""
    s = _combined_kernel_vector(model, x_new)
    op = model.operator
    u_values = values_matrix(model.u)
    u_coeffs = op.project_coeffs(u_values)  # (n, kappa)
    coeffs = op.eigenvalues * (u_coeffs.T @ s)
    return FunctionSample(op.grid, coeffs @ op.matrix)


def selected_variables(model: MfRkhsModel) -> list[int]:
    """1-based indices of covariates with weight above the dust threshold."""
    return [int(l) + 1 for l in np.flatnonzero(model.theta > SELECTION_THRESHOLD)]


def evaluate_mse(model: MfRkhsModel, data: Dataset) -> float:
    """Average squared L2 distance between predicted and observed responses."""
    if data.p != model.p:
        raise ValidationError(f"dataset has {data.p} covariates, model has {model.p}")
    if data.response_grid != model.operator.grid:
        raise ValidationError("dataset responses are not on the model response grid")
    total = 0.0
    for i in range(data.n):
        y_hat = predict(model, data.covariate_tuple(i))
        total += norm_sq(y_hat - data.responses[i])
    return total / data.n


def rescaled(model: MfRkhsModel, c: float) -> MfRkhsModel:
    """The equivalent model ``(c * u, theta / c)``; predictions are unchanged."""
    if not (c > 0):
        raise ValidationError("the rescaling constant must be > 0")
    return replace(
        model,
        theta=model.theta / c,
        u=tuple(FunctionSample(f.grid, c * f.values) for f in model.u),
    )
