"""Nonlinear multivariate function-on-function kernel regression.

The model predicts a functional response from several functional covariates
by combining per-covariate kernel expansions built from a separable
operator-valued kernel (a scalar kernel times a finite-rank operator), with
a lasso penalty on the nonnegative covariate weights for variable selection.
"""

from .dataset import Dataset, DatasetTruth
from .errors import (
    DataFormatError,
    FofregError,
    FormatVersionError,
    GridMismatchError,
    InvalidGridError,
    ResolutionError,
    SolverNumericalError,
    ValidationError,
)
from .funcspace import (
    FunctionSample,
    Grid,
    inner_product,
    linear_combine,
    make_grid,
    norm_sq,
)
from .kernels import (
    FiniteRankOperator,
    KernelSpec,
    combine_gram,
    gram_matrices,
    make_sine_projection,
    operator_apply,
    scalar_kernel,
)
from .model import (
    FitReport,
    MfRkhsModel,
    evaluate_mse,
    fit,
    predict,
    rescaled,
    selected_variables,
)
from .simgen import (
    ReplicationSummary,
    ScenarioConfig,
    child_seed,
    gen_multi_dim,
    gen_one_dim,
    generate,
    run_replications,
    scenario_operator,
)
from .solver import (
    FitConfig,
    SolverState,
    ThetaQuadratic,
    ThetaSolveResult,
    build_theta_quadratic,
    fit_bcd,
    objective_q,
    solve_theta_nncg,
    solve_u,
)
from .dataio import (
    load_dataset,
    load_model,
    load_operator,
    load_predictions,
    model_roundtrip,
    save_dataset,
    save_model,
    save_operator,
    save_predictions,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DatasetTruth",
    "DataFormatError",
    "FofregError",
    "FormatVersionError",
    "GridMismatchError",
    "InvalidGridError",
    "ResolutionError",
    "SolverNumericalError",
    "ValidationError",
    "FunctionSample",
    "Grid",
    "inner_product",
    "linear_combine",
    "make_grid",
    "norm_sq",
    "FiniteRankOperator",
    "KernelSpec",
    "combine_gram",
    "gram_matrices",
    "make_sine_projection",
    "operator_apply",
    "scalar_kernel",
    "FitReport",
    "MfRkhsModel",
    "evaluate_mse",
    "fit",
    "predict",
    "rescaled",
    "selected_variables",
    "ReplicationSummary",
    "ScenarioConfig",
    "child_seed",
    "gen_multi_dim",
    "gen_one_dim",
    "generate",
    "run_replications",
    "scenario_operator",
    "FitConfig",
    "SolverState",
    "ThetaQuadratic",
    "ThetaSolveResult",
    "build_theta_quadratic",
    "fit_bcd",
    "objective_q",
    "solve_theta_nncg",
    "solve_u",
    "load_dataset",
    "load_model",
    "load_operator",
    "load_predictions",
    "model_roundtrip",
    "save_dataset",
    "save_model",
    "save_operator",
    "save_predictions",
    "__version__",
]
