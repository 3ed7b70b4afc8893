"""In-memory container for paired functional responses and covariates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .funcspace import FunctionSample, Grid

__all__ = ["Dataset", "DatasetTruth"]


@dataclass(frozen=True, eq=False)
class DatasetTruth:
    """Generating parameters attached to a simulated dataset."""

    theta: np.ndarray
    u: tuple[FunctionSample, ...]

    def __post_init__(self) -> None:
        th = np.ascontiguousarray(self.theta, dtype=np.float64).ravel()
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "u", tuple(self.u))


@dataclass(frozen=True, eq=False)
class Dataset:
    """n response samples paired with p covariate sample lists.

    ``covariates[l]`` holds the n samples of covariate ``l + 1``; every
    sample of one variable shares that variable's grid.
    """

    responses: tuple[FunctionSample, ...]
    covariates: tuple[tuple[FunctionSample, ...], ...]
    names: tuple[str, ...] = ()
    truth: DatasetTruth | None = None

    def __post_init__(self) -> None:
        responses = tuple(self.responses)
        covariates = tuple(tuple(cov) for cov in self.covariates)
        n = len(responses)
        if n < 1:
            raise ValidationError("dataset needs at least one sample")
        if len(covariates) < 1:
            raise ValidationError("dataset needs at least one covariate")
        for y in responses[1:]:
            if y.grid != responses[0].grid:
                raise ValidationError("response samples must share one grid")
        for l, cov in enumerate(covariates):
            if len(cov) != n:
                raise ValidationError(
                    f"covariate {l + 1} has {len(cov)} samples, expected {n}"
                )
            for x in cov[1:]:
                if x.grid != cov[0].grid:
                    raise ValidationError(
                        f"covariate {l + 1}: samples must share one grid"
                    )
        names = tuple(self.names) if self.names else tuple(
            f"x{l + 1}" for l in range(len(covariates))
        )
        if len(names) != len(covariates):
            raise ValidationError("need one name per covariate")
        if self.truth is not None:
            if self.truth.theta.size != len(covariates):
                raise ValidationError("truth theta length must equal p")
            for u in self.truth.u:
                if u.grid != responses[0].grid:
                    raise ValidationError("truth u samples must be on the response grid")
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return len(self.responses)

    @property
    def p(self) -> int:
        return len(self.covariates)

    @property
    def response_grid(self) -> Grid:
        return self.responses[0].grid

    def covariate_grid(self, l: int) -> Grid:
        """Grid of covariate ``l`` (0-based index)."""
        return self.covariates[l][0].grid

    def covariate_tuple(self, i: int) -> list[FunctionSample]:
        """The p covariate samples of observation ``i`` (0-based)."""
        return [cov[i] for cov in self.covariates]
