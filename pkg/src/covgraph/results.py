"""Shared fitter configuration and result records."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ConstrainedCovariance

__all__ = ["FitConfig", "FitResult"]


@dataclass(frozen=True)
class FitConfig:
    """Knobs shared by the iterative fitters.

    ``tol`` bounds the max-abs parameter change over a full sweep,
    ``start`` overrides the identity starting value, ``record_trace``
    keeps the per-sweep log-likelihood, and ``n_adjust`` substitutes
    n - 1 for n in reported likelihood values.
    """

    tol: float = 1e-8
    max_iter: int = 5000
    start: np.ndarray | ConstrainedCovariance | None = None
    record_trace: bool = False
    n_adjust: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class FitResult:
    """Outcome of one covariance fit.

    ``estimate`` is None when the final iterate is not a valid
    patterned covariance (possible for the linear-equation method);
    ``final_sigma`` always holds the raw final matrix.  ``detail``
    carries a method-specific status tag, ``pd_flags`` the per-iterate
    positive-definiteness record where the method tracks it, and
    ``residual`` the method's own defining residual at exit.
    """

    method: str
    estimate: ConstrainedCovariance | None
    loglik: float | None
    iterations: int
    converged: bool
    final_sigma: np.ndarray | None = None
    trace: tuple[float | None, ...] | None = None
    detail: str | None = None
    pd_flags: tuple[bool, ...] | None = None
    residual: float | None = None

    @property
    def sigma(self) -> np.ndarray | None:
        if self.estimate is not None:
            return self.estimate.sigma
        return self.final_sigma
