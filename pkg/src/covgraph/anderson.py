"""Anderson's linear-equation iteration for the likelihood equations.

Each step linearizes the likelihood equations at the current iterate
and solves for the free entries.  The iteration is reproduced exactly
as stated, without damping or safeguards, so its documented failure
modes stay observable: iterates need not be positive definite, the
likelihood may decrease, and convergence is not guaranteed.  A fixed
point solves the likelihood equations, so converged runs agree with
the conditional-fitting estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graphs import CovarianceGraph, FreeIndexSet, free_index_set
from .model import (
    ConstrainedCovariance,
    DuplicationMap,
    ModelError,
    SampleStats,
    is_pos_def,
    pair_quadratic,
    profile_loglik,
    stationarity_residual,
)
from .results import FitConfig, FitResult

__all__ = ["AndersonState", "anderson_system", "fit_anderson"]


class SingularSystemError(ModelError):
    """The linear system of one iteration could not be solved."""


@dataclass(frozen=True)
class AndersonState:
    """Raw iterate of the linear iteration; not necessarily PD."""

    sigma: np.ndarray
    iteration: int
    pd_flags: tuple[bool, ...]


def anderson_system(
    sigma: np.ndarray, stats: SampleStats, fis: FreeIndexSet
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient matrix and right-hand side of one iteration.

    With k the inverse of ``sigma``, the row for pair (i, j) has
    entries k_ik k_jk at column (k, k) and k_ik k_jl + k_jk k_il at
    column (k, l), k != l; the right-hand side is the (i, j) entry of
    k S k.  A patterned matrix solves this system at its own free
    vector exactly when it solves the likelihood equations.
    """
    sigma = np.asarray(sigma, dtype=float)
    try:
        k = np.linalg.inv(sigma)
    except np.linalg.LinAlgError:
        raise SingularSystemError("iterate is singular") from None
    if not np.all(np.isfinite(k)):
        raise SingularSystemError("iterate inverse overflowed")
    pairs = fis.pairs
    m = len(pairs)
    a = np.empty((m, m))
    for col, (kk, ll) in enumerate(pairs):
        if kk == ll:
            for row, (i, j) in enumerate(pairs):
                a[row, col] = k[i, kk] * k[j, kk]
        else:
            for row, (i, j) in enumerate(pairs):
                a[row, col] = k[i, kk] * k[j, ll] + k[j, kk] * k[i, ll]
    t = k @ stats.s @ k
    b = np.array([t[i, j] for i, j in pairs])
    return a, b


def fit_anderson(stats: SampleStats, g: CovarianceGraph, cfg: FitConfig | None = None) -> FitResult:
    """Iterate the linear system from the identity (or a given start).

    The per-iterate positive-definiteness record is kept, and the
    log-likelihood trace holds None wherever the iterate was not PD.
    ``detail`` distinguishes converged-pd, converged-non-pd, diverged,
    and singular-system outcomes.
    """
    cfg = cfg or FitConfig()
    if stats.labels is not None and stats.labels != g.vertices:
        stats = stats.aligned_to(g.vertices)
    if not stats.s_pos_def:
        raise ModelError("sample covariance must be positive definite")
    fis = free_index_set(g)
    dup = DuplicationMap(fis)
    if cfg.start is None:
        sigma = np.eye(g.p)
    elif isinstance(cfg.start, ConstrainedCovariance):
        sigma = np.array(cfg.start.sigma)
    else:
        sigma = np.asarray(cfg.start, dtype=float)
    # Scaling of rows by 2 on the edge pairs symmetrizes the system, so
    # a symmetric-indefinite solve applies even off the PD cone.
    edge_scale = np.array([1.0 if i == j else 2.0 for i, j in fis.pairs])

    pd_flags: list[bool] = []
    trace: list[float | None] = []
    detail = "diverged"
    converged = False
    iteration = 0
    for iteration in range(1, cfg.max_iter + 1):
        try:
            k = np.linalg.inv(sigma)
        except np.linalg.LinAlgError:
            detail = "singular-system"
            break
        if not np.all(np.isfinite(k)):
            detail = "singular-system"
            break
        sym = pair_quadratic(k, k, fis.pairs)
        t = k @ stats.s @ k
        rhs = edge_scale * np.array([t[i, j] for i, j in fis.pairs])
        try:
            # ill-conditioned systems are expected on divergent runs and
            # already surface through pd_flags and the detail tag
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                free = scipy.linalg.solve(sym, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            detail = "singular-system"
            break
        if not np.all(np.isfinite(free)):
            detail = "diverged"
            break
        new_sigma = dup.expand(free, g.p)
        pd = is_pos_def(new_sigma)
        pd_flags.append(pd)
        if cfg.record_trace:
            trace.append(profile_loglik(stats, new_sigma) if pd else None)
        delta = float(np.abs(new_sigma - sigma).max())
        sigma = new_sigma
        if delta < cfg.tol:
            if not pd:
                detail = "converged-non-pd"
                break
            estimate = ConstrainedCovariance(g, sigma)
            residual = stationarity_residual(stats, estimate)
            if residual <= 100.0 * cfg.tol:
                detail = "converged-pd"
                converged = True
            else:
                detail = "diverged"
            break
    estimate = None
    loglik = None
    residual = None
    if converged:
        estimate = ConstrainedCovariance(g, sigma)
        loglik = profile_loglik(stats, estimate, n_adjust=cfg.n_adjust)
        residual = stationarity_residual(stats, estimate)
    elif pd_flags and pd_flags[-1] and is_pos_def(sigma):
        loglik = profile_loglik(stats, sigma, n_adjust=cfg.n_adjust)
    return FitResult(
        method="ml-anderson",
        estimate=estimate,
        loglik=loglik,
        iterations=iteration,
        converged=converged,
        final_sigma=sigma,
        trace=tuple(trace) if cfg.record_trace else None,
        detail=detail,
        pd_flags=tuple(pd_flags),
        residual=residual,
    )
