"""Non-parametric covariance estimation by empirical likelihood.

Each observation gets a weight; the product of n times the weights is
maximized subject to the weights being a probability vector, the
weighted mean matching a profiled location vector, and the weighted
covariance vanishing on every missing edge.  For a fixed location the
inner problem is solved in its Lagrange dual, whose dimension equals
the number of constraints; the location is then profiled by an outer
numerical search started at the sample mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.optimize

from .graphs import CovarianceGraph
from .model import ModelError

__all__ = [
    "ELConfig",
    "WeightedSample",
    "ELFit",
    "ELInfeasibleError",
    "ELConvergenceError",
    "missing_pairs",
    "inner_el",
    "fit_el",
]


class ELInfeasibleError(ModelError):
    """No location admitted a feasible weighting."""


class ELConvergenceError(ModelError):
    """The dual solver failed to converge on a feasible problem."""


@dataclass(frozen=True)
class ELConfig:
    tol: float = 1e-10
    max_iter: int = 200
    outer_max_iter: int = 400
    constraint_tol: float = 1e-8


@dataclass(frozen=True)
class WeightedSample:
    """Optimal weights for one location vector.

    ``multipliers`` stacks one Lagrange multiplier per mean constraint
    followed by one per missing edge; ``el_log_ratio`` is the attained
    sum of log(n w_k), never positive.
    """

    weights: np.ndarray
    mean: np.ndarray
    multipliers: np.ndarray
    el_log_ratio: float


@dataclass(frozen=True)
class ELFit:
    """Profiled solution and the induced weighted covariance estimate."""

    weighted: WeightedSample
    sigma: np.ndarray
    sigma_singular: bool


def missing_pairs(g: CovarianceGraph) -> tuple[tuple[int, int], ...]:
    """Non-adjacent index pairs (i < j): one product constraint each."""
    adj = g.adjacency
    return tuple(
        (i, j) for i in range(g.p) for j in range(i + 1, g.p) if not adj[i, j]
    )


def _constraint_columns(data: np.ndarray, mu: np.ndarray, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    d = data - mu
    cols = [d] + [(d[:, i] * d[:, j])[:, None] for i, j in pairs]
    return np.hstack(cols)


def _log_star(z: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """log with a quadratic extension below eps; value, d/dz, d2/dz2."""
    z = np.asarray(z, dtype=float)
    lo = z < eps
    val = np.empty_like(z)
    d1 = np.empty_like(z)
    d2 = np.empty_like(z)
    zh = z[~lo]
    val[~lo] = np.log(zh)
    d1[~lo] = 1.0 / zh
    d2[~lo] = -1.0 / zh**2
    zl = z[lo]
    val[lo] = np.log(eps) - 1.5 + 2.0 * zl / eps - zl**2 / (2.0 * eps**2)
    d1[lo] = 2.0 / eps - zl / eps**2
    d2[lo] = -1.0 / eps**2
    return val, d1, d2


def _solve_dual(gmat: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Damped Newton minimization of the safeguarded dual objective.

    Returns the best multiplier vector found; the caller decides
    validity by checking the primal constraints, since near the
    optimum the gradient stalls at the floating-point floor.
    """
    n, m = gmat.shape
    eps = 1.0 / n
    lam = np.zeros(m)
    scale = max(1.0, float(np.abs(gmat).max()))
    gtol = tol * n * scale
    for _ in range(max_iter):
        z = 1.0 + gmat @ lam
        val, d1, d2 = _log_star(z, eps)
        grad = -gmat.T @ d1
        if np.abs(grad).max() <= gtol:
            return lam
        hess = gmat.T @ (-d2[:, None] * gmat)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            hess = hess + (1e-12 * max(1.0, np.trace(hess) / m)) * np.eye(m)
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                return lam
        f0 = -val.sum()
        slope = grad @ step
        t = 1.0
        for _ in range(50):
            cand = lam + t * step
            v, _, _ = _log_star(1.0 + gmat @ cand, eps)
            if -v.sum() <= f0 + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return lam  # no measurable descent left
        lam = lam + t * step
    return lam


def _interior_feasible(gmat: np.ndarray, tol: float) -> bool:
    """Phase-1 linear program: is 0 strictly inside the hull of the rows?

    A point counts as a certificate only if the solver's weight vector
    actually satisfies the moment equations to ``tol``; near-ties that
    pass only by the solver's own slack are treated as infeasible.
    """
    n, m = gmat.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_eq = np.zeros((m + 1, n + 1))
    a_eq[:m, :n] = gmat.T
    a_eq[m, :n] = 1.0
    b_eq = np.zeros(m + 1)
    b_eq[m] = 1.0
    a_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    b_ub = np.zeros(n)
    bounds = [(0.0, 1.0)] * n + [(-1.0, 1.0)]
    res = scipy.optimize.linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs"
    )
    if not res.success or float(res.x[-1]) <= 1e-9 / n:
        return False
    w = res.x[:n]
    return bool(np.abs(w @ gmat).max() <= tol and abs(w.sum() - 1.0) <= tol)


def inner_el(
    data: np.ndarray,
    mu: np.ndarray,
    g: CovarianceGraph,
    cfg: ELConfig | None = None,
) -> WeightedSample | None:
    """Maximize the weight log-likelihood ratio for a fixed location.

    Returns None when the problem is infeasible: either the sample size
    does not exceed the constraint count, or zero is not interior to
    the convex hull of the per-observation constraint values.
    """
    cfg = cfg or ELConfig()
    data = np.asarray(data, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n, p = data.shape
    if p != g.p or mu.shape != (p,):
        raise ModelError("data, location, and graph dimensions disagree")
    pairs = missing_pairs(g)
    if n <= 1 + len(pairs):
        return None  # more constraints than the sample can carry
    gmat = _constraint_columns(data, mu, pairs)
    lam = _solve_dual(gmat, cfg.tol, cfg.max_iter)
    z = 1.0 + gmat @ lam
    valid = False
    if z.min() > 0.0:
        w = 1.0 / (n * z)
        moment_gap = np.abs(w @ gmat).max()
        valid = (
            w.min() >= -cfg.constraint_tol
            and abs(w.sum() - 1.0) <= cfg.constraint_tol
            and moment_gap <= cfg.constraint_tol
            and z.min() >= 1.0 / n - cfg.constraint_tol
        )
    if not valid:
        # An unbounded dual (weights draining away, or a constraint
        # pushed past the safeguard) certifies that 0 lies outside the
        # hull; only a stalled solve on a certified-feasible problem is
        # a genuine solver failure.
        diverged = z.min() <= 0.0 or abs((1.0 / (n * np.maximum(z, 1e-300))).sum() - 1.0) > 1e-3
        if diverged or not _interior_feasible(gmat, cfg.constraint_tol):
            return None
        raise ELConvergenceError("dual solver failed on a feasible problem")
    return WeightedSample(
        weights=w,
        mean=mu.copy(),
        multipliers=lam.copy(),
        el_log_ratio=float(-np.log(z).sum()),
    )


def fit_el(
    data: np.ndarray,
    g: CovarianceGraph,
    cfg: ELConfig | None = None,
    labels: Sequence[str] | None = None,
) -> ELFit:
    """Profile the location and return weights plus the weighted covariance.

    The outer search is a quasi-Newton pass from the sample mean with a
    derivative-free polish; infeasible locations are penalized.  Raises
    when no probed location is feasible, mirroring the small-sample
    failure mode of the method.
    """
    cfg = cfg or ELConfig()
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ModelError("data must be a two-dimensional table")
    if labels is not None:
        labels = list(labels)
        try:
            perm = [labels.index(v) for v in g.vertices]
        except ValueError as exc:
            raise ModelError(f"data labels do not cover the graph: {exc}") from None
        data = data[:, perm]
    n, p = data.shape
    if p != g.p:
        raise ModelError("data and graph dimensions disagree")
    ybar = data.mean(axis=0)
    penalty = 1e8

    def neg_ratio(mu: np.ndarray) -> float:
        # a solver failure on one probed location only penalizes the
        # probe; the final solve below surfaces real failures
        try:
            ws = inner_el(data, mu, g, cfg)
        except ELConvergenceError:
            return penalty
        if ws is None:
            return penalty
        return -ws.el_log_ratio

    base_ws = inner_el(data, ybar, g, cfg)  # solver errors here are real
    if base_ws is None:
        raise ELInfeasibleError(
            "no feasible weights at the sample mean; sample too small for the constraint set"
        )
    best_mu, best_val = ybar, -base_ws.el_log_ratio
    res = scipy.optimize.minimize(
        neg_ratio, ybar, method="BFGS",
        options={"maxiter": cfg.outer_max_iter, "xrtol": 1e-10},
    )
    if res.fun < best_val:
        best_mu, best_val = res.x, float(res.fun)
    polish = scipy.optimize.minimize(
        neg_ratio, best_mu, method="Nelder-Mead",
        options={"maxiter": cfg.outer_max_iter * p, "xatol": 1e-10, "fatol": 1e-12},
    )
    if polish.fun < best_val:
        best_mu, best_val = polish.x, float(polish.fun)
    ws = inner_el(data, best_mu, g, cfg)
    if ws is None:
        raise ELInfeasibleError("profiled location became infeasible")
    d = data - ws.mean
    sigma = d.T @ (ws.weights[:, None] * d)
    sigma = (sigma + sigma.T) / 2.0
    eigs = np.linalg.eigvalsh(sigma)
    singular = bool(eigs.min() <= 1e-10 * max(eigs.max(), 1e-300))
    return ELFit(weighted=ws, sigma=sigma, sigma_singular=singular)
