"""Upper-tail probability of the maximum of correlated standard normals.

Separation-of-variables (Genz) integrand, integrated with randomised
quasi-Monte Carlo.  The complement 1 - P(max <= b) is accumulated in
log space so that tiny tail probabilities keep their relative accuracy.
"""
from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri
from scipy.stats import qmc

_SEED = 20240229
_N_SHIFTS = 10


def semidefinite_cholesky(cov, tol: float = 1e-10) -> np.ndarray:
    """Lower factor L with L L^T = cov; columns with a vanishing pivot are zero."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    L = np.zeros_like(cov)
    for j in range(d):
        pivot = cov[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= tol * max(cov[j, j], 1.0):
            continue
        L[j, j] = np.sqrt(pivot)
        L[j + 1 :, j] = (cov[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def _log_interval_prob(lo, hi):
    """log(Phi(hi) - Phi(lo)) without cancellation in either tail."""
    # reflect so that the interval sits mostly on the left, where log_ndtr is exact
    flip = lo + hi > 0
    lo, hi = np.where(flip, -hi, lo), np.where(flip, -lo, hi)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide="ignore"):
        return log_hi + np.log1p(-np.exp(np.minimum(log_lo - log_hi, 0.0)))


class _SOVPlan:
    """Sequential conditioning plan for P(L y <= b) with y standard normal.

    Rows of ``L`` with a zero pivot are exact linear functions of earlier
    coordinates; their constraint is folded into the truncation interval of
    the last coordinate they depend on, which keeps the integrand smooth.
    """

    def __init__(self, L: np.ndarray, b: np.ndarray):
        d = b.size
        self.L = L
        self.b = b
        self.free = [i for i in range(d) if L[i, i] > 0]
        self.extra = {k: [] for k in self.free}
        self.infeasible_rows = []
        for i in range(d):
            if L[i, i] > 0:
                continue
            nz = np.flatnonzero(L[i, :i])
            if nz.size == 0:
                self.infeasible_rows.append(i)
            else:
                self.extra[int(nz[-1])].append(i)

    @property
    def dim(self) -> int:
        return max(len(self.free) - 1, 0)

    def tail(self, w: np.ndarray) -> np.ndarray:
        """1 - integrand value at each row of ``w``."""
        L, b = self.L, self.b
        n = w.shape[0]
        if any(b[i] < 0 for i in self.infeasible_rows):
            return np.ones(n)
        y = np.zeros((n, b.size))
        log_prob = np.zeros(n)
        for pos, k in enumerate(self.free):
            shift = y[:, :k] @ L[k, :k]
            hi = (b[k] - shift) / L[k, k]
            lo = np.full(n, -np.inf)
            for i in self.extra[k]:
                coef = L[i, k]
                bound = (b[i] - y[:, :k] @ L[i, :k]) / coef
                if coef > 0:
                    hi = np.minimum(hi, bound)
                else:
                    lo = np.maximum(lo, bound)
            empty = lo >= hi
            lo = np.where(empty, hi, lo)
            log_prob += np.where(empty, -np.inf, _log_interval_prob(lo, hi))
            if pos < self.dim:
                p_lo = ndtr(lo)
                p_hi = ndtr(hi)
                u = np.clip(p_lo + w[:, pos] * (p_hi - p_lo), 1e-300, 1.0 - 1e-16)
                y[:, k] = ndtri(u)
        return -np.expm1(log_prob)


def max_normal_tail(
    corr,
    z: float,
    abs_tol: float = 1e-4,
    max_points: int = 200_000,
    seed: int = _SEED,
) -> tuple[float, float]:
    """P(max_i X_i > z) for X ~ N(0, corr); returns ``(p, error_estimate)``.

    Points come from independently scrambled Sobol sequences; each round
    doubles every sequence until three standard errors across the
    scrambles fall below ``abs_tol`` or ``max_points`` is spent.
    """
    corr = np.asarray(corr, dtype=float)
    d = corr.shape[0]
    b = np.full(d, float(z))
    if d == 1:
        return float(ndtr(-z)), 0.0
    plan = _SOVPlan(semidefinite_cholesky(corr), b)
    if plan.dim == 0:
        return float(plan.tail(np.zeros((1, 0)))[0]), 0.0
    engines = [
        qmc.Sobol(plan.dim, scramble=True, seed=np.random.default_rng(child))
        for child in np.random.SeedSequence(seed).spawn(_N_SHIFTS)
    ]
    sums = np.zeros(_N_SHIFTS)
    count = 0
    step = 256
    while True:
        x = np.concatenate([e.random(step) for e in engines])
        sums += plan.tail(x).reshape(_N_SHIFTS, step).sum(axis=1)
        count += step
        estimates = sums / count
        err = 3.0 * estimates.std(ddof=1) / np.sqrt(_N_SHIFTS)
        if err <= abs_tol or 2 * count * _N_SHIFTS > max_points:
            break
        step = count
    return float(np.clip(estimates.mean(), 0.0, 1.0)), float(err)


def max_normal_tail_mc(corr, z: float, n_draws: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Plain Monte Carlo version of :func:`max_normal_tail`; returns ``(p, se)``."""
    corr = np.asarray(corr, dtype=float)
    rng = np.random.default_rng(seed)
    # eigh tolerates the semidefinite case where cholesky fails
    vals, vecs = np.linalg.eigh(corr)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    hits = 0
    done = 0
    while done < n_draws:
        m = min(200_000, n_draws - done)
        x = rng.standard_normal((m, corr.shape[0])) @ root.T
        hits += int(np.count_nonzero(x.max(axis=1) > z))
        done += m
    p = hits / n_draws
    return p, float(np.sqrt(p * (1 - p) / n_draws))
