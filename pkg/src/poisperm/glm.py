"""Poisson regression with a log link, fitted by IRLS, plus Wald tests.

The analysis model has an intercept and at most one predictor, so the
weighted normal equations are solved by partitioned elimination: the
intercept is swept out first and the remaining pivot is the weighted
sum of squares of the centred predictor.  The same kernel fits one
design or a stack of designs that share an outcome vector (the shape
the permutation engine needs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

MAX_ITER = 25
DEVIANCE_TOL = 1e-8
PIVOT_TOL = 1e-10


class FitStatus(str, Enum):
    OK = "ok"
    MAX_ITER = "max_iter"
    DEGENERATE_ALL_ZERO = "degenerate_all_zero"
    SINGULAR = "singular"


# integer codes used inside the vectorised kernel
_CODES = (FitStatus.OK, FitStatus.MAX_ITER, FitStatus.DEGENERATE_ALL_ZERO, FitStatus.SINGULAR)
_OK, _MAX_ITER, _ALL_ZERO, _SINGULAR = range(4)


class NotConvergedError(ValueError):
    """Raised when inference is requested from a fit that did not converge."""


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    deviance: float
    iterations: int
    converged: bool
    status: FitStatus

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])


@dataclass(frozen=True)
class WaldTest:
    z: float
    p_value: float


@dataclass(frozen=True)
class BatchFit:
    """Column-wise results for a stack of single-predictor fits."""

    intercepts: np.ndarray
    slopes: np.ndarray
    slope_se: np.ndarray
    iterations: np.ndarray
    codes: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.codes == _OK

    def status(self, i: int) -> FitStatus:
        return _CODES[int(self.codes[i])]


def design_matrix(x1: np.ndarray | None = None, n: int | None = None) -> np.ndarray:
    """Build an ``(n, p)`` design with a leading column of ones."""
    if x1 is None:
        if n is None:
            raise ValueError("need x1 or n")
        return np.ones((n, 1))
    x1 = np.asarray(x1, dtype=float)
    if x1.ndim != 1:
        raise ValueError("x1 must be one-dimensional")
    return np.column_stack([np.ones(x1.shape[0]), x1])


def _check_inputs(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] not in (1, 2):
        raise ValueError(f"design must be (n, 1) or (n, 2), got shape {X.shape}")
    n, p = X.shape
    if n < p:
        raise ValueError(f"need n >= p, got n={n}, p={p}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix has non-finite entries")
    if not np.all(X[:, 0] == 1.0):
        raise ValueError("first design column must be the intercept (all ones)")
    y = _check_counts(y)
    if y.shape[0] != n:
        raise ValueError(f"y has length {y.shape[0]}, design has {n} rows")
    return X, y


def _check_counts(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a non-empty 1-d count vector")
    yf = y.astype(float)
    if not np.all(np.isfinite(yf)) or np.any(yf < 0) or np.any(yf != np.floor(yf)):
        raise ValueError("y must contain nonnegative integers")
    return yf


def _deviance(sum_ylogy: float, y_sum, y_dot_eta, mu_sum):
    return 2.0 * (sum_ylogy - y_dot_eta - y_sum + mu_sum)


def _irls_intercept(y: np.ndarray, max_iter: int, tol: float):
    n = y.shape[0]
    y_sum = y.sum()
    pos = y > 0
    sum_ylogy = float(np.sum(y[pos] * np.log(y[pos])))
    b0 = math.log(y_sum / n + 0.1)
    dev = _deviance(sum_ylogy, y_sum, y_sum * b0, n * math.exp(b0))
    for it in range(1, max_iter + 1):
        mu = math.exp(b0)
        b0 += (y_sum - n * mu) / (n * mu)
        mu = math.exp(b0)
        new_dev = _deviance(sum_ylogy, y_sum, y_sum * b0, n * mu)
        if not (math.isfinite(b0) and math.isfinite(new_dev)):
            return b0, math.nan, new_dev, it, _SINGULAR
        done = abs(new_dev - dev) / (abs(new_dev) + 0.1) < tol
        dev = new_dev
        if done:
            return b0, 1.0 / math.sqrt(n * mu), dev, it, _OK
    return b0, 1.0 / math.sqrt(n * math.exp(b0)), dev, max_iter, _MAX_ITER


def fit_slope_batch(
    x: np.ndarray,
    y: np.ndarray,
    max_iter: int = MAX_ITER,
    tol: float = DEVIANCE_TOL,
) -> BatchFit:
    """Fit ``y ~ Poisson(exp(b0 + b1 * x[k]))`` for every row ``k`` of ``x``.

    Rows converge independently; a row is frozen as soon as its relative
    deviance change drops below ``tol``.  ``y`` is shared by all rows.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    B, n = x.shape
    codes = np.full(B, _MAX_ITER, dtype=np.int8)
    b0 = np.full(B, math.nan)
    b1 = np.full(B, math.nan)
    se1 = np.full(B, math.nan)
    iters = np.zeros(B, dtype=np.int64)
    y_sum = y.sum()
    if y_sum == 0:
        codes[:] = _ALL_ZERO
        return BatchFit(b0, b1, se1, iters, codes)

    pos = y > 0
    sum_ylogy = float(np.sum(y[pos] * np.log(y[pos])))
    b0[:] = math.log(y_sum / n + 0.1)
    b1[:] = 0.0
    mu_sum0 = n * math.exp(b0[0])
    dev = np.full(B, _deviance(sum_ylogy, y_sum, y_sum * b0[0], mu_sum0))

    act = np.arange(B)
    xa = x
    mu = np.broadcast_to(np.exp(b0[:1])[:, None], (B, n))
    for it in range(1, max_iter + 1):
        # diverging rows overflow or underflow here; they are flagged below
        with np.errstate(all="ignore"):
            sw = mu.sum(axis=1)
            xbar = (mu * xa).sum(axis=1) / sw
            xc = xa - xbar[:, None]
            wxc = mu * xc
            sxx = (wxc * xc).sum(axis=1)
            # pivot after sweeping out the intercept, relative to sum(w * x^2)
            singular = ~(sxx > PIVOT_TOL * (sxx + sw * xbar * xbar))
            resid = y - mu
            # working residual shifted by its first entry: a constant outcome
            # then yields an exactly-zero slope step
            work = resid / mu
            d1 = (wxc * (work - work[:, :1])).sum(axis=1) / sxx
            d0 = resid.sum(axis=1) / sw - d1 * xbar
            nb0 = b0[act] + d0
            nb1 = b1[act] + d1
            eta = nb0[:, None] + nb1[:, None] * xa
            mu = np.exp(eta)
            new_dev = _deviance(sum_ylogy, y_sum, eta @ y, mu.sum(axis=1))
        bad = singular | ~np.isfinite(new_dev) | ~np.isfinite(nb1) | ~np.isfinite(nb0)
        done = ~bad & (np.abs(new_dev - dev[act]) / (np.abs(new_dev) + 0.1) < tol)

        keep = ~singular
        b0[act[keep]] = nb0[keep]
        b1[act[keep]] = nb1[keep]
        iters[act] = it
        dev[act] = new_dev
        codes[act[bad]] = _SINGULAR
        if np.any(done):
            mu_d = mu[done]
            sw_d = mu_d.sum(axis=1)
            xb_d = (mu_d * xa[done]).sum(axis=1) / sw_d
            xc_d = xa[done] - xb_d[:, None]
            se1[act[done]] = 1.0 / np.sqrt((mu_d * xc_d * xc_d).sum(axis=1))
            codes[act[done]] = _OK
        live = ~(bad | done)
        if not np.any(live):
            break
        act = act[live]
        xa = xa[live]
        mu = mu[live]
    return BatchFit(b0, b1, se1, iters, codes)


def fit_poisson(
    X: np.ndarray,
    y: np.ndarray,
    max_iter: int = MAX_ITER,
    tol: float = DEVIANCE_TOL,
) -> FitResult:
    """Maximum-likelihood Poisson regression with log link.

    ``X`` is an ``(n, p)`` design whose first column is all ones and
    ``p`` is 1 or 2.  Starts from ``b0 = log(mean(y) + 0.1)`` with the
    slope at zero, stops once the relative deviance change falls below
    ``tol`` or after ``max_iter`` updates.  Standard errors come from
    the inverse Fisher information at the final estimate.

    Failures are reported through ``status`` rather than raised.
    """
    X, y = _check_inputs(X, y)
    n, p = X.shape
    nan = np.full(p, math.nan)
    if y.sum() == 0:
        return FitResult(nan, nan, math.nan, 0, False, FitStatus.DEGENERATE_ALL_ZERO)

    if p == 1:
        b0, se0, dev, it, code = _irls_intercept(y, max_iter, tol)
        coef = np.array([b0])
        se = np.array([se0])
    else:
        x1 = X[:, 1]
        res = fit_slope_batch(x1[None, :], y, max_iter, tol)
        code = int(res.codes[0])
        it = int(res.iterations[0])
        coef = np.array([res.intercepts[0], res.slopes[0]])
        se = np.full(2, math.nan)
        dev = math.nan
        if code in (_OK, _MAX_ITER):
            mu = np.exp(coef[0] + coef[1] * x1)
            sw = mu.sum()
            xbar = float(mu @ x1) / sw
            sxx = float(mu @ (x1 - xbar) ** 2)
            se = np.array([math.sqrt(1.0 / sw + xbar * xbar / sxx), 1.0 / math.sqrt(sxx)])
            pos = y > 0
            dev = 2.0 * float(np.sum(y[pos] * np.log(y[pos] / mu[pos])) - np.sum(y - mu))
    dev = max(0.0, float(dev)) if math.isfinite(dev) else math.nan
    status = _CODES[code]
    if status is not FitStatus.OK:
        if status is FitStatus.SINGULAR:
            se = np.full(p, math.nan)
        return FitResult(coef, se, dev, it, False, status)
    return FitResult(coef, se, dev, it, True, status)


def wald_pvalue(fit: FitResult, coefficient_index: int = 1) -> WaldTest:
    """Two-sided Wald z-test of a single coefficient against zero."""
    if not fit.converged:
        raise NotConvergedError(f"cannot test a fit with status {fit.status.value}")
    k = len(fit.coefficients)
    if not -k <= coefficient_index < k:
        raise IndexError(f"coefficient index {coefficient_index} out of range for {k} coefficients")
    z = float(fit.coefficients[coefficient_index] / fit.standard_errors[coefficient_index])
    return WaldTest(z=z, p_value=normal_two_sided_p(z))


def normal_two_sided_p(z: float) -> float:
    """``2 * (1 - Phi(|z|))`` evaluated through erfc so tails keep precision."""
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
