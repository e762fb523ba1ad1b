"""Special functions: Kummer's 1F1 in the log domain and incomplete gamma
helpers used by the jump-size families."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import exp1, gammainc, gammaincc, gammaln

from .exceptions import NumericError

_MAX_TERMS = 200_000


def log_hyp1f1(a: float, b: float, x) -> float | np.ndarray:
    """log 1F1(a, b, x) for a > 0, b > a.

    Negative arguments go through the Kummer transform
    1F1(a, b, x) = e^x 1F1(b-a, b, -x) so that every Taylor term of the
    remaining series is positive; the sum is then accumulated with
    logaddexp and never leaves the log domain.  Vectorized over x.
    """
    if not (a > 0 and b > a):
        raise ValueError(f"log_hyp1f1 requires 0 < a < b, got a={a}, b={b}")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    neg = x < 0
    if neg.any():
        out[neg] = x[neg] + _log_series(b - a, b, -x[neg])
    if (~neg).any():
        out[~neg] = _log_series(a, b, x[~neg])
    return float(out[0]) if scalar else out


def _log_series(a: float, b: float, x: np.ndarray) -> np.ndarray:
    """log sum_k (a)_k x^k / ((b)_k k!) with x >= 0 elementwise."""
    log_x = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
    log_term = np.zeros_like(x)
    log_sum = np.zeros_like(x)
    xmax = float(np.max(x, initial=0.0))
    for k in range(_MAX_TERMS):
        log_term = log_term + np.log(a + k) + log_x - np.log(b + k) - np.log1p(k)
        log_sum = np.logaddexp(log_sum, log_term)
        # terms decay monotonically once k > x; then the tail is geometric
        if k + 1 > xmax and np.all(log_term - log_sum < np.log(1e-17)):
            return log_sum
    raise NumericError(
        f"1F1 series did not converge after {_MAX_TERMS} terms",
        residual=float(np.max(log_term - log_sum)),
    )


def log_hyp1f1_one(a: float, b: float, x: float) -> float:
    """Scalar path of :func:`log_hyp1f1` without array overhead; used in
    sampler inner loops."""
    if not (a > 0 and b > a):
        raise ValueError(f"log_hyp1f1 requires 0 < a < b, got a={a}, b={b}")
    if x < 0:
        return x + _log_series_one(b - a, b, -x)
    return _log_series_one(a, b, x)


def _log_series_one(a: float, b: float, x: float) -> float:
    if x == 0.0:
        return 0.0
    log_x = math.log(x)
    log_term = 0.0
    log_sum = 0.0
    for k in range(_MAX_TERMS):
        log_term += math.log(a + k) + log_x - math.log(b + k) - math.log1p(k)
        if log_term > log_sum:
            log_sum = log_term + math.log1p(math.exp(log_sum - log_term))
        else:
            log_sum += math.log1p(math.exp(log_term - log_sum))
        if k + 1 > x and log_term - log_sum < -39.5:  # log(1e-17)
            return log_sum
    raise NumericError(
        f"1F1 series did not converge after {_MAX_TERMS} terms",
        residual=log_term - log_sum,
    )


def hyp1f1(a: float, b: float, x):
    return np.exp(log_hyp1f1(a, b, x))


def upper_gamma(a: float, x) -> float | np.ndarray:
    """Unregularized upper incomplete gamma Gamma(a, x), x > 0.

    Extends below a <= 0 through the downward recurrence
    Gamma(a, x) = (Gamma(a+1, x) - x^a e^{-x}) / a.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("upper_gamma requires x > 0")
    if a > 0:
        return np.exp(gammaln(a)) * gammaincc(a, x)
    if a == 0:
        return exp1(x)
    return (upper_gamma(a + 1.0, x) - x**a * np.exp(-x)) / a


def lower_gamma_regularized(a: float, x):
    """Regularized lower incomplete gamma P(a, x) for a > 0."""
    if a <= 0:
        raise ValueError("requires a > 0")
    return gammainc(a, np.asarray(x, dtype=float))
