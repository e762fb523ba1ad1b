"""Smoothing kernels k(x|y), their cumulatives K(t|y) = int_0^t k(x|y) dx,
and the at-risk exposure accumulated from censored survival data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DykstraLaud:
    """k(x|y) = 1{y <= x}: nondecreasing hazards.  Latent locations y live
    on the time axis (y >= 0)."""

    name = "dykstra-laud"

    def k(self, x: float, y):
        return (np.asarray(y, dtype=float) <= x).astype(float)

    def log_k(self, x: float, y):
        with np.errstate(divide="ignore"):
            return np.log(self.k(x, y))

    def log_k_one(self, x: float, y: float) -> float:
        return 0.0 if y <= x else -np.inf

    def cumulative(self, t: float, y):
        return np.maximum(t - np.asarray(y, dtype=float), 0.0)

    def cumulative_one(self, t: float, y: float) -> float:
        return t - y if y < t else 0.0

    def latent_support(self, x: float):
        # k(x|.) > 0 exactly on y <= x
        return (-np.inf, x)

    def cumulative_knots(self, t: float):
        return (t,)


@dataclass(frozen=True)
class Exponential:
    """k(x|y) = e^{-x y}: completely monotone hazards."""

    name = "exponential"

    def k(self, x: float, y):
        return np.exp(-x * np.asarray(y, dtype=float))

    def log_k(self, x: float, y):
        return -x * np.asarray(y, dtype=float)

    def log_k_one(self, x: float, y: float) -> float:
        return -x * y

    def cumulative(self, t: float, y):
        y = np.asarray(y, dtype=float)
        prod = y * t
        small = np.abs(prod) < 1e-12
        safe_y = np.where(small, 1.0, y)
        return np.where(small, t * (1.0 - 0.5 * prod), -np.expm1(-prod) / safe_y)

    def cumulative_one(self, t: float, y: float) -> float:
        prod = y * t
        if abs(prod) < 1e-12:
            return t * (1.0 - 0.5 * prod)
        return -math.expm1(-prod) / y

    def latent_support(self, x: float):
        return (-np.inf, np.inf)

    def cumulative_knots(self, t: float):
        return ()


@dataclass(frozen=True)
class Rectangular:
    """k(x|m) = 1{|x - m| <= sigma} with a fixed bandwidth sigma; the latent
    coordinate is the window center m."""

    sigma: float
    name: str = field(default="rectangular", init=False)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    def k(self, x: float, y):
        return (np.abs(x - np.asarray(y, dtype=float)) <= self.sigma).astype(float)

    def log_k(self, x: float, y):
        with np.errstate(divide="ignore"):
            return np.log(self.k(x, y))

    def log_k_one(self, x: float, y: float) -> float:
        return 0.0 if abs(x - y) <= self.sigma else -np.inf

    def cumulative(self, t: float, y):
        m = np.asarray(y, dtype=float)
        return np.maximum(np.minimum(t, m + self.sigma) - np.maximum(0.0, m - self.sigma), 0.0)

    def cumulative_one(self, t: float, y: float) -> float:
        return max(min(t, y + self.sigma) - max(0.0, y - self.sigma), 0.0)

    def latent_support(self, x: float):
        return (x - self.sigma, x + self.sigma)

    def cumulative_knots(self, t: float):
        s = self.sigma
        return (-s, s, t - s, t + s)


Kernel = DykstraLaud | Exponential | Rectangular


class Exposure:
    """At-risk exposure g(y) = sum_i K(min(T_i, D_i) | y).

    Additive over records; identically zero for an empty dataset.  Carries
    the provenance of the data it was built from.  Left-truncated records
    (at risk only on (V_i, min(T_i, D_i)]) are supported through
    ``entries``, contributing K(exit|y) - K(entry|y) instead.
    """

    def __init__(self, kernel: Kernel, times, provenance: str = "", entries=None):
        pairs = [(float(t), 0.0) for t in times] if entries is None else [
            (float(t), float(v)) for t, v in zip(times, entries)
        ]
        for t, v in pairs:
            if v < 0 or v >= t:
                raise ValueError(f"entry time {v} must lie in [0, exit time {t})")
        pairs.sort()
        self.kernel = kernel
        self.times = np.array([t for t, _ in pairs], dtype=float)
        self.entries = np.array([v for _, v in pairs], dtype=float)
        self._pairs = pairs
        self.provenance = provenance

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        g = np.zeros(y.shape)
        for t, v in self._pairs:
            g = g + self.kernel.cumulative(t, y)
            if v > 0.0:
                g = g - self.kernel.cumulative(v, y)
        return g

    def at(self, y: float) -> float:
        """Scalar evaluation; the samplers' inner loops live here."""
        cum = self.kernel.cumulative_one
        total = 0.0
        for t, v in self._pairs:
            total += cum(t, y)
            if v > 0.0:
                total -= cum(v, y)
        return total

    @property
    def knots(self) -> tuple[float, ...]:
        ks: set[float] = set()
        for t, v in self._pairs:
            ks.update(self.kernel.cumulative_knots(t))
            if v > 0.0:
                ks.update(self.kernel.cumulative_knots(v))
        return tuple(sorted(ks))

    def __add__(self, other: "Exposure") -> "Exposure":
        if type(self.kernel) is not type(other.kernel):
            raise ValueError("cannot add exposures built from different kernels")
        return Exposure(
            self.kernel,
            np.concatenate([self.times, other.times]),
            provenance=f"{self.provenance}+{other.provenance}",
            entries=np.concatenate([self.entries, other.entries]),
        )


def exposure_from_data(kernel: Kernel, data) -> Exposure:
    """Exposure from a validated dataset, with D_i = inf for event records
    so the at-risk window of record i is (0, min(T_i, D_i)]."""
    return Exposure(kernel, data.exposure_times, provenance=data.content_hash())


def prior_predictive_stable_dl(alpha: float, t: float) -> tuple[float, float]:
    """Hazard and survival of the stable-index prior predictive under the
    Dykstra-Laud kernel with Lebesgue base measure:

        hazard(t)  = t^alpha / alpha
        survival(t) = exp(-t^(alpha+1) / (alpha (alpha+1)))

    which is a Weibull law in t.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if t < 0:
        raise ValueError("t must be >= 0")
    hazard = t**alpha / alpha
    survival = math.exp(-(t ** (alpha + 1.0)) / (alpha * (alpha + 1.0)))
    return hazard, survival
