"""Deterministic posterior quantities for the multiplicative-intensity
model: cell integrals, the exact small-n partition posterior (the oracle
all samplers are checked against), latent cell posteriors, posterior mean
intensities, predictive hazards, and the tilted moment measure.

Conditional on the data, the partition posterior factors over cells,

    pi(p | X)  prop.to  prod_j I(C_j),
    I(C) = integral_Y [prod_{i in C} k(X_i|y)] kappa_{|C|}(g | y) eta(dy),

where g is the at-risk exposure.  I(C) is the single building block of
everything here and is cached per cell.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import quadrature
from .data import Dataset
from .exceptions import DivergentIntegralError, EnumerationCapError
from .kernels import DykstraLaud, Kernel, exposure_from_data
from .levy import (
    BaseMeasure,
    GeneralizedGamma,
    LevyFamily,
    PointMass,
    laplace_exponent,
)
from .partitions import DEFAULT_ENUMERATION_CAP, Partition, enumerate_partitions


@dataclass(frozen=True)
class QuadSettings:
    rel_tol: float = 1e-9
    start_nodes: int = 128
    grid_points: int = 2049
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP


class ModelSpec:
    """Immutable bundle of kernel, jump family, base measure and data.

    Construction derives the exposure and verifies that the tilted moments
    are finite where the posterior will evaluate them; a support mismatch
    between kernel and data raises instead of being papered over.
    """

    def __init__(self, kernel: Kernel, family: LevyFamily, eta: BaseMeasure,
                 data: Dataset, settings: QuadSettings | None = None):
        self.kernel = kernel
        self.family = family
        self.eta = eta
        self.data = data
        self.settings = settings or QuadSettings()
        self.exposure = exposure_from_data(kernel, data)
        self._cell_cache: dict[tuple, float] = {}
        self._pred_cache: dict[tuple, float] = {}
        self._post_cache: dict[tuple, "CellPosterior"] = {}
        self._check_finiteness()

    @property
    def X(self) -> np.ndarray:
        return self.data.X

    @property
    def n(self) -> int:
        return self.data.n

    # -- internals ------------------------------------------------------

    def _stable_grade(self) -> int:
        """Geometric panel depth for the b = 0 endpoint singularity."""
        fam = self.family
        if (
            isinstance(fam, GeneralizedGamma)
            and not callable(fam.b)
            and fam.b == 0.0
            and isinstance(self.kernel, DykstraLaud)
        ):
            return min(400, int(math.ceil(45.0 / max(fam.alpha, 0.05))))
        return 0

    def _restriction(self, xs: Sequence[float]) -> tuple[float, float]:
        lo, hi = -np.inf, np.inf
        for x in xs:
            a, b = self.kernel.latent_support(x)
            lo, hi = max(lo, a), min(hi, b)
        return lo, hi

    def _check_finiteness(self):
        hi_cap = np.inf
        for x in self.X:
            hi_cap = min(hi_cap, self.kernel.latent_support(float(x))[1])
        if isinstance(self.eta, PointMass):
            nodes = np.array([self.eta.location])
        else:
            lo, hi = self.eta.lo, min(self.eta.hi, hi_cap) if self.n else self.eta.hi
            if not lo < hi:
                # kernel support excludes all of eta: every cell integral is
                # -inf and is reported as such, with the diagnostic raised
                # where a posterior is actually requested
                return
            if np.isinf(hi):
                t = np.linspace(0.0, 1.0, 66)[1:-1]
                nodes = lo + t / (1.0 - t)
            else:
                nodes = np.linspace(lo, hi, 66)[1:-1]
        for order in {1, max(self.n, 1)}:
            vals = self.family.log_kappa(order, self.exposure(nodes), nodes)
            if not np.all(np.isfinite(vals)):
                raise DivergentIntegralError(
                    f"kappa_{order} is not finite on the latent support; "
                    "the posterior is ill-defined for this model/data pair"
                )

    def _log_joint_integral(self, xs: tuple[float, ...], order: int) -> float:
        """log integral [prod_x k(x|y)] kappa_order(g|y) eta(dy) over the
        intersected latent supports."""
        lo, hi = self._restriction(xs)

        def log_f(y):
            out = self.family.log_kappa(order, self.exposure(y), y)
            for x in xs:
                out = out + self.kernel.log_k(x, y)
            return out

        val = self.eta.log_integral(
            log_f, lo=lo, hi=hi, knots=self.exposure.knots,
            grade_hi=self._stable_grade(), rel_tol=self.settings.rel_tol,
        )
        return float(val)

    # -- cached building blocks ------------------------------------------

    def log_cell_integral(self, cell) -> float:
        key = tuple(sorted(int(i) for i in cell))
        if not key:
            raise ValueError("cell must be nonempty")
        if any(i < 0 or i >= self.n for i in key):
            raise IndexError(f"cell {key} indexes outside the {self.n} events")
        if key not in self._cell_cache:
            xs = tuple(float(self.X[i]) for i in key)
            self._cell_cache[key] = self._log_joint_integral(xs, len(key))
        return self._cell_cache[key]

    def log_pred_integral(self, cell, x: float) -> float:
        """log integral k(x|y) [prod_{i in cell} k(X_i|y)] kappa_{|cell|+1}(g|y) eta(dy).

        With an empty cell this is the prior mean-intensity term at x; with
        a nonempty cell, dividing by the cell integral gives the seating
        weight / predictive jump contribution of that cell.
        """
        key = (tuple(sorted(int(i) for i in cell)), float(x))
        if key not in self._pred_cache:
            xs = tuple(float(self.X[i]) for i in key[0]) + (float(x),)
            self._pred_cache[key] = self._log_joint_integral(xs, len(key[0]) + 1)
        return self._pred_cache[key]

    def cell_posterior(self, cell) -> "CellPosterior":
        key = tuple(sorted(int(i) for i in cell))
        if key not in self._post_cache:
            self._post_cache[key] = CellPosterior._build(self, key)
        return self._post_cache[key]


def log_cell_integral(model: ModelSpec, cell) -> float:
    return model.log_cell_integral(cell)


def log_pred_integral(model: ModelSpec, cell, x: float) -> float:
    return model.log_pred_integral(cell, x)


class CellPosterior:
    """Latent-location posterior of one cell: density proportional to
    [prod_{i in C} k(X_i|y)] kappa_{|C|}(g|y) eta(dy).

    Sampling is inverse-CDF on a fine grid with within-bin linear
    interpolation; means are fresh quadratures, not grid sums.
    """

    def __init__(self, model: ModelSpec, cell: tuple, log_norm: float, sampler, lo, hi):
        self.model = model
        self.cell = cell
        self.log_norm = log_norm
        self._sampler = sampler
        self._lo, self._hi = lo, hi

    @classmethod
    def _build(cls, model: ModelSpec, key: tuple) -> "CellPosterior":
        log_norm = model.log_cell_integral(key)
        if log_norm == -np.inf:
            raise DivergentIntegralError(
                f"cell {key} has zero posterior mass: kernel and data supports do not meet"
            )
        xs = tuple(float(model.X[i]) for i in key)
        lo, hi = model._restriction(xs)

        def log_f(y):
            out = model.family.log_kappa(len(key), model.exposure(y), y)
            for x in xs:
                out = out + model.kernel.log_k(x, y)
            return out

        sampler = model.eta.weighted_sampler(
            log_f, lo=lo, hi=hi, knots=model.exposure.knots,
            grid_points=model.settings.grid_points,
        )
        return cls(model, key, log_norm, sampler, lo, hi)

    def sample(self, rng, size=None):
        return self._sampler.sample(rng, size)

    def mean(self, fn: Callable[[np.ndarray], np.ndarray],
             grid_points: int | None = None) -> float:
        """Posterior expectation of fn(Y*) by quadrature."""
        model = self.model
        eta = model.eta
        if isinstance(eta, PointMass):
            return float(np.asarray(fn(np.array([eta.location])))[0])
        xs = tuple(float(model.X[i]) for i in self.cell)

        def integrand(y):
            logd = model.family.log_kappa(len(self.cell), model.exposure(y), y)
            for x in xs:
                logd = logd + model.kernel.log_k(x, y)
            logd = logd + eta.log_density(y) - self.log_norm
            return np.asarray(fn(y)) * np.exp(logd)

        lo = max(eta.lo, self._lo)
        hi = min(eta.hi, self._hi)
        return quadrature.integrate(
            integrand, lo, hi, knots=model.exposure.knots,
            rel_tol=model.settings.rel_tol,
            start_nodes=grid_points or model.settings.start_nodes,
            grade_hi=model._stable_grade(),
        )


def cell_posterior(model: ModelSpec, cell) -> CellPosterior:
    return model.cell_posterior(cell)


@dataclass(frozen=True)
class PartitionPosterior:
    """Exact table pi(p | X) over every partition of the event indices."""

    partitions: tuple[Partition, ...]
    log_weights: np.ndarray
    log_normalizer: float
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "probs", np.exp(self.log_weights - self.log_normalizer))

    def prob_of(self, p: Partition) -> float:
        try:
            idx = self.partitions.index(p)
        except ValueError:
            return 0.0
        return float(self.probs[idx])

    def expectation(self, t: Callable[[Partition], float]) -> float:
        return float(sum(pr * t(p) for p, pr in zip(self.partitions, self.probs)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "log_normalizer": self.log_normalizer,
                "partitions": [
                    {
                        "cells": [list(c) for c in p.cells],
                        "prob": float(pr),
                        "log_weight": float(lw),
                    }
                    for p, pr, lw in zip(self.partitions, self.probs, self.log_weights)
                ],
            },
            indent=2,
        )


def exact_partition_posterior(model: ModelSpec, cap: int | None = None) -> PartitionPosterior:
    """Brute-force pi(p|X) by enumeration; the oracle for every sampler."""
    n = model.n
    if n < 1:
        raise ValueError("need at least one event")
    cap = cap if cap is not None else model.settings.enumeration_cap
    if n > cap:
        raise EnumerationCapError(f"n={n} exceeds the enumeration cap {cap}")
    parts = tuple(enumerate_partitions(n, cap))
    logw = np.array(
        [sum(model.log_cell_integral(c) for c in p.cells) for p in parts]
    )
    return PartitionPosterior(parts, logw, float(logsumexp(logw)))


def mean_intensity_given(model: ModelSpec, p: Partition, ystar, xs) -> np.ndarray:
    """E[lambda(x) | Y, X] on the grid ``xs``: the tilted prior mean plus
    one predictive-jump term k(x|Y_j*) kappa_{e_j+1}/kappa_{e_j} per cell."""
    ystar = np.asarray(ystar, dtype=float)
    if len(ystar) != p.num_cells:
        raise ValueError("need one latent location per cell")
    out = prior_mean_intensity(model, xs)
    if p.num_cells:
        g = model.exposure(ystar)
        jump_means = np.array([
            math.exp(float(model.family.log_jump_mean(len(c), g[j], ystar[j])))
            for j, c in enumerate(p.cells)
        ])
        for i, x in enumerate(np.atleast_1d(xs)):
            out[i] += float(np.dot(model.kernel.k(float(x), ystar), jump_means))
    return out


def prior_mean_intensity(model: ModelSpec, xs) -> np.ndarray:
    """integral k(x|y) kappa_1(g|y) eta(dy) for each grid point."""
    return np.array([
        math.exp(model.log_pred_integral((), float(x))) for x in np.atleast_1d(xs)
    ])


def predictive_hazard(model: ModelSpec, xs, table: PartitionPosterior | None = None) -> np.ndarray:
    """E[lambda(x) | X] on ``xs``, exact by enumeration (n within cap).

    Computed entirely from partition and cell quantities; no realization
    of the completely random measure is involved.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    prior = prior_mean_intensity(model, xs)
    if model.n == 0:
        return prior
    if table is None:
        table = exact_partition_posterior(model)
    out = np.zeros_like(prior)
    for p, pr in zip(table.partitions, table.probs):
        val = prior.copy()
        for c in p.cells:
            log_ic = model.log_cell_integral(c)
            val += np.array([
                math.exp(model.log_pred_integral(c, float(x)) - log_ic) for x in xs
            ])
        out += pr * val
    return out


def log_moment_measure(model: ModelSpec, Y) -> float:
    """log of the tilted moment-measure density at the (possibly tied)
    latent vector Y: prod_j kappa_{e_j}(g|Y_j*) eta-density(Y_j*)."""
    Y = np.asarray(Y, dtype=float)
    p = Partition.from_values(Y.tolist())
    ystar = np.array([Y[c[0]] for c in p.cells])
    g = model.exposure(ystar)
    total = 0.0
    for j, c in enumerate(p.cells):
        total += float(model.family.log_kappa(len(c), g[j], ystar[j]))
    total += float(np.sum(model.eta.log_density(ystar)))
    return total


def marginal_hazard(kernel: Kernel, family: LevyFamily, eta: BaseMeasure,
                    t: float, rel_tol: float = 1e-9) -> float:
    """Prior predictive hazard at t: the mean intensity tilted by the
    at-risk exposure of a single subject surviving to t,

        integral k(t|y) kappa_1(K(t|.) | y) eta(dy).

    For the stable index with the Dykstra-Laud kernel and Lebesgue eta this
    reduces to t^alpha / alpha.
    """
    lo, hi = kernel.latent_support(t)

    def log_f(y):
        return kernel.log_k(t, y) + family.log_kappa(1, kernel.cumulative(t, y), y)

    grade = 0
    if isinstance(family, GeneralizedGamma) and not callable(family.b) and family.b == 0.0:
        grade = min(400, int(math.ceil(45.0 / max(family.alpha, 0.05))))
    val = eta.log_integral(
        log_f, lo=lo, hi=hi, knots=kernel.cumulative_knots(t),
        grade_hi=grade, grade_lo=grade, rel_tol=rel_tol,
    )
    return 0.0 if val == -np.inf else math.exp(val)


def marginal_survival(kernel: Kernel, family: LevyFamily, eta: BaseMeasure,
                      t: float, rel_tol: float = 1e-9) -> float:
    """Prior predictive survival P(T >= t) = exp(-Laplace exponent of the
    at-risk exposure K(t|.))."""
    psi = laplace_exponent(
        family, eta, lambda y: kernel.cumulative(t, y),
        knots=kernel.cumulative_knots(t), rel_tol=rel_tol,
    )
    return math.exp(-psi)
