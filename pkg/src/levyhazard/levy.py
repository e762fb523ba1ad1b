"""Jump-intensity families, their tilted cumulants, jump posteriors, and
base measures over the latent location space.

Two families are provided.  The generalized gamma family has jump density
s^{-alpha-1} e^{-b s} / Gamma(1-alpha) on (0, inf), covering the stable
(b=0), gamma (alpha=0), inverse-Gaussian (alpha=1/2) and compound-Poisson
(alpha<0) regimes.  The beta-process family has jump density
c s^{-1} (1-s)^{c-1} on (0, 1).  Both expose the tilted moments

    kappa_l(g | y) = integral s^l e^{-g s} rho(ds | y)

in closed form (the beta case through Kummer's 1F1), the jump posterior
with density proportional to s^e e^{-g s} rho(ds|y), and truncated-tail
quantities needed for simulation.  Exposure arguments ``g`` may be
scalars or arrays aligned with ``y``; location-dependent parameters are
accepted as callables of y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln

from . import quadrature
from .exceptions import DivergentIntegralError
from .special import log_hyp1f1, log_hyp1f1_one, lower_gamma_regularized, upper_gamma

ParamFn = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Affine:
    """Named built-in location dependence a0 + a1*y for b(y) or c(y)."""

    intercept: float
    slope: float = 0.0

    def __call__(self, y):
        return self.intercept + self.slope * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class ExpDecay:
    """Named built-in location dependence a0 * exp(-a1*y)."""

    scale: float
    rate: float

    def __call__(self, y):
        return self.scale * np.exp(-self.rate * np.asarray(y, dtype=float))


def _param_at(param: ParamFn, y):
    if callable(param):
        if y is None:
            raise ValueError("location-dependent parameter needs y")
        return np.asarray(param(y), dtype=float)
    return float(param)


class GeneralizedGamma:
    """Generalized gamma jump intensity with index alpha and decay b."""

    jump_support = (0.0, np.inf)

    def __init__(self, alpha: float, b: ParamFn):
        if alpha >= 1.0:
            raise ValueError("alpha must be < 1")
        if not callable(b):
            b = float(b)
            if alpha <= 0.0 and b <= 0.0:
                raise ValueError("alpha <= 0 requires b > 0")
            if b < 0.0:
                raise ValueError("b must be >= 0")
        self.alpha = float(alpha)
        self.b = b

    def __repr__(self):
        return f"GeneralizedGamma(alpha={self.alpha}, b={self.b})"

    @property
    def finite_activity(self) -> bool:
        return self.alpha < 0.0

    def b_at(self, y):
        return _param_at(self.b, y)

    def _rate(self, g, y):
        rate = self.b_at(y) + np.asarray(g, dtype=float)
        if np.any(rate < 0):
            raise ValueError("negative total decay b(y) + g")
        if np.any(rate == 0):
            raise DivergentIntegralError(
                "b + g = 0: every tilted moment of the generalized gamma intensity diverges"
            )
        return rate

    def log_kappa(self, l: int, g, y=None):
        """log kappa_l = log Gamma(l-a) - log Gamma(1-a) - (l-a) log(b+g)."""
        if l < 1:
            raise ValueError("moment order l must be >= 1")
        a = self.alpha
        return gammaln(l - a) - gammaln(1.0 - a) - (l - a) * np.log(self._rate(g, y))

    def log_jump_mean(self, e: int, g, y=None):
        # kappa_{e+1}/kappa_e = (e - alpha) / (b + g)
        return np.log(e - self.alpha) - np.log(self._rate(g, y))

    def log_jump_mean_one(self, e: int, g: float, y: float) -> float:
        b = self.b if not callable(self.b) else float(self.b(y))
        rate = b + g
        if rate <= 0:
            raise DivergentIntegralError("b + g must be > 0")
        return math.log(e - self.alpha) - math.log(rate)

    def sample_jumps(self, e: int, g, y, rng, size=None):
        """Draws from the jump posterior: Gamma(e - alpha, 1) / (b + g)."""
        rate = self._rate(g, y)
        return rng.gamma(e - self.alpha, size=size) / rate

    def log_levy_density(self, s, y=None):
        s = np.asarray(s, dtype=float)
        b = self.b_at(y)
        return -gammaln(1.0 - self.alpha) + (-self.alpha - 1.0) * np.log(s) - b * s

    def tail_mass(self, eps: float, y=None):
        """integral_eps^inf rho(ds|y)."""
        a = self.alpha
        b = self.b_at(y)
        if eps <= 0:
            if a >= 0:
                raise DivergentIntegralError("infinite-activity intensity has infinite total mass")
            return -np.power(b, a) / a  # Gamma(-a) b^a / Gamma(1-a)
        if np.all(b == 0):
            if a <= 0:
                raise DivergentIntegralError("stable case requires alpha > 0")
            return eps**-a / (a * math.gamma(1.0 - a))
        return np.power(b, a) * upper_gamma(-a, b * eps) / math.gamma(1.0 - a)

    def truncated_mean_mass(self, eps: float, g, y=None):
        """integral_0^eps s e^{-g s} rho(ds|y), the expected mass dropped below eps."""
        if eps <= 0:
            return 0.0
        rate = self._rate(g, y)
        return np.power(rate, self.alpha - 1.0) * lower_gamma_regularized(
            1.0 - self.alpha, rate * eps
        )

    def restricted_jump_sampler(self, eps: float, y=None, grid_points: int = 4097):
        """Sampler for rho(ds|y) restricted to s >= eps and normalized."""
        if eps <= 0:
            if not self.finite_activity:
                raise DivergentIntegralError("eps = 0 needs a finite-activity intensity")
            b = self.b_at(y)
            a = self.alpha
            return _GammaJumpSampler(shape=-a, rate=float(b))
        hi = self._tail_cutoff(eps, y)
        grid = quadrature.log_spaced_grid(eps, hi, grid_points)
        return quadrature.GridSampler(grid, self.log_levy_density(grid, y))

    def _tail_cutoff(self, eps: float, y, frac: float = 1e-13) -> float:
        target = frac * self.tail_mass(eps, y)
        hi = max(2.0 * eps, 1.0)
        for _ in range(200):
            if self.tail_mass(hi, y) < target:
                return hi
            hi *= 2.0
        raise DivergentIntegralError("could not bound the jump tail")


class _GammaJumpSampler:
    def __init__(self, shape: float, rate: float):
        self.shape = shape
        self.rate = rate

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, size=size) / self.rate


class BetaProcess:
    """Beta-process jump intensity c(y) s^{-1} (1-s)^{c(y)-1} on (0, 1)."""

    jump_support = (0.0, 1.0)
    finite_activity = False

    def __init__(self, c: ParamFn):
        if not callable(c) and float(c) <= 0:
            raise ValueError("concentration c must be > 0")
        self.c = c if callable(c) else float(c)

    def __repr__(self):
        return f"BetaProcess(c={self.c})"

    def c_at(self, y):
        c = _param_at(self.c, y)
        if np.any(np.asarray(c) <= 0):
            raise ValueError("concentration c(y) must be > 0")
        return c

    def log_kappa(self, l: int, g, y=None):
        """log kappa_l = log[c B(l, c) 1F1(l, l+c, -g)]."""
        if l < 1:
            raise ValueError("moment order l must be >= 1")
        g = np.asarray(g, dtype=float)
        if np.any(g < 0):
            raise ValueError("exposure g must be >= 0")
        c = self.c_at(y)
        if np.ndim(c) == 0:
            return (
                np.log(c) + gammaln(l) + gammaln(c) - gammaln(l + c)
                + log_hyp1f1(l, l + c, -g)
            )
        # c varies with y: 1F1 parameters vary per element
        g_b = np.broadcast_to(g, np.shape(c)).ravel()
        c_flat = np.asarray(c, dtype=float).ravel()
        vals = np.array(
            [log_hyp1f1(l, l + ci, -gi) for ci, gi in zip(c_flat, g_b)]
        ).reshape(np.shape(c))
        return np.log(c) + gammaln(l) + gammaln(c) - gammaln(l + c) + vals

    def log_jump_mean(self, e: int, g, y=None):
        return self.log_kappa(e + 1, g, y) - self.log_kappa(e, g, y)

    def log_jump_mean_one(self, e: int, g: float, y: float) -> float:
        c = self.c if not callable(self.c) else float(self.c(y))
        return (
            math.log(e) - math.log(e + c)
            + log_hyp1f1_one(e + 1, e + c + 1, -g)
            - log_hyp1f1_one(e, e + c, -g)
        )

    def sample_jumps(self, e: int, g, y, rng, size=None):
        """Jump posterior draws: density prop. to e^{-gs} s^{e-1} (1-s)^{c-1}.

        Rejection from Beta(e, c) with acceptance e^{-g s}; falls back to a
        grid inverse-CDF when the acceptance rate is poor.
        """
        c = float(self.c_at(y))
        g = float(g)
        scalar = size is None
        m = 1 if scalar else int(size)
        accept_rate = math.exp(log_hyp1f1(e, e + c, -g))
        if accept_rate >= 0.01:
            out = np.empty(m)
            filled = 0
            while filled < m:
                batch = max(64, int((m - filled) / accept_rate * 1.2))
                prop = rng.beta(e, c, size=batch)
                keep = prop[rng.random(batch) < np.exp(-g * prop)]
                take = min(len(keep), m - filled)
                out[filled:filled + take] = keep[:take]
                filled += take
        else:
            grid = np.linspace(0.0, 1.0, 8193)[1:-1]
            logd = -g * grid + (e - 1.0) * np.log(grid) + (c - 1.0) * np.log1p(-grid)
            out = quadrature.GridSampler(grid, logd).sample(rng, m)
            out = np.atleast_1d(out)
        return float(out[0]) if scalar else out

    def log_levy_density(self, s, y=None):
        s = np.asarray(s, dtype=float)
        c = self.c_at(y)
        return np.log(c) - np.log(s) + (c - 1.0) * np.log1p(-s)

    def tail_mass(self, eps: float, y=None):
        if eps <= 0:
            raise DivergentIntegralError("beta-process intensity has infinite total mass")
        if eps >= 1:
            return 0.0
        return np.exp(
            quadrature.log_integrate(
                lambda s: self.log_levy_density(s, y), eps, 1.0, grade_hi=60
            )
        )

    def truncated_mean_mass(self, eps: float, g, y=None):
        if eps <= 0:
            return 0.0
        c = self.c_at(y)
        g = float(np.asarray(g))
        return np.exp(
            quadrature.log_integrate(
                lambda s: np.log(c) - g * s + (c - 1.0) * np.log1p(-s),
                0.0,
                min(eps, 1.0),
            )
        )

    def restricted_jump_sampler(self, eps: float, y=None, grid_points: int = 4097):
        if eps <= 0:
            raise DivergentIntegralError("eps = 0 needs a finite-activity intensity")
        grid = quadrature.log_spaced_grid(eps, 1.0 - 1e-12, grid_points)
        return quadrature.GridSampler(grid, self.log_levy_density(grid, y))


LevyFamily = Union[GeneralizedGamma, BetaProcess]


@dataclass(frozen=True)
class JumpLaw:
    """Posterior law of one unique jump: density prop. to s^e e^{-gs} rho(ds|y)."""

    family: LevyFamily
    e: int
    g: float
    y: float | None = None

    def __post_init__(self):
        if self.e < 1:
            raise ValueError("cell size e must be >= 1")
        if self.g < 0:
            raise ValueError("exposure g must be >= 0")

    @property
    def log_mean(self) -> float:
        return float(self.family.log_jump_mean(self.e, self.g, self.y))

    @property
    def mean(self) -> float:
        return math.exp(self.log_mean)

    def sample(self, rng, size=None):
        return self.family.sample_jumps(self.e, self.g, self.y, rng, size)


def log_cumulant(family: LevyFamily, l: int, g, y=None):
    """log kappa_l(e^{-g s} rho | y); closed form per family."""
    return family.log_kappa(l, g, y)


def cumulant_quadrature(family, l: int, g: float, y=None, epsrel: float = 1e-12) -> float:
    """kappa_l by adaptive quadrature of s^l e^{-gs} rho(ds|y): the slow
    route the closed forms are cross-checked against."""
    from scipy.integrate import quad

    if l < 1:
        raise ValueError("moment order l must be >= 1")

    def f(s):
        return s**l * math.exp(-g * s + float(family.log_levy_density(s, y)))

    lo, hi = family.jump_support
    if np.isinf(hi):
        v1, _ = quad(f, lo, 1.0, epsabs=0.0, epsrel=epsrel, limit=200)
        v2, _ = quad(f, 1.0, np.inf, epsabs=0.0, epsrel=epsrel, limit=200)
        return v1 + v2
    v, _ = quad(f, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200)
    return v


def jump_posterior(family: LevyFamily, e: int, g: float, y=None) -> JumpLaw:
    return JumpLaw(family, int(e), float(g), y)


class ExponentialTilt:
    """Intensity e^{-g(y) s} rho(ds|y); composition adds exposures."""

    def __init__(self, base: LevyFamily, g: ParamFn):
        if isinstance(base, ExponentialTilt):
            inner = base.g
            base_family = base.base
            if callable(inner) or callable(g):
                g = _SumFn(inner, g)
            else:
                g = float(inner) + float(g)
            base = base_family
        self.base = base
        self.g = g
        self.jump_support = base.jump_support

    def g_at(self, y):
        return _param_at(self.g, y)

    def log_kappa(self, l: int, g, y=None):
        return self.base.log_kappa(l, np.asarray(g, dtype=float) + self.g_at(y), y)

    def log_jump_mean(self, e: int, g, y=None):
        return self.base.log_jump_mean(e, np.asarray(g, dtype=float) + self.g_at(y), y)

    def sample_jumps(self, e: int, g, y, rng, size=None):
        return self.base.sample_jumps(e, np.asarray(g, dtype=float) + self.g_at(y), y, rng, size)

    def log_levy_density(self, s, y=None):
        s = np.asarray(s, dtype=float)
        return self.base.log_levy_density(s, y) - self.g_at(y) * s


class _SumFn:
    def __init__(self, f1: ParamFn, f2: ParamFn):
        self.f1, self.f2 = f1, f2

    def __call__(self, y):
        return _param_at(self.f1, y) + _param_at(self.f2, y)


def tilt(family, g: ParamFn):
    """Exponentially tilt a jump intensity by exposure g.

    A generalized gamma family with constant parameters tilted by a
    constant is again generalized gamma with b -> b + g, exactly.
    """
    if (
        isinstance(family, GeneralizedGamma)
        and not callable(family.b)
        and not callable(g)
    ):
        return GeneralizedGamma(family.alpha, family.b + float(g))
    return ExponentialTilt(family, g)


# --- base measures over the latent location space ---------------------------


class DensityMeasure:
    """A measure on an interval given by a density; integration is by the
    Gauss-Legendre panel machinery."""

    def __init__(self, lo: float, hi: float, log_density, *,
                 finite_mass: bool, name: str = "custom", knots=()):
        if not lo < hi:
            raise ValueError("support must satisfy lo < hi")
        self.lo = float(lo)
        self.hi = float(hi)
        self._log_density = log_density
        self.finite_mass = bool(finite_mass)
        self.name = name
        self.knots = tuple(knots)

    @property
    def support(self):
        return (self.lo, self.hi)

    def log_density(self, y):
        return self._log_density(np.asarray(y, dtype=float))

    def log_integral(self, log_f, *, lo=None, hi=None, knots=(),
                     grade_lo: int = 0, grade_hi: int = 0,
                     rel_tol: float = quadrature.DEFAULT_REL_TOL) -> float:
        a = self.lo if lo is None else max(self.lo, lo)
        b = self.hi if hi is None else min(self.hi, hi)
        if not a < b:
            return -np.inf
        return quadrature.log_integrate(
            lambda y: np.asarray(log_f(y)) + self.log_density(y),
            a, b, knots=tuple(knots) + self.knots,
            grade_lo=grade_lo, grade_hi=grade_hi, rel_tol=rel_tol,
        )

    def weighted_sampler(self, log_f, *, lo=None, hi=None, knots=(),
                         grid_points: int = 2049):
        a = self.lo if lo is None else max(self.lo, lo)
        b = self.hi if hi is None else min(self.hi, hi)
        if not a < b:
            raise DivergentIntegralError("empty support after restriction")
        grid = quadrature.uniform_grid(a, b, grid_points, knots=tuple(knots) + self.knots)
        return quadrature.GridSampler(
            grid, np.asarray(log_f(grid)) + self.log_density(grid)
        )

    def total_mass(self) -> float:
        if not self.finite_mass:
            raise DivergentIntegralError(f"measure {self.name!r} has infinite mass")
        return math.exp(self.log_integral(lambda y: np.zeros_like(y)))


class PointMass:
    """A single atom: integrals reduce to evaluation."""

    def __init__(self, location: float, mass: float = 1.0):
        if mass <= 0:
            raise ValueError("mass must be > 0")
        self.location = float(location)
        self.mass = float(mass)
        self.finite_mass = True
        self.name = "point-mass"

    @property
    def support(self):
        return (self.location, self.location)

    def log_density(self, y):
        raise ValueError("a point mass has no density with respect to Lebesgue measure")

    def log_integral(self, log_f, *, lo=None, hi=None, **_ignored) -> float:
        if lo is not None and self.location < lo:
            return -np.inf
        if hi is not None and self.location > hi:
            return -np.inf
        val = np.asarray(log_f(np.array([self.location])), dtype=float)[0]
        return float(math.log(self.mass) + val)

    def weighted_sampler(self, log_f, *, lo=None, hi=None, **_ignored):
        return quadrature.DegenerateSampler(
            self.location, self.log_integral(log_f, lo=lo, hi=hi)
        )

    def total_mass(self) -> float:
        return self.mass


BaseMeasure = Union[DensityMeasure, PointMass]


def lebesgue(lo: float, hi: float, scale: float = 1.0) -> DensityMeasure:
    if scale <= 0:
        raise ValueError("scale must be > 0")
    log_s = math.log(scale)
    return DensityMeasure(
        lo, hi, lambda y: np.full(np.shape(y), log_s),
        finite_mass=np.isfinite(hi), name="lebesgue",
    )


def exponential_measure(rate: float, mass: float = 1.0, lo: float = 0.0) -> DensityMeasure:
    """Density mass * rate * e^{-rate (y - lo)} on (lo, inf); total mass ``mass``."""
    if rate <= 0 or mass <= 0:
        raise ValueError("rate and mass must be > 0")
    log_c = math.log(mass) + math.log(rate)
    return DensityMeasure(
        lo, np.inf, lambda y: log_c - rate * (np.asarray(y) - lo),
        finite_mass=True, name="exponential",
    )


def laplace_exponent(family, eta: BaseMeasure, f, *, knots=(),
                     rel_tol: float = quadrature.DEFAULT_REL_TOL) -> float:
    """integral over Y of integral (1 - e^{-s f(y)}) rho(ds|y) eta(dy).

    The generalized gamma inner integral has the closed form
    ((b + f)^alpha - b^alpha)/alpha (log(1 + f/b) at alpha = 0); the beta
    case falls back to quadrature in s.  exp(-result) is the marginal
    survival probability when f is the at-risk exposure.
    """

    def log_psi(y):
        y = np.asarray(y, dtype=float)
        fv = np.asarray(f(y), dtype=float)
        if np.any(fv < 0):
            raise ValueError("exposure function must be nonnegative")
        if isinstance(family, GeneralizedGamma):
            a = family.alpha
            b = family.b_at(y)
            b = np.broadcast_to(np.asarray(b, dtype=float), fv.shape)
            with np.errstate(divide="ignore"):
                if a == 0.0:
                    psi = np.log1p(fv / b)
                else:
                    psi = (np.power(b + fv, a) - np.power(b, a)) / a
        elif isinstance(family, BetaProcess):
            c = np.broadcast_to(np.asarray(family.c_at(y), dtype=float), fv.shape)
            psi = np.array([
                _beta_psi(float(ci), float(fi)) for ci, fi in zip(c.ravel(), fv.ravel())
            ]).reshape(fv.shape)
        else:
            raise TypeError(f"unsupported family {family!r}")
        with np.errstate(divide="ignore"):
            return np.where(psi > 0, np.log(np.where(psi > 0, psi, 1.0)), -np.inf)

    log_val = eta.log_integral(log_psi, knots=knots, rel_tol=rel_tol)
    return 0.0 if log_val == -np.inf else math.exp(log_val)


def _beta_psi(c: float, f: float) -> float:
    if f == 0.0:
        return 0.0

    def log_integrand(s):
        val = -np.expm1(-f * s)
        return np.log(c) + np.log(val) - np.log(s) + (c - 1.0) * np.log1p(-s)

    return math.exp(quadrature.log_integrate(log_integrand, 0.0, 1.0, grade_hi=60))
