"""Panel-based Gauss-Legendre quadrature and grid samplers.

All positive integrands are handled in the log domain: integrands are
callables mapping an ndarray of abscissae to an ndarray of log-values
(-inf allowed for zero).  Unbounded upper limits are mapped onto (0, 1)
through y = lo + t/(1-t).  Interior kinks are handled by splitting the
domain at caller-supplied knots; integrable endpoint singularities by
geometric panel grading toward the endpoint.  Node counts double until
two successive estimates agree to the requested relative tolerance.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .exceptions import DivergentIntegralError, NumericError

DEFAULT_REL_TOL = 1e-9
DEFAULT_START_NODES = 128
MAX_DOUBLINGS = 6
# beyond this, panels are bisected instead: leggauss node generation is
# cubic in n while panel splitting is linear
MAX_NODES_PER_PANEL = 1024


@lru_cache(maxsize=64)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _refine(panels, n: int):
    """One refinement step: double nodes, or bisect panels at the cap."""
    if n < MAX_NODES_PER_PANEL:
        return panels, n * 2
    split = []
    for a, b in panels:
        mid = 0.5 * (a + b)
        if a < mid < b:
            split.extend([(a, mid), (mid, b)])
        else:
            split.append((a, b))
    return split, n


def _to_unit(y, lo):
    # inverse of y = lo + t/(1-t)
    u = y - lo
    return u / (1.0 + u)


def _graded(a: float, b: float, levels: int, toward_hi: bool):
    """Geometric subdivision of (a, b) toward one endpoint.

    Subdivision stops at float resolution and the innermost sliver at the
    (typically singular) endpoint is dropped rather than evaluated, so no
    node can land on the endpoint itself.  The dropped width is at most
    max(2^-levels, ~2^-48) of the panel, which bounds the truncated mass
    of an integrable algebraic singularity.
    """
    w = b - a
    min_w = max(abs(a), abs(b), 1e-300) * 2.0**-48
    seq = []
    for k in range(levels):
        w_out, w_in = w * 2.0**-k, w * 2.0 ** -(k + 1)
        if w_in < min_w:
            break
        seq.append((b - w_out, b - w_in) if toward_hi else (a + w_in, a + w_out))
    # keep panels ascending: the toward-lo sequence was built outside-in
    return seq if toward_hi else seq[::-1]


def _panels(lo: float, hi: float, knots, grade_lo: int, grade_hi: int):
    """Split (lo, hi) at interior knots, then grade end panels geometrically."""
    pts = [lo]
    for k in sorted(set(float(k) for k in knots)):
        if lo < k < hi:
            pts.append(k)
    pts.append(hi)
    panels = [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a]
    if grade_lo > 0 and panels:
        a, b = panels[0]
        panels = _graded(a, b, grade_lo, toward_hi=False) + panels[1:]
    if grade_hi > 0 and panels:
        a, b = panels[-1]
        panels = panels[:-1] + _graded(a, b, grade_hi, toward_hi=True)
    return [(a, b) for a, b in panels if b > a]


def _nodes_weights(panels, n):
    """All GL nodes/weights over the panel list, flattened."""
    x, w = _leggauss(n)
    a = np.array([p[0] for p in panels])
    b = np.array([p[1] for p in panels])
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def log_integrate(
    log_f,
    lo: float,
    hi: float,
    *,
    knots=(),
    rel_tol: float = DEFAULT_REL_TOL,
    start_nodes: int = DEFAULT_START_NODES,
    max_doublings: int = MAX_DOUBLINGS,
    grade_lo: int = 0,
    grade_hi: int = 0,
) -> float:
    """log of integral_{lo}^{hi} exp(log_f(y)) dy.

    Returns -inf for a numerically-zero integral.  Raises
    DivergentIntegralError when the estimate blows up, NumericError when
    doubling stalls above ``rel_tol``.
    """
    if hi <= lo:
        return -np.inf
    if np.isinf(hi):
        t_knots = [_to_unit(k, lo) for k in knots if k > lo]

        def log_g(t):
            t = np.asarray(t)
            y = lo + t / (1.0 - t)
            return log_f(y) - 2.0 * np.log1p(-t)

        return log_integrate(
            log_g, 0.0, 1.0, knots=t_knots, rel_tol=rel_tol,
            start_nodes=start_nodes, max_doublings=max_doublings,
            grade_lo=grade_lo, grade_hi=grade_hi,
        )

    panels = _panels(lo, hi, knots, grade_lo, grade_hi)
    prev = None
    last_change = np.inf
    n = start_nodes
    for _ in range(max_doublings + 1):
        nodes, weights = _nodes_weights(panels, n)
        vals = np.asarray(log_f(nodes), dtype=float)
        if np.isnan(vals).any():
            raise NumericError("integrand returned NaN")
        est = logsumexp(vals + np.log(weights))
        if est > 700.0:
            raise DivergentIntegralError(
                f"integral estimate exp({est:.3g}) overflows; intensity likely divergent"
            )
        if prev is not None:
            if est == -np.inf and prev == -np.inf:
                return -np.inf
            last_change = abs(est - prev)
            if last_change <= rel_tol:
                return est
        prev = est
        panels, n = _refine(panels, n)
    if last_change > 1e-5:
        raise NumericError(
            f"quadrature did not converge (last change {last_change:.3g})",
            residual=float(last_change),
        )
    return est


def integrate(
    f,
    lo: float,
    hi: float,
    *,
    knots=(),
    rel_tol: float = DEFAULT_REL_TOL,
    start_nodes: int = DEFAULT_START_NODES,
    max_doublings: int = MAX_DOUBLINGS,
    grade_lo: int = 0,
    grade_hi: int = 0,
) -> float:
    """Signed-integrand companion of :func:`log_integrate`."""
    if hi <= lo:
        return 0.0
    if np.isinf(hi):
        t_knots = [_to_unit(k, lo) for k in knots if k > lo]

        def g(t):
            t = np.asarray(t)
            y = lo + t / (1.0 - t)
            return f(y) / (1.0 - t) ** 2

        return integrate(
            g, 0.0, 1.0, knots=t_knots, rel_tol=rel_tol,
            start_nodes=start_nodes, max_doublings=max_doublings,
            grade_lo=grade_lo, grade_hi=grade_hi,
        )

    panels = _panels(lo, hi, knots, grade_lo, grade_hi)
    prev = None
    last_change = np.inf
    n = start_nodes
    for _ in range(max_doublings + 1):
        nodes, weights = _nodes_weights(panels, n)
        vals = np.asarray(f(nodes), dtype=float)
        if np.isnan(vals).any():
            raise NumericError("integrand returned NaN")
        est = float(np.dot(vals, weights))
        if prev is not None:
            last_change = abs(est - prev)
            if last_change <= rel_tol * max(abs(est), 1e-300):
                return est
        prev = est
        panels, n = _refine(panels, n)
    if last_change > 1e-5 * max(abs(est), 1e-300):
        raise NumericError(
            f"quadrature did not converge (last change {last_change:.3g})",
            residual=float(last_change),
        )
    return est


def uniform_grid(lo: float, hi: float, n: int = 2049, knots=()) -> np.ndarray:
    """Uniform grid on (lo, hi), with knots inserted as grid points.

    An unbounded hi is mapped through t/(1-t); the returned grid is then
    uniform in the transformed coordinate.
    """
    if np.isinf(hi):
        t = np.linspace(0.0, 1.0, n, endpoint=False)[1:]
        grid = lo + t / (1.0 - t)
    else:
        grid = np.linspace(lo, hi, n)
    ks = [k for k in knots if lo < k < hi]
    if ks:
        grid = np.unique(np.concatenate([grid, np.asarray(ks, dtype=float)]))
    return grid


def log_spaced_grid(lo: float, hi: float, n: int = 2049) -> np.ndarray:
    if lo <= 0:
        raise ValueError("log-spaced grid requires lo > 0")
    return np.exp(np.linspace(np.log(lo), np.log(hi), n))


class GridSampler:
    """Exact inverse-CDF sampler for the piecewise-linear density through
    (grid, exp(log_density)) points; also exposes the grid CDF."""

    def __init__(self, grid: np.ndarray, log_density: np.ndarray):
        grid = np.asarray(grid, dtype=float)
        logd = np.asarray(log_density, dtype=float)
        if grid.ndim != 1 or grid.shape != logd.shape or grid.size < 2:
            raise ValueError("grid and log_density must be 1-d arrays of equal length >= 2")
        peak = np.max(logd)
        if not np.isfinite(peak):
            raise DivergentIntegralError("density is zero or non-finite on the whole grid")
        d = np.exp(logd - peak)
        h = np.diff(grid)
        masses = 0.5 * (d[:-1] + d[1:]) * h
        total = masses.sum()
        if total <= 0:
            raise DivergentIntegralError("density has zero mass on the grid")
        self.grid = grid
        self._d = d
        self._cdf = np.concatenate([[0.0], np.cumsum(masses)]) / total
        self.log_norm = float(np.log(total) + peak)

    @classmethod
    def from_log_density(cls, log_f, grid: np.ndarray) -> "GridSampler":
        return cls(grid, np.asarray(log_f(np.asarray(grid)), dtype=float))

    def sample(self, rng, size=None) -> np.ndarray:
        scalar = size is None
        m = 1 if scalar else int(size)
        u = rng.random(m)
        idx = np.searchsorted(self._cdf, u, side="right") - 1
        idx = np.clip(idx, 0, len(self.grid) - 2)
        x0 = self.grid[idx]
        h = self.grid[idx + 1] - x0
        d0 = self._d[idx]
        d1 = self._d[idx + 1]
        bin_mass = self._cdf[idx + 1] - self._cdf[idx]
        frac = np.where(bin_mass > 0, (u - self._cdf[idx]) / np.where(bin_mass > 0, bin_mass, 1.0), 0.5)
        slope = d1 - d0
        disc = d0 * d0 + frac * slope * (d0 + d1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(
                np.abs(slope) > 1e-12 * (d0 + d1 + 1e-300),
                (np.sqrt(np.maximum(disc, 0.0)) - d0) / np.where(slope != 0, slope, 1.0),
                frac,
            )
        out = x0 + np.clip(s, 0.0, 1.0) * h
        return float(out[0]) if scalar else out


class DegenerateSampler:
    """Point-mass counterpart of :class:`GridSampler`."""

    def __init__(self, location: float, log_norm: float):
        self.location = float(location)
        self.log_norm = float(log_norm)

    def sample(self, rng, size=None):
        if size is None:
            return self.location
        return np.full(int(size), self.location)
