"""The three Monte Carlo algorithms over the latent structure: sequential
importance sampling of the latent locations, a Polya-urn Gibbs sweep, and
the weighted Chinese restaurant (WCR) partition sampler, plus
self-normalized importance estimation with diagnostics.

WCR seating weights are ratios of cached cell integrals: marginalizing
the seating weight of an occupied cell over that cell's latent posterior
gives exactly I(C u {r}) / I(C), so the product of the chosen weights
telescopes to prod_j I(C_j) and L(p) q(p) recovers the unnormalized
partition posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import logsumexp

from .exceptions import DegenerateModelError
from .partitions import Partition
from .posterior import ModelSpec

__all__ = [
    "LatentDraw",
    "WcrDraw",
    "Estimate",
    "sis_draw",
    "gibbs_sweep",
    "gibbs_chain",
    "wcr_draw",
    "wcr_log_q_and_L",
    "estimate",
    "replicate_rng",
    "effective_sample_size",
]


@dataclass(frozen=True)
class LatentDraw:
    """Latent locations with their tie partition and log importance weight."""

    Y: np.ndarray
    partition: Partition
    log_weight: float

    def __post_init__(self):
        if self.partition != Partition.from_values(np.asarray(self.Y).tolist()):
            raise ValueError("partition does not match the tie structure of Y")

    def unique_values(self) -> np.ndarray:
        Y = np.asarray(self.Y)
        return np.array([Y[c[0]] for c in self.partition.cells])


@dataclass(frozen=True)
class WcrDraw:
    """A partition with its accumulated seating normalizer log L(p)."""

    partition: Partition
    log_L: float


def replicate_rng(seed: int, replicate: int) -> Generator:
    """Counter-based stream for one replicate; independent of how
    replicates are partitioned across workers."""
    return Generator(Philox(key=np.array([seed, replicate], dtype=np.uint64)))


def _pick(log_ls: list[float], rng) -> tuple[int, float]:
    """Categorical draw from unnormalized log weights; returns the index
    and the log normalizer.  Pure scalar arithmetic: these lists have at
    most a handful of entries and sit in the samplers' innermost loop."""
    m = max(log_ls)
    if m == -np.inf:
        raise DegenerateModelError(
            "all seating weights vanished: kernel and data supports do not meet"
        )
    exps = [math.exp(v - m) for v in log_ls]
    total = sum(exps)
    r = rng.random() * total
    acc = 0.0
    idx = len(exps) - 1
    for i, e in enumerate(exps):
        acc += e
        if r <= acc:
            idx = i
            break
    return idx, m + math.log(total)


def _log_atom_weight(model: ModelSpec, x_new: float, e: int, ystar: float) -> float:
    """k(x_new | Y*) kappa_{e+1}/kappa_e at the atom Y*."""
    lk = model.kernel.log_k_one(x_new, ystar)
    if lk == -np.inf:
        return -np.inf
    return lk + model.family.log_jump_mean_one(e, model.exposure.at(ystar), ystar)


def sis_draw(model: ModelSpec, rng) -> LatentDraw:
    """One sequential importance draw of Y_1..Y_n.

    Each Y_{r+1} is drawn from its exact conditional given the previous
    latents: a new location from the singleton posterior with weight l_0,
    or a previously seen atom Y_j* with weight k(X_{r+1}|Y_j*) times the
    cumulant ratio.  The log importance weight accumulates the step
    normalizers c_r.
    """
    n = model.n
    if n < 1:
        raise ValueError("need at least one event")
    Y = np.empty(n)
    cells: list[list[int]] = []
    ystar: list[float] = []
    log_w = 0.0
    for r in range(n):
        x_r = float(model.X[r])
        log_ls = [model.log_cell_integral((r,))] + [
            _log_atom_weight(model, x_r, len(c), ystar[j]) for j, c in enumerate(cells)
        ]
        choice, log_cr = _pick(log_ls, rng)
        log_w += log_cr
        if choice == 0:
            y_new = float(model.cell_posterior((r,)).sample(rng))
            cells.append([r])
            ystar.append(y_new)
            Y[r] = y_new
        else:
            cells[choice - 1].append(r)
            Y[r] = ystar[choice - 1]
    return LatentDraw(Y, Partition.from_cells(cells), log_w)


def gibbs_sweep(state: LatentDraw, model: ModelSpec, rng, order=None) -> LatentDraw:
    """One full Polya-urn Gibbs sweep: each coordinate is redrawn from its
    conditional given the others, leaving pi(Y | X) invariant.  ``order``
    optionally fixes the coordinate update order."""
    Y = np.array(state.Y, dtype=float)
    n = model.n
    for i in (range(n) if order is None else order):
        groups: dict[float, list[int]] = {}
        for j in range(n):
            if j != i:
                groups.setdefault(float(Y[j]), []).append(j)
        atoms = list(groups.items())
        x_i = float(model.X[i])
        log_ls = [model.log_cell_integral((i,))] + [
            _log_atom_weight(model, x_i, len(c), v) for v, c in atoms
        ]
        choice, _ = _pick(log_ls, rng)
        if choice == 0:
            Y[i] = float(model.cell_posterior((i,)).sample(rng))
        else:
            Y[i] = atoms[choice - 1][0]
    return LatentDraw(Y, Partition.from_values(Y.tolist()), 0.0)


def gibbs_chain(model: ModelSpec, sweeps: int, seed: int,
                burn_in: float = 0.1, init: LatentDraw | None = None) -> list[LatentDraw]:
    """Run the Gibbs sampler from an SIS start; returns post burn-in states."""
    rng = replicate_rng(seed, 0)
    state = init if init is not None else sis_draw(model, rng)
    skip = int(burn_in * sweeps)
    out = []
    for s in range(sweeps):
        state = gibbs_sweep(state, model, rng)
        if s >= skip:
            out.append(state)
    return out


def wcr_draw(model: ModelSpec, rng) -> WcrDraw:
    """One weighted-Chinese-restaurant partition draw.

    Customer r+1 joins occupied cell C with probability proportional to
    I(C u {r+1}) / I(C) (the cell-marginalized seating weight) or opens a
    new cell with probability proportional to I({r+1}); the first customer
    is seated with probability one.  Returns the partition and log L(p),
    the running product of step normalizers.
    """
    n = model.n
    if n < 1:
        raise ValueError("need at least one event")
    cells: list[list[int]] = []
    log_L = 0.0
    for r in range(n):
        log_ls = [model.log_cell_integral((r,))] + [
            model.log_cell_integral(tuple(c) + (r,)) - model.log_cell_integral(tuple(c))
            for c in cells
        ]
        choice, log_lr = _pick(log_ls, rng)
        log_L += log_lr
        if choice == 0:
            cells.append([r])
        else:
            cells[choice - 1].append(r)
    return WcrDraw(Partition.from_cells(cells), log_L)


def wcr_log_q_and_L(model: ModelSpec, p: Partition) -> tuple[float, float]:
    """Deterministic replay of the unique seating path leading to ``p``:
    returns (log q(p), log L(p)).  Used to verify sum_p q(p) = 1 and the
    identity L(p) q(p) = prod_j I(C_j) by exhaustive enumeration."""
    n = p.n
    owner = {}
    for ci, cell in enumerate(p.cells):
        for i in cell:
            owner[i] = ci
    partial: list[list[int]] = []
    cell_of: dict[int, int] = {}
    log_q = 0.0
    log_L = 0.0
    for r in range(n):
        log_ls = np.array(
            [model.log_cell_integral((r,))]
            + [
                model.log_cell_integral(tuple(c) + (r,)) - model.log_cell_integral(tuple(c))
                for c in partial
            ]
        )
        log_lr = float(logsumexp(log_ls))
        log_L += log_lr
        target = owner[r]
        if target in cell_of:
            k = cell_of[target]
            log_q += log_ls[1 + k] - log_lr
            partial[k].append(r)
        else:
            log_q += log_ls[0] - log_lr
            cell_of[target] = len(partial)
            partial.append([r])
    return log_q, log_L


@dataclass(frozen=True)
class Estimate:
    """Self-normalized importance estimate with delta-method standard
    errors and the effective sample size of the weights."""

    value: np.ndarray | float
    se: np.ndarray | float
    ess: float
    B: int
    log_weight_quantiles: dict[str, float]
    log_weights: np.ndarray | None = None


def effective_sample_size(log_weights: np.ndarray) -> float:
    lw = np.asarray(log_weights, dtype=float)
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def estimate(functional, model: ModelSpec, B: int, seed: int, *,
             sampler: str = "wcr", needs_latents: bool = True,
             needs_crm: bool = False, eps: float | None = None,
             workers: int = 1) -> Estimate:
    """Importance-weighted posterior estimate of a functional of
    (partition, unique latents) or, with ``needs_crm``, of the full
    measure.

    ``functional(p, ystar)`` may return a scalar or a vector; ``ystar`` is
    None when ``needs_latents`` is false (partition-only functionals need
    no latent draws).  With ``needs_crm`` the functional is called as
    ``functional(p, ystar, mu)`` where ``mu`` is a posterior draw of the
    random measure truncated at jump floor ``eps``.  Replicates use
    counter-based per-replicate streams, so results do not depend on
    ``workers``.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    if sampler not in ("wcr", "sis"):
        raise ValueError(f"unknown sampler {sampler!r} (expected 'wcr' or 'sis')")
    if needs_crm:
        needs_latents = True
        if eps is None:
            from .crm import auto_epsilon

            eps = auto_epsilon(model)

    if workers > 1:
        from joblib import Parallel, delayed

        chunks = np.array_split(np.arange(B), workers * 4)
        results = Parallel(n_jobs=workers)(
            delayed(_run_replicates)(functional, model, chunk, seed, sampler,
                                     needs_latents, needs_crm, eps)
            for chunk in chunks if len(chunk)
        )
        log_w = np.concatenate([r[0] for r in results])
        values = np.concatenate([r[1] for r in results])
    else:
        log_w, values = _run_replicates(
            functional, model, np.arange(B), seed, sampler, needs_latents,
            needs_crm, eps,
        )

    log_total = logsumexp(log_w)
    if log_total == -np.inf:
        raise DegenerateModelError("all importance weights are zero")
    w = np.exp(log_w - log_total)
    value = np.einsum("b,b...->...", w, values)
    se = np.sqrt(np.einsum("b,b...->...", w**2, (values - value) ** 2))
    qs = np.quantile(log_w, [0.0, 0.25, 0.5, 0.75, 1.0])
    return Estimate(
        value=value if value.ndim else float(value),
        se=se if se.ndim else float(se),
        ess=effective_sample_size(log_w),
        B=B,
        log_weight_quantiles={
            "min": qs[0], "q25": qs[1], "median": qs[2], "q75": qs[3], "max": qs[4]
        },
        log_weights=log_w,
    )


def _run_replicates(functional, model, replicates, seed, sampler, needs_latents,
                    needs_crm=False, eps=None):
    log_w = np.empty(len(replicates))
    values = None
    for k, b in enumerate(replicates):
        rng = replicate_rng(seed, int(b))
        if sampler == "wcr":
            draw = wcr_draw(model, rng)
            p, lw = draw.partition, draw.log_L
            ystar = (
                np.array([float(model.cell_posterior(c).sample(rng)) for c in p.cells])
                if needs_latents else None
            )
        else:
            latent = sis_draw(model, rng)
            p, lw = latent.partition, latent.log_weight
            ystar = latent.unique_values() if needs_latents else None
        if needs_crm:
            from .crm import draw_posterior_crm

            mu = draw_posterior_crm(model, p, ystar, eps, rng)
            t_val = np.asarray(functional(p, ystar, mu), dtype=float)
        else:
            t_val = np.asarray(functional(p, ystar), dtype=float)
        if values is None:
            values = np.empty((len(replicates),) + t_val.shape)
        log_w[k] = lw
        values[k] = t_val
    return log_w, values
