"""Command-line front end.

Subcommands: ``fit`` (run a sampler and emit the posterior hazard curve),
``oracle`` (exact small-n posterior by enumeration), ``prior-predictive``
(hazard/survival curves before seeing events), ``validate`` (cumulant and
Poisson-calculus checks).  Exit codes: 0 ok, 2 validation failure, 3
numeric degeneracy, 4 I/O failure.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, crm, plotting
from .config import RunConfig, load_config
from .data import load_csv
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateModelError,
    DivergentIntegralError,
    EnumerationCapError,
    NumericError,
)
from .levy import (
    GeneralizedGamma,
    PointMass,
    cumulant_quadrature,
    exponential_measure,
    lebesgue,
    log_cumulant,
)
from .kernels import DykstraLaud
from .partitions import esf_log_prob
from .posterior import (
    ModelSpec,
    exact_partition_posterior,
    marginal_hazard,
    marginal_survival,
    mean_intensity_given,
    predictive_hazard,
    prior_mean_intensity,
)
from .samplers import estimate, gibbs_chain

_VALIDATION_EXIT = 2
_NUMERIC_EXIT = 3
_IO_EXIT = 4


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, DataError, EnumerationCapError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_VALIDATION_EXIT)
        except (DivergentIntegralError, DegenerateModelError, NumericError) as exc:
            click.echo(f"numeric error: {exc}", err=True)
            sys.exit(_NUMERIC_EXIT)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(_IO_EXIT)

    return wrapper


def _apply_overrides(cfg: RunConfig, seed, replicates, workers) -> RunConfig:
    raw = dict(cfg.raw)
    if seed is not None:
        raw["seed"] = seed
    if replicates is not None:
        raw["replicates"] = replicates
    if workers is not None:
        raw["workers"] = workers
    from .config import build_config

    return build_config(raw)


def _write_manifest(out: Path, command: str, cfg: RunConfig, extra: dict | None = None):
    payload = {
        "command": command,
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "created_unix": time.time(),
    }
    if extra:
        payload.update(extra)
    (out / "manifest.json").write_text(json.dumps(payload, indent=2))


def _write_hazard_csv(path: Path, ts, hazard, se):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "posterior_mean_hazard", "mc_se"])
        for t, h, s in zip(ts, hazard, se):
            writer.writerow([repr(float(t)), repr(float(h)), repr(float(s))])


config_opt = click.option("--config", "config_path", required=True,
                          type=click.Path(exists=True, dir_okay=False),
                          help="flat key=value run configuration")
out_opt = click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
                       help="output directory (created if missing)")
seed_opt = click.option("--seed", type=int, default=None, help="override the config seed")
workers_opt = click.option("--workers", type=int, default=None, help="parallel workers")
repl_opt = click.option("--replicates", "-B", type=int, default=None,
                        help="override replicate count")


@click.group()
@click.version_option(version=__version__)
def main():
    """Hazard-rate and intensity inference with Levy moving-average priors."""


@main.command()
@config_opt
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="time,event CSV")
@out_opt
@seed_opt
@workers_opt
@repl_opt
@_guarded
def fit(config_path, data_path, out_dir, seed, workers, replicates):
    """Sample the posterior and write the estimated hazard curve."""
    cfg = _apply_overrides(load_config(config_path), seed, replicates, workers)
    data = load_csv(data_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = ModelSpec(cfg.kernel, cfg.family, cfg.eta, data, cfg.settings)
    t0 = time.perf_counter()
    grid = cfg.grid

    diagnostics: dict = {
        "version": __version__, "config_hash": cfg.config_hash(),
        "seed": cfg.seed, "sampler": cfg.sampler, "replicates": cfg.replicates,
        "n_events": data.n, "n_records": data.m,
    }

    if data.n == 0:
        hazard = prior_mean_intensity(model, grid)
        se = np.zeros_like(hazard)
        diagnostics["note"] = "no events: curve is the exposure-tilted prior mean"
    elif cfg.sampler in ("wcr", "sis"):
        def functional(p, ystar):
            return mean_intensity_given(model, p, ystar, grid)

        res = estimate(functional, model, cfg.replicates, cfg.seed,
                       sampler=cfg.sampler, workers=cfg.workers)
        hazard, se = np.atleast_1d(res.value), np.atleast_1d(res.se)
        diagnostics["ess"] = res.ess
        diagnostics["log_weight_quantiles"] = res.log_weight_quantiles
        diagnostics["degenerate_weights"] = bool(res.ess < 10.0)
    else:
        states = gibbs_chain(model, cfg.replicates, cfg.seed, burn_in=cfg.burn_in)
        values = np.array([
            mean_intensity_given(model, s.partition, s.unique_values(), grid)
            for s in states
        ])
        hazard = values.mean(axis=0)
        n_batches = min(20, len(values))
        if n_batches >= 2:
            batches = np.array_split(values, n_batches)
            bmeans = np.array([b.mean(axis=0) for b in batches])
            se = bmeans.std(axis=0, ddof=1) / math.sqrt(n_batches)
        else:
            se = np.full_like(hazard, np.nan)
        diagnostics["sweeps_kept"] = len(states)
        diagnostics["burn_in"] = cfg.burn_in

    diagnostics["runtime_s"] = time.perf_counter() - t0
    _write_hazard_csv(out / "hazard.csv", grid, hazard, se)
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, indent=2))
    _write_manifest(out, "fit", cfg, {"data_hash": data.content_hash()})

    if cfg.crm_draws > 0:
        _export_crm_draws(model, cfg, out)
    if cfg.figures:
        plotting.render_hazard(out / "hazard.png", grid, hazard, se)
    click.echo(f"wrote {out / 'hazard.csv'}")


def _export_crm_draws(model: ModelSpec, cfg: RunConfig, out: Path):
    from .samplers import replicate_rng, wcr_draw

    crm_dir = out / "crm_draws"
    crm_dir.mkdir(exist_ok=True)
    eps = cfg.epsilon if cfg.epsilon is not None else crm.auto_epsilon(model)
    reports = []
    for b in range(cfg.crm_draws):
        rng = replicate_rng(cfg.seed, 2**32 + b)
        if model.n:
            d = wcr_draw(model, rng)
            ystar = np.array([
                float(model.cell_posterior(c).sample(rng)) for c in d.partition.cells
            ])
            draw = crm.draw_posterior_crm(model, d.partition, ystar, eps, rng)
        else:
            from .partitions import Partition

            draw = crm.draw_posterior_crm(model, Partition(()), np.array([]), eps, rng)
        draw.write_csv(crm_dir / f"draw_{b:04d}.csv")
        reports.append(draw.truncation_report())
    (crm_dir / "truncation.json").write_text(json.dumps(reports, indent=2))


@main.command()
@config_opt
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@out_opt
@seed_opt
@click.option("--esf-theta", type=float, default=None,
              help="also run the Ewens-sampling-formula sanity mode with this total mass")
@_guarded
def oracle(config_path, data_path, out_dir, seed, esf_theta):
    """Exact partition posterior and hazard by brute-force enumeration."""
    cfg = _apply_overrides(load_config(config_path), seed, None, None)
    data = load_csv(data_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = ModelSpec(cfg.kernel, cfg.family, cfg.eta, data, cfg.settings)
    table = exact_partition_posterior(model)
    (out / "partition_posterior.json").write_text(table.to_json())
    hazard = predictive_hazard(model, cfg.grid, table)
    _write_hazard_csv(out / "hazard.csv", cfg.grid, hazard, np.zeros_like(hazard))
    _write_manifest(out, "oracle", cfg, {"data_hash": data.content_hash()})
    if cfg.figures:
        plotting.render_hazard(out / "hazard.png", cfg.grid, hazard,
                               title="Exact posterior mean hazard")
        plotting.render_partition_posterior(out / "partition_posterior.png", table.probs)
    click.echo(f"wrote {out / 'partition_posterior.json'}")

    if esf_theta is not None:
        report = _esf_sanity(data, esf_theta, cfg)
        (out / "esf_check.json").write_text(json.dumps(report, indent=2))
        if report["max_abs_diff"] > 1e-10:
            click.echo(f"ESF check failed: max diff {report['max_abs_diff']:.3g}", err=True)
            sys.exit(_VALIDATION_EXIT)
        click.echo(f"ESF check ok (max diff {report['max_abs_diff']:.3g})")


def _esf_sanity(data, theta: float, cfg: RunConfig) -> dict:
    """With a gamma family and a point-mass base measure the partition
    posterior collapses to the Ewens sampling formula with mass theta,
    whatever the data: the kernel products cancel across partitions."""
    y0 = float(np.min(data.X)) / 2.0
    model = ModelSpec(
        DykstraLaud(), GeneralizedGamma(0.0, 1.0), PointMass(y0, mass=theta),
        data, cfg.settings,
    )
    table = exact_partition_posterior(model)
    rows = []
    max_diff = 0.0
    for p, pr in zip(table.partitions, table.probs):
        ref = math.exp(esf_log_prob(p, theta))
        max_diff = max(max_diff, abs(pr - ref))
        rows.append({"cells": [list(c) for c in p.cells],
                     "prob": float(pr), "esf_prob": ref})
    return {"theta": theta, "n": data.n, "max_abs_diff": max_diff, "partitions": rows}


@main.command("prior-predictive")
@config_opt
@out_opt
@_guarded
def prior_predictive(config_path, out_dir):
    """Prior predictive hazard and survival curves on the output grid."""
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fam, kern, eta = cfg.family, cfg.kernel, cfg.eta
    closed = (
        isinstance(kern, DykstraLaud)
        and isinstance(fam, GeneralizedGamma)
        and not callable(fam.b)
        and fam.b == 0.0
        and 0.0 < fam.alpha < 1.0
        and getattr(eta, "name", "") == "lebesgue"
        and eta.lo == 0.0
        and eta.hi >= cfg.grid[-1]
    )
    rows = []
    for t in cfg.grid:
        t = float(t)
        hazard = marginal_hazard(kern, fam, eta, t, rel_tol=cfg.settings.rel_tol)
        survival = marginal_survival(kern, fam, eta, t, rel_tol=cfg.settings.rel_tol)
        row = [t, hazard, survival]
        if closed:
            scale = math.exp(float(eta.log_density(np.array([cfg.grid[0]]))[0]))
            a = fam.alpha
            row += [
                scale * t**a / a,
                math.exp(-scale * t ** (a + 1.0) / (a * (a + 1.0))),
            ]
        rows.append(row)
    header = ["t", "hazard", "survival"]
    if closed:
        header += ["hazard_closed_form", "survival_closed_form"]
    with open(out / "prior_predictive.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    _write_manifest(out, "prior-predictive", cfg)
    if cfg.figures:
        arr = np.array(rows)
        plotting.render_prior_predictive(out / "prior_predictive.png",
                                         arr[:, 0], arr[:, 1], arr[:, 2])
    click.echo(f"wrote {out / 'prior_predictive.csv'}")


@main.command()
@config_opt
@out_opt
@seed_opt
@repl_opt
@_guarded
def validate(config_path, out_dir, seed, replicates):
    """Cumulant closed-form checks plus the tilting and moment-measure
    Monte Carlo harnesses; exits nonzero on any failure."""
    cfg = _apply_overrides(load_config(config_path), seed, replicates, None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    B = max(cfg.replicates, 10_000)
    report = {"version": __version__, "config_hash": cfg.config_hash(),
              "seed": cfg.seed, "B": B}
    failures = []

    grid_max_rel = _cumulant_grid_check()
    report["cumulant_grid_max_rel_err"] = grid_max_rel
    if grid_max_rel > 1e-8:
        failures.append(f"cumulant grid: max rel err {grid_max_rel:.3g} > 1e-8")

    harness = []
    for i, (fam, eta, f, h) in enumerate(_tilting_configs()):
        rep = crm.verify_tilting(fam, eta, f, h, B, cfg.seed + i, name=f"tilting_{i}")
        harness.append(rep.as_dict())
        if not rep.passed():
            failures.append(f"{rep.name}: |z| = {abs(rep.z_score):.2f} >= 4")
    for i, (fam, eta, gs) in enumerate(_moment_configs()):
        rep = crm.verify_moment_identity(fam, eta, gs, B, cfg.seed + 100 + i,
                                         name=f"moments_{i}_n{len(gs)}")
        harness.append(rep.as_dict())
        if not rep.passed():
            failures.append(f"{rep.name}: |z| = {abs(rep.z_score):.2f} >= 4")
    report["harness"] = harness
    report["failures"] = failures
    report["passed"] = not failures
    (out / "validation.json").write_text(json.dumps(report, indent=2))
    for line in failures:
        click.echo(f"FAIL {line}", err=True)
    if failures:
        sys.exit(_VALIDATION_EXIT)
    click.echo(f"all checks passed (report: {out / 'validation.json'})")


def _cumulant_grid_check() -> float:
    worst = 0.0
    for alpha in (-1.0, 0.0, 0.25, 0.5, 0.9):
        for rate in (0.1, 1.0, 3.0, 10.0):
            fam = GeneralizedGamma(alpha, rate if alpha <= 0 else 0.0)
            g = 0.0 if alpha <= 0 else rate
            for l in range(1, 6):
                closed = math.exp(float(log_cumulant(fam, l, g)))
                ref = cumulant_quadrature(fam, l, g)
                worst = max(worst, abs(closed - ref) / abs(ref))
    from .levy import BetaProcess

    for c in (0.5, 1.0, 5.0):
        fam = BetaProcess(c)
        for g in (0.0, 1.0, 5.0, 10.0):
            for l in range(1, 6):
                closed = math.exp(float(log_cumulant(fam, l, g)))
                ref = cumulant_quadrature(fam, l, g)
                worst = max(worst, abs(closed - ref) / abs(ref))
    return worst


def _tilting_configs():
    return [
        (GeneralizedGamma(-1.0, 1.0), lebesgue(0.0, 1.0),
         lambda s, y: 0.5 * (1.0 - np.exp(-s)), lambda s, y: 0.3 * s / (1.0 + s)),
        (GeneralizedGamma(-0.5, 2.0), lebesgue(0.0, 2.0, scale=0.75),
         lambda s, y: 0.8 * (1.0 - np.exp(-2.0 * s)) * np.exp(-y),
         lambda s, y: 0.2 * np.minimum(s, 1.0)),
        (GeneralizedGamma(-2.0, 1.5), exponential_measure(1.0, mass=1.5),
         lambda s, y: np.full(np.shape(s), 0.4), lambda s, y: 0.6 * s / (2.0 + s) * y / (1.0 + y)),
    ]


def _moment_configs():
    g1 = lambda s, y: s / (1.0 + s)
    g2 = lambda s, y: 1.0 - np.exp(-s)
    g3 = lambda s, y: np.exp(-y) * np.minimum(s, 2.0)
    return [
        (GeneralizedGamma(-1.0, 1.0), lebesgue(0.0, 1.0), [g1, g2]),
        (GeneralizedGamma(-0.5, 2.0), exponential_measure(2.0, mass=2.0), [g1, g3]),
        (GeneralizedGamma(-1.5, 1.0), lebesgue(0.0, 1.5, scale=0.5), [g1, g2, g3]),
    ]


if __name__ == "__main__":
    main()
