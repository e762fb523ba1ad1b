"""Run configuration: a flat ``key = value`` text format.

Lines are ``key = value`` pairs; blank lines and ``#`` comments are
ignored.  Values are parsed as booleans (true/false), numbers, comma
lists of numbers, or strings.  There are no defaults for the kernel or
the base measure: both must be spelled out because the model has no
canonical prior.

Recognized keys::

    kernel        dykstra-laud | exponential | rectangular
    kernel_sigma  bandwidth (rectangular only)
    family        generalized-gamma | beta-process
    alpha, b      generalized gamma index and decay; b may be a number,
                  "affine:a0,a1" (a0 + a1*y) or "exp-decay:s,r" (s*e^{-r y})
    c             beta-process concentration (number or named form as above)
    eta           lebesgue | exponential | point-mass
    eta_support   lo,hi           (lebesgue)
    eta_scale     density scale   (lebesgue, default 1)
    eta_rate      decay rate      (exponential)
    eta_mass      total mass      (exponential / point-mass, default 1)
    eta_lo        left endpoint   (exponential, default 0)
    eta_location  atom location   (point-mass)
    sampler       wcr | sis | gibbs        (default wcr)
    replicates    importance replicates or Gibbs sweeps (default 10000)
    seed          master seed (default 0)
    burn_in       Gibbs burn-in fraction (default 0.1)
    grid_min, grid_max, grid_points   output hazard grid (points >= 2)
    quad_rel_tol, quad_start_nodes, latent_grid_points, enumeration_cap
    epsilon       CRM jump floor: "auto" or a positive number
    crm_draws     posterior CRM draws to export (default 0)
    figures       render figures next to the CSV output (default true)
    workers       parallel workers (default 1)
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .kernels import DykstraLaud, Exponential, Kernel, Rectangular
from .levy import (
    Affine,
    BaseMeasure,
    BetaProcess,
    ExpDecay,
    GeneralizedGamma,
    LevyFamily,
    PointMass,
    exponential_measure,
    lebesgue,
)
from .posterior import QuadSettings

_SAMPLERS = ("wcr", "sis", "gibbs")


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    if "," in t:
        try:
            return [float(p) for p in t.split(",")]
        except ValueError:
            pass
    return t


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_scalar(value)
    return out


def _param_fn(raw, key: str):
    """A numeric parameter or a named built-in function of y."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(raw, str):
        name, _, args = raw.partition(":")
        try:
            vals = [float(a) for a in args.split(",")] if args else []
        except ValueError:
            raise ConfigError(f"{key}: bad arguments in {raw!r}") from None
        if name == "affine" and len(vals) == 2:
            return Affine(vals[0], vals[1])
        if name == "exp-decay" and len(vals) == 2:
            return ExpDecay(vals[0], vals[1])
        raise ConfigError(
            f"{key}: expected a number, 'affine:a0,a1' or 'exp-decay:s,r', got {raw!r}"
        )
    raise ConfigError(f"{key}: expected a number or named function, got {raw!r}")


@dataclass(frozen=True)
class RunConfig:
    kernel: Kernel
    family: LevyFamily
    eta: BaseMeasure
    sampler: str
    replicates: int
    seed: int
    burn_in: float
    grid: np.ndarray
    settings: QuadSettings
    epsilon: float | None
    crm_draws: int
    figures: bool
    workers: int
    raw: dict = field(repr=False)

    def config_hash(self) -> str:
        canon = "\n".join(f"{k}={self.raw[k]!r}" for k in sorted(self.raw))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _build_kernel(raw: dict) -> Kernel:
    name = raw.get("kernel")
    if name is None:
        raise ConfigError("kernel: required (the model has no default kernel)")
    if name == "dykstra-laud":
        return DykstraLaud()
    if name == "exponential":
        return Exponential()
    if name == "rectangular":
        sigma = raw.get("kernel_sigma")
        if not isinstance(sigma, (int, float)) or sigma <= 0:
            raise ConfigError("kernel_sigma: rectangular kernel needs a positive bandwidth")
        return Rectangular(float(sigma))
    raise ConfigError(f"kernel: unknown kernel {name!r}")


def _build_family(raw: dict) -> LevyFamily:
    name = raw.get("family")
    if name is None:
        raise ConfigError("family: required")
    try:
        if name == "generalized-gamma":
            if "alpha" not in raw or "b" not in raw:
                raise ConfigError("family: generalized-gamma needs 'alpha' and 'b'")
            return GeneralizedGamma(float(raw["alpha"]), _param_fn(raw["b"], "b"))
        if name == "beta-process":
            if "c" not in raw:
                raise ConfigError("family: beta-process needs 'c'")
            return BetaProcess(_param_fn(raw["c"], "c"))
    except ValueError as exc:
        raise ConfigError(f"family: {exc}") from exc
    raise ConfigError(f"family: unknown family {name!r}")


def _build_eta(raw: dict) -> BaseMeasure:
    name = raw.get("eta")
    if name is None:
        raise ConfigError("eta: required (the model has no default base measure)")
    if name == "lebesgue":
        sup = raw.get("eta_support")
        if not (isinstance(sup, list) and len(sup) == 2 and sup[0] < sup[1]):
            raise ConfigError("eta_support: need 'lo,hi' with lo < hi")
        return lebesgue(sup[0], sup[1], scale=float(raw.get("eta_scale", 1.0)))
    if name == "exponential":
        rate = raw.get("eta_rate")
        if not isinstance(rate, (int, float)) or rate <= 0:
            raise ConfigError("eta_rate: need a positive rate")
        return exponential_measure(
            float(rate), mass=float(raw.get("eta_mass", 1.0)),
            lo=float(raw.get("eta_lo", 0.0)),
        )
    if name == "point-mass":
        loc = raw.get("eta_location")
        if not isinstance(loc, (int, float)):
            raise ConfigError("eta_location: required for a point mass")
        return PointMass(float(loc), mass=float(raw.get("eta_mass", 1.0)))
    raise ConfigError(f"eta: unknown base measure {name!r}")


def build_config(raw: dict) -> RunConfig:
    kernel = _build_kernel(raw)
    family = _build_family(raw)
    eta = _build_eta(raw)

    sampler = raw.get("sampler", "wcr")
    if sampler not in _SAMPLERS:
        raise ConfigError(f"sampler: must be one of {_SAMPLERS}, got {sampler!r}")
    replicates = int(raw.get("replicates", 10_000))
    if replicates < 1:
        raise ConfigError("replicates: must be >= 1")
    seed = int(raw.get("seed", 0))
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed: must fit an unsigned 64-bit integer")
    burn_in = float(raw.get("burn_in", 0.1))
    if not 0.0 <= burn_in < 1.0:
        raise ConfigError("burn_in: must lie in [0, 1)")

    gmin = raw.get("grid_min")
    gmax = raw.get("grid_max")
    gpts = raw.get("grid_points")
    if gmin is None or gmax is None or gpts is None:
        raise ConfigError("grid_min/grid_max/grid_points: the output grid is required")
    gpts = int(gpts)
    if gpts < 2:
        raise ConfigError("grid_points: must be >= 2")
    if not float(gmin) < float(gmax):
        raise ConfigError("grid_min/grid_max: need grid_min < grid_max")
    grid = np.linspace(float(gmin), float(gmax), gpts)

    settings = QuadSettings(
        rel_tol=float(raw.get("quad_rel_tol", 1e-9)),
        start_nodes=int(raw.get("quad_start_nodes", 128)),
        grid_points=int(raw.get("latent_grid_points", 2049)),
        enumeration_cap=int(raw.get("enumeration_cap", 10)),
    )

    eps_raw = raw.get("epsilon", "auto")
    if eps_raw == "auto":
        epsilon = None
    elif isinstance(eps_raw, (int, float)) and eps_raw >= 0:
        epsilon = float(eps_raw)
    else:
        raise ConfigError("epsilon: must be 'auto' or a nonnegative number")

    crm_draws = int(raw.get("crm_draws", 0))
    if crm_draws < 0:
        raise ConfigError("crm_draws: must be >= 0")
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers: must be >= 1")
    figures = raw.get("figures", True)
    if not isinstance(figures, bool):
        raise ConfigError("figures: must be true or false")

    return RunConfig(
        kernel=kernel, family=family, eta=eta, sampler=sampler,
        replicates=replicates, seed=seed, burn_in=burn_in, grid=grid,
        settings=settings, epsilon=epsilon, crm_draws=crm_draws,
        figures=figures, workers=workers, raw=dict(raw),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_config_text(text))
