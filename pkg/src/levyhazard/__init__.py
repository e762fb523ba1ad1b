"""Bayesian nonparametric hazard and intensity estimation with Levy
moving-average priors: partition-based posteriors, exact small-n oracles,
and three Monte Carlo samplers."""

__version__ = "0.1.0"

from .data import Dataset, SurvivalRecord, load_csv, synth_weibull, write_csv
from .kernels import (
    DykstraLaud,
    Exponential,
    Exposure,
    Rectangular,
    exposure_from_data,
    prior_predictive_stable_dl,
)
from .levy import (
    Affine,
    BetaProcess,
    DensityMeasure,
    ExpDecay,
    GeneralizedGamma,
    JumpLaw,
    PointMass,
    exponential_measure,
    jump_posterior,
    laplace_exponent,
    lebesgue,
    log_cumulant,
    tilt,
)
from .partitions import (
    NEW,
    Partition,
    crp_predictives,
    enumerate_partitions,
    esf_eppf,
    esf_log_prob,
)

__all__ = [
    "Affine",
    "BetaProcess",
    "Dataset",
    "DensityMeasure",
    "DykstraLaud",
    "ExpDecay",
    "Exponential",
    "Exposure",
    "GeneralizedGamma",
    "JumpLaw",
    "NEW",
    "Partition",
    "PointMass",
    "Rectangular",
    "SurvivalRecord",
    "crp_predictives",
    "enumerate_partitions",
    "esf_eppf",
    "esf_log_prob",
    "exponential_measure",
    "exposure_from_data",
    "jump_posterior",
    "laplace_exponent",
    "lebesgue",
    "load_csv",
    "log_cumulant",
    "prior_predictive_stable_dl",
    "synth_weibull",
    "tilt",
    "write_csv",
]
