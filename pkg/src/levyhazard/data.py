"""Censored survival data: ingestion, validation, synthesis."""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError


@dataclass(frozen=True)
class SurvivalRecord:
    """One observation: time = min(T, D), event = True for an exact death."""

    time: float
    event: bool

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time > 0):
            raise DataError(f"time must be positive and finite, got {self.time}")


class Dataset:
    """An ordered collection of survival records.

    ``X`` holds the n event-flagged times in input order; m counts all
    records.  Ties among event times are allowed.  Censoring times D_i are
    represented implicitly: the at-risk window of every record ends at its
    observed time, with D_i = inf understood for event records.
    """

    def __init__(self, records):
        self.records = tuple(records)
        self.X = np.array([r.time for r in self.records if r.event], dtype=float)
        if self.n == 0 and self.m > 0:
            warnings.warn(
                "dataset has no exact events: the posterior is the exposure-tilted prior",
                UserWarning,
                stacklevel=2,
            )

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def m(self) -> int:
        return len(self.records)

    @property
    def exposure_times(self) -> np.ndarray:
        return np.array([r.time for r in self.records], dtype=float)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for r in self.records:
            h.update(f"{r.time!r},{int(r.event)};".encode())
        return h.hexdigest()[:16]

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other) -> bool:
        return isinstance(other, Dataset) and self.records == other.records

    def __hash__(self):
        return hash(self.records)


def load_csv(path) -> Dataset:
    """Read a ``time,event`` CSV (event in {0, 1}); errors carry row numbers."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [c.strip().lower() for c in rows[0]]
    if header != ["time", "event"]:
        raise DataError(f"{path}: expected header 'time,event', got {rows[0]}")
    records = []
    for idx, row in enumerate(rows[1:], start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"{path} row {idx}: expected 2 columns, got {len(row)}")
        try:
            time = float(row[0])
        except ValueError as exc:
            raise DataError(f"{path} row {idx}, column 'time': not a number: {row[0]!r}") from exc
        if row[1].strip() not in {"0", "1"}:
            raise DataError(f"{path} row {idx}, column 'event': must be 0 or 1, got {row[1]!r}")
        if not (math.isfinite(time) and time > 0):
            raise DataError(f"{path} row {idx}, column 'time': must be positive and finite")
        records.append(SurvivalRecord(time, row[1].strip() == "1"))
    if not records:
        raise DataError(f"{path} contains no data rows")
    return Dataset(records)


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "event"])
        for r in data.records:
            writer.writerow([repr(r.time), int(r.event)])


def synth_weibull(alpha: float, size: int, censor_rate: float = 0.0, seed: int = 0) -> Dataset:
    """Synthetic draws from the stable/Dykstra-Laud prior predictive
    survival law S(t) = exp(-t^(a+1)/(a(a+1))) by inverse transform, with
    independent Uniform(0, c) censoring calibrated to hit ``censor_rate``
    approximately."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if size < 1:
        raise ValueError("size must be >= 1")
    if not 0.0 <= censor_rate < 1.0:
        raise ValueError("censor_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    expo = rng.exponential(size=size)
    times = (alpha * (alpha + 1.0) * expo) ** (1.0 / (alpha + 1.0))
    if censor_rate == 0.0:
        return Dataset(SurvivalRecord(float(t), True) for t in times)
    c_max = _calibrate_censor_bound(alpha, censor_rate)
    censor = rng.uniform(0.0, c_max, size=size)
    return Dataset(
        SurvivalRecord(float(min(t, c)), bool(t <= c)) for t, c in zip(times, censor)
    )


def _survival(alpha: float, t: float) -> float:
    return math.exp(-(t ** (alpha + 1.0)) / (alpha * (alpha + 1.0)))


def _calibrate_censor_bound(alpha: float, rate: float) -> float:
    """Solve E[S(C)] = rate for C ~ Uniform(0, c): the probability a record
    is censored.  E[S(C)] decreases from 1 to 0 in c, so bisection works."""

    def censored_prob(c: float) -> float:
        grid = np.linspace(0.0, c, 4097)
        vals = np.array([_survival(alpha, t) for t in grid])
        return float(np.trapezoid(vals, grid) / c)

    lo, hi = 1e-9, 1.0
    while censored_prob(hi) > rate:
        hi *= 2.0
        if hi > 1e9:
            raise ValueError("failed to calibrate the censoring bound")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if censored_prob(mid) > rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
