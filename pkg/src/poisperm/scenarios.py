"""Data-generating processes for the simulation studies.

Every scenario keeps the outcome independent of the observed predictor
``x1`` (the true slope is zero), so any rejection is a false positive.
The processes differ in how the fitted Poisson model is wrong:

* ``null_poisson`` -- not wrong at all; the calibration baseline.
* ``misspecified_f`` -- outcomes are rounded F(d1, d2) draws.
* ``omitted_predictor`` -- outcomes depend on a hidden normal ``x2``.
* ``censored_poisson`` -- Poisson counts below a threshold recorded as 0.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .samplers import (
    STREAM_X1,
    STREAM_X2,
    STREAM_Y,
    FParams,
    SeedPath,
    discretize,
    sample_f,
    sample_normal,
    sample_poisson,
)


class ScenarioKind(str, Enum):
    NULL_POISSON = "null_poisson"
    MISSPECIFIED_F = "misspecified_f"
    OMITTED_PREDICTOR = "omitted_predictor"
    CENSORED_POISSON = "censored_poisson"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    beta0: float | None = None
    beta2: float | None = None
    f_params: FParams | None = None
    lam: float | None = None
    censor_threshold: int | None = None

    def __post_init__(self):
        kind = ScenarioKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ScenarioKind.NULL_POISSON:
            _require_finite(beta0=self.beta0)
        elif kind is ScenarioKind.OMITTED_PREDICTOR:
            _require_finite(beta0=self.beta0, beta2=self.beta2)
        elif kind is ScenarioKind.MISSPECIFIED_F:
            if self.f_params is None:
                object.__setattr__(self, "f_params", FParams())
        elif kind is ScenarioKind.CENSORED_POISSON:
            if self.lam is None or not (math.isfinite(self.lam) and self.lam > 0):
                raise ValueError("censored_poisson needs lam > 0")
            if self.censor_threshold is None or int(self.censor_threshold) != self.censor_threshold \
                    or self.censor_threshold < 0:
                raise ValueError("censored_poisson needs an integer censor_threshold >= 0")

    @classmethod
    def null(cls, beta0: float = 0.3) -> ScenarioSpec:
        return cls(ScenarioKind.NULL_POISSON, beta0=beta0)

    @classmethod
    def scenario1(cls, d1: int = 8, d2: int = 8) -> ScenarioSpec:
        return cls(ScenarioKind.MISSPECIFIED_F, f_params=FParams(d1, d2))

    @classmethod
    def scenario2(cls, beta0: float, beta2: float) -> ScenarioSpec:
        return cls(ScenarioKind.OMITTED_PREDICTOR, beta0=beta0, beta2=beta2)

    @classmethod
    def censored(cls, lam: float = 5.0, censor_threshold: int = 2) -> ScenarioSpec:
        return cls(ScenarioKind.CENSORED_POISSON, lam=lam, censor_threshold=censor_threshold)

    @property
    def params_label(self) -> str:
        """Only the parameters relevant to ``kind``, as ``key=value`` pairs."""
        k = self.kind
        if k is ScenarioKind.NULL_POISSON:
            return f"beta0={self.beta0:g}"
        if k is ScenarioKind.OMITTED_PREDICTOR:
            return f"beta0={self.beta0:g};beta2={self.beta2:g}"
        if k is ScenarioKind.MISSPECIFIED_F:
            return f"d1={self.f_params.d1};d2={self.f_params.d2}"
        return f"lambda={self.lam:g};threshold={self.censor_threshold}"

    @property
    def stream_id(self) -> int:
        """Stable 31-bit id used as the scenario level of a SeedPath."""
        text = f"{self.kind.value}|{self.params_label}"
        return zlib.crc32(text.encode()) & 0x7FFFFFFF


def _require_finite(**values):
    for name, v in values.items():
        if v is None or not math.isfinite(v):
            raise ValueError(f"{name} must be a finite real number")


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    x1: np.ndarray
    x2_hidden: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.y) != len(self.x1):
            raise ValueError("y and x1 must have equal lengths")
        if self.x2_hidden is not None and len(self.x2_hidden) != len(self.y):
            raise ValueError("x2_hidden must match y in length")

    @property
    def n(self) -> int:
        return len(self.y)

    def to_csv(self, path) -> None:
        cols = ["y", "x1"] + (["x2_hidden"] if self.x2_hidden is not None else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i in range(self.n):
                row = [int(self.y[i]), repr(float(self.x1[i]))]
                if self.x2_hidden is not None:
                    row.append(repr(float(self.x2_hidden[i])))
                w.writerow(row)


def read_dataset(path: str | Path) -> Dataset:
    """Load a CSV with header ``y,x1`` and an optional ``x2_hidden`` column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = {"y", "x1"} - set(header)
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        ys, xs, x2s = [], [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                yv = float(row["y"])
                xv = float(row["x1"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if not (math.isfinite(yv) and yv >= 0 and yv == int(yv)):
                raise ValueError(f"{path}:{lineno}: y must be a nonnegative integer, got {row['y']!r}")
            if not math.isfinite(xv):
                raise ValueError(f"{path}:{lineno}: x1 must be finite")
            ys.append(int(yv))
            xs.append(xv)
            if "x2_hidden" in header and row.get("x2_hidden") not in (None, ""):
                x2s.append(float(row["x2_hidden"]))
    x2 = np.array(x2s) if x2s and len(x2s) == len(ys) else None
    return Dataset(np.array(ys, dtype=np.int64), np.array(xs, dtype=float), x2)


def _check_size(n: int, minimum: int = 2) -> int:
    if int(n) != n or n < minimum:
        raise ValueError(f"n must be an integer >= {minimum}, got {n!r}")
    return int(n)


def gen_null(spec: ScenarioSpec, n: int, seed: SeedPath) -> Dataset:
    n = _check_size(n)
    x1 = sample_normal(seed.child(stream=STREAM_X1), n)
    y = sample_poisson(seed.child(stream=STREAM_Y), np.full(n, math.exp(spec.beta0)))
    return Dataset(y, x1)


def gen_scenario1(n: int, seed: SeedPath, params: FParams | None = None) -> Dataset:
    n = _check_size(n)
    params = params or FParams()
    x1 = sample_normal(seed.child(stream=STREAM_X1), n)
    y = discretize(sample_f(seed.child(stream=STREAM_Y), params, n))
    return Dataset(y, x1)


def gen_scenario2(spec: ScenarioSpec, n: int, seed: SeedPath) -> Dataset:
    if spec.kind is not ScenarioKind.OMITTED_PREDICTOR:
        raise ValueError(f"gen_scenario2 needs an omitted_predictor spec, got {spec.kind.value}")
    n = _check_size(n)
    x1 = sample_normal(seed.child(stream=STREAM_X1), n)
    x2 = sample_normal(seed.child(stream=STREAM_X2), n)
    y = sample_poisson(seed.child(stream=STREAM_Y), np.exp(spec.beta0 + spec.beta2 * x2))
    return Dataset(y, x1, x2_hidden=x2)


def gen_censored_poisson(lam: float, censor_threshold: int, n: int, seed: SeedPath) -> np.ndarray:
    """Poisson(lam) counts with every value below the threshold recorded as 0."""
    if not lam > 0:
        raise ValueError("lam must be > 0")
    if censor_threshold < 0:
        raise ValueError("censor_threshold must be >= 0")
    n = _check_size(n, minimum=1)
    y = sample_poisson(seed.child(stream=STREAM_Y), np.full(n, float(lam)))
    y[y < censor_threshold] = 0
    return y


def estimate_lambda(y) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("cannot estimate a rate from an empty sample")
    return float(y.mean())


def generate(spec: ScenarioSpec, n: int, seed: SeedPath) -> Dataset:
    """Dispatch to the generator for ``spec.kind``."""
    kind = spec.kind
    if kind is ScenarioKind.NULL_POISSON:
        return gen_null(spec, n, seed)
    if kind is ScenarioKind.MISSPECIFIED_F:
        return gen_scenario1(n, seed, spec.f_params)
    if kind is ScenarioKind.OMITTED_PREDICTOR:
        return gen_scenario2(spec, n, seed)
    n = _check_size(n)
    x1 = sample_normal(seed.child(stream=STREAM_X1), n)
    return Dataset(gen_censored_poisson(spec.lam, spec.censor_threshold, n, seed), x1)
