"""Monte Carlo driver for Type I error and estimation-bias studies.

Work is cut into blocks of replicates for one sample size.  Every
replicate derives its data (and its permutations) from its own
:class:`~poisperm.samplers.SeedPath`, and blocks are reassembled in
replicate order, so output is identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .glm import design_matrix, fit_poisson, wald_pvalue
from .permtest import OriginalFitError, permutation_pvalue
from .samplers import SeedPath
from .scenarios import ScenarioSpec, estimate_lambda, gen_censored_poisson, generate

log = logging.getLogger(__name__)

METHODS = ("wald", "permutation")
RESULTS_HEADER = [
    "scenario", "kind_params", "n", "method", "K", "N_perm", "rejections",
    "rate", "ci_lo", "ci_hi", "n_failed", "master_seed",
]
BIAS_HEADER = ["n", "replicate", "bias"]
BLOCK_SIZE = 25

PAPER_TYPE1_SEGMENTS = ((1.0, 2.0, 30), (2.0, 5.0, 30))
PAPER_BIAS_SEGMENTS = ((1.0, 6.0, 10),)


# ------------------------------------------------------------------ #
# Grids, rates and bands
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class SizeGrid:
    segments: tuple[tuple[float, float, int], ...]
    sizes: tuple[int, ...]


def make_grid(segments: Iterable[Sequence[float]]) -> SizeGrid:
    """Sample sizes log10-spaced per segment, rounded, deduplicated and sorted."""
    segs = tuple((float(lo), float(hi), int(pts)) for lo, hi, pts in segments)
    if not segs:
        raise ValueError("grid needs at least one segment")
    sizes: set[int] = set()
    for lo, hi, pts in segs:
        if not lo < hi:
            raise ValueError(f"segment needs lo < hi, got ({lo}, {hi})")
        if pts < 2:
            raise ValueError(f"segment needs at least 2 points, got {pts}")
        for e in np.linspace(lo, hi, pts):
            sizes.add(int(math.floor(10.0**e + 0.5)))
    if min(sizes) < 1:
        raise ValueError("grid produced a non-positive sample size")
    return SizeGrid(segs, tuple(sorted(sizes)))


def parse_grid(text: str) -> SizeGrid:
    """Parse ``"lo:hi:points[,lo:hi:points...]"`` (log10 bounds)."""
    segs = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) != 3:
            raise ValueError(f"bad grid segment {part!r}; expected lo:hi:points")
        try:
            segs.append((float(bits[0]), float(bits[1]), int(bits[2])))
        except ValueError:
            raise ValueError(f"bad grid segment {part!r}") from None
    return make_grid(segs)


def type1_rate(p_values, alpha: float = 0.05) -> float:
    """Fraction of p-values strictly below ``alpha``."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        raise ValueError("no p-values")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    return int(np.count_nonzero(p < alpha)) / p.size


def binomial_band(K: int, alpha: float = 0.05) -> tuple[float, float]:
    """``alpha +/- 2 * sqrt(alpha * (1 - alpha) / K)`` clipped to [0, 1]."""
    if K < 1:
        raise ValueError("K must be >= 1")
    half = 2.0 * math.sqrt(alpha * (1.0 - alpha) / K)
    return max(0.0, alpha - half), min(1.0, alpha + half)


def smooth_rates(points, window: int = 5) -> list[tuple[float, float]]:
    """Centred moving average of ``(x, rate)`` pairs sorted by ``x``.

    Windows are truncated at the ends rather than padded.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    pts = sorted((float(x), float(r)) for x, r in points)
    half = window // 2
    out = []
    for i, (x, _) in enumerate(pts):
        chunk = [r for _, r in pts[max(0, i - half): i + half + 1]]
        out.append((x, sum(chunk) / len(chunk)))
    return out


# ------------------------------------------------------------------ #
# Type I error experiment
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class TypeIErrorEstimate:
    scenario: ScenarioSpec
    n: int
    method: str
    K: int
    N_perm: int
    rejections: int
    rate: float
    ci_lo: float
    ci_hi: float
    alpha: float
    n_failed: int
    master_seed: int
    refits: int = field(default=0, compare=False)

    def csv_row(self) -> list[str]:
        return [
            self.scenario.kind.value, self.scenario.params_label, str(self.n), self.method,
            str(self.K), str(self.N_perm), str(self.rejections), _fmt(self.rate),
            _fmt(self.ci_lo), _fmt(self.ci_hi), str(self.n_failed), str(self.master_seed),
        ]


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _replicate_block(spec, n, size_index, reps, master_seed, methods, n_perm, add_one):
    """p-values for replicates ``reps`` at one size; NaN marks a failed replicate."""
    wald = np.full(len(reps), np.nan)
    perm = np.full(len(reps), np.nan)
    refits = 0
    unreliable = 0
    for k, r in enumerate(reps):
        seed = SeedPath(master_seed, spec.stream_id, size_index, r)
        data = generate(spec, n, seed)
        fit = fit_poisson(design_matrix(data.x1), data.y)
        if not fit.converged:
            log.info("n=%d replicate %d: original fit %s", n, r, fit.status.value)
            continue
        if "wald" in methods:
            wald[k] = wald_pvalue(fit, 1).p_value
        if "permutation" in methods:
            try:
                res = permutation_pvalue(data, n_perm, seed, add_one=add_one, original=fit)
            except OriginalFitError:
                continue
            refits += n_perm
            unreliable += res.unreliable
            perm[k] = res.p_value
    if unreliable:
        log.warning("n=%d: %d replicate(s) had more than 5%% failed permutation fits", n, unreliable)
    return wald, perm, refits


def _blocks(n_sizes: int, K: int, block: int):
    for i in range(n_sizes):
        for start in range(0, K, block):
            yield i, range(start, min(K, start + block))


def _run_units(fn, units, threads: int):
    if threads <= 1 or len(units) <= 1:
        return [fn(*u) for u in units]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, *zip(*units)))


def default_threads() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_type1_experiment(
    spec: ScenarioSpec,
    grid: SizeGrid,
    K: int = 1000,
    N_perm: int = 1000,
    methods: Sequence[str] = METHODS,
    master_seed: int = 0,
    *,
    alpha: float = 0.05,
    threads: int = 1,
    add_one: bool = False,
) -> list[TypeIErrorEstimate]:
    """Estimate rejection rates per (sample size, method).

    Each replicate's dataset is shared by both methods.  Replicates whose
    fit fails are counted in ``n_failed`` and treated as non-rejections,
    so every rate keeps ``K`` as its denominator.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not grid.sizes:
        raise ValueError("empty grid")
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if not methods or unknown:
        raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {methods}")
    if "permutation" in methods and N_perm < 1:
        raise ValueError("N_perm must be >= 1")
    if min(grid.sizes) < 3:
        raise ValueError("sample sizes must be >= 3 to fit a slope")

    blocks = list(_blocks(len(grid.sizes), K, BLOCK_SIZE))
    units = [
        (spec, grid.sizes[i], i, reps, master_seed, methods, N_perm, add_one) for i, reps in blocks
    ]
    outputs = _run_units(_replicate_block, units, threads)

    per_size = {i: ([], [], 0) for i in range(len(grid.sizes))}
    for (i, _), (w, p, refits) in zip(blocks, outputs):
        ws, ps, rf = per_size[i]
        ws.append(w)
        ps.append(p)
        per_size[i] = (ws, ps, rf + refits)

    lo, hi = binomial_band(K, alpha)
    estimates = []
    for i, n in enumerate(grid.sizes):
        ws, ps, refits = per_size[i]
        for method in methods:
            pv = np.concatenate(ws if method == "wald" else ps)
            failed = int(np.count_nonzero(np.isnan(pv)))
            rejections = int(np.count_nonzero(pv[~np.isnan(pv)] < alpha))
            estimates.append(TypeIErrorEstimate(
                scenario=spec, n=n, method=method, K=K,
                N_perm=N_perm if method == "permutation" else 0,
                rejections=rejections, rate=rejections / K, ci_lo=lo, ci_hi=hi,
                alpha=alpha, n_failed=failed, master_seed=master_seed,
                refits=refits if method == "permutation" else 0,
            ))
    return estimates


def replicate_pvalues(
    spec: ScenarioSpec,
    n: int,
    K: int,
    N_perm: int = 1000,
    methods: Sequence[str] = METHODS,
    master_seed: int = 0,
    *,
    size_index: int = 0,
    threads: int = 1,
) -> dict[str, np.ndarray]:
    """Per-replicate p-values at a single sample size (NaN for failed replicates)."""
    blocks = [reps for _, reps in _blocks(1, K, BLOCK_SIZE)]
    units = [(spec, n, size_index, reps, master_seed, tuple(methods), N_perm, False) for reps in blocks]
    outputs = _run_units(_replicate_block, units, threads)
    out = {}
    if "wald" in methods:
        out["wald"] = np.concatenate([w for w, _, _ in outputs])
    if "permutation" in methods:
        out["permutation"] = np.concatenate([p for _, p, _ in outputs])
    return out


def total_fits(estimates: Sequence[TypeIErrorEstimate]) -> int:
    """Original fits (one per replicate and size) plus all permutation refits."""
    sizes = {(e.scenario, e.n): e.K for e in estimates}
    return sum(sizes.values()) + sum(e.refits for e in estimates)


def write_results_csv(estimates: Sequence[TypeIErrorEstimate], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for e in estimates:
            w.writerow(e.csv_row())


# ------------------------------------------------------------------ #
# Censored-Poisson bias study
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class BiasRecord:
    n: int
    replicate: int
    bias: float


def _bias_block(lam, threshold, n, size_index, reps, master_seed, scenario_id):
    out = []
    for r in reps:
        seed = SeedPath(master_seed, scenario_id, size_index, r)
        y = gen_censored_poisson(lam, threshold, n, seed)
        out.append(BiasRecord(n, r, estimate_lambda(y) - lam))
    return out


def run_bias_experiment(
    lam: float,
    threshold: int,
    grid: SizeGrid,
    replicates: int = 1000,
    master_seed: int = 0,
    *,
    threads: int = 1,
) -> list[BiasRecord]:
    """Bias of the sample-mean rate estimate under low-count censoring."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    scenario_id = ScenarioSpec.censored(lam, threshold).stream_id
    units = [
        (lam, threshold, grid.sizes[i], i, reps, master_seed, scenario_id)
        for i, reps in _blocks(len(grid.sizes), replicates, BLOCK_SIZE)
    ]
    records = []
    for chunk in _run_units(_bias_block, units, threads):
        records.extend(chunk)
    return records


def summarize_bias(records: Iterable[BiasRecord]) -> dict[int, dict[str, float]]:
    """Per-size median, quartiles and IQR of the recorded biases."""
    by_n: dict[int, list[float]] = {}
    for r in records:
        by_n.setdefault(r.n, []).append(r.bias)
    out = {}
    for n in sorted(by_n):
        q1, med, q3 = np.percentile(by_n[n], [25, 50, 75])
        out[n] = {"median": float(med), "q1": float(q1), "q3": float(q3), "iqr": float(q3 - q1)}
    return out


def write_bias_csv(records: Sequence[BiasRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BIAS_HEADER)
        for r in records:
            w.writerow([r.n, r.replicate, repr(r.bias)])


def write_manifest(path, config: dict, grid: SizeGrid, fits: int, wall_time: float) -> None:
    from . import __version__

    manifest = {
        "version": __version__,
        "config": config,
        "grid": {"segments": [list(s) for s in grid.segments], "sizes": list(grid.sizes)},
        "total_fits": fits,
        "wall_time_seconds": round(wall_time, 3),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if hasattr(obj, "value"):
        return obj.value
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
