"""Command-line entry point.

Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on usage or
validation errors.  Settings resolve as flags > config file > preset.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .glm import design_matrix, fit_poisson, wald_pvalue
from .harness import (
    PAPER_BIAS_SEGMENTS,
    PAPER_TYPE1_SEGMENTS,
    parse_grid,
    run_bias_experiment,
    run_type1_experiment,
    total_fits,
    write_bias_csv,
    write_manifest,
    write_results_csv,
)
from .permtest import permutation_pvalue
from .plotting import SchemaError, plot_file
from .samplers import SeedPath
from .scenarios import ScenarioSpec, read_dataset

log = logging.getLogger("poisperm")

SIM_COMMANDS = ("bias", "scenario1", "scenario2", "null-check")
PRESETS = {
    "paper": {"k": 1000, "n_perm": 1000, "grid": PAPER_TYPE1_SEGMENTS, "bias_grid": PAPER_BIAS_SEGMENTS},
    "desk": {"k": 200, "n_perm": 200, "grid": ((1.0, 4.0, 8),), "bias_grid": ((1.0, 4.0, 10),)},
}
SCENARIO2_GRID = [(0.3, 0.7), (0.3, 0.8), (0.5, 0.7), (0.5, 0.8)]
# config-file keys and the types they parse to
CONFIG_KEYS = {
    "preset": str, "seed": int, "k": int, "n_perm": int, "grid": str, "alpha": float,
    "beta0": float, "beta2": float, "lambda": float, "threshold": int, "out": str,
    "threads": int, "methods": str,
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    preset: str = "desk"
    seed: int = 0
    k: int = 200
    n_perm: int = 200
    grid: str | None = None
    alpha: float = 0.05
    beta0: float | None = None
    beta2: float | None = None
    lam: float = 5.0
    threshold: int = 2
    out: str | None = None
    threads: int = 1
    methods: tuple[str, ...] = ("wald", "permutation")

    def echo(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "lam"}
        d["lambda"] = self.lam
        d["methods"] = list(self.methods)
        return d


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Keys mirror the flags."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    flag_values = {
        key: getattr(args, key)
        for key in CONFIG_KEYS
        if key != "lambda" and getattr(args, key, None) is not None
    }
    if getattr(args, "lam", None) is not None:
        flag_values["lambda"] = args.lam
    merged = {**file_values, **flag_values}

    preset = merged.get("preset", "desk")
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}")
    base = PRESETS[preset]
    cfg = RunConfig(command=args.command, preset=preset, k=base["k"], n_perm=base["n_perm"])
    for key, value in merged.items():
        if key == "lambda":
            cfg.lam = value
        elif key == "methods":
            cfg.methods = tuple(m.strip() for m in value.split(",") if m.strip())
        elif key != "preset":
            setattr(cfg, key, value)
    if cfg.grid is None:
        segs = base["bias_grid"] if cfg.command == "bias" else base["grid"]
        cfg.grid = ",".join(f"{lo:g}:{hi:g}:{pts}" for lo, hi, pts in segs)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.k < 1:
        raise UsageError("--k must be >= 1")
    if cfg.n_perm < 1:
        raise UsageError("--n-perm must be >= 1")
    if not 0 < cfg.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    if cfg.threads < 1:
        raise UsageError("--threads must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise UsageError("--seed must be a nonnegative 64-bit integer")
    if not set(cfg.methods) <= {"wald", "permutation"} or not cfg.methods:
        raise UsageError("--methods must be a comma list drawn from wald,permutation")
    if cfg.command == "bias" and not (cfg.lam > 0 and cfg.threshold >= 0):
        raise UsageError("--lambda must be > 0 and --threshold >= 0")
    for name in ("beta0", "beta2"):
        v = getattr(cfg, name)
        if v is not None and not math.isfinite(v):
            raise UsageError(f"--{name} must be finite")
    try:
        parse_grid(cfg.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ------------------------------------------------------------------ #
# Commands
# ------------------------------------------------------------------ #


def _scenarios_for(cfg: RunConfig) -> list[ScenarioSpec]:
    if cfg.command == "scenario1":
        return [ScenarioSpec.scenario1()]
    if cfg.command == "null-check":
        return [ScenarioSpec.null(0.3 if cfg.beta0 is None else cfg.beta0)]
    if cfg.beta0 is None and cfg.beta2 is None:
        return [ScenarioSpec.scenario2(b0, b2) for b0, b2 in SCENARIO2_GRID]
    if cfg.beta0 is None or cfg.beta2 is None:
        raise UsageError("scenario2 needs both --beta0 and --beta2 (or neither for the full grid)")
    return [ScenarioSpec.scenario2(cfg.beta0, cfg.beta2)]


def cmd_simulate(cfg: RunConfig) -> int:
    grid = parse_grid(cfg.grid)
    out = Path(cfg.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if cfg.command == "bias":
        records = run_bias_experiment(cfg.lam, cfg.threshold, grid, cfg.k, cfg.seed, threads=cfg.threads)
        csv_path = out / "bias.csv"
        write_bias_csv(records, csv_path)
        fits = 0
    else:
        estimates = []
        for spec in _scenarios_for(cfg):
            estimates.extend(run_type1_experiment(
                spec, grid, cfg.k, cfg.n_perm, cfg.methods, cfg.seed,
                alpha=cfg.alpha, threads=cfg.threads,
            ))
        csv_path = out / "results.csv"
        write_results_csv(estimates, csv_path)
        fits = total_fits(estimates)
    write_manifest(out / "manifest.json", cfg.echo(), grid, fits, time.perf_counter() - start)
    print(f"wrote {csv_path}")
    return 0


def cmd_test(cfg: RunConfig, input_path: str) -> int:
    data = read_dataset(input_path)
    if data.n < 3:
        raise UsageError(f"need at least 3 observations, got {data.n}")
    if not np.any(data.y):
        raise UsageError("all outcomes are zero; the intercept estimate diverges")
    if np.all(data.x1 == data.x1[0]):
        raise UsageError("x1 is constant; the slope is not identifiable")
    fit = fit_poisson(design_matrix(data.x1), data.y)
    if not fit.converged:
        raise UsageError(f"Poisson fit failed ({fit.status.value})")
    wald = wald_pvalue(fit, 1)
    perm = permutation_pvalue(data, cfg.n_perm, SeedPath(cfg.seed), original=fit)
    report = {
        "n": data.n,
        "beta1": fit.slope,
        "se_beta1": float(fit.standard_errors[1]),
        "wald_z": wald.z,
        "wald_p": wald.p_value,
        "permutation_p": perm.p_value,
        "permutation_count": perm.count,
        "N_perm": perm.N,
        "n_failed_fits": perm.n_failed_fits,
        "unreliable": perm.unreliable,
        "seed": cfg.seed,
    }
    print(f"n               {data.n}")
    print(f"beta1           {fit.slope:.6g}  (se {report['se_beta1']:.4g})")
    print(f"Wald p          {wald.p_value:.4g}  (z = {wald.z:.4f})")
    print(f"permutation p   {perm.p_value:.4g}  ({perm.count}/{perm.n_valid})")
    print(f"N_perm          {perm.N}")
    print(f"n_failed_fits   {perm.n_failed_fits}{'  [unreliable]' if perm.unreliable else ''}")
    if cfg.out:
        with open(cfg.out, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    else:
        print(json.dumps(report))
    return 0


def cmd_plot(input_path: str, out: str | None) -> int:
    out = out or str(Path(input_path).with_suffix(".svg"))
    try:
        kind = plot_file(input_path, out)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None
    print(f"wrote {out} ({kind})")
    return 0


# ------------------------------------------------------------------ #
# Argument parsing
# ------------------------------------------------------------------ #


def _add_common(p: argparse.ArgumentParser, *, simulate: bool) -> None:
    p.add_argument("--config", help="key = value file mirroring the flags")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--n-perm", dest="n_perm", type=int)
    p.add_argument("--alpha", type=float)
    if simulate:
        p.add_argument("--k", type=int, help="replicates per setting")
        p.add_argument("--grid", help='log10 segments, "lo:hi:points[,lo:hi:points]"')
        p.add_argument("--beta0", type=float)
        p.add_argument("--beta2", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--threshold", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--methods", help="comma list of wald,permutation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poisperm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "bias": "censored-Poisson rate bias study",
        "scenario1": "Type I error under a rounded-F outcome",
        "scenario2": "Type I error with an omitted predictor",
        "null-check": "Type I error under a correctly specified model",
    }
    for name in SIM_COMMANDS:
        _add_common(sub.add_parser(name, help=helps[name]), simulate=True)
    p_test = sub.add_parser("test", help="Wald and permutation p-values for a y,x1 CSV")
    p_test.add_argument("input")
    _add_common(p_test, simulate=False)
    p_plot = sub.add_parser("plot", help="render a results or bias CSV to SVG")
    p_plot.add_argument("input")
    p_plot.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            return cmd_plot(args.input, args.out)
        cfg = resolve_config(args)
        if args.command == "test":
            return cmd_test(cfg, args.input)
        return cmd_simulate(cfg)
    except UsageError as exc:
        print(f"poisperm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # input validation failures surfaced by the library
        print(f"poisperm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"poisperm {args.command}: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
