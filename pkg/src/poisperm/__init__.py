"""Poisson regression inference with permutation-calibrated slope p-values."""

from importlib.metadata import PackageNotFoundError, version

from .glm import FitResult, FitStatus, WaldTest, design_matrix, fit_poisson, wald_pvalue
from .permtest import PermutationResult, permutation_pvalue, shuffle
from .samplers import FParams, SeedPath
from .scenarios import Dataset, ScenarioKind, ScenarioSpec, generate

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FParams",
    "FitResult",
    "FitStatus",
    "PermutationResult",
    "ScenarioKind",
    "ScenarioSpec",
    "SeedPath",
    "WaldTest",
    "design_matrix",
    "fit_poisson",
    "generate",
    "permutation_pvalue",
    "shuffle",
    "wald_pvalue",
]
