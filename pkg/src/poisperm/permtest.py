"""Permutation p-value for the slope of a one-predictor Poisson regression.

The predictor is shuffled and the outcome is left untouched, so every
refit sees exactly the original ``y``.  Each shuffle draws from its own
seed path (``permutation_index = j``), so the result does not depend on
how the refits are batched or scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .glm import FitResult, FitStatus, design_matrix, fit_poisson, fit_slope_batch
from .samplers import STREAM_PERMUTE, SeedPath, make_generator
from .scenarios import Dataset

DEFAULT_N_PERM = 1000
UNRELIABLE_FRACTION = 0.05
# rows per batched IRLS call are capped so a chunk stays near this many cells
_CHUNK_CELLS = 2_000_000


class OriginalFitError(ValueError):
    """The unpermuted data could not be fitted, so no p-value exists."""

    def __init__(self, status: FitStatus):
        super().__init__(f"original fit failed with status {status.value}")
        self.status = status


@dataclass(frozen=True)
class PermutationResult:
    beta1_orig: float
    count: int
    N: int
    p_value: float
    n_failed_fits: int

    @property
    def n_valid(self) -> int:
        return self.N - self.n_failed_fits

    @property
    def unreliable(self) -> bool:
        return self.n_failed_fits > UNRELIABLE_FRACTION * self.N


def permutation_seed(seed: SeedPath, j: int) -> SeedPath:
    return seed.child(permutation_index=j, stream=STREAM_PERMUTE)


def shuffle(x, seed: SeedPath) -> np.ndarray:
    """A uniformly random permutation of ``x`` (Fisher-Yates on the seed's stream)."""
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("cannot shuffle an empty vector")
    return seed.generator().permutation(x)


def count_exceedances(perm_slopes, beta1_orig: float) -> int:
    """Number of permuted slopes at least as large in magnitude as the original."""
    return int(np.count_nonzero(np.abs(np.asarray(perm_slopes)) >= abs(beta1_orig)))


def permutation_pvalue(
    data: Dataset,
    N: int = DEFAULT_N_PERM,
    seed: SeedPath | None = None,
    *,
    add_one: bool = False,
    original: FitResult | None = None,
) -> PermutationResult:
    """Permutation p-value for the slope of ``y ~ Poisson(exp(b0 + b1*x1))``.

    Permutation ``j`` (1-based) shuffles ``x1`` with the seed path
    ``seed.child(permutation_index=j)``.  Refits that fail are dropped
    from both the count and the denominator.  With ``add_one`` the
    p-value is ``(count + 1) / (valid + 1)`` instead of ``count / valid``.

    Raises :class:`OriginalFitError` when the unpermuted fit fails.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    if seed is None:
        seed = SeedPath(0)
    y = np.asarray(data.y)
    x1 = np.asarray(data.x1, dtype=float)
    if original is None:
        original = fit_poisson(design_matrix(x1), y)
    if not original.converged:
        raise OriginalFitError(original.status)
    beta1_orig = original.slope

    yf = y.astype(float)
    n = x1.shape[0]
    rows = max(1, _CHUNK_CELLS // n)
    # same streams as shuffle(x1, permutation_seed(seed, j)) without per-j dataclass churn
    key = list(permutation_seed(seed, 0).spawn_key)
    count = 0
    failed = 0
    for start in range(1, N + 1, rows):
        stop = min(N, start + rows - 1)
        perms = np.empty((stop - start + 1, n))
        for i, j in enumerate(range(start, stop + 1)):
            key[3] = j + 1
            perms[i] = make_generator(seed.master_seed, tuple(key)).permutation(x1)
        res = fit_slope_batch(perms, yf)
        ok = res.ok
        failed += int(np.count_nonzero(~ok))
        count += count_exceedances(res.slopes[ok], beta1_orig)

    valid = N - failed
    if add_one:
        p = (count + 1) / (valid + 1)
    else:
        p = count / valid if valid else math.nan
    return PermutationResult(beta1_orig, count, int(N), p, failed)
