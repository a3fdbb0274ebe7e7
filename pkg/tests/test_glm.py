import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import newton_poisson, normal_two_sided
from poisperm.glm import (
    FitStatus,
    NotConvergedError,
    design_matrix,
    fit_poisson,
    fit_slope_batch,
    normal_two_sided_p,
    wald_pvalue,
)

# frozen from oracles.newton_poisson (40 digits, step tolerance 1e-12)
ORACLE_SMALL = {
    "coef": (0.03579110589687956, 0.5660963599075319),
    "se": (0.4968809718280552, 0.3225423341325131),
}


def _fit(x, y):
    return fit_poisson(design_matrix(np.asarray(x, dtype=float)), y)


# ------------------------------------------------------------------ #
# Worked examples
# ------------------------------------------------------------------ #


class TestFitExamples:
    def test_constant_outcome_has_zero_slope(self):
        res = _fit([-1, 0, 1, 2], [2, 2, 2, 2])
        assert res.status is FitStatus.OK
        assert res.coefficients[0] == pytest.approx(math.log(2), abs=1e-10)
        assert res.coefficients[1] == 0.0

    def test_intercept_only_is_log_mean(self):
        res = fit_poisson(design_matrix(n=3), [1, 2, 3])
        assert res.converged
        assert res.coefficients[0] == pytest.approx(math.log(2), abs=1e-10)
        assert res.standard_errors[0] == pytest.approx(1 / math.sqrt(6), rel=1e-8)

    def test_matches_newton_oracle(self):
        res = _fit([-2, -1, 0, 1, 2], [0, 1, 1, 2, 3])
        np.testing.assert_allclose(res.coefficients, ORACLE_SMALL["coef"], atol=1e-8)
        np.testing.assert_allclose(res.standard_errors, ORACLE_SMALL["se"], atol=1e-8)

    def test_oracle_values_still_reproduce(self):
        coef, se = newton_poisson([0, 1, 1, 2, 3], [-2, -1, 0, 1, 2])
        np.testing.assert_allclose(coef, ORACLE_SMALL["coef"], rtol=1e-14)
        np.testing.assert_allclose(se, ORACLE_SMALL["se"], rtol=1e-14)


class TestFitFailures:
    def test_all_zero(self):
        res = _fit([1, 2, 3], [0, 0, 0])
        assert res.status is FitStatus.DEGENERATE_ALL_ZERO
        assert not res.converged

    def test_constant_predictor_is_singular(self):
        res = _fit([1.5] * 5, [0, 1, 1, 2, 3])
        assert res.status is FitStatus.SINGULAR
        assert not res.converged

    def test_iteration_cap(self):
        res = fit_poisson(design_matrix(np.array([-2.0, -1, 0, 1, 2])), [0, 1, 1, 2, 9], max_iter=1)
        assert res.status is FitStatus.MAX_ITER
        assert res.iterations == 1
        assert not res.converged

    def test_iterations_within_cap(self):
        res = _fit([-2, -1, 0, 1, 2], [0, 1, 1, 2, 3])
        assert 1 <= res.iterations <= 25

    @pytest.mark.parametrize(
        "X, y, match",
        [
            (np.ones((3, 3)), [1, 2, 3], "shape"),
            (np.column_stack([np.zeros(3), np.arange(3.0)]), [1, 2, 3], "intercept"),
            (design_matrix(np.arange(3.0)), [1, 2], "length"),
            (design_matrix(np.arange(3.0)), [1, -2, 3], "nonnegative"),
            (design_matrix(np.arange(3.0)), [1, 2.5, 3], "nonnegative"),
            (design_matrix(np.array([0.0, np.inf, 1.0])), [1, 2, 3], "non-finite"),
            (design_matrix(np.array([1.0])), [1], "n >= p"),
        ],
    )
    def test_rejects_bad_input(self, X, y, match):
        with pytest.raises(ValueError, match=match):
            fit_poisson(X, y)


# ------------------------------------------------------------------ #
# Wald test
# ------------------------------------------------------------------ #


class TestWald:
    def test_zero_z(self):
        assert normal_two_sided_p(0.0) == 1.0

    def test_five_percent(self):
        assert normal_two_sided_p(1.959964) == pytest.approx(0.05, abs=1e-4)
        assert normal_two_sided_p(1.959964) == pytest.approx(normal_two_sided(1.959964), rel=1e-12)

    def test_symmetric(self):
        assert normal_two_sided_p(-1.959964) == normal_two_sided_p(1.959964)

    @pytest.mark.parametrize("z", [0.1, 1.0, 3.0, 6.0, 9.0])
    def test_tail_precision(self, z):
        assert normal_two_sided_p(z) == pytest.approx(normal_two_sided(z), rel=1e-12)

    def test_from_fit(self):
        res = _fit([-2, -1, 0, 1, 2], [0, 1, 1, 2, 3])
        w = wald_pvalue(res, 1)
        assert w.z == pytest.approx(ORACLE_SMALL["coef"][1] / ORACLE_SMALL["se"][1], rel=1e-8)
        assert w.p_value == pytest.approx(normal_two_sided(w.z), rel=1e-10)

    def test_rejects_unconverged(self):
        res = _fit([1, 2, 3], [0, 0, 0])
        with pytest.raises(NotConvergedError):
            wald_pvalue(res, 1)

    def test_rejects_bad_index(self):
        res = _fit([-2, -1, 0, 1, 2], [0, 1, 1, 2, 3])
        with pytest.raises(IndexError):
            wald_pvalue(res, 2)

    @given(st.floats(0, 30), st.floats(0, 30))
    def test_monotone_in_abs_z(self, a, b):
        lo, hi = sorted((a, b))
        assert normal_two_sided_p(hi) <= normal_two_sided_p(lo)
        assert 0.0 <= normal_two_sided_p(hi) <= 1.0


# ------------------------------------------------------------------ #
# Properties
# ------------------------------------------------------------------ #


@st.composite
def poisson_data(draw, min_n=6, max_n=60):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    b0 = draw(st.floats(-0.5, 1.5))
    b1 = draw(st.floats(-0.6, 0.6))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = rng.poisson(np.exp(b0 + b1 * x))
    return x, y


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(poisson_data())
    def test_score_equations(self, data):
        x, y = data
        res = _fit(x, y)
        assume(res.converged)
        mu = np.exp(res.coefficients[0] + res.coefficients[1] * x)
        n = len(y)
        assert abs(np.sum(y - mu)) < 1e-6 * n
        assert abs(np.sum((y - mu) * x)) < 1e-6 * n

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 40), min_size=1, max_size=50))
    def test_intercept_closed_form(self, y):
        assume(sum(y) > 0)
        res = fit_poisson(design_matrix(n=len(y)), y)
        assert res.converged
        assert res.coefficients[0] == pytest.approx(math.log(np.mean(y)), abs=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(poisson_data(), st.floats(-5, 5))
    def test_translation(self, data, c):
        x, y = data
        a, b = _fit(x, y), _fit(x + c, y)
        assume(a.converged and b.converged)
        assert b.coefficients[0] == pytest.approx(a.coefficients[0] - c * a.coefficients[1], abs=1e-6)
        assert b.coefficients[1] == pytest.approx(a.coefficients[1], abs=1e-6)
        assert b.standard_errors[1] == pytest.approx(a.standard_errors[1], abs=1e-6)
        assert wald_pvalue(b).p_value == pytest.approx(wald_pvalue(a).p_value, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(poisson_data(), st.sampled_from([-3.0, -0.5, 0.25, 2.0, 10.0]))
    def test_scale(self, data, c):
        x, y = data
        a, b = _fit(x, y), _fit(c * x, y)
        assume(a.converged and b.converged)
        assert b.coefficients[1] == pytest.approx(a.coefficients[1] / c, abs=1e-6)
        assert b.standard_errors[1] == pytest.approx(a.standard_errors[1] / abs(c), abs=1e-6)
        assert wald_pvalue(b).z == pytest.approx(math.copysign(1, c) * wald_pvalue(a).z, abs=1e-6)
        assert wald_pvalue(b).p_value == pytest.approx(wald_pvalue(a).p_value, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(poisson_data())
    def test_converged_fits_have_positive_finite_se(self, data):
        res = _fit(*data)
        if res.status is FitStatus.OK:
            assert res.converged
            assert np.all(np.isfinite(res.standard_errors)) and np.all(res.standard_errors > 0)
            assert res.deviance >= 0


class TestBatch:
    def test_rows_match_single_fits(self):
        rng = np.random.default_rng(7)
        n = 80
        y = rng.poisson(2.0, n)
        xs = rng.standard_normal((30, n))
        batch = fit_slope_batch(xs, y)
        for k in range(30):
            single = _fit(xs[k], y)
            assert batch.status(k) is single.status
            assert batch.slopes[k] == pytest.approx(single.coefficients[1], abs=1e-12)
            assert batch.intercepts[k] == pytest.approx(single.coefficients[0], abs=1e-12)
            assert batch.slope_se[k] == pytest.approx(single.standard_errors[1], rel=1e-10)

    def test_failing_row_does_not_poison_others(self):
        y = np.array([0, 1, 1, 2, 3])
        xs = np.array([[-2.0, -1, 0, 1, 2], [1.0, 1, 1, 1, 1]])
        batch = fit_slope_batch(xs, y)
        assert list(batch.ok) == [True, False]
        assert batch.slopes[0] == pytest.approx(ORACLE_SMALL["coef"][1], abs=1e-8)

    def test_constant_outcome_gives_exact_zero(self):
        rng = np.random.default_rng(3)
        xs = rng.standard_normal((50, 40))
        batch = fit_slope_batch(xs, np.full(40, 3))
        assert np.all(batch.slopes == 0.0)
