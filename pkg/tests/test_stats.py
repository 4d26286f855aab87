import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from reservoircast.errors import ConfigError
from reservoircast.stats import (
    mae,
    mse,
    regularized_incomplete_beta,
    t_test_one_sample,
)


class TestMetrics:
    def test_mse_hand_value(self):
        assert mse([1.0, 2.0, 3.0], [1.0, 4.0, 0.0]) == pytest.approx(13.0 / 3.0)

    def test_mae_hand_value(self):
        assert mae([1.0, 2.0, 3.0], [1.0, 4.0, 0.0]) == pytest.approx(5.0 / 3.0)

    def test_perfect_prediction(self):
        x = np.random.default_rng(0).normal(size=(4, 5))
        assert mse(x, x) == 0.0 and mae(x, x) == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="mismatch"):
            mse(np.ones((2, 3)), np.ones((3, 2)))

    def test_empty_rejected(self):
        with pytest.raises(ConfigError, match="empty"):
            mae(np.array([]), np.array([]))


class TestIncompleteBeta:
    def test_matches_scipy_on_grid(self):
        for a in (0.5, 1.0, 2.5, 10.0, 49.5):
            for b in (0.5, 1.0, 3.0, 20.0):
                for x in (1e-6, 0.01, 0.2, 0.5, 0.8, 0.99, 1.0 - 1e-6):
                    got = regularized_incomplete_beta(a, b, x)
                    want = float(scipy.special.betainc(a, b, x))
                    assert got == pytest.approx(want, abs=1e-12), (a, b, x)

    def test_endpoints_exact(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0

    def test_uniform_special_case(self):
        # I_x(1, 1) is the identity
        for x in (0.0, 0.25, 0.5, 0.75, 1.0):
            assert regularized_incomplete_beta(1.0, 1.0, x) == pytest.approx(x, abs=1e-14)

    @settings(max_examples=150, deadline=None)
    @given(st.floats(0.1, 60.0), st.floats(0.1, 60.0),
           st.floats(0.0, 1.0, allow_nan=False))
    def test_matches_scipy_property(self, a, b, x):
        got = regularized_incomplete_beta(a, b, x)
        want = float(scipy.special.betainc(a, b, x))
        assert got == pytest.approx(want, abs=1e-10)

    @settings(max_examples=80, deadline=None)
    @given(st.floats(0.1, 40.0), st.floats(0.1, 40.0), st.floats(0.001, 0.999))
    def test_reflection_identity(self, a, b, x):
        left = regularized_incomplete_beta(a, b, x)
        right = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x)
        assert left == pytest.approx(right, abs=1e-12)

    def test_bad_args_rejected(self):
        with pytest.raises(ConfigError):
            regularized_incomplete_beta(-1.0, 2.0, 0.5)
        with pytest.raises(ConfigError):
            regularized_incomplete_beta(1.0, 2.0, 1.5)


class TestTTest:
    def test_matches_scipy_fixed_samples(self):
        rng = np.random.default_rng(42)
        for n in (2, 3, 5, 12, 50, 400):
            x = rng.normal(loc=0.3, scale=1.7, size=n)
            for popmean in (0.0, 0.3, -2.0):
                got = t_test_one_sample(x, popmean)
                want = scipy.stats.ttest_1samp(x, popmean)
                assert got.statistic == pytest.approx(want.statistic, abs=1e-10)
                assert got.pvalue == pytest.approx(want.pvalue, abs=1e-10)
                assert got.df == n - 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # scipy oracle on near-constant data
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-100.0, 100.0), min_size=2, max_size=40),
           st.floats(-50.0, 50.0))
    def test_matches_scipy_property(self, xs, popmean):
        x = np.asarray(xs)
        got = t_test_one_sample(x, popmean)
        want = scipy.stats.ttest_1samp(x, popmean)
        if math.isnan(want.pvalue):  # scipy yields nan for zero-variance input
            assert got.pvalue in (0.0, 1.0)
        else:
            assert got.pvalue == pytest.approx(want.pvalue, abs=1e-10)

    def test_zero_variance_exact_mean(self):
        res = t_test_one_sample([2.0, 2.0, 2.0], popmean=2.0)
        assert res.statistic == 0.0 and res.pvalue == 1.0

    def test_zero_variance_off_mean(self):
        res = t_test_one_sample([2.0, 2.0, 2.0], popmean=1.0)
        assert res.statistic == math.inf and res.pvalue == 0.0
        res = t_test_one_sample([2.0, 2.0, 2.0], popmean=3.0)
        assert res.statistic == -math.inf and res.pvalue == 0.0

    def test_symmetric_sample_gives_p_one(self):
        res = t_test_one_sample([-1.0, 1.0], popmean=0.0)
        assert res.statistic == 0.0 and res.pvalue == 1.0

    def test_single_observation_rejected(self):
        with pytest.raises(ConfigError, match="at least 2"):
            t_test_one_sample([1.0])

    def test_nonfinite_rejected(self):
        with pytest.raises(ConfigError, match="finite"):
            t_test_one_sample([1.0, np.nan, 2.0])
