import math

import numpy as np
import pytest

from hybridctrl.exceptions import ConfigError
from hybridctrl.metrics import (
    ess_bayesian,
    ess_frequentist,
    read_summary_csv,
    summarize,
    write_summary_csv,
)


class TestSummarize:
    def test_basic(self):
        bias, variance, mse = summarize([1.0, 2.0, 3.0], 2.0)
        assert bias == 0.0
        assert variance == 1.0
        assert mse == pytest.approx(2.0 / 3.0)

    def test_constant_at_truth(self):
        bias, variance, mse = summarize([0.4, 0.4, 0.4], 0.4)
        assert bias == pytest.approx(0.0, abs=1e-15)
        assert variance == pytest.approx(0.0, abs=1e-15)
        assert mse == pytest.approx(0.0, abs=1e-15)

    def test_two_points(self):
        bias, variance, mse = summarize([0.0, 2.0], 0.0)
        assert bias == 1.0
        assert variance == 2.0
        assert mse == 2.0

    def test_bias_is_absolute(self):
        bias, _, _ = summarize([-1.0, -3.0], 1.0)
        assert bias == 3.0

    def test_identity(self):
        # MSE = bias^2 + (n-1)/n variance
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            est = rng.normal(0.3, 1.2, size=n)
            theta0 = rng.normal()
            bias, variance, mse = summarize(est, theta0)
            assert mse == pytest.approx(bias**2 + (n - 1) / n * variance, abs=1e-9)

    def test_requires_two(self):
        with pytest.raises(ConfigError):
            summarize([1.0], 0.0)


class TestKishEss:
    def test_equal_weights(self):
        for n in (1, 4, 250):
            assert ess_frequentist(np.full(n, 3.7)) == pytest.approx(n)

    def test_one_three(self):
        assert ess_frequentist([1.0, 3.0]) == pytest.approx(1.6)

    def test_single_positive_weight(self):
        assert ess_frequentist([0.0, 0.0, 5.0]) == pytest.approx(1.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        w = rng.uniform(0.0, 2.0, size=30)
        assert ess_frequentist(w) == pytest.approx(ess_frequentist(9.2 * w))

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            n = int(rng.integers(1, 50))
            w = rng.uniform(0.01, 4.0, size=n)
            ess = ess_frequentist(w)
            assert 1.0 - 1e-9 <= ess <= n + 1e-9

    def test_maximal_iff_constant(self):
        w = np.array([2.0, 2.0, 2.0, 2.0001])
        assert ess_frequentist(w) < 4.0
        assert ess_frequentist(np.full(4, 2.0)) == pytest.approx(4.0)

    def test_rejects_bad_input(self):
        with pytest.raises(ConfigError):
            ess_frequentist([])
        with pytest.raises(ConfigError):
            ess_frequentist([0.0, 0.0])
        with pytest.raises(ConfigError):
            ess_frequentist([1.0, -0.5])


class TestBayesianEss:
    def test_no_gainexpect_n_current(self):
        assert ess_bayesian(0.08, 0.08, 31) == pytest.approx(31.0)

    def test_halved_variance_doubles(self):
        assert ess_bayesian(0.04, 0.08, 31) == pytest.approx(62.0)

    def test_monotone_in_method_variance(self):
        vals = [ess_bayesian(v, 0.08, 31) for v in (0.02, 0.04, 0.08, 0.16)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            ess_bayesian(0.0, 0.1, 31)
        with pytest.raises(ConfigError):
            ess_bayesian(0.1, -0.1, 31)


class TestSummaryCsv:
    def test_round_trip(self, tmp_path):
        rows = [
            {"scenario": "2", "mt_size": 16, "method": "NB", "bias": 0.336,
             "variance": 0.088, "mse": 0.201, "ess": float("nan"),
             "n_used": 500, "n_failed": 0},
            {"scenario": "2", "mt_size": 16, "method": "FB", "bias": 0.166,
             "variance": 0.052, "mse": 0.079, "ess": 71.0,
             "n_used": 500, "n_failed": 0},
        ]
        path = tmp_path / "summary.csv"
        write_summary_csv(rows, path)
        back = read_summary_csv(path)
        assert len(back) == 2
        assert back[0]["method"] == "NB"
        assert math.isnan(back[0]["ess"])
        assert back[1]["bias"] == pytest.approx(0.166)
        assert back[1]["mt_size"] == 16
