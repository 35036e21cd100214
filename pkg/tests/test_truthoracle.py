import math
from dataclasses import replace

import numpy as np
import pytest

from hybridctrl.datagen import ScenarioSpec
from hybridctrl.exceptions import ConfigError
from hybridctrl.harness import builtin_scenarios
from hybridctrl.truthoracle import (
    load_truth_cache,
    save_truth_cache,
    true_marginal_loghr,
    truth_key,
)


def rng(seed):
    return np.random.default_rng(seed)


class TestTruthKey:
    def test_shared_across_htd_settings(self):
        s2, s3, s4 = builtin_scenarios()[1:]
        assert truth_key(s2) == truth_key(s3) == truth_key(s4)

    def test_differs_when_beta1_differs(self):
        s1, s2 = builtin_scenarios()[:2]
        assert truth_key(s1) != truth_key(s2)

    def test_ignores_arm_sizes(self):
        s2 = builtin_scenarios()[1]
        assert truth_key(s2) == truth_key(replace(s2, n_hc0=999, n_mt=40))

    def test_sensitive_to_gamma_and_shape(self):
        s2 = builtin_scenarios()[1]
        assert truth_key(s2) != truth_key(replace(s2, shape_p=1.0))
        assert truth_key(s2) != truth_key(replace(s2, xi=0.5))


class TestOracle:
    def test_null_scenario_truth_is_zero(self):
        sc = replace(builtin_scenarios()[0], xi=0.0)
        res = true_marginal_loghr(sc, reps=400, rng=rng(1))
        assert abs(res.theta0) < 3 * res.mcse

    def test_no_covariate_effects_marginal_equals_conditional(self):
        sc = ScenarioSpec(name="t", beta=(math.log(0.5), 0.0, 0.0),
                          gamma=tuple([0.0] * 13), xi=0.0)
        res = true_marginal_loghr(sc, reps=400, rng=rng(2))
        assert abs(res.theta0 - math.log(0.5)) < 3 * res.mcse

    def test_scenario2_attenuation(self):
        res = true_marginal_loghr(builtin_scenarios()[1], reps=1200, rng=rng(3))
        assert abs(res.theta0) > 3 * res.mcse
        assert abs(res.theta0) < abs(math.log(0.5)) - 3 * res.mcse
        assert res.theta0 < 0

    def test_truth_independent_of_htd_effects(self):
        # scenarios 2-4 share beta1, gamma, xi: same estimand
        s2, s3 = builtin_scenarios()[1:3]
        r2 = true_marginal_loghr(s2, reps=800, rng=rng(4))
        r3 = true_marginal_loghr(s3, reps=800, rng=rng(5))
        combined = math.hypot(r2.mcse, r3.mcse)
        assert abs(r2.theta0 - r3.theta0) < 3 * combined

    def test_mcse_scales_with_reps(self):
        sc = builtin_scenarios()[1]
        r1 = true_marginal_loghr(sc, reps=400, rng=rng(6))
        r2 = true_marginal_loghr(sc, reps=800, rng=rng(7))
        ratio = r1.mcse / r2.mcse
        assert math.sqrt(2) * 0.8 < ratio < math.sqrt(2) * 1.2

    def test_reps_validated(self):
        with pytest.raises(ConfigError):
            true_marginal_loghr(builtin_scenarios()[0], reps=0)


class TestCache:
    def test_round_trip(self, tmp_path):
        res = true_marginal_loghr(builtin_scenarios()[0], reps=50, rng=rng(8))
        path = tmp_path / "truth.csv"
        save_truth_cache([res], path)
        header = path.read_text().splitlines()[0]
        assert header == "scenario,theta0,reps,mcse"
        back = load_truth_cache(path)
        assert back["1"].theta0 == res.theta0
        assert back["1"].reps == 50
