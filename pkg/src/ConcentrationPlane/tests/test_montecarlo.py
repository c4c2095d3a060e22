"""
Monte Carlo Verification Tests
Seeded sampling, empirical tails, dominance campaigns and constant calibration
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

import montecarlo
import norms
from errors import CalibrationError, ConfigError, DomainError
from montecarlo import BoundKind, CampaignConfig
from sampling import COEFFICIENTS, DRAWS, UNIFORMS, make_generator


def write_config(tmp_path, text, name="campaign.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestSampleCanonical:
    """Y_t = sum t_i X_i"""

    def test_zero_models(self):
        y = montecarlo.sample_canonical(norms.constant(0.0), [1.0, 2.0, 3.0], 1000)
        assert np.all(y == 0.0)

    def test_single_gaussian_variance(self):
        y = montecarlo.sample_canonical(norms.gaussian(), [2.0], 1_000_000, seed=1)
        se = 4.0 * math.sqrt(2.0 / y.size)
        assert abs(y.var() - 4.0) <= 3 * se

    def test_pair_variance(self):
        y = montecarlo.sample_canonical([norms.gaussian(), norms.gaussian()], [3.0, 4.0], 1_000_000, seed=2)
        se = 25.0 * math.sqrt(2.0 / y.size)
        assert abs(y.var() - 25.0) <= 3 * se

    def test_mixed_models(self):
        y = montecarlo.sample_canonical([norms.rademacher(), norms.constant(0.0)], [1.0, 5.0], 1000, seed=3)
        assert set(np.unique(y)) <= {-1.0, 1.0}

    def test_deterministic_per_seed(self):
        a = montecarlo.sample_canonical(norms.uniform(), [1.0, -1.0], 5000, seed=4, stream=2)
        b = montecarlo.sample_canonical(norms.uniform(), [1.0, -1.0], 5000, seed=4, stream=2)
        np.testing.assert_array_equal(a, b)

    def test_streams_share_no_draws(self):
        a = montecarlo.sample_canonical(norms.gaussian(), [1.0], 5000, seed=4, stream=0)
        b = montecarlo.sample_canonical(norms.gaussian(), [1.0], 5000, seed=4, stream=1)
        assert np.intersect1d(a, b).size == 0

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            montecarlo.sample_canonical([norms.gaussian()], [1.0, 2.0], 100)


class TestEmpiricalTail:
    """Fraction >= z with a Clopper-Pearson interval"""

    def test_all_below(self):
        estimate, low, high = montecarlo.empirical_tail(np.zeros(10_000), 1.0)
        assert estimate == 0.0
        assert low == 0.0
        assert 0.0 < high < 1e-3

    def test_half_above(self):
        estimate, low, high = montecarlo.empirical_tail(np.tile([-1.0, 1.0], 5000), 0.0)
        assert estimate == 0.5
        assert low < 0.5 < high

    def test_gaussian_five_percent(self):
        x = norms.sample(norms.gaussian(), 1_000_000, seed=5)
        estimate, low, high = montecarlo.empirical_tail(x, 1.6449)
        assert estimate == pytest.approx(0.05, abs=0.001)
        assert low <= 0.05 <= high

    def test_interval_within_unit_range(self):
        _, low, high = montecarlo.empirical_tail(np.ones(50), 0.0)
        assert 0.0 <= low <= high == 1.0

    def test_empty(self):
        with pytest.raises(ConfigError):
            montecarlo.empirical_tail([], 0.0)


class TestCampaignConfig:
    """Validation and key=value loading"""

    def test_list_strings_are_split(self):
        config = CampaignConfig(bound="canonical-iid", z_grid="1, 2;3", t="3,4")
        assert config.z_grid == [1.0, 2.0, 3.0]
        assert config.t == [3.0, 4.0]

    def test_too_few_trials(self):
        with pytest.raises(ValidationError):
            CampaignConfig(bound="canonical-general", trials=10)

    def test_empty_grid(self):
        with pytest.raises(ValidationError):
            CampaignConfig(bound="canonical-iid")

    def test_phi_defaults(self):
        assert CampaignConfig(bound="functional").phi_spec == "scaled-quadratic"
        assert CampaignConfig(bound="canonical-general").phi_spec == "quadratic"

    def test_load_distinguishes_c_and_C(self, tmp_path):
        path = write_config(tmp_path, "bound=randomized\nc=0.5\nC=3\nalpha_grid=0.1,0.01\nTRIALS=20000\n")
        config = montecarlo.load_config(path)
        assert config.c == 0.5
        assert config.C == 3.0
        assert config.trials == 20_000
        assert config.alpha_grid == [0.1, 0.01]

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            montecarlo.load_config(tmp_path / "missing.cfg")

    def test_load_unknown_key(self, tmp_path):
        path = write_config(tmp_path, "bound=functional\ncolour=blue\n")
        with pytest.raises(ConfigError, match="colour"):
            montecarlo.load_config(path)

    def test_load_invalid_value(self, tmp_path):
        path = write_config(tmp_path, "bound=canonical-general\ntrials=5\n")
        with pytest.raises(ConfigError):
            montecarlo.load_config(path)

    def test_hash_tracks_content(self):
        a = CampaignConfig(bound="functional", seed=1)
        b = CampaignConfig(bound="functional", seed=2)
        assert montecarlo.config_hash(a) == montecarlo.config_hash(CampaignConfig(bound="functional", seed=1))
        assert montecarlo.config_hash(a) != montecarlo.config_hash(b)


class TestVerifyDominance:
    """Grid-point verdicts against CI upper endpoints"""

    def small_general(self, **overrides):
        values = dict(bound=BoundKind.CANONICAL_GENERAL, dimension=5, trials=50_000, seed=7)
        values.update(overrides)
        return CampaignConfig(**values)

    def test_general_gaussian_small(self):
        result = montecarlo.verify_dominance(self.small_general())
        assert result.summary.points == 6
        assert result.all_dominated
        assert result.summary.worst_margin > 0
        assert result.provenance.config_hash == montecarlo.config_hash(self.small_general())

    def test_shrunk_threshold_is_violated(self):
        result = montecarlo.verify_dominance(self.small_general(threshold_scale=0.02))
        assert result.summary.violations > 0
        assert not result.all_dominated

    def test_enlarging_thresholds_keeps_verdicts(self):
        base = montecarlo.verify_dominance(self.small_general(threshold_scale=0.3))
        larger = montecarlo.verify_dominance(self.small_general(threshold_scale=0.6))
        for a, b in zip(base.points, larger.points):
            assert b.dominated or not a.dominated

    def test_zero_variance_model(self):
        result = montecarlo.verify_dominance(self.small_general(model="constant:0", trials=100_000))
        assert result.all_dominated
        assert all(p.empirical_tail == 0.0 for p in result.points)

    def test_reproducible(self):
        a = montecarlo.verify_dominance(self.small_general(seed=3))
        b = montecarlo.verify_dominance(self.small_general(seed=3))
        assert a == b
        assert a.model_dump_json() == b.model_dump_json()

    def test_config_is_not_mutated(self):
        config = self.small_general()
        before = config.model_dump()
        montecarlo.verify_dominance(config)
        assert config.model_dump() == before

    def test_iid_gaussian(self):
        config = CampaignConfig(bound="canonical-iid", t="3,4", z_grid="1,5,10,15", trials=50_000, seed=8)
        result = montecarlo.verify_dominance(config)
        assert result.all_dominated
        assert [p.parameters["z"] for p in result.points] == [1.0, 5.0, 10.0, 15.0]

    def test_iid_bound_is_one_at_zero(self):
        config = CampaignConfig(bound="canonical-iid", t="1", z_grid="0", trials=5000)
        point = montecarlo.verify_dominance(config).points[0]
        assert point.bound == 1.0
        assert point.dominated

    def test_randomized(self):
        config = CampaignConfig(bound="randomized", alpha_grid="0.1", n_summands=5, trials=20_000, seed=9)
        result = montecarlo.verify_dominance(config)
        assert result.all_dominated
        assert result.points[0].bound == 0.1

    def test_functional_coins(self):
        config = CampaignConfig(bound="functional", n_coins=12, trials=20_000, seed=10)
        result = montecarlo.verify_dominance(config)
        assert result.summary.points == 50
        assert result.all_dominated
        assert result.points[0].parameters["B"] == pytest.approx(1.0, rel=1e-6)

    def test_unknown_model(self):
        with pytest.raises(ConfigError):
            montecarlo.verify_dominance(self.small_general(model="cauchy:1"))

    @pytest.mark.slow
    def test_general_gaussian_acceptance(self):
        config = CampaignConfig(bound="canonical-general", dimension=20, trials=1_000_000, seed=12)
        result = montecarlo.verify_dominance(config)
        assert result.summary.points == 6
        assert result.all_dominated


class TestStreamIndependence:
    """Campaigns with different stream indices share no draws"""

    def randomized_config(self, stream):
        return CampaignConfig(bound="randomized", alpha_grid="0.1", n_summands=5, trials=20_000, seed=7, stream=stream)

    def test_substreams_are_disjoint(self):
        draws = np.concatenate([
            make_generator(3, stream, substream).random(1000)
            for stream in (0, 1, 2) for substream in (DRAWS, UNIFORMS, COEFFICIENTS)
        ])
        assert np.unique(draws).size == draws.size

    def test_substream_out_of_range(self):
        with pytest.raises(DomainError):
            make_generator(0, 0, 256)

    def test_coefficients_share_nothing_with_neighbour_streams(self):
        t = montecarlo._coefficients(CampaignConfig(bound="canonical-general", dimension=5, seed=3, stream=0))
        for stream in (0, 1):
            y = montecarlo.sample_canonical(norms.gaussian(), [1.0], 1000, seed=3, stream=stream)
            assert np.intersect1d(t, y).size == 0

    def test_general_campaign_coefficients_follow_stream(self):
        a = montecarlo._coefficients(CampaignConfig(bound="canonical-general", dimension=5, seed=3, stream=0))
        b = montecarlo._coefficients(CampaignConfig(bound="canonical-general", dimension=5, seed=3, stream=1))
        assert np.intersect1d(a, b).size == 0

    def test_randomized_campaign_follows_stream(self):
        a = montecarlo.verify_dominance(self.randomized_config(0))
        b = montecarlo.verify_dominance(self.randomized_config(5))
        assert a.points[0].threshold != b.points[0].threshold
        assert b.provenance.stream == 5
        assert montecarlo.verify_dominance(self.randomized_config(5)) == b

    def test_randomized_calibration_follows_stream(self):
        a = montecarlo.calibrate_constant(self.randomized_config(0), "C")
        b = montecarlo.calibrate_constant(self.randomized_config(3), "C")
        assert a.value != b.value


class TestCalibration:
    """Bisection for the unspecified constants"""

    def test_degenerate_grid_returns_cap(self):
        config = CampaignConfig(bound="canonical-iid", t="1,1", z_grid="0", trials=5000)
        result = montecarlo.calibrate_constant(config, "c")
        assert result.at_cap
        assert result.value == pytest.approx(1e4)
        assert result.grid == [0.0]

    def test_loose_bound_calibrates_above_one(self):
        config = CampaignConfig(bound="canonical-iid", t="1", z_grid="1,2,3", trials=100_000, seed=13)
        result = montecarlo.calibrate_constant(config, "c")
        assert result.value >= 1.0
        assert not result.at_cap

    def test_randomized_C_below_cap(self):
        config = CampaignConfig(bound="randomized", alpha_grid="0.1", n_summands=5, trials=20_000, seed=14)
        result = montecarlo.calibrate_constant(config, "C")
        assert 1e-4 < result.value <= 4.0
        assert not result.at_cap

    def test_infeasible_range(self, monkeypatch):
        monkeypatch.setattr(montecarlo.settings, "calibration_high", 1e-3)
        monkeypatch.setattr(montecarlo.settings, "calibration_low", 1e-4)
        config = CampaignConfig(bound="randomized", alpha_grid="0.1", n_summands=5, trials=20_000, seed=14)
        with pytest.raises(CalibrationError):
            montecarlo.calibrate_constant(config, "C")

    def test_unsupported_pair(self):
        with pytest.raises(ConfigError):
            montecarlo.calibrate_constant(CampaignConfig(bound="canonical-general"), "c")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
