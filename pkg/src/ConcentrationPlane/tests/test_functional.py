"""
Functional Concentration Tests
Centered conditional versions, tilts, the infimum lemma and the functional tail bound
"""

import json
import math

import numpy as np
import pytest

import functional
import norms
import orlicz
from errors import ConfigError, DomainError, HypothesisViolatedError, PreconditionError, RefusalError
from functional import DiscreteFunctionModel, FiniteDistribution


SCALED_QUADRATIC = orlicz.scaled_quadratic()


def coin(a=1.0):
    return FiniteDistribution.of([-a, a], [0.5, 0.5])


class TestCenteredConditional:
    """Slot-k replacement minus its mean"""

    def test_sum_gives_centered_coordinate(self):
        supports = [FiniteDistribution.of([0.0, 1.0, 3.0], [0.2, 0.5, 0.3]), coin()]
        fm = DiscreteFunctionModel.builtin("sum", supports)
        dist = functional.centered_conditional(fm, [1.0, -1.0], 0)
        np.testing.assert_allclose(dist.values, np.array([0.0, 1.0, 3.0]) - 1.4, atol=1e-12)
        assert abs(dist.mean) <= 1e-12

    def test_constant_gives_point_mass(self):
        fm = DiscreteFunctionModel.coins("constant", 3)
        dist = functional.centered_conditional(fm, [1.0, 1.0, -1.0], 2)
        assert all(v == 0.0 for v in dist.values)

    def test_product_of_coins(self):
        fm = DiscreteFunctionModel.coins("product", 2)
        dist = functional.centered_conditional(fm, [1.0, 1.0], 1)
        assert sorted(dist.values) == [-1.0, 1.0]
        assert dist.probs == (0.5, 0.5)

    def test_index_out_of_range(self):
        fm = DiscreteFunctionModel.coins("sum", 2)
        with pytest.raises(DomainError):
            functional.centered_conditional(fm, [1.0, 1.0], 2)

    def test_point_outside_support(self):
        fm = DiscreteFunctionModel.coins("sum", 2)
        with pytest.raises(DomainError):
            functional.centered_conditional(fm, [0.5, 1.0], 0)

    def test_mean_zero_for_random_tables(self):
        rng = np.random.default_rng(0)
        supports = [FiniteDistribution.of([0.0, 1.0, 2.0], [0.25, 0.25, 0.5])] * 3
        fm = DiscreteFunctionModel.builtin("max", supports)
        for _ in range(20):
            x = rng.choice([0.0, 1.0, 2.0], size=3)
            for k in range(3):
                assert abs(functional.centered_conditional(fm, x, k).mean) <= 1e-12


class TestModels:
    """Construction and enumeration"""

    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(DomainError):
            FiniteDistribution.of([0.0, 1.0], [0.5, 0.6])

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            DiscreteFunctionModel.builtin("median", [coin()])

    def test_enumeration_refused_above_cap(self):
        fm = DiscreteFunctionModel.coins("sum", 21)
        with pytest.raises(RefusalError):
            fm.enumerate()

    def test_table_model(self):
        rows = [[-1, -1, 0.0], [-1, 1, 1.0], [1, -1, 1.0], [1, 1, 0.0]]
        fm = DiscreteFunctionModel.from_table([coin(), coin()], rows)
        points, probs = fm.enumerate()
        assert float(np.dot(fm.evaluate(points), probs)) == pytest.approx(0.5)

    def test_json_model(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"supports": [{"values": [-1, 1], "probs": [0.5, 0.5]}] * 3, "f": "first"}))
        fm = DiscreteFunctionModel.from_json(path)
        assert fm.n == 3
        assert fm.f_name == "first"

    def test_missing_json(self, tmp_path):
        with pytest.raises(ConfigError):
            DiscreteFunctionModel.from_json(tmp_path / "absent.json")


class TestTilts:
    """E[Y e^X] / E[e^X] and tilted variances"""

    def test_zero_tilt_is_plain_expectation(self):
        assert functional.tilted_expectation([1.0, 2.0, 6.0], [0.0, 0.0, 0.0], [0.5, 0.25, 0.25]) == 2.5

    def test_fair_coin_gives_tanh(self):
        assert functional.tilted_expectation([-1.0, 1.0], [-1.0, 1.0], [0.5, 0.5]) == pytest.approx(math.tanh(1.0))

    def test_constant_y(self):
        assert functional.tilted_expectation([3.0, 3.0], [0.1, 5.0], [0.3, 0.7]) == pytest.approx(3.0)

    def test_huge_tilts_do_not_overflow(self):
        value = functional.tilted_expectation([0.0, 1.0], [1000.0, 2000.0], [0.5, 0.5])
        assert value == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            functional.tilted_expectation([1.0], [0.0, 1.0], [0.5, 0.5])

    def test_tilted_variance_of_coin(self):
        # Var under exp(sX) tilt of a fair coin is 1 - tanh(s)^2
        s = np.array([0.0, 0.5, 2.0])
        np.testing.assert_allclose(functional.tilted_variance(coin(), s), 1.0 - np.tanh(s) ** 2, rtol=1e-12)


class TestIntegralCheck:
    """Double integral of tilted variances"""

    def test_point_mass(self):
        report = functional.fe_integral_check(FiniteDistribution.of([0.0], [1.0]), SCALED_QUADRATIC)
        assert report.lhs == 0.0
        assert report.passed

    @pytest.mark.parametrize("a", [0.1, 0.2, 0.3, 0.36])
    def test_coins_below_inverse_e(self, a):
        report = functional.fe_integral_check(coin(a), SCALED_QUADRATIC)
        assert report.extras["norm"] == pytest.approx(a, rel=1e-6)
        assert report.passed

    def test_coin_lhs_matches_quadrature(self):
        # For a fair coin the tilted variance is a^2 sech^2(s a); integrate over 0 <= t <= s <= 1
        a = 0.2
        s = np.linspace(0.0, 1.0, 200_001)
        integrand = s * a ** 2 / np.cosh(s * a) ** 2
        oracle = float(np.sum((integrand[1:] + integrand[:-1]) * 0.5 * np.diff(s)))
        report = functional.fe_integral_check(coin(a), SCALED_QUADRATIC)
        assert report.lhs == pytest.approx(oracle, rel=1e-8)

    def test_norm_too_large(self):
        with pytest.raises(HypothesisViolatedError):
            functional.fe_integral_check(coin(0.5), SCALED_QUADRATIC)

    def test_uncentered(self):
        with pytest.raises(PreconditionError):
            functional.fe_integral_check(FiniteDistribution.of([0.0, 0.2], [0.5, 0.5]), SCALED_QUADRATIC)


class TestInfimumLemma:
    """inf_beta (-beta t + C1 beta^2 / (1 - a beta)) <= -t^2 / (2 (2 C1 + a t))"""

    def test_rhs_values(self):
        assert functional.m20_rhs(1.0, 0.0, 2.0) == pytest.approx(-1.0)
        assert functional.m20_rhs(1.0, 1.0, 1.0) == pytest.approx(-1.0 / 6.0)
        assert functional.m20_rhs(2.0, 0.5, 3.0) == pytest.approx(-9.0 / 11.0)

    def test_closed_form_at_a_zero(self):
        assert functional.m20_lhs_grid(1.0, 0.0, 2.0) == pytest.approx(-1.0, abs=1e-9)

    def test_grid_below_rhs(self):
        assert functional.m20_lhs_grid(1.0, 1.0, 1.0) <= -1.0 / 6.0

    def test_small_t_tends_to_zero(self):
        value = functional.m20_lhs_grid(1.0, 1.0, 1e-6)
        assert -1e-9 < value <= 0.0

    def test_random_triples(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            C1, a, t = rng.uniform(0.1, 10.0), rng.uniform(0.0, 5.0), rng.uniform(0.1, 10.0)
            assert functional.m20_lhs_grid(C1, a, t) <= functional.m20_rhs(C1, a, t) + 1e-9

    def test_random_triples_equality_at_a_zero(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            C1, t = rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0)
            assert functional.m20_lhs_grid(C1, 0.0, t) == pytest.approx(functional.m20_rhs(C1, 0.0, t), abs=1e-9)

    def test_invalid_domain(self):
        with pytest.raises(DomainError):
            functional.m20_rhs(0.0, 1.0, 1.0)


class TestTailBound:
    """exp(-t^2 / (4 e^2 A + 2 e B t))"""

    def test_arithmetic(self):
        assert functional.med_tail_bound(1.0, 1.0, 0.0) == pytest.approx(math.exp(-1.0 / (4 * math.e ** 2)))
        assert functional.med_tail_bound(2.0, 0.0, 1.0) == pytest.approx(math.exp(-1.0 / math.e))

    def test_no_fluctuation(self):
        assert functional.med_tail_bound(1.0, 0.0, 0.0) == 0.0

    def test_nonpositive_t(self):
        with pytest.raises(DomainError):
            functional.med_tail_bound(0.0, 1.0, 1.0)

    def test_inputs_for_sum_of_coins(self):
        inputs = functional.functional_norm_inputs(DiscreteFunctionModel.coins("sum", 6), SCALED_QUADRATIC)
        assert inputs.B == pytest.approx(1.0, rel=1e-6)
        assert inputs.A == pytest.approx(6.0, rel=1e-6)

    def test_inputs_for_constant(self):
        inputs = functional.functional_norm_inputs(DiscreteFunctionModel.coins("constant", 4), SCALED_QUADRATIC)
        assert inputs.A == 0.0
        assert inputs.B == 0.0

    def test_inputs_for_first_coordinate(self):
        inputs = functional.functional_norm_inputs(DiscreteFunctionModel.coins("first", 3, 0.5), SCALED_QUADRATIC)
        assert inputs.B == pytest.approx(0.5, rel=1e-6)
        assert inputs.A == pytest.approx(0.25, rel=1e-6)

    def test_dominates_exact_tail_for_twelve_coins(self):
        fm = DiscreteFunctionModel.coins("sum", 12)
        inputs = functional.functional_norm_inputs(fm, SCALED_QUADRATIC)
        ts = np.linspace(1.0, 12.0, 50)
        exact = functional.exhaustive_tail(fm, ts)
        bounds = np.array([functional.med_tail_bound(t, inputs.A, inputs.B) for t in ts])
        assert np.all(bounds >= exact)

    def test_exhaustive_tail_counts_equality(self):
        fm = DiscreteFunctionModel.coins("sum", 2)
        # f - E f = 2 with probability 1/4
        assert functional.exhaustive_tail(fm, [2.0])[0] == pytest.approx(0.25)


class TestVectorMean:
    """6 e ||X|| sqrt(ln(1/delta) / n)"""

    def test_arithmetic(self):
        assert functional.vector_mean_bound(100, math.exp(-1.0), 1.0) == pytest.approx(6 * math.e / 10)

    def test_boundary(self):
        assert functional.vector_mean_bound(4, math.exp(-4.0), 1.0) == pytest.approx(6 * math.e)

    def test_zero_norm(self):
        assert functional.vector_mean_bound(50, 0.1, 0.0) == 0.0

    def test_n_below_level(self):
        with pytest.raises(HypothesisViolatedError, match="n >= ln"):
            functional.vector_mean_bound(2, math.exp(-4.0), 1.0)

    def test_level_below_one(self):
        with pytest.raises(HypothesisViolatedError, match="ln\\(1/delta\\) >= 1"):
            functional.vector_mean_bound(100, 0.5, 1.0)

    def test_chain_composes(self):
        report = functional.vector_mean_chain(100, math.exp(-1.0), 1.0)
        assert report.passed
        assert report.lhs <= report.rhs

    @pytest.mark.slow
    def test_gaussian_coverage(self):
        n, delta, replicas = 200, 0.1, 2000
        norm = norms.moment_orlicz_norm(norms.gaussian_norm(5), SCALED_QUADRATIC).value
        bound = functional.vector_mean_bound(n, delta, norm)
        x = norms.sample(norms.gaussian(), (replicas, n, 5), seed=21)
        exceed = np.linalg.norm(x.mean(axis=1), axis=1) > bound
        assert exceed.mean() <= delta


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
