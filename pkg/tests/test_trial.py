import math

import numpy as np
import pytest

from rctaudit.datagen import GenConfig, generate
from rctaudit.errors import EmptyGroupError, InputError
from rctaudit.rng import random_equal_split, substream
from rctaudit.trial import (
    Assignment,
    CovariateSchema,
    TrialPopulation,
    ate,
    attach,
    equal_split_matrix,
    estimation_error,
    iter_equal_split_bits,
    mate,
    mate_many,
    observe,
    sigma_ate_mc,
)


def tiny_pop(y1, y0, m=1):
    n = len(y1)
    schema = CovariateSchema.all_continuous(m)
    x = np.arange(n * m, dtype=float).reshape(n, m)
    return TrialPopulation(schema, x, np.asarray(y0, float), np.asarray(y1, float))


def random_pop(n, seed, m=3):
    rng = substream(seed, 7)
    schema = CovariateSchema.all_continuous(m)
    x = rng.standard_normal((n, m))
    y0 = rng.standard_normal(n)
    y1 = y0 + rng.standard_normal(n)
    return TrialPopulation(schema, x, y0, y1)


class TestAte:
    def test_two_element_mean(self):
        assert ate(tiny_pop([2, 4], [1, 2])) == 1.5

    def test_identity_case(self):
        y = [0.3, -1.2, 4.0, 4.0]
        assert ate(tiny_pop(y, y)) == 0.0

    def test_matches_direct_resummation(self):
        pop = random_pop(100, seed=11)
        # oracle: plain per-subject loop
        expected = sum(pop.y1[i] - pop.y0[i] for i in range(pop.n)) / pop.n
        assert ate(pop) == pytest.approx(expected, abs=1e-15)


class TestMate:
    def test_direct_arithmetic(self):
        pop = tiny_pop([3, 5, 9, 9], [9, 9, 1, 1])
        a = Assignment(np.array([1, 1, 0, 0]))
        assert mate(pop, a) == 3.0

    def test_constant_outcomes(self):
        pop = tiny_pop([5.0] * 6, [2.0] * 6)
        for bits in ([1, 0, 1, 0, 1, 0], [1, 1, 1, 0, 0, 0]):
            assert mate(pop, Assignment(np.array(bits))) == pytest.approx(3.0)

    def test_matches_resummation_oracle(self):
        pop = random_pop(12, seed=3)
        rng = substream(19, 0)
        for _ in range(50):
            bits = random_equal_split(12, rng)
            a = Assignment(bits)
            # oracle: re-implementation with explicit group loops
            t_sum = sum(pop.y1[i] for i in range(12) if bits[i] == 1)
            c_sum = sum(pop.y0[i] for i in range(12) if bits[i] == 0)
            assert mate(pop, a) == pytest.approx(t_sum / 6 - c_sum / 6, abs=1e-12)

    def test_empty_group_rejected(self):
        pop = tiny_pop([1, 2], [0, 0])
        with pytest.raises(EmptyGroupError):
            mate(pop, Assignment(np.array([1, 1])))
        with pytest.raises(EmptyGroupError):
            mate(pop, Assignment(np.array([0, 0])))


class TestEstimationError:
    def test_homogeneous_effect_constant_baseline(self):
        pop = tiny_pop([3.0, 3.0, 3.0, 3.0], [2.0, 2.0, 2.0, 2.0])
        for bits in iter_equal_split_bits(4):
            assert estimation_error(pop, Assignment(bits)) == pytest.approx(0.0)

    def test_arithmetic_from_known_case(self):
        pop = tiny_pop([3, 5, 9, 9], [9, 9, 1, 1])
        a = Assignment(np.array([1, 1, 0, 0]))
        assert ate(pop) == pytest.approx(1.5)
        assert estimation_error(pop, a) == pytest.approx(1.5)

    def test_max_abs_error_matches_enumeration(self):
        pop = random_pop(12, seed=5)
        # oracle: exhaustive scan over all C(12,6) equal splits
        worst = max(
            abs(mate(pop, Assignment(b)) - ate(pop)) for b in iter_equal_split_bits(12)
        )
        errs = mate_many(pop, equal_split_matrix(12)) - ate(pop)
        assert np.abs(errs).max() == pytest.approx(worst, abs=1e-12)


class TestObserve:
    def test_all_treated(self):
        pop = random_pop(6, seed=2)
        obs = observe(pop, Assignment(np.ones(6, dtype=int)))
        assert np.array_equal(obs.y_obs, pop.y1)

    def test_all_control(self):
        pop = random_pop(6, seed=2)
        obs = observe(pop, Assignment(np.zeros(6, dtype=int)))
        assert np.array_equal(obs.y_obs, pop.y0)

    def test_round_trip_attach(self):
        pop = random_pop(10, seed=4)
        bits = random_equal_split(10, substream(0, 0))
        obs = observe(pop, Assignment(bits))
        hidden = np.where(bits == 1, pop.y0, pop.y1)
        rebuilt = attach(obs, hidden)
        assert np.array_equal(rebuilt.x, pop.x)
        assert np.array_equal(rebuilt.y0, pop.y0)
        assert np.array_equal(rebuilt.y1, pop.y1)


class TestSigma:
    def test_constant_outcomes_give_zero(self):
        pop = tiny_pop([4.0] * 8, [1.0] * 8)
        est = sigma_ate_mc(pop, draws=200, seed=1)
        assert est.sigma == pytest.approx(0.0, abs=1e-12)

    def test_matches_exhaustive_sigma(self):
        pop = random_pop(12, seed=8)
        # oracle: exact spread over the full equal-split set
        errs = mate_many(pop, equal_split_matrix(12)) - ate(pop)
        exact = math.sqrt(float(np.mean(errs**2)))
        est = sigma_ate_mc(pop, draws=100_000, seed=21)
        assert abs(est.sigma - exact) < 3 * est.standard_error

    def test_variance_shrinks_with_population_size(self):
        cfg = dict(m_continuous=3, m_binary=3, noise_sd=1.0, coef_seed=5, noise_seed=5)
        small = generate(GenConfig(n=100, **cfg))
        large = generate(GenConfig(n=400, **cfg))
        s_small = sigma_ate_mc(small, draws=4000, seed=2)
        s_large = sigma_ate_mc(large, draws=4000, seed=2)
        assert s_large.sigma < s_small.sigma

    def test_deterministic_given_seed(self):
        pop = random_pop(20, seed=9)
        a = sigma_ate_mc(pop, draws=500, seed=33)
        b = sigma_ate_mc(pop, draws=500, seed=33)
        assert a.sigma == b.sigma and a.standard_error == b.standard_error

    def test_too_few_draws_rejected(self):
        pop = random_pop(6, seed=1)
        with pytest.raises(InputError):
            sigma_ate_mc(pop, draws=1, seed=0)


class TestUnbiasedness:
    def test_enumerated_mean_equals_ate(self):
        for seed in range(3):
            pop = random_pop(10, seed=100 + seed)
            mates = [mate(pop, Assignment(b)) for b in iter_equal_split_bits(10)]
            assert math.fsum(mates) / len(mates) == pytest.approx(ate(pop), abs=1e-12)

    def test_mc_mean_within_four_standard_errors(self):
        pop = random_pop(60, seed=42)
        draws = 20_000
        bits = np.empty((draws, pop.n), dtype=np.int8)
        for d in range(draws):
            bits[d] = random_equal_split(pop.n, substream(77, d))
        mates = mate_many(pop, bits)
        se = mates.std(ddof=1) / math.sqrt(draws)
        assert abs(mates.mean() - ate(pop)) < 4 * se


class TestValidation:
    def test_assignment_bits_checked(self):
        with pytest.raises(InputError):
            Assignment(np.array([0, 1, 2]))

    def test_assignment_length_checked(self):
        pop = tiny_pop([1, 2], [0, 0])
        with pytest.raises(InputError):
            mate(pop, Assignment(np.array([1, 0, 1])))

    def test_categorical_codes_range_checked(self):
        from rctaudit.trial import CATEGORICAL, Covariate

        schema = CovariateSchema((Covariate("g", kind=CATEGORICAL, categories=2),))
        with pytest.raises(InputError):
            TrialPopulation(schema, np.array([[0.0], [2.0]]), np.zeros(2), np.zeros(2))

    def test_assignment_string_round_trip(self):
        a = Assignment.from_string("0110")
        assert a.to_string() == "0110"
        assert a.complement().to_string() == "1001"
