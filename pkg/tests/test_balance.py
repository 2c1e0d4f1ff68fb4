import math

import numpy as np
import pytest

from rctaudit.balance import (
    POCOCK,
    SMD_L1,
    SMD_LINF,
    BalanceCalibration,
    BalanceSpec,
    calibrate,
    is_admissible,
    one_hot,
    score,
    score_many,
    smd,
    standardize,
    u_pocock,
)
from rctaudit.datagen import GenConfig, generate
from rctaudit.errors import (
    DegenerateCalibrationError,
    DegenerateCovariateError,
    EmptyGroupError,
    InputError,
)
from rctaudit.milp import SolverConfig
from rctaudit.rng import random_equal_split, substream
from rctaudit.trial import (
    CATEGORICAL,
    Assignment,
    Covariate,
    CovariateSchema,
    TrialPopulation,
    equal_split_matrix,
)


def pop_from_columns(*cols, categorical=()):
    cols = [np.asarray(c, dtype=float) for c in cols]
    n = cols[0].size
    covs = []
    for j in range(len(cols)):
        if j in categorical:
            covs.append(Covariate(f"x{j + 1}", kind=CATEGORICAL,
                                  categories=int(cols[j].max()) + 1))
        else:
            covs.append(Covariate(f"x{j + 1}"))
    return TrialPopulation(
        CovariateSchema(tuple(covs)), np.column_stack(cols), np.zeros(n), np.ones(n)
    )


class TestStandardize:
    def test_unit_cohort_deviation_left_alone(self):
        # [0,0,2,2] has whole-cohort (n-denominator) deviation exactly 1
        pop = pop_from_columns([0.0, 0.0, 2.0, 2.0])
        out = standardize(pop)
        assert np.allclose(out.x[:, 0], [0.0, 0.0, 2.0, 2.0])

    def test_rescales_to_unit_deviation(self):
        pop = pop_from_columns([0.0, 4.0, 8.0, 12.0])
        out = standardize(pop)
        assert np.std(out.x[:, 0]) == pytest.approx(1.0, abs=1e-12)
        # means move only by the scale factor, never re-centred
        assert out.x[:, 0].mean() == pytest.approx(
            pop.x[:, 0].mean() / np.std(pop.x[:, 0]), abs=1e-12
        )

    def test_idempotent(self):
        pop = pop_from_columns(substream(1, 0).standard_normal(10))
        once = standardize(pop)
        twice = standardize(once)
        assert np.allclose(once.x, twice.x, atol=1e-14)

    def test_zero_variance_names_the_column(self):
        pop = pop_from_columns([1.0, 1.0, 1.0, 1.0], [0.0, 1.0, 2.0, 3.0])
        with pytest.raises(DegenerateCovariateError, match="x1"):
            standardize(pop)

    def test_categorical_untouched(self):
        pop = pop_from_columns([0.0, 1.0, 0.0, 1.0], [0.0, 2.0, 4.0, 6.0], categorical=(0,))
        out = standardize(pop)
        assert np.array_equal(out.x[:, 0], pop.x[:, 0])


class TestSmd:
    def test_single_covariate_gap(self):
        pop = pop_from_columns([1.0, 1.0, 0.0, 0.0])
        a = Assignment(np.array([1, 1, 0, 0]))
        assert smd(pop, a, 1, standardize_first=False) == pytest.approx(1.0)
        # whole-cohort deviation of [1,1,0,0] is 0.5, so standardized gap doubles
        assert smd(pop, a, 1) == pytest.approx(2.0)

    def test_mirrored_population_scores_zero(self):
        rng = substream(2, 0)
        half = rng.standard_normal((5, 2))
        x = np.vstack([half, half])
        pop = TrialPopulation(
            CovariateSchema.all_continuous(2), x, np.zeros(10), np.ones(10)
        )
        a = Assignment(np.array([1] * 5 + [0] * 5))
        assert smd(pop, a, 1) == pytest.approx(0.0, abs=1e-12)
        assert smd(pop, a, math.inf) == pytest.approx(0.0, abs=1e-12)

    def test_norm_arithmetic(self):
        # group-mean gaps of exactly (0.3, 0.4) without rescaling
        pop = pop_from_columns([0.3, 0.3, 0.0, 0.0], [0.4, 0.4, 0.0, 0.0])
        a = Assignment(np.array([1, 1, 0, 0]))
        assert smd(pop, a, 1, standardize_first=False) == pytest.approx(0.7)
        assert smd(pop, a, math.inf, standardize_first=False) == pytest.approx(0.4)

    def test_empty_group_rejected(self):
        pop = pop_from_columns([1.0, 2.0])
        with pytest.raises(EmptyGroupError):
            smd(pop, Assignment(np.array([1, 1])), 1)

    def test_complement_invariance(self):
        pop = pop_from_columns(substream(3, 0).standard_normal(8))
        for _ in range(10):
            a = Assignment(random_equal_split(8, substream(4, 0)))
            for p in (1, math.inf):
                assert smd(pop, a, p) == pytest.approx(smd(pop, a.complement(), p), abs=1e-12)

    def test_norm_ordering(self):
        rng = substream(5, 0)
        pop = TrialPopulation(
            CovariateSchema.all_continuous(3),
            rng.standard_normal((10, 3)),
            np.zeros(10),
            np.ones(10),
        )
        for i in range(20):
            a = Assignment(random_equal_split(10, substream(6, i)))
            l1 = smd(pop, a, 1)
            linf = smd(pop, a, math.inf)
            assert linf <= l1 + 1e-12
            assert l1 <= 3 * linf + 1e-12


class TestOneHot:
    def test_binary_two_subjects(self):
        pop = pop_from_columns([0.0, 1.0], categorical=(0,))
        hot = one_hot(pop)
        assert np.array_equal(hot.matrix, [[1, 0], [0, 1]])

    def test_column_sums_one_per_block(self):
        pop = pop_from_columns(
            [0.0, 1.0, 2.0, 1.0], [1.0, 0.0, 1.0, 0.0], categorical=(0, 1)
        )
        hot = one_hot(pop)
        for j in range(pop.schema.m):
            block = hot.matrix[hot.row_covariate == j]
            assert np.array_equal(block.sum(axis=0), np.ones(4))

    def test_continuous_rejected(self):
        pop = pop_from_columns([0.5, 1.5])
        with pytest.raises(InputError):
            one_hot(pop)

    def test_count_score_equals_one_hot_l1(self):
        # the bridge the linearised program relies on
        for i in range(20):
            rng = substream(7, i)
            x1 = rng.integers(0, 3, 12).astype(float)
            x2 = rng.integers(0, 2, 12).astype(float)
            pop = pop_from_columns(x1, x2, categorical=(0, 1))
            a = Assignment(random_equal_split(12, rng))
            hot = one_hot(pop)
            oracle = float(np.abs(hot.matrix @ (2 * a.bits - 1)).sum())
            assert u_pocock(pop, a) == pytest.approx(oracle, abs=1e-12)


class TestUPocock:
    def test_identical_histograms_score_zero(self):
        pop = pop_from_columns([0, 1, 2, 0, 1, 2], categorical=(0,))
        a = Assignment(np.array([1, 1, 1, 0, 0, 0]))
        # both groups hold one subject of each category
        assert u_pocock(pop, a) == 0.0

    def test_count_arithmetic(self):
        pop = pop_from_columns([0, 0, 1, 0, 1, 1], categorical=(0,))
        a = Assignment(np.array([1, 1, 1, 0, 0, 0]))
        assert u_pocock(pop, a) == 2.0

    def test_relabeling_invariance(self):
        rng = substream(8, 0)
        codes = rng.integers(0, 3, 10).astype(float)
        pop = pop_from_columns(codes, categorical=(0,))
        relabeled = pop_from_columns(2.0 - codes, categorical=(0,))
        for i in range(10):
            a = Assignment(random_equal_split(10, substream(9, i)))
            assert u_pocock(pop, a) == u_pocock(relabeled, a)

    def test_subject_reordering_invariance(self):
        rng = substream(10, 0)
        codes = rng.integers(0, 4, 12).astype(float)
        pop = pop_from_columns(codes, categorical=(0,))
        perm = rng.permutation(12)
        shuffled = pop_from_columns(codes[perm], categorical=(0,))
        a = random_equal_split(12, rng)
        # shuffled subject i is original subject perm[i]
        assert u_pocock(pop, Assignment(a)) == u_pocock(shuffled, Assignment(a[perm]))

    def test_weights_scale_terms(self):
        pop = pop_from_columns([0, 0, 1, 1], [0, 1, 0, 1], categorical=(0, 1))
        a = Assignment(np.array([1, 1, 0, 0]))
        base0 = u_pocock(pop_from_columns([0, 0, 1, 1], categorical=(0,)), a)
        base1 = u_pocock(pop_from_columns([0, 1, 0, 1], categorical=(0,)), a)
        assert u_pocock(pop, a, weights=[2.0, 3.0]) == pytest.approx(2 * base0 + 3 * base1)


class TestCalibrate:
    def test_identical_subjects_degenerate(self):
        x = np.ones((8, 1))
        pop = TrialPopulation(
            CovariateSchema.all_continuous(1), x, np.zeros(8), np.ones(8)
        )
        spec = BalanceSpec(SMD_L1, standardize=False)
        calib = calibrate(pop, spec, draws=200, seed=0)
        assert calib.u_bar == 0.0 and calib.u_min == 0.0
        with pytest.raises(DegenerateCalibrationError):
            is_admissible(0.0, calib)

    def test_exhaustive_mean_matches_mc(self):
        pop = generate(GenConfig(n=12, m_continuous=2, m_binary=1, coef_seed=11, noise_seed=11))
        spec = BalanceSpec(SMD_L1)
        exact = calibrate(pop, spec, draws=100, seed=1, exhaustive_threshold=1000)
        mc = calibrate(pop, spec, draws=4000, seed=1, exhaustive_threshold=10)
        scores = score_many(pop, equal_split_matrix(12), spec)
        se = scores.std(ddof=1) / math.sqrt(4000)
        assert exact.u_bar == pytest.approx(float(scores.mean()), abs=1e-12)
        assert abs(mc.u_bar - exact.u_bar) < 3 * se

    def test_u_min_matches_enumeration(self):
        pop = generate(GenConfig(n=12, m_continuous=2, m_binary=0, coef_seed=12, noise_seed=12))
        for kind in (SMD_L1, SMD_LINF):
            spec = BalanceSpec(kind)
            calib = calibrate(pop, spec, draws=200, seed=2)
            scores = score_many(pop, equal_split_matrix(12), spec)
            assert calib.u_min == pytest.approx(float(scores.min()), abs=1e-9)
            assert calib.u_min_certified

    def test_too_few_draws(self):
        pop = generate(GenConfig(n=8, coef_seed=1, noise_seed=1))
        with pytest.raises(InputError):
            calibrate(pop, BalanceSpec(SMD_L1), draws=50, seed=0)

    def test_json_round_trip(self):
        calib = BalanceCalibration(SMD_LINF, u_bar=0.8, u_min=0.1, alpha_a=0.02,
                                   draws=500, seed=7)
        back = BalanceCalibration.from_json(calib.to_json())
        assert back == calib


class TestAdmissibility:
    def calib(self, u_bar=1.0, u_min=0.25, alpha=0.03125):
        # dyadic values keep the boundary arithmetic exact
        return BalanceCalibration(SMD_L1, u_bar, u_min, alpha, 100, 0)

    def test_minimum_always_admissible(self):
        assert is_admissible(0.25, self.calib())

    def test_boundary_is_strict(self):
        c = self.calib()
        assert not is_admissible(c.u_min + c.alpha_a * c.u_bar, c)

    def test_matches_brute_force_definition(self):
        pop = generate(GenConfig(n=12, m_continuous=3, m_binary=0, coef_seed=13, noise_seed=13))
        spec = BalanceSpec(SMD_LINF)
        alpha = 0.05
        calib = calibrate(pop, spec, draws=100, seed=3,
                          exhaustive_threshold=1000, alpha_a=alpha)
        bits = equal_split_matrix(12)
        scores = score_many(pop, bits, spec)
        # oracle: the set-based definition quantifying over every assignment
        oracle = np.array([
            all((u - other) / calib.u_bar < alpha for other in scores) for u in scores
        ])
        mine = np.array([is_admissible(float(u), calib) for u in scores])
        assert np.array_equal(oracle, mine)

    def test_alpha_warning(self):
        with pytest.warns(UserWarning):
            BalanceCalibration(SMD_L1, 1.0, 0.0, 0.2, 100, 0)


class TestScoreDispatch:
    def test_score_matches_components(self):
        pop = generate(GenConfig(n=10, m_continuous=2, m_binary=2, coef_seed=14, noise_seed=14))
        a = Assignment(random_equal_split(10, substream(15, 0)))
        assert score(pop, a, BalanceSpec(SMD_L1)) == pytest.approx(smd(pop, a, 1))
        assert score(pop, a, BalanceSpec(SMD_LINF)) == pytest.approx(smd(pop, a, math.inf))

    def test_score_many_matches_scalar(self):
        pop = generate(GenConfig(n=10, m_continuous=2, m_binary=0, coef_seed=16, noise_seed=16))
        bits = np.stack([random_equal_split(10, substream(17, i)) for i in range(6)])
        for spec in (BalanceSpec(SMD_L1), BalanceSpec(SMD_LINF)):
            batch = score_many(pop, bits, spec)
            single = [score(pop, Assignment(b), spec) for b in bits]
            assert np.allclose(batch, single, atol=1e-12)

    def test_score_many_pocock(self):
        pop = pop_from_columns([0, 1, 2, 0, 1, 2, 0, 1], categorical=(0,))
        bits = np.stack([random_equal_split(8, substream(18, i)) for i in range(6)])
        spec = BalanceSpec(POCOCK)
        batch = score_many(pop, bits, spec)
        single = [u_pocock(pop, Assignment(b)) for b in bits]
        assert np.allclose(batch, single, atol=1e-12)
