"""Covariate balancing scores and admissibility calibration.

Two families of scores are supported: standardized-means-difference under
the l1 or l-infinity norm for continuous data, and a per-category count
score for categorical data (the non-sequential counterpart of the
sequential greedy criterion; the two orderings coincide, see the sequential
module). Calibration estimates the expected imbalance over uniform
equal-split assignments and the minimum imbalance over all assignments,
which together turn a raw score into an admissibility verdict.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCalibrationError,
    DegenerateCovariateError,
    EmptyGroupError,
    InputError,
)
from .rng import random_equal_split, substream
from .trial import (
    CATEGORICAL,
    Assignment,
    TrialPopulation,
    equal_split_matrix,
)

SMD_L1 = "smd_l1"
SMD_LINF = "smd_linf"
POCOCK = "pocock"


@dataclass(frozen=True)
class BalanceSpec:
    """Which balancing score is in force for an audit."""

    kind: str
    weights: np.ndarray | None = None  # per-covariate, count score only
    standardize: bool = True  # mean-difference scores only

    def __post_init__(self):
        if self.kind not in (SMD_L1, SMD_LINF, POCOCK):
            raise InputError(f"unknown balance kind {self.kind!r}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if (w <= 0).any() or not np.isfinite(w).all():
                raise InputError("weights must be strictly positive and finite")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class OneHotMatrix:
    """Category-indicator matrix: one row per (covariate, category), one column per subject."""

    matrix: np.ndarray  # (sum of category counts, N), entries in {0, 1}
    row_covariate: np.ndarray  # covariate index per row
    row_category: np.ndarray  # category code per row

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class BalanceCalibration:
    """Expected and minimum imbalance plus the admissibility slack."""

    kind: str
    u_bar: float
    u_min: float
    alpha_a: float
    draws: int
    seed: int
    u_min_certified: bool = True  # False when the minimising solve hit a budget

    def __post_init__(self):
        if not (0.0 < self.alpha_a < 0.5):
            raise InputError("alpha_a must lie in (0, 0.5)")
        if self.alpha_a > 0.1:
            warnings.warn("alpha_a above 0.1 admits heavily imbalanced assignments")
        if self.u_min > self.u_bar + 1e-12:
            raise InputError("minimum imbalance cannot exceed the expected imbalance")

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "u_bar": self.u_bar,
                "u_min": self.u_min,
                "alpha_a": self.alpha_a,
                "draws": self.draws,
                "seed": self.seed,
            }
        )

    @staticmethod
    def from_json(text: str) -> "BalanceCalibration":
        return BalanceCalibration(**json.loads(text))


def standardize(pop: TrialPopulation) -> TrialPopulation:
    """Rescale continuous covariates to unit whole-cohort standard deviation.

    The n-denominator deviation is computed once on the full cohort, never
    per group, so the rescaling does not depend on any assignment. Means are
    left untouched; categorical columns pass through.
    """
    x = pop.x.copy()
    for j, cov in enumerate(pop.schema.covariates):
        if cov.kind == CATEGORICAL:
            continue
        sd = float(np.std(x[:, j]))
        if sd == 0.0:
            raise DegenerateCovariateError(
                f"covariate {cov.name!r} has zero variance and cannot be standardized"
            )
        x[:, j] = x[:, j] / sd
    return TrialPopulation(pop.schema, x, pop.y0, pop.y1)


def smd(pop: TrialPopulation, a: Assignment, p, standardize_first: bool = True) -> float:
    """Norm of the gap between treated and control covariate means."""
    if a.n != pop.n:
        raise InputError("assignment does not match the population")
    if a.n1 == 0 or a.n0 == 0:
        raise EmptyGroupError("mean-difference score needs both groups nonempty")
    if p not in (1, math.inf):
        raise InputError("norm order must be 1 or inf")
    work = standardize(pop) if standardize_first else pop
    treated = a.bits == 1
    gap = work.x[treated].mean(axis=0) - work.x[~treated].mean(axis=0)
    return float(np.abs(gap).sum() if p == 1 else np.abs(gap).max())


def one_hot(pop: TrialPopulation) -> OneHotMatrix:
    """Category indicators, covariates in schema order, categories ascending."""
    blocks, row_cov, row_cat = [], [], []
    for j, cov in enumerate(pop.schema.covariates):
        if cov.kind != CATEGORICAL:
            raise InputError(
                f"covariate {cov.name!r} is continuous; discretize before one-hot encoding"
            )
        codes = pop.x[:, j].astype(int)
        block = np.zeros((cov.categories, pop.n), dtype=np.int8)
        block[codes, np.arange(pop.n)] = 1
        blocks.append(block)
        row_cov.extend([j] * cov.categories)
        row_cat.extend(range(cov.categories))
    return OneHotMatrix(
        np.vstack(blocks), np.asarray(row_cov, dtype=int), np.asarray(row_cat, dtype=int)
    )


def u_pocock(pop: TrialPopulation, a: Assignment, weights=None) -> float:
    """Weighted sum of absolute per-category count gaps between the groups.

    Computed directly from category counts; the one-hot route
    ||X (2a - 1)||_1 is the independent cross-check used in tests.
    """
    if a.n != pop.n:
        raise InputError("assignment does not match the population")
    weights = covariate_weights(pop, weights)
    treated = a.bits == 1
    total = 0.0
    for j, cov in enumerate(pop.schema.covariates):
        if cov.kind != CATEGORICAL:
            raise InputError(
                f"covariate {cov.name!r} is continuous; discretize before count scoring"
            )
        codes = pop.x[:, j].astype(int)
        n_treat = np.bincount(codes[treated], minlength=cov.categories)
        n_ctrl = np.bincount(codes[~treated], minlength=cov.categories)
        total += weights[j] * float(np.abs(n_ctrl - n_treat).sum())
    return total


def score(pop: TrialPopulation, a: Assignment, spec: BalanceSpec) -> float:
    """Evaluate the spec's balancing score for one assignment."""
    if spec.kind == SMD_L1:
        return smd(pop, a, 1, standardize_first=spec.standardize)
    if spec.kind == SMD_LINF:
        return smd(pop, a, math.inf, standardize_first=spec.standardize)
    return u_pocock(pop, a, spec.weights)


def score_many(pop: TrialPopulation, bits_matrix: np.ndarray, spec: BalanceSpec) -> np.ndarray:
    """Vectorised balancing scores for a (draws, N) assignment matrix."""
    bits = np.asarray(bits_matrix, dtype=float)
    n1 = bits.sum(axis=1, keepdims=True)
    n0 = bits.shape[1] - n1
    if spec.kind in (SMD_L1, SMD_LINF):
        if (n1 == 0).any() or (n0 == 0).any():
            raise EmptyGroupError("mean-difference score needs both groups nonempty")
        work = standardize(pop) if spec.standardize else pop
        gaps = bits @ work.x / n1 - (1.0 - bits) @ work.x / n0
        return np.abs(gaps).sum(axis=1) if spec.kind == SMD_L1 else np.abs(gaps).max(axis=1)
    hot = one_hot(pop)
    weights = covariate_weights(pop, spec.weights)
    row_w = weights[hot.row_covariate]
    counts = (2.0 * bits - 1.0) @ hot.matrix.T  # treated minus control per row
    return np.abs(counts) @ row_w


def calibrate(
    pop: TrialPopulation,
    spec: BalanceSpec,
    draws: int,
    seed: int,
    exhaustive_threshold: int = 50_000,
    alpha_a: float = 0.02,
    solver_config=None,
) -> BalanceCalibration:
    """Estimate expected and minimum imbalance for admissibility checks.

    The expected imbalance averages the score over uniform equal-split
    assignments, switching to exact enumeration when the equal-split set is
    no larger than `exhaustive_threshold`. The minimum comes from the
    assignment-search solver with the effect term switched off.
    """
    if draws < 100:
        raise InputError("calibration needs draws >= 100")
    count = math.comb(pop.n, pop.n // 2)
    if count <= exhaustive_threshold:
        scores = score_many(pop, equal_split_matrix(pop.n), spec)
        u_bar = float(scores.mean())
    else:
        bits = np.empty((draws, pop.n), dtype=np.int8)
        for d in range(draws):
            bits[d] = random_equal_split(pop.n, substream(seed, d))
        u_bar = float(score_many(pop, bits, spec).mean())

    from . import atastreet  # deferred: the solver layer builds on this module

    u_min, certified = atastreet.minimum_imbalance(pop, spec, solver_config)
    u_min = min(u_min, u_bar)  # guard against budget-limited overshoot
    return BalanceCalibration(
        kind=spec.kind,
        u_bar=u_bar,
        u_min=u_min,
        alpha_a=alpha_a,
        draws=draws,
        seed=seed,
        u_min_certified=certified,
    )


def is_admissible(u_value: float, calib: BalanceCalibration) -> bool:
    """Whether a score is close enough to the best achievable balance.

    True when (u - u_min) / u_bar stays strictly below alpha_a. The
    comparison against the minimum makes the for-all-assignments reading
    a single O(1) check.
    """
    if calib.u_bar == 0.0:
        raise DegenerateCalibrationError(
            "expected imbalance is zero; every assignment is identically balanced"
        )
    return (u_value - calib.u_min) / calib.u_bar < calib.alpha_a


def covariate_weights(pop: TrialPopulation, weights) -> np.ndarray:
    if weights is None:
        return np.ones(pop.schema.m)
    w = np.asarray(weights, dtype=float)
    if w.shape != (pop.schema.m,):
        raise InputError("need one weight per covariate")
    if (w <= 0).any():
        raise InputError("weights must be strictly positive")
    return w
