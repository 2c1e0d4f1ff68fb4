"""Trial data model and treatment-effect arithmetic.

A trial population carries both potential outcomes for every subject, which
is the oracle view needed for worst-case analysis. An assignment maps each
subject to treatment (1) or control (0); observing a trial keeps exactly one
outcome per subject and drops the counterfactual column.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGroupError, InputError
from .rng import random_equal_split, substream

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str = CONTINUOUS
    categories: int | None = None  # category count, categorical only

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise InputError(f"unknown covariate kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.categories is None or self.categories < 2:
                raise InputError(
                    f"categorical covariate {self.name!r} needs >= 2 categories"
                )
        elif self.categories is not None:
            raise InputError(f"continuous covariate {self.name!r} cannot list categories")


@dataclass(frozen=True)
class CovariateSchema:
    covariates: tuple[Covariate, ...]

    def __post_init__(self):
        if len(self.covariates) < 1:
            raise InputError("schema needs at least one covariate")
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise InputError("covariate names must be unique")

    @property
    def m(self) -> int:
        return len(self.covariates)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.covariates]

    def is_categorical(self) -> np.ndarray:
        return np.array([c.kind == CATEGORICAL for c in self.covariates])

    @staticmethod
    def all_continuous(m: int, names: list[str] | None = None) -> "CovariateSchema":
        names = names or [f"x{i + 1}" for i in range(m)]
        return CovariateSchema(tuple(Covariate(n) for n in names))


@dataclass(frozen=True)
class Subject:
    covariates: np.ndarray
    y0: float
    y1: float


@dataclass(frozen=True)
class TrialPopulation:
    """N subjects with covariates and both potential outcomes."""

    schema: CovariateSchema
    x: np.ndarray  # (N, m) float; categorical columns hold integer codes
    y0: np.ndarray  # (N,)
    y1: np.ndarray  # (N,)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y0 = np.asarray(self.y0, dtype=float)
        y1 = np.asarray(self.y1, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)
        if x.ndim != 2 or x.shape[1] != self.schema.m:
            raise InputError(
                f"covariate matrix is {x.shape}, schema has m={self.schema.m}"
            )
        n = x.shape[0]
        if n < 2:
            raise InputError("population needs at least two subjects")
        if y0.shape != (n,) or y1.shape != (n,):
            raise InputError("outcome vectors must have one entry per subject")
        if not (np.isfinite(x).all() and np.isfinite(y0).all() and np.isfinite(y1).all()):
            raise InputError("covariates and outcomes must be finite")
        for j, cov in enumerate(self.schema.covariates):
            if cov.kind == CATEGORICAL:
                col = x[:, j]
                if not np.array_equal(col, np.round(col)):
                    raise InputError(f"covariate {cov.name!r}: category codes must be integers")
                if col.min() < 0 or col.max() >= cov.categories:
                    raise InputError(
                        f"covariate {cov.name!r}: codes outside 0..{cov.categories - 1}"
                    )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def subject(self, i: int) -> Subject:
        return Subject(self.x[i].copy(), float(self.y0[i]), float(self.y1[i]))

    @staticmethod
    def from_subjects(schema: CovariateSchema, subjects: list[Subject]) -> "TrialPopulation":
        x = np.array([s.covariates for s in subjects], dtype=float)
        y0 = np.array([s.y0 for s in subjects], dtype=float)
        y1 = np.array([s.y1 for s in subjects], dtype=float)
        return TrialPopulation(schema, x, y0, y1)

    def take(self, indices) -> "TrialPopulation":
        idx = np.asarray(indices, dtype=int)
        return TrialPopulation(self.schema, self.x[idx], self.y0[idx], self.y1[idx])


@dataclass(frozen=True)
class Assignment:
    """Binary treatment map over the population."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int8)
        object.__setattr__(self, "bits", bits)
        if bits.ndim != 1:
            raise InputError("assignment bits must be a flat sequence")
        if not np.isin(bits, (0, 1)).all():
            raise InputError("assignment bits must be 0 or 1")

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def n1(self) -> int:
        return int(self.bits.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def is_equal_split(self) -> bool:
        return self.n1 == self.n // 2

    def require_equal_split(self):
        if not self.is_equal_split():
            raise InputError(
                f"assignment treats {self.n1} of {self.n}; expected {self.n // 2}"
            )

    def complement(self) -> "Assignment":
        return Assignment(1 - self.bits)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @staticmethod
    def from_string(s: str) -> "Assignment":
        s = s.strip()
        if not s or set(s) - {"0", "1"}:
            raise InputError("assignment string must be nonempty over {0,1}")
        return Assignment(np.fromiter((int(c) for c in s), dtype=np.int8))

    def __eq__(self, other):
        return isinstance(other, Assignment) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.to_string())


@dataclass(frozen=True)
class ObservedTrial:
    """A conducted trial: covariates, arm, and the single observed outcome."""

    schema: CovariateSchema
    x: np.ndarray
    t: np.ndarray
    y_obs: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int8)
        y = np.asarray(self.y_obs, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y_obs", y)
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        n = self.x.shape[0]
        if t.shape != (n,) or y.shape != (n,):
            raise InputError("observed trial columns must align with covariate rows")
        if not np.isin(t, (0, 1)).all():
            raise InputError("treatment indicator must be 0 or 1")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def assignment(self) -> Assignment:
        return Assignment(self.t)


@dataclass(frozen=True)
class SigmaEstimate:
    """Monte-Carlo estimate of the estimation-error spread over random assignments."""

    sigma: float
    standard_error: float
    draws: int
    seed: int

    def __post_init__(self):
        if self.draws < 2:
            raise InputError("sigma estimate needs draws >= 2")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise InputError("sigma must be finite and nonnegative")


def ate(pop: TrialPopulation) -> float:
    """Average treatment effect: mean of per-subject outcome differences."""
    return math.fsum(pop.y1 - pop.y0) / pop.n


def mate(pop: TrialPopulation, a: Assignment) -> float:
    """Measured average treatment effect under one assignment.

    Difference between the treated-group mean of treated outcomes and the
    control-group mean of control outcomes.
    """
    _check_assignment(pop, a)
    if a.n1 == 0 or a.n0 == 0:
        raise EmptyGroupError("both groups must be nonempty to measure an effect")
    treated = a.bits == 1
    return math.fsum(pop.y1[treated]) / a.n1 - math.fsum(pop.y0[~treated]) / a.n0


def estimation_error(pop: TrialPopulation, a: Assignment) -> float:
    """Signed error of the measured effect relative to the true effect."""
    return mate(pop, a) - ate(pop)


def observe(pop: TrialPopulation, a: Assignment) -> ObservedTrial:
    """Conduct the trial: keep each subject's outcome for its assigned arm."""
    _check_assignment(pop, a)
    treated = a.bits == 1
    y_obs = np.where(treated, pop.y1, pop.y0)
    return ObservedTrial(pop.schema, pop.x.copy(), a.bits.copy(), y_obs)


def attach(observed: ObservedTrial, y_missing) -> TrialPopulation:
    """Rebuild an oracle population by supplying the hidden outcomes."""
    y_missing = np.asarray(y_missing, dtype=float)
    if y_missing.shape != (observed.n,):
        raise InputError("hidden outcomes must have one entry per subject")
    treated = observed.t == 1
    y1 = np.where(treated, observed.y_obs, y_missing)
    y0 = np.where(treated, y_missing, observed.y_obs)
    return TrialPopulation(observed.schema, observed.x.copy(), y0, y1)


def mate_many(pop: TrialPopulation, bits_matrix: np.ndarray) -> np.ndarray:
    """Vectorised measured effects for a (draws, N) matrix of assignments.

    Uses pairwise-summed dot products; intended for Monte-Carlo and
    enumeration loops where `mate` would be too slow.
    """
    bits = np.asarray(bits_matrix, dtype=float)
    n1 = bits.sum(axis=1)
    n0 = bits.shape[1] - n1
    if (n1 == 0).any() or (n0 == 0).any():
        raise EmptyGroupError("every assignment needs both groups nonempty")
    return bits @ pop.y1 / n1 - (1.0 - bits) @ pop.y0 / n0


def sigma_ate_mc(pop: TrialPopulation, draws: int, seed: int) -> SigmaEstimate:
    """Estimate the spread of the estimation error over random assignments.

    Assignments are drawn uniformly from the equal-split set. Returns the
    sample standard deviation (ddof=1) of the signed errors together with
    its normal-theory standard error. Deterministic given (seed, draws):
    each draw uses its own counter-based stream.
    """
    if draws < 2:
        raise InputError("sigma_ate_mc needs draws >= 2")
    bits = np.empty((draws, pop.n), dtype=np.int8)
    for d in range(draws):
        bits[d] = random_equal_split(pop.n, substream(seed, d))
    errors = mate_many(pop, bits) - ate(pop)
    sigma = float(np.std(errors, ddof=1))
    se = sigma / math.sqrt(2.0 * (draws - 1))
    return SigmaEstimate(sigma=sigma, standard_error=se, draws=draws, seed=seed)


def iter_equal_split_bits(n: int):
    """Yield every equal-split assignment of n subjects as an int8 bit array."""
    k = n // 2
    for combo in itertools.combinations(range(n), k):
        bits = np.zeros(n, dtype=np.int8)
        bits[list(combo)] = 1
        yield bits


def equal_split_matrix(n: int, limit: int = 10_000_000) -> np.ndarray:
    """All equal-split assignments as one (count, n) matrix."""
    count = math.comb(n, n // 2)
    if count > limit:
        raise InputError(f"{count} equal splits exceed the materialisation limit")
    out = np.empty((count, n), dtype=np.int8)
    for i, bits in enumerate(iter_equal_split_bits(n)):
        out[i] = bits
    return out


def _check_assignment(pop: TrialPopulation, a: Assignment):
    if a.n != pop.n:
        raise InputError(f"assignment has {a.n} bits for {pop.n} subjects")
