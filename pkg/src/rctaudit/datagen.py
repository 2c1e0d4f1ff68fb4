"""Synthetic populations with known ground truth.

Two generators: `generate` draws a mixed continuous/binary cohort with a
linear outcome model, and `make_adversarial_case` plants covariate-identical
twin pairs whose idiosyncratic effects pull in opposite directions, so that
perfectly balanced assignments still span a wide range of measured effects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .rng import substream
from .trial import CATEGORICAL, Assignment, Covariate, CovariateSchema, TrialPopulation


@dataclass(frozen=True)
class GenConfig:
    n: int
    m_continuous: int = 4
    m_binary: int = 6
    tau0: float = 1.0
    gamma_scale: float = 0.5  # effect-heterogeneity slope scale
    beta_scale: float = 1.0  # baseline slope scale
    noise_sd: float = 1.0
    coef_seed: int = 0
    noise_seed: int = 0
    planted_deviation: float = 1.0  # twin-pair effect gap (adversarial case only)

    def __post_init__(self):
        if self.n < 4:
            raise InputError("generator needs n >= 4")
        if self.noise_sd < 0:
            raise InputError("noise_sd must be nonnegative")
        if self.m_continuous + self.m_binary < 1:
            raise InputError("generator needs at least one covariate")


@dataclass(frozen=True)
class PlantedCase:
    """A twin-pair population plus what the plant guarantees.

    `mate_bound` is a lower bound on |measured - true effect| that is
    attained by `witness`, an assignment with zero covariate imbalance.
    `balanced_witness` is a zero-imbalance assignment whose error is exactly
    zero (it flips half of the pair orientations).
    """

    population: TrialPopulation
    mate_bound: float
    witness: Assignment
    balanced_witness: Assignment


def _schema(config: GenConfig) -> CovariateSchema:
    covs = [Covariate(f"c{i + 1}") for i in range(config.m_continuous)]
    covs += [
        Covariate(f"b{i + 1}", kind=CATEGORICAL, categories=2)
        for i in range(config.m_binary)
    ]
    return CovariateSchema(tuple(covs))


def coefficients(config: GenConfig) -> tuple[np.ndarray, np.ndarray]:
    """Baseline and effect-heterogeneity slopes implied by the coefficient seed."""
    coef = substream(config.coef_seed, 100)
    m = config.m_continuous + config.m_binary
    beta = coef.standard_normal(m) * config.beta_scale
    gamma = coef.standard_normal(m) * config.gamma_scale
    return beta, gamma


def generate(config: GenConfig) -> TrialPopulation:
    """Draw a cohort: y0 linear in covariates, y1 = y0 + heterogeneous effect."""
    beta, gamma = coefficients(config)

    x_rng = substream(config.noise_seed, 101)
    noise_rng = substream(config.noise_seed, 102)
    x_cont = x_rng.standard_normal((config.n, config.m_continuous))
    x_bin = x_rng.integers(0, 2, size=(config.n, config.m_binary)).astype(float)
    x = np.hstack([x_cont, x_bin])

    y0 = x @ beta + noise_rng.standard_normal(config.n) * config.noise_sd
    y1 = y0 + config.tau0 + x @ gamma
    return TrialPopulation(_schema(config), x, y0, y1)


def expected_ate(config: GenConfig) -> float:
    """Closed-form expectation of the true effect over covariate draws."""
    _, gamma = coefficients(config)
    return config.tau0 + 0.5 * gamma[config.m_continuous :].sum()


def make_adversarial_case(config: GenConfig) -> PlantedCase:
    """Plant twin pairs so balance and error decouple.

    Each pair shares one covariate vector; its two members carry effects
    tau +/- d around a common baseline. Any assignment that splits every
    pair has zero covariate imbalance, yet choosing which twin is treated
    moves the measured effect by 2d/N per pair. With n/2 pairs and a common
    deviation d, the emitted error bound is exactly d.
    """
    if config.n % 4 != 0:
        raise InputError("adversarial case needs n divisible by 4")
    pairs = config.n // 2
    d = config.planted_deviation
    if d <= 0:
        raise InputError("planted_deviation must be positive")

    coef = substream(config.coef_seed, 200)
    x_cont = coef.standard_normal((pairs, config.m_continuous)) * 2.0
    x_bin = coef.integers(0, 2, size=(pairs, config.m_binary)).astype(float)
    pair_x = np.hstack([x_cont, x_bin])
    mu = coef.standard_normal(pairs) * 0.2
    nu = coef.standard_normal(pairs) * 0.2

    x = np.repeat(pair_x, 2, axis=0)
    y0 = np.repeat(nu, 2)
    y1 = np.empty(config.n)
    y1[0::2] = mu + d  # twin "a": effect pushed up
    y1[1::2] = mu - d  # twin "b": effect pushed down

    pop = TrialPopulation(_schema(config), x, y0, y1)

    witness = np.zeros(config.n, dtype=np.int8)
    witness[0::2] = 1  # treat every "a" twin: error = +d

    balanced = np.zeros(config.n, dtype=np.int8)
    balanced[0::2][: pairs // 2] = 1  # first half of pairs oriented up
    balanced[1::2][pairs // 2 :] = 1  # second half oriented down

    return PlantedCase(
        population=pop,
        mate_bound=float(d),
        witness=Assignment(witness),
        balanced_witness=Assignment(balanced),
    )
