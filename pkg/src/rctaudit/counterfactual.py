"""Counterfactual imputation and the adversarial-assignment attack.

Given a conducted trial, an imputer fills in every subject's unobserved
outcome: either the mean observed outcome of the nearest opposite-group
neighbours, or a per-arm ridge regression predicting the opposite arm. The
observed cells are preserved exactly; only the missing half is estimated.

The attack runs the worst-case sweep on the reconstructed trial and returns
the admissible extreme assignment. How close that lands to the true worst
case is bounded by the imputer's accuracy, which is the pluggable part.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import balance as bal
from .atastreet import MAXIMIZE, MINIMIZE, FrontierPoint, SweepConfig, default_lambda_grid, sweep
from .errors import EmptyGroupError, InputError, NoAdmissiblePointError
from .milp import SolverConfig
from .rng import derive_seed
from .trial import Assignment, ObservedTrial, TrialPopulation, attach, mate

KNN = "knn"
LINEAR = "linear"


@dataclass(frozen=True)
class ImputerSpec:
    """Which baseline estimator reconstructs the unobserved outcomes."""

    kind: str
    k: int = 5  # neighbour count (knn)
    ridge_penalty: float = 1e-6  # per-arm regression (linear)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (KNN, LINEAR):
            raise InputError(f"unknown imputer kind {self.kind!r}")
        if self.k < 1:
            raise InputError("k must be at least 1")
        if not (self.ridge_penalty >= 0 and np.isfinite(self.ridge_penalty)):
            raise InputError("ridge penalty must be finite and nonnegative")


@dataclass(frozen=True)
class ReconstructedTrial:
    """Oracle-shaped population whose missing half was estimated.

    Provenance masks mark which cells are imputed; the factual cells equal
    the observed trial's values exactly.
    """

    population: TrialPopulation
    y0_imputed: np.ndarray
    y1_imputed: np.ndarray


@dataclass(frozen=True)
class AttackResult:
    assignment: Assignment
    mate_value: float  # on the reconstruction
    u_value: float
    direction: str
    point: FrontierPoint
    calibration: bal.BalanceCalibration


def _metric_matrix(x: np.ndarray) -> np.ndarray:
    """Covariates scaled to unit cohort deviation where variance allows."""
    z = x.astype(float).copy()
    sd = z.std(axis=0)
    nonzero = sd > 0
    z[:, nonzero] = z[:, nonzero] / sd[nonzero]
    return z


def impute(observed: ObservedTrial, spec: ImputerSpec) -> ReconstructedTrial:
    """Fill in each subject's unobserved outcome.

    Nearest-neighbour: the counterfactual of a subject is the mean observed
    outcome of its k nearest opposite-group neighbours in standardized
    covariate space, equidistant neighbours resolved by subject index.
    Regression: one ridge fit per arm on that arm's observed rows, each
    predicting the opposite-arm outcome for every subject.
    """
    t = observed.t
    n1 = int(t.sum())
    if n1 == 0 or n1 == observed.n:
        raise EmptyGroupError("imputation needs both arms nonempty")
    if spec.kind == KNN:
        counterfactual = _impute_knn(observed, spec)
    else:
        counterfactual = _impute_linear(observed, spec)
    pop = attach(observed, counterfactual)
    treated = t == 1
    return ReconstructedTrial(pop, y0_imputed=treated.copy(), y1_imputed=~treated)


def _impute_knn(observed: ObservedTrial, spec: ImputerSpec) -> np.ndarray:
    z = _metric_matrix(observed.x)
    out = np.empty(observed.n)
    clamped = False
    for i in range(observed.n):
        opp = np.nonzero(observed.t != observed.t[i])[0]
        k = min(spec.k, opp.size)
        clamped = clamped or k < spec.k
        dist = np.sqrt(((z[opp] - z[i]) ** 2).sum(axis=1))
        order = np.lexsort((opp, dist))  # distance first, subject index on ties
        out[i] = observed.y_obs[opp[order[:k]]].mean()
    if clamped:
        warnings.warn("k exceeded an opposite-group size and was clamped")
    return out


def _impute_linear(observed: ObservedTrial, spec: ImputerSpec) -> np.ndarray:
    z = _metric_matrix(observed.x)
    design = np.hstack([np.ones((observed.n, 1)), z])
    preds = {}
    for arm in (0, 1):
        rows = observed.t == arm
        xg = design[rows]
        ridge = spec.ridge_penalty * np.eye(design.shape[1])
        ridge[0, 0] = 0.0  # intercept unpenalised
        try:
            beta = np.linalg.solve(xg.T @ xg + ridge, xg.T @ observed.y_obs[rows])
        except np.linalg.LinAlgError as exc:
            raise InputError(
                f"arm-{arm} design matrix is rank deficient; raise the ridge penalty"
            ) from exc
        preds[arm] = design @ beta
    # opposite-arm prediction is the counterfactual
    return np.where(observed.t == 1, preds[0], preds[1])


def attack(
    observed: ObservedTrial,
    imputer: ImputerSpec,
    spec: bal.BalanceSpec,
    *,
    direction: str = MAXIMIZE,
    lambda_grid: np.ndarray | None = None,
    alpha_a: float = 0.02,
    calib_draws: int = 1000,
    seed: int = 0,
    solver: SolverConfig | None = None,
    exhaustive_threshold: int = 50_000,
) -> AttackResult:
    """Adversarial assignment for a conducted trial.

    Reconstructs the trial, sweeps the reconstruction in the requested
    direction, and returns the admissible frontier extreme. The result is
    guaranteed admissible under the reconstruction's own calibration.
    """
    recon = impute(observed, imputer)
    pop_r = recon.population
    solver = solver or SolverConfig(seed=seed)
    calib = bal.calibrate(
        pop_r, spec, calib_draws, derive_seed(seed, 1),
        exhaustive_threshold=exhaustive_threshold, alpha_a=alpha_a,
        solver_config=solver,
    )
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, float)
    points = sweep(pop_r, SweepConfig(grid, spec, direction, solver))
    if calib.u_bar == 0.0:
        admissible = points
    else:
        admissible = [p for p in points if bal.is_admissible(p.u_value, calib)]
    if not admissible:
        raise NoAdmissiblePointError(
            "no admissible frontier point on the reconstruction; refine the grid"
        )
    chooser = max if direction == MAXIMIZE else min
    point = chooser(admissible, key=lambda p: p.mate_value)
    return AttackResult(
        assignment=point.assignment,
        mate_value=mate(pop_r, point.assignment),
        u_value=point.u_value,
        direction=direction,
        point=point,
        calibration=calib,
    )
