"""Worst-case treatment-assignment search and the audit indices.

The search scalarizes "large measured effect, small imbalance" into one
mixed-integer linear program per trade-off value and sweeps that value to
trace the worst-case frontier. Auxiliary nonnegative variables linearise the
absolute values in the balancing score; the effect term enters through each
subject's outcome sum, which under a fixed half-and-half split orders
assignments exactly like the measured effect itself (the dropped constant is
the control-outcome total).

On top of the frontier sit the two audit indices: the worst-case deviation
factor (effect range over the admissible set, in units of the random-
assignment spread) and the deviation index of a conducted trial (its
estimated error relative to the worst case at the same balancing score).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import balance as bal
from .errors import AuditError, InputError, NoAdmissiblePointError
from .milp import MilpModel, MilpSolution, SolverConfig, Status, milp_solve
from .rng import derive_seed, substream
from .trial import (
    Assignment,
    SigmaEstimate,
    TrialPopulation,
    ate,
    equal_split_matrix,
    mate,
    mate_many,
    sigma_ate_mc,
)

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


@dataclass(frozen=True)
class SweepConfig:
    """One frontier sweep: trade-off grid, direction, score, solver."""

    lambda_grid: np.ndarray
    balance: bal.BalanceSpec
    direction: str = MAXIMIZE
    solver: SolverConfig = SolverConfig()
    normalize_outcomes: bool = True

    def __post_init__(self):
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.size == 0 or not np.isfinite(grid).all():
            raise InputError("lambda grid must be nonempty and finite")
        if (grid < 0).any() or (np.diff(grid) <= 0).any():
            raise InputError("lambda grid must be nonnegative and strictly ascending")
        object.__setattr__(self, "lambda_grid", grid)
        if self.direction not in (MAXIMIZE, MINIMIZE):
            raise InputError(f"unknown sweep direction {self.direction!r}")


@dataclass(frozen=True)
class FrontierPoint:
    """One point on the worst-case frontier."""

    lam: float
    assignment: Assignment
    mate_value: float
    u_value: float  # recomputed from the assignment, never from auxiliaries
    status: Status
    objective: float
    gap: float = 0.0


@dataclass(frozen=True)
class XiReport:
    """Worst-case deviation factor over the admissible set."""

    xi: float
    mate_max: float
    mate_min: float
    sigma: SigmaEstimate
    alpha_a: float
    calibration: bal.BalanceCalibration
    method: str = "frontier"


@dataclass(frozen=True)
class RhoReport:
    """How close a conducted trial sits to the worst case at its own balance."""

    rho: float
    epsilon_hat: float
    epsilon_max: float
    u_value: float
    contour: tuple[FrontierPoint, ...]
    clamped: bool = False


@dataclass(frozen=True)
class SizeScalingRow:
    size: int
    mean_xi: float
    sd_xi: float
    xis: tuple[float, ...]


def default_lambda_grid(points: int = 40) -> np.ndarray:
    """Zero plus log-spaced trade-off values spanning six decades."""
    return np.concatenate([[0.0], np.logspace(-3.0, 3.0, points)])


# ---------------------------------------------------------------------------
# model builders


def build_smd_milp(
    pop: TrialPopulation,
    lam: float,
    p,
    direction: str = MAXIMIZE,
    scale: float = 1.0,
) -> MilpModel:
    """Assignment-search program for the mean-difference score.

    Expects covariates already standardized when the audit standardizes.
    Variables are the binary assignment, one nonnegative pair per covariate
    splitting the signed mean-gap numerator, and (l-infinity only) the bound
    variable that the objective minimizes instead of the pair sums.
    """
    if p not in (1, math.inf):
        raise InputError("norm order must be 1 or inf")
    r_matrix = pop.x.T.astype(float)  # rows: covariates
    row_weights = np.ones(r_matrix.shape[0])
    kind = "smd_l1" if p == 1 else "smd_linf"
    return _assemble(pop, lam, direction, scale, r_matrix, row_weights,
                     kind=kind, penalty="max" if p == math.inf else "sum")


def build_pocock_milp(
    pop: TrialPopulation,
    lam: float,
    weights=None,
    direction: str = MAXIMIZE,
    scale: float = 1.0,
) -> MilpModel:
    """Assignment-search program for the per-category count score.

    One auxiliary pair per (covariate, category) row of the indicator
    matrix; each pair's objective entries carry that covariate's weight so
    the penalty term reproduces the weighted count score exactly.
    """
    hot = bal.one_hot(pop)
    w_cov = bal.covariate_weights(pop, weights)
    row_weights = w_cov[hot.row_covariate]
    return _assemble(pop, lam, direction, scale, hot.matrix.astype(float),
                     row_weights, kind="pocock", penalty="sum")


def _assemble(pop, lam, direction, scale, r_matrix, row_weights, kind, penalty):
    if lam < 0 or not math.isfinite(lam):
        raise InputError("lambda must be finite and nonnegative")
    if direction not in (MAXIMIZE, MINIMIZE):
        raise InputError(f"unknown direction {direction!r}")
    if scale <= 0:
        raise InputError("outcome scale must be positive")
    n = pop.n
    rows = r_matrix.shape[0]
    lam_signed = lam if direction == MAXIMIZE else -lam
    w = (pop.y1 + pop.y0) / scale

    extra = 1 if penalty == "max" else 0
    n_vars = n + 2 * rows + extra

    c = np.zeros(n_vars)
    c[:n] = -lam_signed * w
    if penalty == "max":
        c[-1] = 1.0
    else:
        c[n : n + rows] = row_weights
        c[n + rows : n + 2 * rows] = row_weights

    # per row: t_plus - t_minus - 2 sum_i A_i R[j, i] = -sum_i R[j, i]
    a_eq = np.zeros((rows + 1, n_vars))
    b_eq = np.zeros(rows + 1)
    a_eq[:rows, :n] = -2.0 * r_matrix
    a_eq[np.arange(rows), n + np.arange(rows)] = 1.0
    a_eq[np.arange(rows), n + rows + np.arange(rows)] = -1.0
    b_eq[:rows] = -r_matrix.sum(axis=1)
    a_eq[rows, :n] = 1.0  # half-and-half split, kept as an explicit row
    b_eq[rows] = n // 2

    if penalty == "max":
        a_le = np.zeros((rows, n_vars))
        a_le[np.arange(rows), n + np.arange(rows)] = 1.0
        a_le[np.arange(rows), n + rows + np.arange(rows)] = 1.0
        a_le[:, -1] = -1.0
        b_le = np.zeros(rows)
    else:
        a_le = np.zeros((0, n_vars))
        b_le = np.zeros(0)

    lb = np.zeros(n_vars)
    ub = np.full(n_vars, np.inf)
    ub[:n] = 1.0
    is_binary = np.zeros(n_vars, dtype=bool)
    is_binary[:n] = True

    meta = {
        "kind": kind,
        "penalty": penalty,
        "w": w,
        "lam": float(lam),
        "lam_signed": float(lam_signed),
        "R": r_matrix,
        "row_weights": row_weights,
        "n": n,
        "k": n // 2,
        "scale": float(scale),
    }
    return MilpModel(c, a_eq, b_eq, a_le, b_le, lb, ub, is_binary, meta=meta)


def build_model(pop: TrialPopulation, spec: bal.BalanceSpec, lam: float,
                direction: str = MAXIMIZE, scale: float = 1.0) -> MilpModel:
    """Dispatch to the right builder for a balance spec."""
    if spec.kind == bal.SMD_L1:
        return build_smd_milp(pop, lam, 1, direction, scale)
    if spec.kind == bal.SMD_LINF:
        return build_smd_milp(pop, lam, math.inf, direction, scale)
    return build_pocock_milp(pop, lam, spec.weights, direction, scale)


def _working_population(pop: TrialPopulation, spec: bal.BalanceSpec) -> TrialPopulation:
    if spec.kind in (bal.SMD_L1, bal.SMD_LINF) and spec.standardize:
        return bal.standardize(pop)
    return pop


def outcome_scale(pop: TrialPopulation) -> float:
    """Internal outcome normalisation for the trade-off grid.

    The whole-cohort deviation of the per-subject outcome sums scales
    linearly under any positive affine outcome map, so frontier assignments
    (and hence both audit indices) are invariant to outcome units.
    """
    s = float(np.std(pop.y1 + pop.y0))
    return s if s > 0 else 1.0


# ---------------------------------------------------------------------------
# sweep and indices


def sweep(pop: TrialPopulation, config: SweepConfig) -> list[FrontierPoint]:
    """Solve one program per grid value and trace the worst-case frontier.

    Measured effect and balancing score of each point are recomputed from
    the returned assignment. Identical assignments found at different
    trade-off values are kept once, at the smallest value. Budget-limited
    points are recorded with their status; the sweep continues.
    """
    working = _working_population(pop, config.balance)
    scale = outcome_scale(pop) if config.normalize_outcomes else 1.0
    points: list[FrontierPoint] = []
    seen: set[str] = set()
    for lam in config.lambda_grid:
        model = build_model(working, config.balance, float(lam), config.direction, scale)
        sol = milp_solve(model, config.solver)
        if sol.x is None:
            warnings.warn(f"no assignment found at lambda={lam!r} (status {sol.status.value})")
            continue
        a = Assignment(np.round(sol.x[: pop.n]).astype(np.int8))
        key = a.to_string()
        if key in seen:
            continue
        seen.add(key)
        points.append(
            FrontierPoint(
                lam=float(lam),
                assignment=a,
                mate_value=mate(pop, a),
                u_value=bal.score(pop, a, config.balance),
                status=sol.status,
                objective=sol.objective,
                gap=sol.gap,
            )
        )
    return points


def minimum_imbalance(pop: TrialPopulation, spec: bal.BalanceSpec,
                      solver_config: SolverConfig | None = None) -> tuple[float, bool]:
    """Best achievable balancing score over equal splits, via the solver.

    Returns (score, certified). `certified` is False when the solve ran out
    of budget, in which case the score is the best incumbent's (an upper
    bound on the true minimum).
    """
    working = _working_population(pop, spec)
    model = build_model(working, spec, 0.0, MAXIMIZE, 1.0)
    sol = milp_solve(model, solver_config or SolverConfig())
    if sol.x is None:
        raise AuditError(f"imbalance minimisation failed with status {sol.status.value}")
    a = Assignment(np.round(sol.x[: pop.n]).astype(np.int8))
    return bal.score(pop, a, spec), sol.status is Status.OPTIMAL


def _admissible_mask(points, calib: bal.BalanceCalibration):
    if calib.u_bar == 0.0:
        # every assignment is identically balanced; admit them all
        return [True] * len(points)
    return [bal.is_admissible(p.u_value, calib) for p in points]


def xi_report(
    points_max: list[FrontierPoint],
    points_min: list[FrontierPoint],
    sigma: SigmaEstimate,
    calibration: bal.BalanceCalibration,
    alpha_a: float | None = None,
) -> XiReport:
    """Worst-case deviation factor from both sweep directions.

    Takes the extreme measured effects over the admissible frontier points
    and normalises their range by twice the random-assignment spread.
    """
    calib = calibration if alpha_a is None else replace(calibration, alpha_a=alpha_a)
    pool = list(points_max) + list(points_min)
    admissible = [p for p, ok in zip(pool, _admissible_mask(pool, calib)) if ok]
    if not admissible:
        raise NoAdmissiblePointError(
            "no frontier point is admissible; refine the trade-off grid"
        )
    mate_max = max(p.mate_value for p in admissible)
    mate_min = min(p.mate_value for p in admissible)
    if sigma.sigma == 0.0:
        warnings.warn("zero effect spread; the deviation factor is undefined")
        xi = math.nan
    else:
        xi = (mate_max - mate_min) / (2.0 * sigma.sigma)
    return XiReport(xi, mate_max, mate_min, sigma, calib.alpha_a, calib)


def xi_enumerated(
    pop: TrialPopulation,
    spec: bal.BalanceSpec,
    alpha_a: float,
    sigma: SigmaEstimate,
) -> XiReport:
    """Exact deviation factor by scanning every equal split (small cohorts).

    The independent oracle for the frontier-based report: exact expected and
    minimum imbalance, exact admissible set, exact effect extremes.
    """
    bits = equal_split_matrix(pop.n)
    scores = bal.score_many(pop, bits, spec)
    u_bar = float(scores.mean())
    u_min = float(scores.min())
    if u_bar == 0.0:
        admissible = np.ones(len(scores), dtype=bool)
    else:
        admissible = (scores - u_min) / u_bar < alpha_a
    mates = mate_many(pop, bits)
    mate_max = float(mates[admissible].max())
    mate_min = float(mates[admissible].min())
    if sigma.sigma == 0.0:
        warnings.warn("zero effect spread; the deviation factor is undefined")
        xi = math.nan
    else:
        xi = (mate_max - mate_min) / (2.0 * sigma.sigma)
    calib = bal.BalanceCalibration(
        kind=spec.kind, u_bar=u_bar, u_min=u_min, alpha_a=alpha_a,
        draws=len(scores), seed=0,
    )
    return XiReport(xi, mate_max, mate_min, sigma, alpha_a, calib, method="enumeration")


def audit_xi(
    pop: TrialPopulation,
    spec: bal.BalanceSpec,
    alpha_a: float = 0.02,
    *,
    lambda_grid: np.ndarray | None = None,
    calib_draws: int = 1000,
    sigma_draws: int = 2000,
    seed: int = 0,
    solver: SolverConfig | None = None,
    exhaustive_threshold: int = 50_000,
    normalize_outcomes: bool = True,
) -> XiReport:
    """Full worst-case audit pipeline: calibrate, sweep both ways, report."""
    solver = solver or SolverConfig(seed=seed)
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, float)
    calib = bal.calibrate(
        pop, spec, calib_draws, derive_seed(seed, 1),
        exhaustive_threshold=exhaustive_threshold, alpha_a=alpha_a,
        solver_config=solver,
    )
    points_max = sweep(pop, SweepConfig(grid, spec, MAXIMIZE, solver, normalize_outcomes))
    points_min = sweep(pop, SweepConfig(grid, spec, MINIMIZE, solver, normalize_outcomes))
    sigma = sigma_ate_mc(pop, sigma_draws, derive_seed(seed, 2))
    return xi_report(points_max, points_min, sigma, calib)


def xi_vs_population_size(
    pop: TrialPopulation,
    spec: bal.BalanceSpec,
    sizes,
    replicates: int,
    alpha_a: float = 0.02,
    seed: int = 0,
    **audit_kwargs,
) -> list[SizeScalingRow]:
    """Deviation factor of random subcohorts across population sizes."""
    rows = []
    for si, size in enumerate(sizes):
        size = int(size)
        if size > pop.n:
            raise InputError(f"subsample size {size} exceeds the population {pop.n}")
        if size % 2 != 0:
            raise InputError("subsample sizes must be even for equal splits")
        xis = []
        for r in range(replicates):
            if size == pop.n:
                sub = pop
            else:
                idx = np.sort(substream(seed, si, r).choice(pop.n, size, replace=False))
                sub = pop.take(idx)
            report = audit_xi(
                sub, spec, alpha_a, seed=derive_seed(seed, si, r), **audit_kwargs
            )
            xis.append(report.xi)
        arr = np.asarray(xis)
        rows.append(SizeScalingRow(size, float(arr.mean()),
                                   float(arr.std(ddof=1)) if len(xis) > 1 else 0.0,
                                   tuple(xis)))
    return rows


# ---------------------------------------------------------------------------
# deviation index of a conducted trial


def _branch_interp(points: list[FrontierPoint], center: float, u: float):
    """Piecewise-linear worst-case |error| along one frontier branch."""
    if not points:
        return None, False
    us = np.array([p.u_value for p in points])
    errs = np.abs(np.array([p.mate_value for p in points]) - center)
    order = np.argsort(us, kind="stable")
    us, errs = us[order], errs[order]
    # collapse duplicate balance values onto the worse error
    keep_u, keep_e = [], []
    for uv, ev in zip(us, errs):
        if keep_u and abs(uv - keep_u[-1]) <= 1e-12:
            keep_e[-1] = max(keep_e[-1], ev)
        else:
            keep_u.append(uv)
            keep_e.append(ev)
    clamped = bool(u < keep_u[0] - 1e-12 or u > keep_u[-1] + 1e-12)
    return float(np.interp(u, keep_u, keep_e)), clamped


def rho_report(
    observed,
    imputer_spec,
    spec: bal.BalanceSpec,
    *,
    lambda_grid: np.ndarray | None = None,
    seed: int = 0,
    solver: SolverConfig | None = None,
    normalize_outcomes: bool = True,
) -> RhoReport:
    """Deviation index of a conducted trial.

    Imputes the unobserved outcomes, estimates the trial's own error on the
    reconstruction, sweeps the reconstruction in both directions, connects
    the frontier into a piecewise-linear contour in (balance, |error|), and
    reads off the worst-case error at the trial's balancing score. A trial
    balance outside the contour range clamps to the nearest endpoint with a
    warning.

    `imputer_spec` may be an imputer specification or an already-built
    reconstruction (for oracle estimators in validation work).
    """
    from .counterfactual import ReconstructedTrial, impute

    if isinstance(imputer_spec, ReconstructedTrial):
        recon = imputer_spec
    else:
        recon = impute(observed, imputer_spec)
    pop_r = recon.population
    deployed = observed.assignment
    center = ate(pop_r)
    epsilon_hat = abs(mate(pop_r, deployed) - center)

    solver = solver or SolverConfig(seed=seed)
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, float)
    points_max = sweep(pop_r, SweepConfig(grid, spec, MAXIMIZE, solver, normalize_outcomes))
    points_min = sweep(pop_r, SweepConfig(grid, spec, MINIMIZE, solver, normalize_outcomes))

    u_trial = bal.score(pop_r, deployed, spec)
    eps_max = None
    clamped = False
    for branch in (points_max, points_min):
        val, clip = _branch_interp(branch, center, u_trial)
        if val is not None:
            eps_max = val if eps_max is None else max(eps_max, val)
            clamped = clamped or clip
    if eps_max is None or eps_max <= 0.0:
        raise AuditError("worst-case error at the trial's balance is not positive")
    if clamped:
        warnings.warn("trial balance lies outside the contour; clamped to the endpoint")

    contour = tuple(sorted(points_max + points_min, key=lambda p: (p.u_value, p.lam)))
    return RhoReport(
        rho=epsilon_hat / eps_max,
        epsilon_hat=epsilon_hat,
        epsilon_max=eps_max,
        u_value=u_trial,
        contour=contour,
        clamped=clamped,
    )
