"""Sequential biased-coin treatment assignment and its worst-case tooling.

Subjects arrive one at a time; each is hypothetically placed in either
group, the per-category count gaps at the subject's own categories are
summed into a score G for both placements, and a biased coin sends the
subject to the smaller-G group with a configured probability. The score
difference between the two placements equals the difference of the full
count-based balancing score, so the greedy decision is exactly a step of
non-sequential imbalance minimisation; tests exercise that equivalence.

The feasibility search asks the converse question: given a target
assignment, is there an arrival order for which the deterministic limit of
the sequential method reproduces it bit for bit? The search replays the
run's random stream, only ever placing a subject whose target group agrees
with the decision the run would make, and backtracks on dead ends.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .balance import covariate_weights, u_pocock
from .errors import AuditError, InputError
from .rng import substream
from .trial import (
    CATEGORICAL,
    Assignment,
    Covariate,
    CovariateSchema,
    TrialPopulation,
)


@dataclass(frozen=True)
class PocockConfig:
    p0: float = 0.85  # probability of following the smaller-score group
    weights: np.ndarray | None = None
    warmup: int = 2  # initial subjects assigned alternately from a random start
    seed: int = 0
    enforce_equal_split: bool = False

    def __post_init__(self):
        if not 0.5 <= self.p0 <= 1.0:
            raise InputError("p0 must lie in [0.5, 1]")
        if self.warmup < 0:
            raise InputError("warmup cannot be negative")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if (w <= 0).any() or not np.isfinite(w).all():
                raise InputError("weights must be strictly positive and finite")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ArrivalOrder:
    permutation: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=int)
        object.__setattr__(self, "permutation", perm)
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise InputError("arrival order must be a permutation of the subjects")

    @property
    def n(self) -> int:
        return self.permutation.size


class SeqState:
    """Per-category group counts plus the partial assignment behind them."""

    def __init__(self, codes, counts, weights, assignment, n_treat, n_ctrl):
        self.codes = codes  # (N, m) int category codes
        self.counts = counts  # per covariate: (categories, 2) int, columns ctrl/treat
        self.weights = weights
        self.assignment = assignment  # int8, -1 while unassigned
        self.n_treat = n_treat
        self.n_ctrl = n_ctrl

    @classmethod
    def empty(cls, pop: TrialPopulation, weights=None) -> "SeqState":
        _require_categorical(pop)
        codes = pop.x.astype(int)
        counts = [
            np.zeros((cov.categories, 2), dtype=int) for cov in pop.schema.covariates
        ]
        w = covariate_weights(pop, weights)
        return cls(codes, counts, w, np.full(pop.n, -1, dtype=np.int8), 0, 0)

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def is_assigned(self, subject: int) -> bool:
        return self.assignment[subject] >= 0

    def assign(self, subject: int, group: int):
        if self.is_assigned(subject):
            raise InputError(f"subject {subject} is already assigned")
        self.assignment[subject] = group
        for i, cnt in enumerate(self.counts):
            cnt[self.codes[subject, i], group] += 1
        if group == 1:
            self.n_treat += 1
        else:
            self.n_ctrl += 1

    def unassign(self, subject: int):
        group = self.assignment[subject]
        if group < 0:
            raise InputError(f"subject {subject} is not assigned")
        self.assignment[subject] = -1
        for i, cnt in enumerate(self.counts):
            cnt[self.codes[subject, i], group] -= 1
        if group == 1:
            self.n_treat -= 1
        else:
            self.n_ctrl -= 1

    def copy(self) -> "SeqState":
        return SeqState(
            self.codes,
            [c.copy() for c in self.counts],
            self.weights,
            self.assignment.copy(),
            self.n_treat,
            self.n_ctrl,
        )

    def u_value(self) -> float:
        """Weighted count-gap score of the current (possibly partial) state."""
        return float(
            sum(
                w * np.abs(cnt[:, 0] - cnt[:, 1]).sum()
                for w, cnt in zip(self.weights, self.counts)
            )
        )

    def counts_consistent(self) -> bool:
        for i, cnt in enumerate(self.counts):
            expect = np.zeros_like(cnt)
            for s in range(self.n):
                g = self.assignment[s]
                if g >= 0:
                    expect[self.codes[s, i], g] += 1
            if not np.array_equal(expect, cnt):
                return False
        return True


def discretize(pop: TrialPopulation, bins_per_covariate) -> TrialPopulation:
    """Replace continuous covariates by equal-frequency category codes.

    Equal values always share a code, so with heavily tied data the bin
    histogram can deviate from equal frequency; with all-distinct values the
    bins are balanced within one subject. Categorical covariates pass
    through. A covariate with fewer distinct values than requested bins gets
    that many bins, with a warning.
    """
    bins = _bins_vector(pop, bins_per_covariate)
    x = pop.x.copy()
    new_covs = []
    for j, cov in enumerate(pop.schema.covariates):
        if cov.kind == CATEGORICAL:
            new_covs.append(cov)
            continue
        col = pop.x[:, j]
        values, counts = np.unique(col, return_counts=True)
        n_distinct = values.size
        bins_eff = min(int(bins[j]), n_distinct)
        if bins_eff < bins[j]:
            warnings.warn(
                f"covariate {cov.name!r}: only {n_distinct} distinct values; "
                f"using {bins_eff} bins"
            )
        cum_before = np.concatenate([[0], np.cumsum(counts)[:-1]])
        value_code = np.minimum(
            (cum_before * bins_eff) // pop.n, bins_eff - 1
        ).astype(int)
        x[:, j] = value_code[np.searchsorted(values, col)]
        new_covs.append(
            Covariate(cov.name, kind=CATEGORICAL, categories=max(bins_eff, 2))
        )
    return TrialPopulation(CovariateSchema(tuple(new_covs)), x, pop.y0, pop.y1)


def pocock_g(state: SeqState, subject: int, group: int) -> float:
    """Weighted count-gap score at the subject's own categories after a
    hypothetical placement in `group`."""
    if state.is_assigned(subject):
        raise InputError(f"subject {subject} is already assigned")
    total = 0.0
    for i, cnt in enumerate(state.counts):
        cat = state.codes[subject, i]
        ctrl, treat = int(cnt[cat, 0]), int(cnt[cat, 1])
        if group == 1:
            treat += 1
        else:
            ctrl += 1
        total += state.weights[i] * abs(treat - ctrl)
    return total


def pocock_assign(state: SeqState, subject: int, config: PocockConfig,
                  rng: np.random.Generator) -> int:
    """One sequential step: place the subject and return its group.

    Random-stream contract (what replay determinism relies on): a tied score
    consumes one integer draw for the fair coin, then every call consumes
    one uniform draw for the follow-the-smaller-score coin.
    """
    g_ctrl = pocock_g(state, subject, 0)
    g_treat = pocock_g(state, subject, 1)
    if g_treat < g_ctrl:
        preferred = 1
    elif g_ctrl < g_treat:
        preferred = 0
    else:
        preferred = int(rng.integers(0, 2))
    group = preferred if rng.random() < config.p0 else 1 - preferred
    state.assign(subject, group)
    return group


def _forced_group(state: SeqState, config: PocockConfig):
    if not config.enforce_equal_split:
        return None
    k_treat = state.n // 2
    k_ctrl = state.n - k_treat
    if state.n_treat >= k_treat:
        return 0
    if state.n_ctrl >= k_ctrl:
        return 1
    return None


def _warmup_group(step: int, start: int) -> int:
    return start if step % 2 == 0 else 1 - start


def pocock_run(pop: TrialPopulation, order: ArrivalOrder, config: PocockConfig,
               trace: list | None = None) -> Assignment:
    """Run the sequential method over one arrival order.

    The first `warmup` arrivals alternate between the groups from a random
    starting group; the rest follow the biased-coin step. With equal-split
    enforcement on, arrivals after a group fills are forced to the other
    group (a warning flags runs where that constraint bound). Bit-identical
    given equal seeds. When `trace` is a list, a state snapshot is appended
    before any arrival and after every arrival.
    """
    if order.n != pop.n:
        raise InputError("arrival order does not match the population")
    rng = substream(config.seed, 300)
    state = SeqState.empty(pop, config.weights)
    start = int(rng.integers(0, 2))
    forced = 0
    if trace is not None:
        trace.append(state.copy())
    for step, subj in enumerate(order.permutation):
        subj = int(subj)
        group = _forced_group(state, config)
        if group is not None:
            state.assign(subj, group)
            forced += 1
        elif step < config.warmup:
            state.assign(subj, _warmup_group(step, start))
        else:
            pocock_assign(state, subj, config, rng)
        if trace is not None:
            trace.append(state.copy())
    if forced:
        warnings.warn(f"equal-split constraint bound on {forced} arrival(s)")
    return Assignment(state.assignment.copy())


# ---------------------------------------------------------------------------
# feasibility of a target assignment


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self) -> bool:
        self.used += 1
        return self.used > self.limit


def feasibility_search(
    pop: TrialPopulation,
    target: Assignment,
    config: PocockConfig,
    budget: int = 1_000_000,
    seed: int = 0,
) -> ArrivalOrder | None:
    """Search for an arrival order whose deterministic run hits `target`.

    Greedy construction with backtracking: at each step any remaining
    subject whose target group matches what the run would decide (or ties)
    may arrive next; candidates are tried in random order. Returns None
    once `budget` placements have been tried, which is not a proof of
    infeasibility.
    """
    if config.p0 != 1.0:
        raise InputError("feasibility search requires the deterministic limit p0 = 1")
    if target.n != pop.n:
        raise InputError("target does not match the population")
    target.require_equal_split()

    state = SeqState.empty(pop, config.weights)
    run_rng = substream(config.seed, 300)
    start = int(run_rng.integers(0, 2))
    search_rng = substream(seed, 400)
    tracker = _Budget(budget)
    bits = target.bits

    def candidates_at(step):
        remaining = [s for s in range(pop.n) if not state.is_assigned(s)]
        forced = _forced_group(state, config)
        if forced is not None:
            return [s for s in remaining if bits[s] == forced], False
        if step < config.warmup:
            g = _warmup_group(step, start)
            return [s for s in remaining if bits[s] == g], False
        # peek the fair coin this step would use on a tied score
        peek = np.random.Generator(np.random.PCG64())
        peek.bit_generator.state = run_rng.bit_generator.state
        tie_value = int(peek.integers(0, 2))
        chosen = []
        any_tie = False
        for s in remaining:
            g_ctrl = pocock_g(state, s, 0)
            g_treat = pocock_g(state, s, 1)
            if g_treat < g_ctrl:
                decided = 1
            elif g_ctrl < g_treat:
                decided = 0
            else:
                decided = tie_value
                if bits[s] == decided:
                    any_tie = True
            if bits[s] == decided:
                chosen.append(s)
        return chosen, any_tie

    def advance_rng(subject):
        g_ctrl = pocock_g(state, subject, 0)
        g_treat = pocock_g(state, subject, 1)
        if g_ctrl == g_treat:
            run_rng.integers(0, 2)
        run_rng.random()

    def dfs(step):
        if step == pop.n:
            return []
        cands, _ = candidates_at(step)
        if not cands:
            return None
        for s in search_rng.permutation(cands):
            s = int(s)
            if tracker.spend():
                raise _BudgetExhausted
            saved = run_rng.bit_generator.state
            forced = _forced_group(state, config)
            consumed = forced is None and step >= config.warmup
            if consumed:
                advance_rng(s)
            state.assign(s, int(bits[s]))
            rest = dfs(step + 1)
            if rest is not None:
                return [s] + rest
            state.unassign(s)
            run_rng.bit_generator.state = saved
        return None

    try:
        found = dfs(0)
    except _BudgetExhausted:
        return None
    if found is None:
        return None
    order = ArrivalOrder(np.asarray(found, dtype=int))
    replay = pocock_run(pop, order, config)
    if replay != target:
        raise AuditError("internal search inconsistency: replay missed the target")
    return order


class _BudgetExhausted(Exception):
    pass


# ---------------------------------------------------------------------------
# expected imbalance of random completions (trajectory data)


def expected_final_u_mc(
    pop: TrialPopulation,
    partial: SeqState,
    remaining_order,
    draws: int,
    seed: int,
    equal_split: bool = False,
) -> float:
    """Mean final count-gap score when the rest of the cohort is assigned at
    random.

    Fair-coin completion by default; `equal_split` draws completions
    uniformly among those reaching the half-and-half split instead (matching
    the support of the calibration average).
    """
    if draws < 1:
        raise InputError("needs draws >= 1")
    remaining = np.asarray(list(remaining_order), dtype=int)
    assigned = partial.assignment
    if any(assigned[s] >= 0 for s in remaining):
        raise InputError("remaining subjects must be unassigned")
    weights = partial.weights
    totals = []
    for d in range(draws):
        rng = substream(seed, 500, d)
        bits = assigned.copy()
        if equal_split:
            deficit = pop.n // 2 - partial.n_treat
            if deficit < 0 or deficit > remaining.size:
                raise InputError("equal split is unreachable from this partial state")
            chosen = rng.permutation(remaining)[:deficit]
            bits[remaining] = 0
            bits[chosen] = 1
        else:
            bits[remaining] = rng.integers(0, 2, size=remaining.size)
        totals.append(u_pocock(pop, Assignment(bits), weights))
    return float(np.mean(totals))


def expected_u_trajectory(
    pop: TrialPopulation,
    order: ArrivalOrder,
    config: PocockConfig,
    draws: int,
    seed: int,
    equal_split: bool = False,
) -> list[tuple[int, float]]:
    """Expected final imbalance after each arrival of one run.

    Row k is the expectation given the first k arrivals, so row 0 is the
    unconditional average and the last row is the run's exact final score.
    """
    states: list[SeqState] = []
    pocock_run(pop, order, config, trace=states)
    out = []
    for k, st in enumerate(states):
        remaining = order.permutation[k:]
        out.append(
            (k, expected_final_u_mc(pop, st, remaining, draws, seed + k, equal_split))
        )
    return out


def _bins_vector(pop: TrialPopulation, bins_per_covariate) -> np.ndarray:
    m = pop.schema.m
    if np.isscalar(bins_per_covariate):
        bins = np.full(m, int(bins_per_covariate))
    else:
        bins = np.asarray(bins_per_covariate, dtype=int)
        if bins.shape != (m,):
            raise InputError("need one bin count per covariate")
    continuous = ~pop.schema.is_categorical()
    if (bins[continuous] < 2).any():
        raise InputError("every continuous covariate needs at least 2 bins")
    return bins


def _require_categorical(pop: TrialPopulation):
    bad = [c.name for c in pop.schema.covariates if c.kind != CATEGORICAL]
    if bad:
        raise InputError(
            f"covariates {bad} are continuous; discretize them before sequential assignment"
        )
