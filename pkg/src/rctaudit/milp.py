"""Mixed-integer linear programs and an exact in-house solver.

The solver is a best-first branch-and-bound over a dense two-phase simplex.
The simplex handles variable bounds natively (nonbasic variables sit at
either bound), which keeps the basis as small as the structural constraint
count; that is what makes desk-scale adversarial-assignment models fast.

Models built by the assignment-search module carry a `meta` block describing
their combinatorial structure (binary assignment vector plus auxiliary
variables that linearise an absolute-value penalty). `enumerate_solve`, the
swap-search incumbent heuristic, and the exact objective recomputation all
work off that block, so the exhaustive oracle and the branch-and-bound path
evaluate candidate assignments with identical arithmetic.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError, SizeExceededError, UnboundedModelError
from .rng import substream

TIE_TOL = 1e-9  # objective window kept open during search
_LEX_TOL = 1e-11  # exact-tie window for lexicographic selection
_LEX_POLISH_LIMIT = 64  # always polish ties up to this many binaries
_DIVE_BUDGET = 400  # node cap per lexicographic region probe


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(frozen=True)
class MilpModel:
    """min c.x subject to A_eq x = b_eq, A_le x <= b_le, lb <= x <= ub."""

    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_le: np.ndarray
    b_le: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        n = c.shape[0]
        a_eq = np.asarray(self.a_eq, dtype=float).reshape(-1, n)
        a_le = np.asarray(self.a_le, dtype=float).reshape(-1, n)
        b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        b_le = np.asarray(self.b_le, dtype=float).reshape(-1)
        lb = np.asarray(self.lb, dtype=float).reshape(-1)
        ub = np.asarray(self.ub, dtype=float).reshape(-1)
        is_binary = np.asarray(self.is_binary, dtype=bool).reshape(-1)
        for name, arr in (("c", c), ("a_eq", a_eq), ("a_le", a_le), ("b_eq", b_eq), ("b_le", b_le)):
            if not np.isfinite(arr).all():
                raise InputError(f"{name} must be finite")
        if a_eq.shape[0] != b_eq.shape[0] or a_le.shape[0] != b_le.shape[0]:
            raise InputError("constraint matrices and right-hand sides disagree")
        if lb.shape != (n,) or ub.shape != (n,) or is_binary.shape != (n,):
            raise InputError("bounds and integrality mask must cover every variable")
        if not np.isfinite(lb).all():
            raise InputError("lower bounds must be finite")
        if (ub < lb).any():
            raise InputError("upper bounds must dominate lower bounds")
        if is_binary.any():
            if (lb[is_binary] != 0).any() or (ub[is_binary] != 1).any():
                raise InputError("binary variables must have bounds [0, 1]")
        for name, arr in (
            ("c", c), ("a_eq", a_eq), ("b_eq", b_eq), ("a_le", a_le),
            ("b_le", b_le), ("lb", lb), ("ub", ub), ("is_binary", is_binary),
        ):
            object.__setattr__(self, name, arr)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class MilpSolution:
    x: np.ndarray | None
    objective: float
    status: Status
    nodes_explored: int = 0
    gap: float = 0.0


@dataclass(frozen=True)
class SolverConfig:
    integrality_tol: float = 1e-6
    lp_tol: float = 1e-9
    node_budget: int | None = None
    time_budget: float | None = None
    branching: str = "most-fractional"  # or "pseudo-cost"
    incumbent_heuristic: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.integrality_tol <= 0 or self.lp_tol <= 0:
            raise InputError("tolerances must be positive")
        if self.branching not in ("most-fractional", "pseudo-cost"):
            raise InputError(f"unknown branching rule {self.branching!r}")


# ---------------------------------------------------------------------------
# simplex core


class _Unbounded(Exception):
    pass


class _Infeasible(Exception):
    pass


def _simplex_min(c, A, b, lb, ub, lp_tol):
    """Two-phase bounded-variable simplex for min c.x s.t. A x = b, lb<=x<=ub.

    Returns (x, objective). Nonbasic variables rest at a bound; entering uses
    steepest reduced cost and falls back to Bland's rule after a run of
    degenerate steps.
    """
    m, n = A.shape
    if m == 0:
        x = np.where(c >= 0, lb, ub)
        if not np.isfinite(x).all():
            raise _Unbounded
        return x, float(c @ x)

    # phase 1: artificial columns carrying the initial residual
    x0 = lb.copy()
    resid = b - A @ x0
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    A1 = np.hstack([A, np.diag(art_sign)])
    lb1 = np.concatenate([lb, np.zeros(m)])
    ub1 = np.concatenate([ub, np.full(m, np.inf)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    at_upper = np.zeros(n + m, dtype=bool)

    obj1 = _simplex_iterate(c1, A1, b, lb1, ub1, basis, at_upper, lp_tol)
    if obj1 > 1e-7 * (1.0 + np.abs(b).max()):
        raise _Infeasible

    # phase 2: pin artificials at zero and restore the true objective
    lb1[n:] = 0.0
    ub1[n:] = 0.0
    c2 = np.concatenate([c, np.zeros(m)])
    _simplex_iterate(c2, A1, b, lb1, ub1, basis, at_upper, lp_tol)

    x_full = _current_point(A1, b, lb1, ub1, basis, at_upper)
    x = x_full[:n]
    return x, float(c @ x)


def _current_point(A, b, lb, ub, basis, at_upper):
    n_total = A.shape[1]
    x = np.where(at_upper & np.isfinite(ub), ub, lb)
    nonbasic = np.ones(n_total, dtype=bool)
    nonbasic[basis] = False
    rhs = b - A[:, nonbasic] @ x[nonbasic]
    B = A[:, basis]
    try:
        xb = np.linalg.solve(B, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("basis matrix became singular") from exc
    x[basis] = xb
    return x


def _simplex_iterate(c, A, b, lb, ub, basis, at_upper, lp_tol):
    """Run simplex to optimality in place; returns the final objective."""
    m, n_total = A.shape
    pivot_tol = max(lp_tol, 1e-11)
    max_iter = 200 * (m + n_total) + 2000
    bland = False
    degen_run = 0

    for _ in range(max_iter):
        x = _current_point(A, b, lb, ub, basis, at_upper)
        B = A[:, basis]
        try:
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError as exc:
            raise NumericalError("basis matrix became singular") from exc
        d = c - A.T @ y

        movable = ub > lb
        in_basis = np.zeros(n_total, dtype=bool)
        in_basis[basis] = True
        from_lower = ~in_basis & movable & ~at_upper & (d < -1e-9)
        from_upper = ~in_basis & movable & at_upper & (d > 1e-9)
        candidates = np.nonzero(from_lower | from_upper)[0]
        if candidates.size == 0:
            return float(c @ x)

        if bland:
            order = candidates  # lowest index first
        else:
            order = candidates[np.argsort(-np.abs(d[candidates]), kind="stable")]

        pivoted = False
        for j in order:
            direction = -1.0 if at_upper[j] else 1.0
            try:
                w = np.linalg.solve(B, A[:, j])
            except np.linalg.LinAlgError as exc:
                raise NumericalError("basis matrix became singular") from exc

            t_best = ub[j] - lb[j]  # bound-flip distance, may be inf
            leave_pos = -1
            leave_at_upper = False
            rate = -direction * w  # basic-value change per unit step
            for i in range(m):
                wi = rate[i]
                k = basis[i]
                if wi < -pivot_tol:  # basic value decreasing
                    t_i = (x[k] - lb[k]) / (-wi)
                    hits_upper = False
                elif wi > pivot_tol:  # basic value increasing
                    if not math.isfinite(ub[k]):
                        continue
                    t_i = (ub[k] - x[k]) / wi
                    hits_upper = True
                else:
                    continue
                t_i = max(t_i, 0.0)
                if t_i < t_best - 1e-12 or (
                    t_i <= t_best + 1e-12
                    and leave_pos >= 0
                    and _prefer_leaving(bland, basis, rate, i, leave_pos)
                ):
                    t_best = t_i
                    leave_pos = i
                    leave_at_upper = hits_upper
            if not math.isfinite(t_best):
                if np.abs(w).max() <= pivot_tol:
                    continue  # column numerically void; try the next candidate
                raise _Unbounded
            if leave_pos < 0:
                # pure bound flip
                at_upper[j] = not at_upper[j]
            else:
                k_out = basis[leave_pos]
                basis[leave_pos] = j
                at_upper[j] = False
                at_upper[k_out] = leave_at_upper
            pivoted = True
            if t_best <= 1e-12:
                degen_run += 1
                if degen_run > 40:
                    bland = True
            else:
                degen_run = 0
                bland = False
            break
        if not pivoted:
            raise NumericalError("pivot magnitude below tolerance persists")
    raise NumericalError("simplex iteration limit reached")


def _prefer_leaving(bland, basis, rate, i, current):
    if bland:
        return basis[i] < basis[current]
    gain = abs(rate[i]) - abs(rate[current])
    if abs(gain) > 1e-12:
        return gain > 0
    return basis[i] < basis[current]


# ---------------------------------------------------------------------------
# public LP interface


def _standard_arrays(model: MilpModel):
    """Stack equality and slack-extended inequality rows into A x = b."""
    n = model.n_vars
    n_le = model.a_le.shape[0]
    A = np.vstack([
        np.hstack([model.a_eq, np.zeros((model.a_eq.shape[0], n_le))]),
        np.hstack([model.a_le, np.eye(n_le)]),
    ])
    b = np.concatenate([model.b_eq, model.b_le])
    lb = np.concatenate([model.lb, np.zeros(n_le)])
    ub = np.concatenate([model.ub, np.full(n_le, np.inf)])
    return A, b, lb, ub


def lp_solve(model: MilpModel, config: SolverConfig | None = None) -> MilpSolution:
    """Solve the continuous relaxation to an optimal basic solution."""
    config = config or SolverConfig()
    A, b, lb, ub = _standard_arrays(model)
    c = np.concatenate([model.c, np.zeros(A.shape[1] - model.n_vars)])
    try:
        x, obj = _simplex_min(c, A, b, lb, ub, config.lp_tol)
    except _Infeasible:
        return MilpSolution(None, math.inf, Status.INFEASIBLE)
    except _Unbounded as exc:
        raise UnboundedModelError("relaxation is unbounded below") from exc
    return MilpSolution(x[: model.n_vars], obj, Status.OPTIMAL)


def _bounded_lp(model: MilpModel, lb, ub, lp_tol):
    """Relaxation value under node bounds; returns (x, obj) or None."""
    A, b, lb_all, ub_all = _standard_arrays(model)
    lb_all = lb_all.copy()
    ub_all = ub_all.copy()
    lb_all[: model.n_vars] = lb
    ub_all[: model.n_vars] = ub
    c = np.concatenate([model.c, np.zeros(A.shape[1] - model.n_vars)])
    try:
        x, obj = _simplex_min(c, A, b, lb_all, ub_all, lp_tol)
    except _Infeasible:
        return None
    except _Unbounded as exc:
        raise UnboundedModelError("relaxation is unbounded below") from exc
    return x[: model.n_vars], obj


# ---------------------------------------------------------------------------
# structured (assignment-search) models


def structured_objective(model: MilpModel, bits: np.ndarray) -> float | np.ndarray:
    """Exact objective of a structured model at given binary assignment(s).

    `bits` may be one assignment (n,) or a batch (draws, n). The arithmetic
    here is the single source of truth shared by the exhaustive oracle and
    the branch-and-bound incumbent path.
    """
    meta = model.meta
    if not meta:
        raise InputError("model carries no assignment-search structure")
    bits = np.asarray(bits, dtype=float)
    signs = 2.0 * bits - 1.0
    resid = signs @ meta["R"].T  # (..., rows)
    if meta["penalty"] == "max":
        pen = np.abs(resid).max(axis=-1)
    else:
        pen = np.abs(resid) @ meta["row_weights"]
    return -meta["lam_signed"] * (bits @ meta["w"]) + pen


def structured_full_x(model: MilpModel, bits: np.ndarray) -> np.ndarray:
    """Rebuild the full variable vector (assignment plus implied auxiliaries)."""
    meta = model.meta
    if not meta:
        raise InputError("model carries no assignment-search structure")
    bits = np.asarray(bits, dtype=float)
    resid = meta["R"] @ (2.0 * bits - 1.0)
    t_pos = np.maximum(resid, 0.0)
    t_neg = np.maximum(-resid, 0.0)
    parts = [bits, t_pos, t_neg]
    if meta["penalty"] == "max":
        parts.append(np.array([np.abs(resid).max() if resid.size else 0.0]))
    return np.concatenate(parts)


def _heuristic_incumbent(model: MilpModel, config: SolverConfig):
    """Swap-search over equal-split assignments; returns (bits, objective)."""
    meta = model.meta
    n, k = meta["n"], meta["k"]
    w_eff = meta["lam_signed"] * meta["w"]

    starts = []
    top = np.argsort(-w_eff, kind="stable")[:k]
    starts.append(top)
    rng = substream(config.seed, 900)
    for _ in range(2):
        starts.append(rng.permutation(n)[:k])

    best_bits, best_obj = None, math.inf
    for chosen in starts:
        bits = np.zeros(n, dtype=np.int8)
        bits[np.asarray(chosen, dtype=int)] = 1
        bits, obj = _swap_descent(model, bits)
        if obj < best_obj - _LEX_TOL or (
            obj <= best_obj + _LEX_TOL
            and (best_bits is None or tuple(bits) < tuple(best_bits))
        ):
            best_bits, best_obj = bits, obj
    return best_bits, best_obj


def _swap_descent(model: MilpModel, bits: np.ndarray):
    """Best-improvement pairwise swaps until locally optimal."""
    meta = model.meta
    R, w = meta["R"], meta["w"]
    lam_signed = meta["lam_signed"]
    use_max = meta["penalty"] == "max"
    weights = meta.get("row_weights")

    bits = bits.copy()
    for _ in range(5000):
        treated = np.nonzero(bits == 1)[0]
        control = np.nonzero(bits == 0)[0]
        resid = R @ (2.0 * bits - 1.0)
        # residual after swapping treated i with control j: r - 2R_i + 2R_j
        cand = (
            resid[None, None, :]
            - 2.0 * R.T[treated][:, None, :]
            + 2.0 * R.T[control][None, :, :]
        )
        if use_max:
            pen = np.abs(cand).max(axis=-1)
        else:
            pen = np.abs(cand) @ weights
        lam_term = -lam_signed * (
            (bits @ w) - w[treated][:, None] + w[control][None, :]
        )
        objs = lam_term + pen
        cur = structured_objective(model, bits)
        i_flat = int(np.argmin(objs))
        best = objs.flat[i_flat]
        if best >= cur - 1e-12:
            return bits, float(cur)
        i, j = divmod(i_flat, control.size)
        bits[treated[i]] = 0
        bits[control[j]] = 1
    return bits, float(structured_objective(model, bits))


def enumerate_solve(model: MilpModel, max_n: int | None = None,
                    comb_limit: int = 10_000_000) -> MilpSolution:
    """Exact optimum of a structured model by scanning every equal split.

    The reference oracle for the branch-and-bound path. Ties are broken
    toward the lexicographically smallest assignment vector, matching
    `milp_solve`.
    """
    meta = model.meta
    if not meta:
        raise InputError("enumerate_solve needs an assignment-search model")
    n, k = meta["n"], meta["k"]
    if max_n is not None and n > max_n:
        raise SizeExceededError(f"population of {n} exceeds max_n={max_n}")
    count = math.comb(n, k)
    if count > comb_limit:
        raise SizeExceededError(f"{count} equal splits exceed the enumeration limit")

    best_obj = math.inf
    best_bits = None
    evaluated = 0
    combos = itertools.combinations(range(n), k)
    while True:
        chunk = list(itertools.islice(combos, 8192))
        if not chunk:
            break
        batch = np.zeros((len(chunk), n), dtype=np.int8)
        rows = np.repeat(np.arange(len(chunk)), k)
        batch[rows, np.concatenate([np.array(c, dtype=int) for c in chunk])] = 1
        objs = structured_objective(model, batch)
        evaluated += len(chunk)
        lo = float(objs.min())
        if lo > best_obj + _LEX_TOL:
            continue
        for idx in np.nonzero(objs <= min(best_obj, lo) + _LEX_TOL)[0]:
            obj = float(objs[idx])
            bits = batch[idx]
            if obj < best_obj - _LEX_TOL:
                best_obj, best_bits = obj, bits.copy()
            elif obj <= best_obj + _LEX_TOL and tuple(bits) < tuple(best_bits):
                best_bits = bits.copy()
    x = structured_full_x(model, best_bits)
    return MilpSolution(x, best_obj, Status.OPTIMAL, nodes_explored=evaluated)


# ---------------------------------------------------------------------------
# branch and bound


def milp_solve(model: MilpModel, config: SolverConfig | None = None) -> MilpSolution:
    """Certified optimum by best-first branch-and-bound.

    Deterministic for a fixed (model, config): node-selection ties break on
    node id and optimal-assignment ties break toward the lexicographically
    smallest binary vector. Budget exhaustion returns the best incumbent and
    the remaining bound gap instead of raising.
    """
    config = config or SolverConfig()
    binaries = np.nonzero(model.is_binary)[0]
    start = time.monotonic()
    nodes_explored = 0
    pseudo_up = {}
    pseudo_down = {}

    incumbent_bits = None
    incumbent_x = None
    incumbent_obj = math.inf
    tie_seen = False

    def consider(bits, obj, x_full):
        nonlocal incumbent_bits, incumbent_obj, incumbent_x, tie_seen
        if obj < incumbent_obj - _LEX_TOL:
            incumbent_bits, incumbent_obj, incumbent_x = bits, obj, x_full
        elif obj <= incumbent_obj + _LEX_TOL and incumbent_bits is not None:
            tie_seen = True
            if tuple(bits) < tuple(incumbent_bits):
                incumbent_bits, incumbent_obj, incumbent_x = bits, obj, x_full

    if config.incumbent_heuristic and model.meta:
        bits, obj = _heuristic_incumbent(model, config)
        if bits is not None:
            consider(bits, obj, structured_full_x(model, bits))

    root = _bounded_lp(model, model.lb, model.ub, config.lp_tol)
    nodes_explored += 1
    if root is None:
        return MilpSolution(None, math.inf, Status.INFEASIBLE, nodes_explored)
    root_bound = root[1]

    heap = []
    next_id = 0
    heapq.heappush(heap, (root[1], next_id, model.lb.copy(), model.ub.copy(), root[0]))

    status = Status.OPTIMAL
    best_open = math.inf

    while heap:
        bound, _, lb, ub, x = heapq.heappop(heap)
        if bound > incumbent_obj + TIE_TOL:
            break  # best-first: every remaining node is no better
        if _budget_hit(config, nodes_explored, start):
            best_open = bound
            status = Status.BUDGET_EXCEEDED
            break

        xb = x[binaries]
        frac = np.abs(xb - np.round(xb))
        if (frac <= config.integrality_tol).all():
            bits = np.round(xb).astype(np.int8)
            if model.meta:
                obj = float(structured_objective(model, bits))
                consider(bits, obj, structured_full_x(model, bits))
            else:
                consider(bits, float(model.c @ x), x.copy())
            continue

        j = _pick_branch_var(binaries, xb, frac, config, pseudo_up, pseudo_down)
        parent_bound = bound
        for fix_val in (0.0, 1.0):
            child_lb, child_ub = lb.copy(), ub.copy()
            if fix_val == 0.0:
                child_ub[j] = 0.0
            else:
                child_lb[j] = 1.0
            res = _bounded_lp(model, child_lb, child_ub, config.lp_tol)
            nodes_explored += 1
            if res is None:
                continue
            cx, cobj = res
            if cobj < parent_bound - 1e-6 * (1.0 + abs(parent_bound)):
                raise NumericalError("child relaxation fell below its parent bound")
            store = pseudo_down if fix_val == 0.0 else pseudo_up
            move = frac[np.searchsorted(binaries, j)]
            denom = move if fix_val == 0.0 else (1.0 - move)
            if denom > 1e-9:
                hist = store.setdefault(j, [0.0, 0])
                hist[0] += (cobj - parent_bound) / denom
                hist[1] += 1
            if cobj <= incumbent_obj + TIE_TOL:
                next_id += 1
                heapq.heappush(heap, (cobj, next_id, child_lb, child_ub, cx))

    if status is Status.OPTIMAL and incumbent_bits is None:
        return MilpSolution(None, math.inf, Status.INFEASIBLE, nodes_explored)

    if status is Status.BUDGET_EXCEEDED:
        if heap:
            best_open = min(best_open, min(entry[0] for entry in heap))
        gap = max(0.0, incumbent_obj - best_open) if incumbent_bits is not None else math.inf
    else:
        gap = 0.0

    if incumbent_bits is None:
        return MilpSolution(None, math.inf, status, nodes_explored, gap)

    if status is Status.OPTIMAL and (binaries.size <= _LEX_POLISH_LIMIT or tie_seen):
        polished, extra = _lex_polish(model, config, binaries, incumbent_obj, incumbent_bits)
        nodes_explored += extra
        if not np.array_equal(polished, incumbent_bits):
            incumbent_bits = polished
            if model.meta:
                incumbent_obj = float(structured_objective(model, polished))
                incumbent_x = structured_full_x(model, polished)
            else:
                incumbent_x = incumbent_x.copy()
                incumbent_x[binaries] = polished
                incumbent_obj = float(model.c @ incumbent_x)

    if incumbent_obj < root_bound - 1e-6 * (1.0 + abs(root_bound)):
        raise NumericalError("incumbent undercut the root relaxation bound")
    _check_feasible(model, incumbent_x, config)
    return MilpSolution(incumbent_x, incumbent_obj, status, nodes_explored, gap)


def _lex_polish(model, config, binaries, z_star, bits):
    """Reduce a certified optimum to the lexicographically smallest tie.

    A lexicographically smaller tied assignment must agree with the current
    one up to some position p, then carry 0 where the current one carries 1.
    Each such region is probed with a bounded dive for any solution whose
    exact objective stays within the tie window; a hit restarts the scan
    from the improved vector. Probes are capped, so pathological tie farms
    degrade gracefully to the best vector found.
    """
    z_cap = z_star + _LEX_TOL
    nodes = 0
    improved = True
    while improved:
        improved = False
        for p in np.nonzero(bits == 1)[0]:
            lb = model.lb.copy()
            ub = model.ub.copy()
            for q in range(p):
                var = binaries[q]
                lb[var] = ub[var] = float(bits[q])
            ub[binaries[p]] = 0.0
            found, used = _dive_for_tie(model, config, binaries, lb, ub, z_cap)
            nodes += used
            if found is not None:
                bits = found
                improved = True
                break
    return bits, nodes


def _dive_for_tie(model, config, binaries, lb, ub, z_cap):
    """Find any integral point with exact objective within the tie cap."""
    nodes = 0
    res = _bounded_lp(model, lb, ub, config.lp_tol)
    nodes += 1
    if res is None:
        return None, nodes
    heap = [(res[1], 0, lb, ub, res[0])]
    next_id = 0
    while heap and nodes < _DIVE_BUDGET:
        bound, _, lb, ub, x = heapq.heappop(heap)
        if bound > z_cap + 1e-9:
            return None, nodes  # best-first: region provably empty
        xb = x[binaries]
        frac = np.abs(xb - np.round(xb))
        if (frac <= config.integrality_tol).all():
            cand = np.round(xb).astype(np.int8)
            exact = (
                float(structured_objective(model, cand))
                if model.meta
                else float(model.c @ x)
            )
            if exact <= z_cap:
                return cand, nodes
            continue  # node minimum already exceeds the cap
        j = int(binaries[np.argmax(frac)])
        for fix_val in (0.0, 1.0):
            child_lb, child_ub = lb.copy(), ub.copy()
            if fix_val == 0.0:
                child_ub[j] = 0.0
            else:
                child_lb[j] = 1.0
            child = _bounded_lp(model, child_lb, child_ub, config.lp_tol)
            nodes += 1
            if child is not None and child[1] <= z_cap + 1e-9:
                next_id += 1
                heapq.heappush(heap, (child[1], next_id, child_lb, child_ub, child[0]))
    return None, nodes


def _pick_branch_var(binaries, xb, frac, config, pseudo_up, pseudo_down):
    open_mask = frac > config.integrality_tol
    open_vars = binaries[open_mask]
    open_frac = frac[open_mask]
    if config.branching == "pseudo-cost" and pseudo_up and pseudo_down:
        scores = []
        for v, f in zip(open_vars, open_frac):
            up = pseudo_up.get(v)
            down = pseudo_down.get(v)
            up_est = (up[0] / up[1]) * (1.0 - f) if up and up[1] else f
            down_est = (down[0] / down[1]) * f if down and down[1] else f
            scores.append(max(up_est, 1e-9) * max(down_est, 1e-9))
        return int(open_vars[int(np.argmax(scores))])
    # most fractional: distance to the nearest integer
    return int(open_vars[int(np.argmax(open_frac))])


def _budget_hit(config, nodes, start):
    if config.node_budget is not None and nodes >= config.node_budget:
        return True
    if config.time_budget is not None and time.monotonic() - start > config.time_budget:
        return True
    return False


def _check_feasible(model: MilpModel, x, config: SolverConfig):
    tol = max(config.lp_tol, 1e-9)
    eq_resid = model.a_eq @ x - model.b_eq
    if eq_resid.size and np.abs(eq_resid).max() > tol * (1.0 + np.abs(model.b_eq).max()):
        raise NumericalError("returned point violates an equality row")
    le_resid = model.a_le @ x - model.b_le
    if le_resid.size and le_resid.max() > tol * (1.0 + np.abs(model.b_le).max()):
        raise NumericalError("returned point violates an inequality row")
    if (x < model.lb - tol).any() or (x > model.ub + tol).any():
        raise NumericalError("returned point violates a variable bound")
    xb = x[model.is_binary]
    if xb.size and np.abs(xb - np.round(xb)).max() > config.integrality_tol:
        raise NumericalError("returned point violates integrality")


# ---------------------------------------------------------------------------
# text serialization (debug aid for external cross-checks)


def to_lp_text(model: MilpModel) -> str:
    """Serialize to a fixed-format LP-style text file.

    Variables are named x0..x{n-1} in model order. One constraint per line,
    equality rows first (e0, e1, ...) then inequality rows (i0, i1, ...).
    Floats use shortest round-trip formatting.
    """

    def terms(row):
        parts = []
        for j, v in enumerate(row):
            if v != 0.0:
                sign = "- " if v < 0 else ("+ " if parts else "")
                parts.append(f"{sign}{repr(abs(float(v)))} x{j}")
        return " ".join(parts) if parts else "0 x0"

    lines = ["\\ rctaudit model format 1", "Minimize", f" obj: {terms(model.c)}"]
    lines.append("Subject To")
    for i, row in enumerate(model.a_eq):
        lines.append(f" e{i}: {terms(row)} = {repr(float(model.b_eq[i]))}")
    for i, row in enumerate(model.a_le):
        lines.append(f" i{i}: {terms(row)} <= {repr(float(model.b_le[i]))}")
    lines.append("Bounds")
    for j in range(model.n_vars):
        hi = "inf" if math.isinf(model.ub[j]) else repr(float(model.ub[j]))
        lines.append(f" {repr(float(model.lb[j]))} <= x{j} <= {hi}")
    names = [f"x{j}" for j in range(model.n_vars) if model.is_binary[j]]
    if names:
        lines.append("Binaries")
        lines.append(" " + " ".join(names))
    lines.append("End")
    return "\n".join(lines) + "\n"
