#!/usr/bin/env python3
"""
Linear programming module
Bounded-variable simplex for the relaxations solved at every
branch-and-bound node, plus the shared instance JSON format
"""

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Any

import numpy as np

from .errors import NumericalFailure


class Relation(str, Enum):
    LE = "le"
    GE = "ge"
    EQ = "eq"


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpTolerances:
    """Numerical knobs of the simplex"""
    feasibility: float = 1e-7
    integrality: float = 1e-6
    pivot: float = 1e-10
    optimality: float = 1e-9
    max_iterations: int = 50_000
    refactor_every: int = 50
    degenerate_switch: int = 20
    warm_start: bool = True


DEFAULT_TOLERANCES = LpTolerances()


@dataclass(frozen=True)
class Row:
    """One constraint: sum(value * x[col]) rel rhs"""
    coeffs: Tuple[Tuple[int, float], ...]
    rel: Relation
    rhs: float


@dataclass(frozen=True)
class DenseRows:
    """Dense view of the constraint rows, shared by programs that only differ in bounds"""
    matrix: np.ndarray
    rhs: np.ndarray
    rel: Tuple[Relation, ...]


@dataclass(frozen=True)
class LinearProgram:
    """
    min objective @ x  s.t.  rows, var_lower <= x <= var_upper

    Integrality is carried as flags only; the simplex ignores them.
    """
    num_vars: int
    objective: Tuple[float, ...]
    rows: Tuple[Row, ...]
    var_lower: Tuple[float, ...]
    var_upper: Tuple[float, ...]
    is_integer: Tuple[bool, ...]

    def __post_init__(self):
        n = self.num_vars
        if len(self.objective) != n:
            raise ValueError(f"objective has {len(self.objective)} entries, expected {n}")
        if len(self.var_lower) != n or len(self.var_upper) != n or len(self.is_integer) != n:
            raise ValueError("bound and integrality vectors must have num_vars entries")
        for i, row in enumerate(self.rows):
            for col, _ in row.coeffs:
                if not 0 <= col < n:
                    raise ValueError(f"row {i} references column {col} outside [0, {n})")

    @classmethod
    def build(cls, objective: Sequence[float], rows: Sequence[Any] = (),
              lower: Optional[Sequence[Optional[float]]] = None,
              upper: Optional[Sequence[Optional[float]]] = None,
              integer: Optional[Sequence[bool]] = None) -> "LinearProgram":
        """
        Convenience constructor from plain lists.

        Rows may be Row objects or (coeffs, rel, rhs) tuples; None bounds mean infinite.
        Default bounds are x >= 0.
        """
        n = len(objective)
        lower = [0.0] * n if lower is None else lower
        upper = [None] * n if upper is None else upper
        integer = [False] * n if integer is None else integer
        built_rows = []
        for row in rows:
            if isinstance(row, Row):
                built_rows.append(row)
            else:
                coeffs, rel, rhs = row
                built_rows.append(Row(
                    coeffs=tuple((int(c), float(v)) for c, v in coeffs),
                    rel=Relation(rel),
                    rhs=float(rhs),
                ))
        return cls(
            num_vars=n,
            objective=tuple(float(c) for c in objective),
            rows=tuple(built_rows),
            var_lower=tuple(-math.inf if v is None else float(v) for v in lower),
            var_upper=tuple(math.inf if v is None else float(v) for v in upper),
            is_integer=tuple(bool(f) for f in integer),
        )

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def num_integer(self) -> int:
        return sum(self.is_integer)

    @cached_property
    def dense(self) -> DenseRows:
        matrix = np.zeros((self.num_rows, self.num_vars))
        for i, row in enumerate(self.rows):
            for col, value in row.coeffs:
                matrix[i, col] += value
        rhs = np.array([row.rhs for row in self.rows], dtype=float)
        return DenseRows(matrix=matrix, rhs=rhs, rel=tuple(row.rel for row in self.rows))

    @cached_property
    def objective_array(self) -> np.ndarray:
        return np.asarray(self.objective, dtype=float)

    @cached_property
    def integer_mask(self) -> np.ndarray:
        return np.asarray(self.is_integer, dtype=bool)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective_array @ np.asarray(x, dtype=float))


def with_bound(lp: LinearProgram, var: int, side: str, value: float) -> LinearProgram:
    """
    Return a copy of lp with one bound tightened.

    side is "upper" or "lower"; the new bound is min/max with the existing one.
    Crossing bounds are allowed and make the program infeasible.
    """
    if not 0 <= var < lp.num_vars:
        raise IndexError(f"variable {var} out of range")
    if side == "upper":
        upper = list(lp.var_upper)
        upper[var] = min(upper[var], float(value))
        tightened = replace(lp, var_upper=tuple(upper))
    elif side == "lower":
        lower = list(lp.var_lower)
        lower[var] = max(lower[var], float(value))
        tightened = replace(lp, var_lower=tuple(lower))
    else:
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")

    # rows are shared, so is their dense form
    for name in ("dense", "objective_array", "integer_mask"):
        if name in lp.__dict__:
            tightened.__dict__[name] = lp.__dict__[name]
    return tightened


# =============================================================================
# OUTCOMES
# =============================================================================

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3


@dataclass(frozen=True)
class Basis:
    """Basic columns and nonbasic statuses over structural + slack columns"""
    basic: Tuple[int, ...]
    status: Tuple[int, ...]


@dataclass
class LpOutcome:
    status: LpStatus
    solution: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    iterations: int = 0
    basis: Optional[Basis] = field(default=None, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


class _Trouble(Exception):
    """Internal signal: singular basis, stalled pivoting or a failed residual check"""


# =============================================================================
# SIMPLEX CORE
# =============================================================================

class _Simplex:
    """Dense bounded-variable simplex over A x = b with lower <= x <= upper"""

    def __init__(self, A: np.ndarray, b: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 tol: LpTolerances, bland: bool = False):
        self.A = A
        self.b = b
        self.lower = lower
        self.upper = upper
        self.tol = tol
        self.m, self.N = A.shape
        self.x = np.zeros(self.N)
        self.status = np.full(self.N, AT_LOWER, dtype=np.int8)
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.B_inv = np.eye(self.m)
        self.cost = np.zeros(self.N)
        self.iterations = 0
        self.force_bland = bland
        self._pivots = 0

    # -- linear algebra ------------------------------------------------------

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as e:
            raise _Trouble(f"singular basis: {e}")
        if not np.all(np.isfinite(B_inv)) or np.abs(B_inv @ B - np.eye(self.m)).max() > 1e-6:
            raise _Trouble("ill-conditioned basis")
        self.B_inv = B_inv
        self.recompute_basic()

    def recompute_basic(self):
        nonbasic = self.status != BASIC
        residual = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.B_inv @ residual

    def reduced_costs(self) -> np.ndarray:
        y = self.cost[self.basis] @ self.B_inv
        d = self.cost - y @ self.A
        d[self.basis] = 0.0
        return d

    def _pivot(self, row: int, entering: int, w: np.ndarray):
        piv = w[row]
        pivot_row = self.B_inv[row] / piv
        self.B_inv -= np.outer(w, pivot_row)
        self.B_inv[row] = pivot_row
        self.basis[row] = entering
        self.status[entering] = BASIC
        self._pivots += 1
        if self._pivots % self.tol.refactor_every == 0:
            self.refactor()

    def _tick(self):
        self.iterations += 1
        if self.iterations > self.tol.max_iterations:
            raise _Trouble("iteration limit reached")

    # -- primal simplex ------------------------------------------------------

    def _price(self, d: np.ndarray, bland: bool) -> Tuple[int, int]:
        opt = self.tol.optimality
        movable = self.upper > self.lower
        can_rise = ((self.status == AT_LOWER) & movable) | (self.status == FREE)
        can_fall = ((self.status == AT_UPPER) & movable) | (self.status == FREE)
        rise = can_rise & (d < -opt)
        fall = can_fall & (d > opt)
        eligible = rise | fall
        if not eligible.any():
            return -1, 0
        if bland:
            j = int(np.flatnonzero(eligible)[0])
        else:
            j = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
        return j, (1 if rise[j] else -1)

    def primal(self) -> LpStatus:
        bland = self.force_bland
        degenerate_run = 0
        while True:
            d = self.reduced_costs()
            j, direction = self._price(d, bland)
            if j < 0:
                return LpStatus.OPTIMAL
            self._tick()

            w = self.B_inv @ self.A[:, j]
            rate = -direction * w
            xb = self.x[self.basis]
            lb = self.lower[self.basis]
            ub = self.upper[self.basis]
            ratios = np.full(self.m, math.inf)
            falling = rate < -self.tol.pivot
            rising = rate > self.tol.pivot
            ratios[falling] = (xb[falling] - lb[falling]) / -rate[falling]
            ratios[rising] = (ub[rising] - xb[rising]) / rate[rising]
            ratios = np.maximum(ratios, 0.0)

            own_range = self.upper[j] - self.lower[j]
            min_ratio = ratios.min() if self.m else math.inf
            if not math.isfinite(min_ratio) and not math.isfinite(own_range):
                return LpStatus.UNBOUNDED

            step = min(min_ratio, own_range)
            self.x[j] += direction * step
            self.x[self.basis] += rate * step

            if own_range <= min_ratio:
                # bound flip, basis unchanged
                if direction > 0:
                    self.status[j], self.x[j] = AT_UPPER, self.upper[j]
                else:
                    self.status[j], self.x[j] = AT_LOWER, self.lower[j]
            else:
                ties = np.flatnonzero(ratios <= min_ratio + 1e-12)
                row = int(ties[np.argmin(self.basis[ties])])
                leaving = int(self.basis[row])
                if rate[row] > 0:
                    self.status[leaving], self.x[leaving] = AT_UPPER, self.upper[leaving]
                else:
                    self.status[leaving], self.x[leaving] = AT_LOWER, self.lower[leaving]
                self._pivot(row, j, w)

            degenerate_run = degenerate_run + 1 if step <= 1e-12 else 0
            if degenerate_run > self.tol.degenerate_switch:
                bland = True

    # -- dual simplex (warm start) ---------------------------------------------

    def dual_feasible(self) -> bool:
        d = self.reduced_costs()
        opt = self.tol.optimality * 10
        movable = self.upper > self.lower
        bad_low = (self.status == AT_LOWER) & movable & (d < -opt)
        bad_up = (self.status == AT_UPPER) & movable & (d > opt)
        bad_free = (self.status == FREE) & (np.abs(d) > opt)
        return not (bad_low.any() or bad_up.any() or bad_free.any())

    def dual(self) -> LpStatus:
        feas = self.tol.feasibility
        piv = self.tol.pivot
        bland = self.force_bland
        degenerate_run = 0
        while True:
            xb = self.x[self.basis]
            below = self.lower[self.basis] - xb
            above = xb - self.upper[self.basis]
            infeas = np.maximum(below, above)
            rows = np.flatnonzero(infeas > feas)
            if rows.size == 0:
                return LpStatus.OPTIMAL
            self._tick()

            if bland:
                row = int(rows[np.argmin(self.basis[rows])])
            else:
                row = int(rows[np.argmax(infeas[rows])])
            leaving = int(self.basis[row])
            to_lower = below[row] > feas

            alpha = self.B_inv[row] @ self.A
            d = self.reduced_costs()
            movable = (self.upper > self.lower) | (self.status == FREE)
            from_lower = np.isin(self.status, (AT_LOWER, FREE)) & movable
            from_upper = np.isin(self.status, (AT_UPPER, FREE)) & movable
            if to_lower:
                eligible = (from_lower & (alpha < -piv)) | (from_upper & (alpha > piv))
            else:
                eligible = (from_lower & (alpha > piv)) | (from_upper & (alpha < -piv))
            eligible &= self.status != BASIC
            if not eligible.any():
                return LpStatus.INFEASIBLE

            candidates = np.flatnonzero(eligible)
            ratios = np.abs(d[candidates]) / np.abs(alpha[candidates])
            best = ratios.min()
            entering = int(candidates[np.flatnonzero(ratios <= best + 1e-12)[0]])

            w = self.B_inv @ self.A[:, entering]
            if abs(w[row]) <= piv:
                raise _Trouble("vanishing dual pivot")
            if to_lower:
                self.status[leaving], self.x[leaving] = AT_LOWER, self.lower[leaving]
            else:
                self.status[leaving], self.x[leaving] = AT_UPPER, self.upper[leaving]
            self._pivot(row, entering, w)
            self.recompute_basic()

            degenerate_run = degenerate_run + 1 if best <= 1e-12 else 0
            if degenerate_run > self.tol.degenerate_switch:
                bland = True


# =============================================================================
# STANDARD FORM
# =============================================================================

def _standard_form(lp: LinearProgram, perturb: float = 0.0):
    """Structural columns followed by one slack per row: A x + s = b"""
    dense = lp.dense
    m, n = dense.matrix.shape
    A = np.hstack([dense.matrix, np.eye(m)])
    lower = np.concatenate([np.asarray(lp.var_lower, dtype=float), np.zeros(m)])
    upper = np.concatenate([np.asarray(lp.var_upper, dtype=float), np.zeros(m)])
    for i, rel in enumerate(dense.rel):
        if rel == Relation.LE:
            upper[n + i] = math.inf
        elif rel == Relation.GE:
            lower[n + i] = -math.inf
    if perturb > 0:
        lower = np.where(np.isfinite(lower), lower - perturb * (1 + np.abs(lower)), lower)
        upper = np.where(np.isfinite(upper), upper + perturb * (1 + np.abs(upper)), upper)
    return A, dense.rhs.copy(), lower, upper


def _initial_value(lower: float, upper: float) -> Tuple[int, float]:
    if math.isfinite(lower):
        return AT_LOWER, lower
    if math.isfinite(upper):
        return AT_UPPER, upper
    return FREE, 0.0


def _cold_solve(lp: LinearProgram, tol: LpTolerances, perturb: float = 0.0,
                bland: bool = False) -> Tuple[LpStatus, Optional[_Simplex]]:
    """Two-phase simplex from a slack/artificial basis"""
    A, b, lower, upper = _standard_form(lp, perturb)
    m, n_std = A.shape
    n = lp.num_vars

    x0 = np.zeros(n_std)
    status0 = np.zeros(n_std, dtype=np.int8)
    for j in range(n_std):
        status0[j], x0[j] = _initial_value(lower[j], upper[j])
    residual = b - A[:, :n] @ x0[:n]

    basis = np.zeros(m, dtype=np.int64)
    artificial_rows = []
    for i in range(m):
        slack = n + i
        if lower[slack] - tol.feasibility <= residual[i] <= upper[slack] + tol.feasibility:
            basis[i] = slack
            x0[slack] = min(max(residual[i], lower[slack]), upper[slack])
            status0[slack] = BASIC
        else:
            artificial_rows.append(i)

    k = len(artificial_rows)
    if k:
        art = np.zeros((m, k))
        for col, i in enumerate(artificial_rows):
            # slack sits at its bound nearest to zero
            gap = residual[i] - x0[n + i]
            art[i, col] = 1.0 if gap >= 0 else -1.0
        A = np.hstack([A, art])
        lower = np.concatenate([lower, np.zeros(k)])
        upper = np.concatenate([upper, np.full(k, math.inf)])
        x0 = np.concatenate([x0, np.zeros(k)])
        status0 = np.concatenate([status0, np.full(k, BASIC, dtype=np.int8)])
        for col, i in enumerate(artificial_rows):
            basis[i] = n_std + col

    simplex = _Simplex(A, b, lower, upper, tol, bland=bland)
    simplex.x = x0
    simplex.status = status0
    simplex.basis = basis
    simplex.refactor()

    if k:
        simplex.cost = np.concatenate([np.zeros(n_std), np.ones(k)])
        simplex.primal()
        infeasibility = float(simplex.x[n_std:].sum())
        if infeasibility > tol.feasibility * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpStatus.INFEASIBLE, simplex
        # artificials are pinned to zero for phase two
        simplex.upper[n_std:] = 0.0
        nonbasic_art = simplex.status[n_std:] != BASIC
        simplex.x[n_std:][nonbasic_art] = 0.0
        simplex.status[n_std:][nonbasic_art] = AT_LOWER
        simplex.recompute_basic()

    simplex.cost = np.concatenate([lp.objective_array, np.zeros(simplex.N - n)])
    return simplex.primal(), simplex


def _warm_solve(lp: LinearProgram, warm: Basis, tol: LpTolerances) -> Tuple[LpStatus, _Simplex]:
    """Restore primal feasibility from a dual-feasible parent basis"""
    A, b, lower, upper = _standard_form(lp)
    m, n_std = A.shape
    if len(warm.basic) != m or len(warm.status) != n_std:
        raise _Trouble("basis does not match program shape")

    simplex = _Simplex(A, b, lower, upper, tol)
    simplex.cost = np.concatenate([lp.objective_array, np.zeros(m)])
    simplex.status = np.asarray(warm.status, dtype=np.int8).copy()
    simplex.basis = np.asarray(warm.basic, dtype=np.int64).copy()
    for j in np.flatnonzero(simplex.status != BASIC):
        if simplex.status[j] == AT_LOWER:
            simplex.x[j] = lower[j]
        elif simplex.status[j] == AT_UPPER:
            simplex.x[j] = upper[j]
        elif math.isfinite(lower[j]) or math.isfinite(upper[j]):
            raise _Trouble("free status on a bounded column")
        if not math.isfinite(simplex.x[j]):
            raise _Trouble("warm status points at an infinite bound")
    simplex.refactor()
    if not simplex.dual_feasible():
        raise _Trouble("warm basis is not dual feasible")
    if simplex.dual() == LpStatus.INFEASIBLE:
        return LpStatus.INFEASIBLE, simplex
    return simplex.primal(), simplex


def _closed_form(lp: LinearProgram) -> LpOutcome:
    """A program without rows decomposes per variable"""
    x = np.zeros(lp.num_vars)
    for j, c in enumerate(lp.objective):
        lo, up = lp.var_lower[j], lp.var_upper[j]
        if c > 0:
            if not math.isfinite(lo):
                return LpOutcome(LpStatus.UNBOUNDED)
            x[j] = lo
        elif c < 0:
            if not math.isfinite(up):
                return LpOutcome(LpStatus.UNBOUNDED)
            x[j] = up
        else:
            x[j] = _initial_value(lo, up)[1]
    return LpOutcome(LpStatus.OPTIMAL, solution=x, objective_value=lp.objective_value(x))


def _finish(lp: LinearProgram, status: LpStatus, simplex: _Simplex,
            tol: LpTolerances, iterations: int) -> LpOutcome:
    if status != LpStatus.OPTIMAL:
        return LpOutcome(status, iterations=iterations)

    n, m = lp.num_vars, lp.num_rows
    x = np.clip(simplex.x[:n], np.asarray(lp.var_lower), np.asarray(lp.var_upper))
    dense = lp.dense
    activity = dense.matrix @ x
    scale = 1.0 + np.abs(dense.rhs)
    for i, rel in enumerate(dense.rel):
        excess = activity[i] - dense.rhs[i]
        if rel == Relation.LE:
            violation = excess
        elif rel == Relation.GE:
            violation = -excess
        else:
            violation = abs(excess)
        if violation > 10 * tol.feasibility * scale[i]:
            raise _Trouble(f"row {i} violated by {violation:.3g}")

    basis = None
    if np.all(simplex.basis < n + m):
        basis = Basis(basic=tuple(int(j) for j in simplex.basis),
                      status=tuple(int(s) for s in simplex.status[:n + m]))
    return LpOutcome(LpStatus.OPTIMAL, solution=x, objective_value=lp.objective_value(x),
                     iterations=iterations, basis=basis)


def solve_lp(lp: LinearProgram, warm_start: Optional[Basis] = None,
             tolerances: LpTolerances = DEFAULT_TOLERANCES) -> LpOutcome:
    """
    Solve the LP ignoring integrality flags.

    Tries the warm basis first (dual simplex), then a cold two-phase start,
    then a cold start with slightly relaxed bounds under Bland's rule.

    Raises:
        NumericalFailure: all three attempts lost numerical control
    """
    lower = np.asarray(lp.var_lower, dtype=float)
    upper = np.asarray(lp.var_upper, dtype=float)
    if np.any(lower > upper):
        return LpOutcome(LpStatus.INFEASIBLE)
    if lp.num_rows == 0:
        return _closed_form(lp)

    spent = 0
    if warm_start is not None and tolerances.warm_start:
        simplex = None
        try:
            status, simplex = _warm_solve(lp, warm_start, tolerances)
            return _finish(lp, status, simplex, tolerances, simplex.iterations)
        except _Trouble:
            spent += simplex.iterations if simplex is not None else 0

    attempts = ((0.0, False), (1e-9, True))
    last_error = None
    for perturb, bland in attempts:
        simplex = None
        try:
            status, simplex = _cold_solve(lp, tolerances, perturb=perturb, bland=bland)
            return _finish(lp, status, simplex, tolerances, spent + simplex.iterations)
        except _Trouble as e:
            last_error = e
            spent += simplex.iterations if simplex is not None else 0
    raise NumericalFailure(f"simplex failed after perturbed retry: {last_error}")


# =============================================================================
# INSTANCE JSON
# =============================================================================

def _bound_to_json(value: float) -> Optional[float]:
    return None if math.isinf(value) else value


def program_to_dict(lp: LinearProgram) -> Dict[str, Any]:
    return {
        "num_vars": lp.num_vars,
        "objective": list(lp.objective),
        "rows": [
            {"coeffs": [[col, value] for col, value in row.coeffs],
             "rel": row.rel.value, "rhs": row.rhs}
            for row in lp.rows
        ],
        "lower": [_bound_to_json(v) for v in lp.var_lower],
        "upper": [_bound_to_json(v) for v in lp.var_upper],
        "integer": list(lp.is_integer),
    }


def program_from_dict(data: Dict[str, Any]) -> LinearProgram:
    n = int(data["num_vars"])
    lower = [-math.inf if v is None else float(v) for v in data.get("lower", [0.0] * n)]
    upper = [math.inf if v is None else float(v) for v in data.get("upper", [None] * n)]
    return LinearProgram(
        num_vars=n,
        objective=tuple(float(c) for c in data["objective"]),
        rows=tuple(
            Row(coeffs=tuple((int(c), float(v)) for c, v in row["coeffs"]),
                rel=Relation(row["rel"]), rhs=float(row["rhs"]))
            for row in data.get("rows", [])
        ),
        var_lower=tuple(lower),
        var_upper=tuple(upper),
        is_integer=tuple(bool(f) for f in data.get("integer", [False] * n)),
    )


def save_program(lp: LinearProgram, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(program_to_dict(lp), f)


def load_program(path) -> LinearProgram:
    with open(path, 'r', encoding='utf-8') as f:
        return program_from_dict(json.load(f))
