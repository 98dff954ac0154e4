#!/usr/bin/env python3
"""
Branch-and-bound engine
Relax, branch, bound, keep the incumbent and the optimality gap, and
leave the choice of the next open leaf to a pluggable selector
"""

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, NotACandidate, NumericalFailure, UnboundedRelaxation
from .features import LpSummary, estimate as node_estimate, summarize_solution
from .lp_solver import (
    DEFAULT_TOLERANCES, Basis, LinearProgram, LpStatus, LpTolerances, solve_lp, with_bound,
)
from .performance_logger import log_debug, log_warn, update_stats


class NodeStatus(str, Enum):
    OPEN = "Open"
    BRANCHED = "Branched"
    PRUNED = "PrunedByBound"
    INFEASIBLE = "Infeasible"
    INTEGRAL = "Integral"
    DISCARDED = "Discarded"


class Termination(str, Enum):
    OPTIMAL = "Optimal"
    NODE_BUDGET = "NodeBudget"
    TIME_BUDGET = "TimeBudget"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class BoundChange:
    var: int
    side: str
    value: float


@dataclass
class BnbNode:
    """One subproblem; open leaves carry their parent's LP data until processed"""
    id: int
    parent: Optional[int]
    depth: int
    local_bounds: Tuple[BoundChange, ...]
    program: LinearProgram = field(repr=False)
    lp_bound: float = -math.inf
    lp_iterations: int = 0
    estimate: float = -math.inf
    status: NodeStatus = NodeStatus.OPEN
    summary: Optional[LpSummary] = field(default=None, repr=False)
    basis: Optional[Basis] = field(default=None, repr=False)


def compute_gap(primal: float, dual: float) -> float:
    """Relative gap (primal - dual) / max(|primal|, |dual|), +inf without an incumbent"""
    if math.isinf(primal) or math.isinf(dual):
        return math.inf
    if primal == dual:
        return 0.0
    return max(0.0, (primal - dual) / max(abs(primal), abs(dual), 1e-9))


@dataclass
class BnbTree:
    program: LinearProgram = field(repr=False)
    tolerances: LpTolerances = DEFAULT_TOLERANCES
    nodes: Dict[int, BnbNode] = field(default_factory=dict)
    root: int = 0
    children: Dict[int, Tuple[Optional[int], Optional[int]]] = field(default_factory=dict)
    # dict keys as an insertion-ordered set
    open_leaves: Dict[int, None] = field(default_factory=dict)
    incumbent: Optional[np.ndarray] = None
    incumbent_objective: Optional[float] = None
    primal_bound: float = math.inf
    dual_bound: float = -math.inf
    last_processed: Optional[int] = None
    numerical_failures: int = 0
    lp_iterations: int = 0

    @classmethod
    def create(cls, program: LinearProgram,
               tolerances: LpTolerances = DEFAULT_TOLERANCES) -> "BnbTree":
        tree = cls(program=program, tolerances=tolerances)
        root = BnbNode(id=0, parent=None, depth=0, local_bounds=(), program=relax(program))
        tree.nodes[0] = root
        tree.open_leaves[0] = None
        return tree

    @property
    def gap(self) -> float:
        return compute_gap(self.primal_bound, self.dual_bound)

    @property
    def candidates(self) -> List[int]:
        return list(self.open_leaves)

    def is_open(self, node_id: int) -> bool:
        return node_id in self.open_leaves

    def add_child(self, parent: BnbNode, change: BoundChange) -> BnbNode:
        child = BnbNode(
            id=len(self.nodes),
            parent=parent.id,
            depth=parent.depth + 1,
            local_bounds=(change,),
            program=with_bound(parent.program, change.var, change.side, change.value),
            lp_bound=parent.lp_bound,
            lp_iterations=parent.lp_iterations,
            estimate=parent.estimate,
            summary=parent.summary,
        )
        self.nodes[child.id] = child
        self.open_leaves[child.id] = None
        return child

    def bound_changes(self, node_id: int) -> List[BoundChange]:
        """All bound changes from the root down to node_id"""
        changes: List[BoundChange] = []
        current: Optional[int] = node_id
        while current is not None:
            node = self.nodes[current]
            changes.extend(reversed(node.local_bounds))
            current = node.parent
        return list(reversed(changes))

    def cutoff(self) -> float:
        if math.isinf(self.primal_bound):
            return math.inf
        return self.primal_bound - 1e-9 * max(1.0, abs(self.primal_bound))

    def prune_open_leaves(self) -> int:
        """Drop every open leaf whose bound cannot beat the incumbent"""
        cutoff = self.cutoff()
        pruned = [i for i in self.open_leaves if self.nodes[i].lp_bound >= cutoff]
        for node_id in pruned:
            self.nodes[node_id].status = NodeStatus.PRUNED
            del self.open_leaves[node_id]
        return len(pruned)

    def update_bounds(self):
        if self.open_leaves:
            dual = min(self.nodes[i].lp_bound for i in self.open_leaves)
        else:
            dual = self.primal_bound
        dual = min(dual, self.primal_bound)
        # a discarded subtree may leave the remaining bounds looser than before
        self.dual_bound = min(max(self.dual_bound, dual), self.primal_bound)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": [
                {"id": n.id, "parent": n.parent, "depth": n.depth, "status": n.status.value,
                 "lp_bound": _finite_or_none(n.lp_bound)}
                for n in self.nodes.values()
            ],
            "primal_bound": _finite_or_none(self.primal_bound),
            "dual_bound": _finite_or_none(self.dual_bound),
        }


NodeSelector = Callable[[BnbTree], int]
StepObserver = Callable[[BnbTree, int], None]


@dataclass(frozen=True)
class SelectionRecord:
    node_id: int
    candidates: int
    gap: float


@dataclass(frozen=True)
class Budget:
    max_nodes: int = 400
    max_seconds: Optional[float] = None

    def __post_init__(self):
        if self.max_nodes <= 0:
            raise ConfigError(f"max_nodes must be positive, got {self.max_nodes}")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise ConfigError(f"max_seconds must be positive, got {self.max_seconds}")


@dataclass
class SolveResult:
    final_gap: float
    nodes_processed: int
    incumbent: Optional[np.ndarray] = field(compare=False)
    incumbent_objective: Optional[float]
    primal_bound: float
    dual_bound: float
    trace: List[SelectionRecord]
    terminated_by: Termination
    numerical_failures: int = 0
    lp_iterations: int = 0
    elapsed: float = field(default=0.0, compare=False)
    tree: Optional[BnbTree] = field(default=None, repr=False, compare=False)

    @property
    def proven_optimal(self) -> bool:
        """Optimal with no subtree discarded on a numerical failure"""
        return self.terminated_by == Termination.OPTIMAL and self.numerical_failures == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "final_gap": _finite_or_none(self.final_gap),
            "nodes_processed": self.nodes_processed,
            "incumbent": None if self.incumbent is None else self.incumbent.tolist(),
            "incumbent_objective": self.incumbent_objective,
            "primal_bound": _finite_or_none(self.primal_bound),
            "dual_bound": _finite_or_none(self.dual_bound),
            "terminated_by": self.terminated_by.value,
            "numerical_failures": self.numerical_failures,
            "proven_optimal": self.proven_optimal,
            "lp_iterations": self.lp_iterations,
            "trace": [[r.node_id, r.candidates, _finite_or_none(r.gap)] for r in self.trace],
        }


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def relax(p: LinearProgram) -> LinearProgram:
    """Same program with every integrality flag cleared"""
    relaxed = replace(p, is_integer=(False,) * p.num_vars)
    if "dense" in p.__dict__:
        relaxed.__dict__["dense"] = p.__dict__["dense"]
    return relaxed


def select_branch_variable(solution: np.ndarray, is_integer, tol: float = 1e-6) -> Optional[int]:
    """Most fractional integer variable, lowest index on ties; None if all integral"""
    values = np.asarray(solution, dtype=float)
    mask = np.asarray(is_integer, dtype=bool)
    fractions = values - np.floor(values)
    distance = np.minimum(fractions, 1.0 - fractions)
    candidates = mask & (distance > tol)
    if not candidates.any():
        return None
    # rounded so that 0.4 and 0.6 tie exactly
    score = np.where(candidates, np.round(np.abs(fractions - 0.5), 9), np.inf)
    # argmin returns the first minimum
    return int(np.argmin(score))


def branch(tree: BnbTree, node_id: int, var: int, value: float) -> Tuple[int, int]:
    """Split node_id into var <= floor(value) (left) and var >= ceil(value) (right)"""
    node = tree.nodes[node_id]
    left = tree.add_child(node, BoundChange(var, "upper", float(math.floor(value))))
    right = tree.add_child(node, BoundChange(var, "lower", float(math.ceil(value))))
    node.status = NodeStatus.BRANCHED
    tree.children[node_id] = (left.id, right.id)
    tree.open_leaves.pop(node_id, None)
    return left.id, right.id


def _warm_basis(tree: BnbTree, node: BnbNode) -> Optional[Basis]:
    if node.parent is None:
        return None
    return tree.nodes[node.parent].basis


def _record_incumbent(tree: BnbTree, solution: np.ndarray) -> bool:
    mask = tree.program.integer_mask
    x = np.array(solution, dtype=float)
    x[mask] = np.round(x[mask])
    objective = tree.program.objective_value(x)
    if objective >= tree.primal_bound:
        return False
    tree.incumbent = x
    tree.incumbent_objective = objective
    tree.primal_bound = objective
    return True


def process_node(tree: BnbTree, node_id: int) -> NodeStatus:
    """
    Solve the relaxation of an open leaf and act on the outcome.

    Raises:
        UnboundedRelaxation: the node relaxation has no finite optimum
    """
    node = tree.nodes[node_id]
    if node.status != NodeStatus.OPEN:
        raise NotACandidate(node_id)
    tree.open_leaves.pop(node_id, None)
    tree.last_processed = node_id
    tol = tree.tolerances

    try:
        outcome = solve_lp(node.program, warm_start=_warm_basis(tree, node), tolerances=tol)
    except NumericalFailure as e:
        node.status = NodeStatus.DISCARDED
        tree.numerical_failures += 1
        update_stats('bnb', numerical_failures=1)
        log_debug("BnbEngine", f"Discarded node {node_id}: {e}")
        tree.update_bounds()
        return node.status

    tree.lp_iterations += outcome.iterations
    update_stats('bnb', lp_solves=1, lp_iterations=outcome.iterations)
    node.lp_iterations = outcome.iterations

    if outcome.status == LpStatus.INFEASIBLE:
        node.status = NodeStatus.INFEASIBLE
        tree.update_bounds()
        return node.status
    if outcome.status == LpStatus.UNBOUNDED:
        node.status = NodeStatus.DISCARDED
        raise UnboundedRelaxation(f"relaxation of node {node_id} is unbounded")

    solution = outcome.solution
    is_integer = tree.program.is_integer
    node.lp_bound = float(outcome.objective_value)
    node.basis = outcome.basis
    node.summary = summarize_solution(solution, is_integer, tol.integrality)
    node.estimate = node_estimate(node.lp_bound, solution, tree.program.objective,
                                  is_integer, tol.integrality)

    if node.lp_bound >= tree.cutoff():
        node.status = NodeStatus.PRUNED
    else:
        var = select_branch_variable(solution, is_integer, tol.integrality)
        if var is None:
            node.status = NodeStatus.INTEGRAL
            if _record_incumbent(tree, solution):
                pruned = tree.prune_open_leaves()
                log_debug("BnbEngine", f"New incumbent {tree.primal_bound:.6g} at node {node_id}, "
                          f"pruned {pruned} leaves")
        else:
            branch(tree, node_id, var, float(solution[var]))

    tree.update_bounds()
    return node.status


def solve(p: LinearProgram, selector: NodeSelector, budget: Budget = Budget(),
          tolerances: LpTolerances = DEFAULT_TOLERANCES,
          on_step: Optional[StepObserver] = None, keep_tree: bool = False) -> SolveResult:
    """
    Run branch and bound until the open set empties or the budget runs out.

    Raises:
        NotACandidate: the selector returned a node outside the open set
    """
    tree = BnbTree.create(p, tolerances)
    trace: List[SelectionRecord] = []
    started = time.perf_counter()
    processed = 0
    terminated: Optional[Termination] = None

    while tree.open_leaves:
        if processed >= budget.max_nodes:
            terminated = Termination.NODE_BUDGET
            break
        if budget.max_seconds is not None and time.perf_counter() - started >= budget.max_seconds:
            terminated = Termination.TIME_BUDGET
            break

        candidate_count = len(tree.open_leaves)
        node_id = selector(tree)
        if node_id not in tree.open_leaves:
            raise NotACandidate(node_id)
        try:
            process_node(tree, node_id)
        except UnboundedRelaxation as e:
            log_debug("BnbEngine", str(e))
            processed += 1
            terminated = Termination.UNBOUNDED
            break
        processed += 1
        trace.append(SelectionRecord(node_id=node_id, candidates=candidate_count, gap=tree.gap))
        if on_step is not None:
            on_step(tree, node_id)

    if terminated is None:
        terminated = Termination.OPTIMAL if tree.incumbent is not None else Termination.INFEASIBLE
    if terminated != Termination.UNBOUNDED and tree.numerical_failures:
        log_warn("BnbEngine", f"{terminated.value} with {tree.numerical_failures} subtrees discarded "
                 "on numerical failures; the result is not proven")

    update_stats('bnb', nodes_processed=processed)
    return SolveResult(
        final_gap=tree.gap,
        nodes_processed=processed,
        incumbent=tree.incumbent,
        incumbent_objective=tree.incumbent_objective,
        primal_bound=tree.primal_bound,
        dual_bound=tree.dual_bound,
        trace=trace,
        terminated_by=terminated,
        numerical_failures=tree.numerical_failures,
        lp_iterations=tree.lp_iterations,
        elapsed=time.perf_counter() - started,
        tree=tree if keep_tree else None,
    )
