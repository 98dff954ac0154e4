#!/usr/bin/env python3
"""
Instance Factory
Euclidean TSP instances with their MTZ encoding, mutations, curation of a
training pool by median baseline gap, and Kochetov-style facility location
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .bnb_engine import Budget, solve
from .errors import ConfigError, PoolExhausted
from .lp_solver import (
    DEFAULT_TOLERANCES, LinearProgram, LpTolerances, Relation, Row, program_from_dict, program_to_dict,
)
from .performance_logger import log_debug, log_info, log_warn, time_operation, update_stats
from .selectors import hybrid_plunge


@dataclass(frozen=True)
class TspInstance:
    """Symmetric distance matrix with zero diagonal"""
    dist: np.ndarray
    name: str = ""

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError(f"distance matrix must be square, got {dist.shape}")
        if not np.allclose(dist, dist.T, atol=1e-12, rtol=0.0):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(dist) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        object.__setattr__(self, "dist", dist)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "n": self.n, "dist": self.dist.reshape(-1).tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TspInstance":
        n = int(data["n"])
        return cls(dist=np.asarray(data["dist"], dtype=float).reshape(n, n), name=data.get("name", ""))


def save_tsp(inst: TspInstance, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(inst.to_dict(), f)


def load_tsp(path) -> TspInstance:
    with open(path, 'r', encoding='utf-8') as f:
        return TspInstance.from_dict(json.load(f))


@dataclass(frozen=True)
class NamedInstance:
    name: str
    program: LinearProgram = field(repr=False)
    tsp: Optional[TspInstance] = field(default=None, repr=False)


# =============================================================================
# TSP
# =============================================================================

def gen_tsp(n: int, rng: np.random.Generator, name: str = "") -> TspInstance:
    """Cities uniform in the unit square, Euclidean distances"""
    if n < 4:
        raise ConfigError(f"need at least 4 cities, got {n}")
    while True:
        points = rng.random((n, 2))
        diff = points[:, None, :] - points[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        off_diagonal = dist[~np.eye(n, dtype=bool)]
        if np.all(off_diagonal > 1e-12):
            return TspInstance(dist=dist, name=name or f"tsp{n}")


def mutate(inst: TspInstance, sigma: float, rng: np.random.Generator, name: str = "") -> TspInstance:
    """Multiply every entry by exp(sigma * N(0,1)) and re-symmetrize by averaging"""
    if sigma <= 0:
        raise ConfigError(f"mutation strength must be positive, got {sigma}")
    scaled = inst.dist * np.exp(sigma * rng.standard_normal(inst.dist.shape))
    dist = (scaled + scaled.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    return TspInstance(dist=dist, name=name or inst.name)


def edge_column(n: int, i: int, j: int) -> int:
    """Column of x_ij: rows of n-1 entries per origin city, skipping j == i"""
    if i == j:
        raise ValueError("no edge variable for a self loop")
    return i * (n - 1) + (j if j < i else j - 1)


def order_column(n: int, i: int) -> int:
    """Column of the visit-order variable of city i (0-based, i >= 1)"""
    if not 1 <= i < n:
        raise ValueError(f"city {i} has no order variable")
    return n * (n - 1) + (i - 1)


def encode_mtz(inst: TspInstance) -> LinearProgram:
    """
    Miller-Tucker-Zemlin MILP.

    Columns: x_ij for i = 0..n-1 and j != i in increasing order, then u_i
    for cities 1..n-1 with 2 <= u_i <= n. Rows: n out-degree equalities,
    n in-degree equalities, then u_i - u_j + (n-1) x_ij <= n-2 for every
    ordered pair of distinct non-depot cities.
    """
    n = inst.n
    if n < 3:
        raise ConfigError(f"MTZ needs at least 3 cities, got {n}")
    num_edges = n * (n - 1)
    objective = [0.0] * (num_edges + n - 1)
    for i in range(n):
        for j in range(n):
            if i != j:
                objective[edge_column(n, i, j)] = float(inst.dist[i, j])

    rows: List[Row] = []
    for i in range(n):
        rows.append(Row(tuple((edge_column(n, i, j), 1.0) for j in range(n) if j != i), Relation.EQ, 1.0))
    for j in range(n):
        rows.append(Row(tuple((edge_column(n, i, j), 1.0) for i in range(n) if i != j), Relation.EQ, 1.0))
    for i in range(1, n):
        for j in range(1, n):
            if i != j:
                rows.append(Row(
                    ((order_column(n, i), 1.0), (order_column(n, j), -1.0),
                     (edge_column(n, i, j), float(n - 1))),
                    Relation.LE, float(n - 2),
                ))

    lower = [0.0] * num_edges + [2.0] * (n - 1)
    upper = [1.0] * num_edges + [float(n)] * (n - 1)
    return LinearProgram(
        num_vars=len(objective),
        objective=tuple(objective),
        rows=tuple(rows),
        var_lower=tuple(lower),
        var_upper=tuple(upper),
        is_integer=(True,) * len(objective),
    )


def decode_tour(solution: Sequence[float], n: int) -> List[int]:
    """
    Follow the chosen edges from city 0.

    Raises:
        ValueError: the edges do not form a single Hamiltonian cycle
    """
    x = np.asarray(solution, dtype=float)
    successor: Dict[int, int] = {}
    for i in range(n):
        chosen = [j for j in range(n) if j != i and x[edge_column(n, i, j)] > 0.5]
        if len(chosen) != 1:
            raise ValueError(f"city {i} has {len(chosen)} outgoing edges")
        successor[i] = chosen[0]

    tour = [0]
    while len(tour) <= n:
        nxt = successor[tour[-1]]
        if nxt == 0:
            break
        tour.append(nxt)
    if len(tour) != n or len(set(tour)) != n:
        raise ValueError(f"edges form a subtour of length {len(tour)}, expected {n}")
    return tour


def tour_cost(inst: TspInstance, tour: Sequence[int]) -> float:
    return float(sum(inst.dist[a, b] for a, b in zip(tour, list(tour[1:]) + [tour[0]])))


# =============================================================================
# FACILITY LOCATION
# =============================================================================

@dataclass(frozen=True)
class UflpConfig:
    n_facilities: int = 100
    m_clients: int = 100
    opening_cost: float = 3000.0
    cheap_connections: int = 10
    cheap_cost_max: int = 4
    expensive_cost: float = 3000.0

    def __post_init__(self):
        if self.n_facilities < 1 or self.m_clients < 1:
            raise ConfigError("UFLP needs at least one facility and one client")
        if self.cheap_connections < 1 or self.cheap_cost_max < 0:
            raise ConfigError("invalid cheap connection settings")


def uflp_assignment_column(m: int, facility: int, client: int) -> int:
    return facility * m + client


def uflp_open_column(n: int, m: int, facility: int) -> int:
    return n * m + facility


def gen_uflp_kochetov(n_facilities: int, m_clients: int, rng: np.random.Generator,
                      cfg: UflpConfig = UflpConfig()) -> LinearProgram:
    """
    Facility location with uniform opening costs and a few cheap links per client.

    Columns: z_ij (facility i serves client j) at i*m + j, then x_i (facility
    i open) at n*m + i. Rows: one assignment equality per client, then one
    linking row sum_j z_ij - m x_i <= 0 per facility. Every column is binary.
    """
    n, m = n_facilities, m_clients
    if n < 1 or m < 1:
        raise ConfigError("UFLP needs at least one facility and one client")
    cost = np.full((n, m), float(cfg.expensive_cost))
    cheap = min(cfg.cheap_connections, n)
    for j in range(m):
        facilities = rng.choice(n, size=cheap, replace=False)
        cost[facilities, j] = rng.integers(0, cfg.cheap_cost_max + 1, size=cheap)

    objective = [0.0] * (n * m + n)
    for i in range(n):
        for j in range(m):
            objective[uflp_assignment_column(m, i, j)] = float(cost[i, j])
        objective[uflp_open_column(n, m, i)] = float(cfg.opening_cost)

    rows: List[Row] = []
    for j in range(m):
        rows.append(Row(tuple((uflp_assignment_column(m, i, j), 1.0) for i in range(n)), Relation.EQ, 1.0))
    for i in range(n):
        coeffs = tuple((uflp_assignment_column(m, i, j), 1.0) for j in range(m))
        rows.append(Row(coeffs + ((uflp_open_column(n, m, i), -float(m)),), Relation.LE, 0.0))

    size = n * m + n
    return LinearProgram(
        num_vars=size,
        objective=tuple(objective),
        rows=tuple(rows),
        var_lower=(0.0,) * size,
        var_upper=(1.0,) * size,
        is_integer=(True,) * size,
    )


def decode_uflp(solution: Sequence[float], n_facilities: int, m_clients: int) -> List[int]:
    """Indices of the open facilities"""
    x = np.asarray(solution, dtype=float)
    return [i for i in range(n_facilities) if x[uflp_open_column(n_facilities, m_clients, i)] > 0.5]


# =============================================================================
# CURATION
# =============================================================================

@dataclass(frozen=True)
class CurationConfig:
    min_nodes: int = 30
    budget: int = 300
    max_gap: float = 1.0
    target_count: int = 20
    batch_size: int = 5
    mutation_sigma: float = 0.2
    cities: Tuple[int, int] = (8, 10)

    def __post_init__(self):
        if self.min_nodes < 0 or self.budget <= 0 or self.target_count <= 0 or self.batch_size <= 0:
            raise ConfigError(f"invalid curation settings {self}")
        if self.cities[0] < 4 or self.cities[1] < self.cities[0]:
            raise ConfigError(f"invalid city range {self.cities}")


@dataclass
class CandidateRecord:
    name: str
    batch: int
    gap: float
    nodes: int
    accepted: bool
    reason: str = ""
    selected: bool = False


@dataclass
class CurationReport:
    records: List[CandidateRecord] = field(default_factory=list)

    @property
    def selected(self) -> List[str]:
        return [r.name for r in self.records if r.selected]


def candidate_batches(cfg: CurationConfig, rng: np.random.Generator,
                      max_batches: Optional[int] = None) -> Iterator[List[NamedInstance]]:
    """Each batch is a fresh base instance followed by batch_size - 1 mutations of it"""
    limit = max_batches if max_batches is not None else cfg.target_count * 10
    for b in range(limit):
        n = int(rng.integers(cfg.cities[0], cfg.cities[1] + 1))
        base = gen_tsp(n, rng, name=f"tsp{n}_b{b}_m0")
        members = [base] + [
            mutate(base, cfg.mutation_sigma, rng, name=f"tsp{n}_b{b}_m{k}")
            for k in range(1, cfg.batch_size)
        ]
        yield [NamedInstance(name=t.name, program=encode_mtz(t), tsp=t) for t in members]


def evaluate_candidate(instance: NamedInstance, budget: Budget,
                       tolerances: LpTolerances = DEFAULT_TOLERANCES) -> Tuple[float, int]:
    """Baseline gap and node count under budget"""
    result = solve(instance.program, hybrid_plunge, budget, tolerances)
    return result.final_gap, result.nodes_processed


def rejection_reason(gap: float, nodes: int, cfg: CurationConfig) -> str:
    if gap == 0:
        return "zero gap"
    if not gap <= cfg.max_gap:
        return f"gap above {cfg.max_gap:g}"
    if nodes < cfg.min_nodes:
        return f"fewer than {cfg.min_nodes} nodes"
    return ""


def curate(batches: Iterable[Sequence[NamedInstance]], cfg: CurationConfig,
           tolerances: LpTolerances = DEFAULT_TOLERANCES,
           max_workers: int = 1) -> Tuple[List[NamedInstance], CurationReport]:
    """
    Pick the median-gap survivor of every batch until target_count are collected.

    Raises:
        PoolExhausted: the batches ran out first; the partial report is attached
    """
    budget = Budget(max_nodes=cfg.budget)
    report = CurationReport()
    pool: List[NamedInstance] = []

    with time_operation("curate"), ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        for b, batch in enumerate(batches):
            results = list(executor.map(lambda inst: evaluate_candidate(inst, budget, tolerances), batch))
            survivors: List[Tuple[float, int, CandidateRecord, NamedInstance]] = []
            for k, (inst, (gap, nodes)) in enumerate(zip(batch, results)):
                reason = rejection_reason(gap, nodes, cfg)
                record = CandidateRecord(name=inst.name, batch=b, gap=gap, nodes=nodes,
                                         accepted=not reason, reason=reason)
                report.records.append(record)
                if not reason:
                    survivors.append((gap, k, record, inst))
                else:
                    log_debug("Curation", f"Rejected {inst.name}: {reason}")

            if survivors:
                survivors.sort(key=lambda s: (s[0], s[1]))
                _, _, record, inst = survivors[(len(survivors) - 1) // 2]
                record.selected = True
                pool.append(inst)
                log_info("Curation", f"Batch {b}: picked {inst.name} (gap {record.gap:.3f}, "
                         f"{record.nodes} nodes) [{len(pool)}/{cfg.target_count}]", "🎯")
            update_stats('curation', nodes_processed=sum(r[1] for r in results))

            if len(pool) >= cfg.target_count:
                return pool, report

    log_warn("Curation", f"Candidate stream exhausted with {len(pool)}/{cfg.target_count} instances")
    error = PoolExhausted(f"only {len(pool)} of {cfg.target_count} instances passed the filters")
    error.report = report
    error.pool = pool
    raise error


CURATION_FIELDS = ("name", "batch", "gap", "nodes", "accepted", "selected", "reason")


def save_curation_report(report: CurationReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(CURATION_FIELDS)
        for r in report.records:
            gap = f"{r.gap:.6f}" if math.isfinite(r.gap) else "inf"
            writer.writerow([r.name, r.batch, gap, r.nodes, int(r.accepted), int(r.selected), r.reason])


# =============================================================================
# INSTANCE FILES
# =============================================================================

def save_instance(instance: NamedInstance, path) -> None:
    """TSP instances keep their distance matrix; anything else is stored as a program"""
    if instance.tsp is not None:
        save_tsp(instance.tsp, path)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({**program_to_dict(instance.program), "name": instance.name}, f)


def load_instance(path) -> NamedInstance:
    """
    Read a TSP (distance matrix) or program JSON file.

    Raises:
        ValueError: the file is neither
    """
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: not an instance file")
    if "dist" in data:
        tsp = TspInstance.from_dict(data)
        name = tsp.name or path.stem
        return NamedInstance(name=name, program=encode_mtz(tsp), tsp=tsp)
    if "num_vars" in data:
        return NamedInstance(name=data.get("name") or path.stem, program=program_from_dict(data))
    raise ValueError(f"{path}: not an instance file")


def load_instances(paths: Iterable) -> List[NamedInstance]:
    """Files as given, directories expanded to their *.json files in name order"""
    instances: List[NamedInstance] = []
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.json")) if p.is_dir() else [p]
        instances.extend(load_instance(f) for f in files)
    log_info("InstanceFactory", f"Loaded {len(instances)} instances", "📂")
    return instances
