"""
Shared fixtures: brute-force MILP and TSP oracles, seeded random programs and
the published per-instance comparison table
"""

import itertools
import math
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.lp_solver import LinearProgram, Relation  # noqa: E402
from core.performance_logger import logger  # noqa: E402


@pytest.fixture(autouse=True)
def quiet_logger():
    """Keep test output readable; counters still accumulate"""
    previous = logger.level
    logger.set_level("ERROR")
    yield
    logger.set_level(previous)


# =============================================================================
# ORACLES
# =============================================================================

def _row_ok(activity: float, rel: Relation, rhs: float, tol: float = 1e-9) -> bool:
    if rel == Relation.LE:
        return activity <= rhs + tol
    if rel == Relation.GE:
        return activity >= rhs - tol
    return abs(activity - rhs) <= tol


def brute_force_binary(p: LinearProgram) -> Tuple[Optional[float], Optional[np.ndarray]]:
    """Best objective over all 0/1 points of a pure binary program, None when infeasible"""
    dense = p.dense
    best, best_x = None, None
    for bits in itertools.product((0.0, 1.0), repeat=p.num_vars):
        x = np.array(bits)
        activity = dense.matrix @ x
        if all(_row_ok(a, rel, rhs) for a, rel, rhs in zip(activity, dense.rel, dense.rhs)):
            value = p.objective_value(x)
            if best is None or value < best:
                best, best_x = value, x
    return best, best_x


def brute_force_tour(dist: np.ndarray) -> float:
    """Cheapest Hamiltonian cycle through city 0 by enumerating permutations"""
    n = dist.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(1, n)):
        tour = (0,) + perm
        cost = sum(dist[tour[k], tour[(k + 1) % n]] for k in range(n))
        best = min(best, cost)
    return best


def random_binary_program(rng: np.random.Generator, max_vars: int = 12,
                          max_rows: int = 10) -> LinearProgram:
    """Integer data, binary variables, a mix of <= / >= / = rows"""
    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    objective = rng.integers(-10, 11, size=n).astype(float)
    rows = []
    for _ in range(m):
        cols = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        coeffs = [(int(c), float(rng.integers(-5, 6) or 1)) for c in sorted(cols)]
        kind = rng.random()
        if kind < 0.7:
            rhs = float(rng.integers(0, 3 * len(coeffs) + 1))
            rows.append((coeffs, "le", rhs))
        elif kind < 0.9:
            rhs = float(rng.integers(-3, 2))
            rows.append((coeffs, "ge", rhs))
        else:
            # equality satisfied by a random 0/1 point so it is not hopeless
            point = rng.integers(0, 2, size=n)
            rows.append((coeffs, "eq", float(sum(v * point[c] for c, v in coeffs))))
    return LinearProgram.build(objective, rows, lower=[0.0] * n, upper=[1.0] * n, integer=[True] * n)


@pytest.fixture
def binary_oracle():
    return brute_force_binary


@pytest.fixture
def tour_oracle():
    return brute_force_tour


@pytest.fixture
def knapsack() -> LinearProgram:
    """max 5a + 4b s.t. 3a + 2b <= 4, binary; optimum 5 at (1, 0)"""
    return LinearProgram.build([-5.0, -4.0], [([(0, 3.0), (1, 2.0)], "le", 4.0)],
                               lower=[0.0, 0.0], upper=[1.0, 1.0], integer=[True, True])


@pytest.fixture
def branching_program() -> LinearProgram:
    """A program that needs a real search tree"""
    rng = np.random.default_rng(11)
    weights = rng.integers(3, 15, size=10).astype(float)
    values = rng.integers(5, 25, size=10).astype(float)
    capacity = float(np.floor(weights.sum() / 2)) + 0.5
    return LinearProgram.build(-values, [(list(enumerate(weights)), "le", capacity)],
                               lower=[0.0] * 10, upper=[1.0] * 10, integer=[True] * 10)


# =============================================================================
# PUBLISHED COMPARISON TABLE
# name, gap ours, gap base, nodes ours, nodes base, reward, utility, utility/node
# =============================================================================

TABLE_ROWS: List[Tuple[str, float, float, int, int, float, float, float]] = [
    ("att48", 0.287, 0.286, 1086, 2670, -0.002, -0.002, 0.593),
    ("bayg29", 0.0, 0.0, 2317, 7201, 1.0, 0.0, 0.0),
    ("bays29", 0.0, 0.036, 11351, 10150, 1.0, 1.0, 0.997),
    ("berlin52", 0.0, 0.0, 777, 1634, 1.0, 0.0, 0.0),
    ("bier127", 2.795, 2.777, 23, 25, -0.007, -0.007, 0.074),
    ("brazil58", 0.328, 0.644, 1432, 2182, 0.491, 0.491, 0.666),
    ("burma14", 0.0, 0.0, 96, 65, 1.0, 0.0, 0.0),
    ("ch130", 8.801, 8.783, 48, 43, -0.002, -0.002, -0.106),
    ("ch150", 7.803, 7.802, 18, 18, -0.0, -0.0, -0.0),
    ("d198", 0.582, 0.582, 10, 11, -0.0, -0.0, 0.091),
    ("dantzig42", 0.185, 0.100, 2498, 3469, -0.847, -0.459, -0.248),
    ("eil101", 2.434, 2.430, 31, 61, -0.002, -0.002, 0.491),
    ("eil51", 0.178, 0.017, 828, 4306, -1.0, -0.907, -0.514),
    ("eil76", 0.432, 1.099, 309, 709, 0.607, 0.607, 0.829),
    ("fri26", 0.0, 0.0, 1470, 6721, 1.0, 0.0, 0.0),
    ("gr120", 7.078, 7.083, 41, 43, 0.001, 0.001, 0.047),
    ("gr137", 0.606, 0.603, 30, 25, -0.006, -0.006, -0.171),
    ("gr17", 0.0, 0.0, 92, 123, 1.0, 0.0, 0.0),
    ("gr24", 0.0, 0.0, 110, 207, 1.0, 0.0, 0.0),
    ("gr48", 0.192, 0.340, 586, 2479, 0.435, 0.435, 0.866),
    ("gr96", 0.569, 0.552, 93, 182, -0.032, -0.031, 0.472),
    ("hk48", 0.071, 0.106, 2571, 2990, 0.324, 0.324, 0.419),
    ("kroA100", 8.937, 8.945, 102, 233, 0.001, 0.001, 0.563),
    ("kroA150", 11.343, 11.340, 23, 21, -0.0, -0.0, -0.087),
    ("kroA200", 13.726, 13.723, 5, 7, -0.0, -0.0, 0.286),
    ("kroB100", 7.164, 7.082, 83, 109, -0.011, -0.011, 0.230),
    ("kroB150", 10.965, 10.965, 16, 14, 0.0, 0.0, -0.125),
    ("kroB200", 11.740, 11.740, 7, 6, 0.0, 0.0, -0.143),
    ("kroC100", 8.721, 8.754, 118, 133, 0.004, 0.004, 0.116),
    ("kroD100", 7.959, 7.938, 70, 111, -0.003, -0.003, 0.368),
    ("kroE100", 8.573, 2.952, 105, 108, -1.0, -0.656, -0.646),
    ("lin105", 2.005, 2.003, 98, 149, -0.001, -0.001, 0.341),
    ("pr107", 1.367, 1.336, 128, 217, -0.024, -0.023, 0.396),
    ("pr124", 0.937, 0.935, 64, 61, -0.001, -0.001, -0.048),
    ("pr136", 2.351, 2.350, 31, 45, -0.0, -0.0, 0.311),
    ("pr144", 2.228, 2.200, 47, 37, -0.012, -0.012, -0.222),
    ("pr152", 2.688, 2.683, 14, 41, -0.002, -0.002, 0.658),
    ("pr226", 1.091, 1.092, 6, 6, 0.001, 0.001, 0.001),
    ("pr76", 0.534, 0.476, 201, 855, -0.123, -0.109, 0.736),
    ("rat99", 0.853, 0.849, 41, 80, -0.005, -0.005, 0.485),
    ("rd100", 5.948, 4.462, 100, 166, -0.333, -0.250, 0.197),
    ("si175", 0.270, 0.270, 8, 7, 0.0, 0.0, -0.125),
    ("st70", 0.586, 3.018, 379, 1068, 0.806, 0.806, 0.931),
    ("swiss42", 0.0, 0.0, 1075, 1133, 1.0, 0.0, 0.0),
    ("ulysses16", 0.0, 0.0, 18322, 19553, 1.0, 0.0, 0.0),
    ("ulysses22", 0.103, 0.127, 13911, 13313, 0.191, 0.191, 0.154),
]

PUBLISHED_MEANS = {"reward": 0.184, "utility": 0.030, "utility_per_node": 0.193}


@pytest.fixture
def comparison_table():
    return TABLE_ROWS
