#!/usr/bin/env python3
"""
Node feature extraction
Constant-size per-node vectors: model-state features shared by the whole
tree followed by node features, clamped and then standardized
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Sequence

import numpy as np

from .errors import ConfigError, InsufficientData

if TYPE_CHECKING:
    from .bnb_engine import BnbNode, BnbTree


FEATURE_NAMES = (
    "cuts_applied_norm",
    "separation_rounds",
    "optimality_gap",
    "lp_iterations_norm",
    "mean_integrality_gap",
    "pct_integral",
    *(f"frac_hist_{i}" for i in range(10)),
    "depth_norm",
    "lowerbound_norm",
    "estimate_norm",
)
FEATURE_DIM = len(FEATURE_NAMES)
HIST_BUCKETS = 10
CLAMP = 10.0
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class LpSummary:
    """What a node keeps from its LP solution for feature extraction"""
    frac_hist: np.ndarray
    mean_integrality_gap: float
    pct_integral: float

    @classmethod
    def empty(cls) -> "LpSummary":
        return cls(frac_hist=np.zeros(HIST_BUCKETS), mean_integrality_gap=0.0, pct_integral=0.0)


def _integer_fractions(solution: np.ndarray, is_integer: np.ndarray, tol: float) -> np.ndarray:
    values = np.asarray(solution, dtype=float)[np.asarray(is_integer, dtype=bool)]
    # values within tolerance of an integer count as integral
    snapped = np.where(np.abs(values - np.round(values)) <= tol, np.round(values), values)
    return snapped - np.floor(snapped)


def fractional_histogram(solution: np.ndarray, is_integer: Sequence[bool],
                         tol: float = 1e-6) -> np.ndarray:
    """Share of integer variables per tenth of the fractional part; zeros without integers"""
    fractions = _integer_fractions(solution, np.asarray(is_integer, dtype=bool), tol)
    if fractions.size == 0:
        return np.zeros(HIST_BUCKETS)
    buckets = np.minimum((fractions * HIST_BUCKETS).astype(int), HIST_BUCKETS - 1)
    return np.bincount(buckets, minlength=HIST_BUCKETS) / fractions.size


def summarize_solution(solution: np.ndarray, is_integer: Sequence[bool],
                       tol: float = 1e-6) -> LpSummary:
    mask = np.asarray(is_integer, dtype=bool)
    fractions = _integer_fractions(solution, mask, tol)
    if fractions.size == 0:
        return LpSummary.empty()
    distance = np.minimum(fractions, 1.0 - fractions)
    return LpSummary(
        frac_hist=fractional_histogram(solution, mask, tol),
        mean_integrality_gap=float(distance.mean()),
        pct_integral=float(np.mean(distance <= tol)),
    )


def estimate(lp_bound: float, solution: np.ndarray, objective: Sequence[float],
             is_integer: Sequence[bool], tol: float = 1e-6) -> float:
    """lp_bound plus the rounding distance of every fractional integer variable times |c_j|"""
    mask = np.asarray(is_integer, dtype=bool)
    fractions = _integer_fractions(solution, mask, tol)
    distance = np.minimum(fractions, 1.0 - fractions)
    costs = np.abs(np.asarray(objective, dtype=float)[mask])
    return float(lp_bound + np.sum(np.where(distance > tol, distance * costs, 0.0)))


@dataclass
class FeatureStats:
    """Frozen standardization statistics, persisted with the model together with the clamp range"""
    mean: np.ndarray
    std: np.ndarray
    clamp_limit: float = CLAMP
    std_floor: float = STD_FLOOR

    def __post_init__(self):
        if self.clamp_limit <= 0 or self.std_floor <= 0:
            raise ConfigError(f"feature clamp and std floor must be positive, got {self.clamp_limit}, {self.std_floor}")
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.maximum(np.asarray(self.std, dtype=float), self.std_floor)

    @classmethod
    def identity(cls, dim: int = FEATURE_DIM) -> "FeatureStats":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "clamp": self.clamp_limit, "std_floor": self.std_floor}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureStats":
        return cls(mean=np.asarray(data["mean"], dtype=float), std=np.asarray(data["std"], dtype=float),
                   clamp_limit=float(data.get("clamp", CLAMP)), std_floor=float(data.get("std_floor", STD_FLOOR)))


def fit_stats(feature_rows: Iterable[Sequence[float]], clamp_limit: float = CLAMP,
              std_floor: float = STD_FLOOR) -> FeatureStats:
    """Per-dimension mean and population std of rows already clamped to clamp_limit"""
    rows = np.asarray([np.asarray(r, dtype=float) for r in feature_rows])
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InsufficientData(f"need at least 2 feature rows, got {0 if rows.ndim != 2 else rows.shape[0]}")
    return FeatureStats(mean=rows.mean(axis=0), std=rows.std(axis=0), clamp_limit=clamp_limit, std_floor=std_floor)


def clamp(raw: np.ndarray, limit: float = CLAMP) -> np.ndarray:
    raw = np.nan_to_num(np.asarray(raw, dtype=float), nan=0.0, posinf=limit, neginf=-limit)
    return np.clip(raw, -limit, limit)


def standardize(raw: np.ndarray, stats: FeatureStats) -> np.ndarray:
    return (clamp(raw, stats.clamp_limit) - stats.mean) / stats.std


def _normalizer(tree: "BnbTree") -> float:
    """min(primal, dual) over the finite bounds, kept at least 1e-9 away from zero; 1 when neither is finite"""
    finite = [b for b in (tree.primal_bound, tree.dual_bound) if math.isfinite(b)]
    if not finite:
        return 1.0
    denom = min(finite)
    if abs(denom) < 1e-9:
        return math.copysign(1e-9, denom) if denom != 0 else 1e-9
    return denom


def raw_features(node: "BnbNode", tree: "BnbTree") -> np.ndarray:
    """Unclamped feature vector; the two cut-related slots are always zero"""
    program = tree.program
    summary = node.summary if node.summary is not None else LpSummary.empty()
    denom = _normalizer(tree)
    size = max(1, program.num_vars + program.num_rows)
    return np.array([
        0.0,
        0.0,
        tree.gap,
        node.lp_iterations / size,
        summary.mean_integrality_gap,
        summary.pct_integral,
        *summary.frac_hist,
        node.depth / max(1, len(tree.nodes)),
        node.lp_bound / denom,
        node.estimate / denom,
    ], dtype=float)


def extract(node: "BnbNode", tree: "BnbTree", stats: FeatureStats) -> np.ndarray:
    return standardize(raw_features(node, tree), stats)


def extract_many(tree: "BnbTree", node_ids: Sequence[int], stats: FeatureStats) -> np.ndarray:
    """Feature matrix with one standardized row per node id, in the given order"""
    if not node_ids:
        return np.zeros((0, FEATURE_DIM))
    raw = np.stack([raw_features(tree.nodes[i], tree) for i in node_ids])
    return standardize(raw, stats)
