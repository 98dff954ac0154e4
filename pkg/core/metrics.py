#!/usr/bin/env python3
"""
Comparison metrics
Per-instance reward, utility and utility per node, and the aggregate
summary over a benchmark table
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import EmptyAfterFilter
from .ppo_trainer import compute_reward


def _relative_improvement(selector_score: float, baseline_score: float) -> float:
    """(baseline - selector) / max(both), 0/0 read as 0, infinities clipped to +-1"""
    if selector_score == baseline_score:
        return 0.0
    if math.isinf(selector_score):
        return -1.0
    if math.isinf(baseline_score):
        return 1.0
    value = (baseline_score - selector_score) / max(selector_score, baseline_score)
    return float(np.clip(value, -1.0, 1.0))


def utility(gap_sel: float, gap_base: float) -> float:
    return _relative_improvement(gap_sel, gap_base)


def utility_per_node(gap_sel: float, nodes_sel: int, gap_base: float, nodes_base: int) -> float:
    """Utility on gap x nodes scores"""
    return _relative_improvement(_score(gap_sel, nodes_sel), _score(gap_base, nodes_base))


def _score(gap: float, nodes: int) -> float:
    return math.inf if math.isinf(gap) else gap * nodes


def shifted_geometric_mean(values: Sequence[float], shift: float) -> float:
    """exp(mean(ln(x + shift))) - shift"""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return math.nan
    if np.any(np.isinf(data)):
        return math.inf
    return float(np.exp(np.mean(np.log(data + shift))) - shift)


@dataclass
class BenchRow:
    instance: str
    gap_policy: float
    gap_baseline: float
    nodes_policy: int
    nodes_baseline: int
    reward: float
    utility: float
    utility_per_node: float
    time_policy: Optional[float] = None
    time_baseline: Optional[float] = None

    @classmethod
    def from_runs(cls, instance: str, gap_policy: float, gap_baseline: float,
                  nodes_policy: int, nodes_baseline: int,
                  time_policy: Optional[float] = None,
                  time_baseline: Optional[float] = None) -> "BenchRow":
        return cls(
            instance=instance,
            gap_policy=gap_policy,
            gap_baseline=gap_baseline,
            nodes_policy=nodes_policy,
            nodes_baseline=nodes_baseline,
            reward=compute_reward(gap_policy, gap_baseline),
            utility=utility(gap_policy, gap_baseline),
            utility_per_node=utility_per_node(gap_policy, nodes_policy, gap_baseline, nodes_baseline),
            time_policy=time_policy,
            time_baseline=time_baseline,
        )


@dataclass
class BenchSummary:
    rows: int
    filtered_out: int
    mean_reward: float
    mean_utility: float
    mean_utility_per_node: float
    win_rate: float
    geo_mean_policy: float
    geo_mean_baseline: float
    mean_nodes_policy: float
    mean_nodes_baseline: float
    geo_mean_time_policy: Optional[float] = None
    geo_mean_time_baseline: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


def filter_rows(rows: Sequence[BenchRow], min_baseline_nodes: int = 5) -> List[BenchRow]:
    return [r for r in rows if r.nodes_baseline >= min_baseline_nodes]


def aggregate(rows: Sequence[BenchRow], gap_shift: float = 1.0, time_shift: float = 10.0,
              min_baseline_nodes: int = 5) -> BenchSummary:
    """
    Means, win rate (reward >= 0) and shifted geometric means of gaps and runtimes.

    Raises:
        EmptyAfterFilter: no row explored at least min_baseline_nodes baseline nodes
    """
    kept = filter_rows(rows, min_baseline_nodes)
    if not kept:
        raise EmptyAfterFilter(f"no rows with at least {min_baseline_nodes} baseline nodes "
                               f"({len(rows)} rows before filtering)")

    timed = [r for r in kept if r.time_policy is not None and r.time_baseline is not None]
    return BenchSummary(
        rows=len(kept),
        filtered_out=len(rows) - len(kept),
        mean_reward=float(np.mean([r.reward for r in kept])),
        mean_utility=float(np.mean([r.utility for r in kept])),
        mean_utility_per_node=float(np.mean([r.utility_per_node for r in kept])),
        win_rate=float(np.mean([r.reward >= 0 for r in kept])),
        geo_mean_policy=shifted_geometric_mean([r.gap_policy for r in kept], gap_shift),
        geo_mean_baseline=shifted_geometric_mean([r.gap_baseline for r in kept], gap_shift),
        mean_nodes_policy=float(np.mean([r.nodes_policy for r in kept])),
        mean_nodes_baseline=float(np.mean([r.nodes_baseline for r in kept])),
        geo_mean_time_policy=shifted_geometric_mean([r.time_policy for r in timed], time_shift) if timed else None,
        geo_mean_time_baseline=shifted_geometric_mean([r.time_baseline for r in timed], time_shift) if timed else None,
    )
