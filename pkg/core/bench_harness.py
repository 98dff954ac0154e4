#!/usr/bin/env python3
"""
Benchmark harness
Runs the learned selector (or a classical one) against the hybrid_plunge
baseline on matched node budgets and writes the comparison table
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .bnb_engine import Budget, solve
from .errors import ConfigError, EmptyAfterFilter, SolverError
from .instance_factory import NamedInstance
from .lp_solver import DEFAULT_TOLERANCES, LpTolerances
from .metrics import BenchRow, BenchSummary, aggregate
from .model_store import ModelFile
from .performance_logger import (
    log_info, log_phase_complete, log_phase_start, log_warn, time_operation, update_stats,
)
from .selectors import ScheduleConfig, get_selector, hybrid_plunge
from .tree_policy import PolicySelector

CSV_FIELDS = ("instance", "gap_policy", "gap_baseline", "nodes_policy", "nodes_baseline",
              "reward", "utility", "utility_per_node")


@dataclass
class SkippedRow:
    instance: str
    reason: str


@dataclass
class BenchOutcome:
    rows: List[BenchRow] = field(default_factory=list)
    skipped: List[SkippedRow] = field(default_factory=list)
    summary: Optional[BenchSummary] = None


def _make_selector(selector: str, model: Optional[ModelFile], schedule: ScheduleConfig,
                   rng: np.random.Generator, greedy: bool):
    if selector == "policy":
        if model is None:
            raise ConfigError("the policy selector needs a model file")
        return PolicySelector(model.params, model.stats, model.policy, schedule, rng=rng, greedy=greedy)
    return get_selector(selector)


def bench_instance(instance: NamedInstance, model: Optional[ModelFile], budget: Budget,
                   schedule: ScheduleConfig, rng: np.random.Generator,
                   selector: str = "policy", greedy: bool = False,
                   tolerances: LpTolerances = DEFAULT_TOLERANCES) -> BenchRow:
    """Baseline run then selector run on the same instance and budget"""
    with time_operation("bench_instance", {"instance": instance.name}):
        baseline = solve(instance.program, hybrid_plunge, budget, tolerances)
        started = time.perf_counter()
        chosen = _make_selector(selector, model, schedule, rng, greedy)
        ours = solve(instance.program, chosen, budget, tolerances)
        elapsed = time.perf_counter() - started
    return BenchRow.from_runs(
        instance=instance.name,
        gap_policy=ours.final_gap,
        gap_baseline=baseline.final_gap,
        nodes_policy=ours.nodes_processed,
        nodes_baseline=baseline.nodes_processed,
        time_policy=elapsed,
        time_baseline=baseline.elapsed,
    )


def run_bench(instances: Sequence[NamedInstance], model: Optional[ModelFile], budget: Budget,
              schedule: ScheduleConfig = ScheduleConfig(), seed: int = 0,
              selector: str = "policy", greedy: bool = False, max_workers: int = 1,
              min_baseline_nodes: int = 5, gap_shift: float = 1.0, time_shift: float = 10.0,
              tolerances: LpTolerances = DEFAULT_TOLERANCES) -> BenchOutcome:
    """
    Compare a selector with the baseline on every instance.

    Each instance draws from its own generator spawned from seed, so rows do
    not depend on worker count or completion order. A failing instance is
    recorded as skipped and the batch goes on.

    Raises:
        EmptyAfterFilter: no row survives the baseline node filter
    """
    if selector == "policy" and model is None:
        raise ConfigError("the policy selector needs a model file")
    seeds = np.random.SeedSequence(seed).spawn(len(instances))

    def run(k: int):
        instance = instances[k]
        try:
            return bench_instance(instance, model, budget, schedule, np.random.default_rng(seeds[k]),
                                  selector, greedy, tolerances)
        except SolverError as e:
            log_warn("BenchHarness", f"Skipped {instance.name}: {e}")
            return SkippedRow(instance=instance.name, reason=f"{type(e).__name__}: {e}")

    started = time.perf_counter()
    log_phase_start("BenchHarness", f"benchmark ({len(instances)} instances, selector {selector})")
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        results = list(executor.map(run, range(len(instances))))
    update_stats('bench', parallel_workers=max(1, max_workers))

    outcome = BenchOutcome()
    for result in results:
        if isinstance(result, SkippedRow):
            outcome.skipped.append(result)
        else:
            outcome.rows.append(result)
            log_info("BenchHarness", f"{result.instance}: reward {result.reward:+.3f}", "⚖️",
                     stats={"gap_policy": result.gap_policy, "gap_baseline": result.gap_baseline,
                            "nodes_policy": result.nodes_policy, "nodes_baseline": result.nodes_baseline})

    try:
        outcome.summary = aggregate(outcome.rows, gap_shift=gap_shift, time_shift=time_shift,
                                    min_baseline_nodes=min_baseline_nodes)
    except EmptyAfterFilter as e:
        e.outcome = outcome
        raise
    log_phase_complete("BenchHarness", "benchmark", time.perf_counter() - started,
                       rows=outcome.summary.rows, skipped=len(outcome.skipped),
                       mean_reward=outcome.summary.mean_reward)
    return outcome


# =============================================================================
# OUTPUT
# =============================================================================

def _format(value: float) -> str:
    return f"{value:.6f}" if math.isfinite(value) else str(value)


def write_bench_csv(rows: Sequence[BenchRow], path) -> None:
    """Rows in input order; wall-clock columns stay out so reruns match byte for byte"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(CSV_FIELDS)
        for r in rows:
            writer.writerow([r.instance, _format(r.gap_policy), _format(r.gap_baseline),
                             r.nodes_policy, r.nodes_baseline, _format(r.reward),
                             _format(r.utility), _format(r.utility_per_node)])


def read_bench_csv(path) -> List[BenchRow]:
    rows: List[BenchRow] = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for record in csv.DictReader(f):
            rows.append(BenchRow(
                instance=record["instance"],
                gap_policy=float(record["gap_policy"]),
                gap_baseline=float(record["gap_baseline"]),
                nodes_policy=int(record["nodes_policy"]),
                nodes_baseline=int(record["nodes_baseline"]),
                reward=float(record["reward"]),
                utility=float(record["utility"]),
                utility_per_node=float(record["utility_per_node"]),
            ))
    return rows


def summary_payload(outcome: BenchOutcome, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    payload: Dict[str, Any] = outcome.summary.to_dict() if outcome.summary else {}
    payload["skipped"] = [{"instance": s.instance, "reason": s.reason} for s in outcome.skipped]
    if extra:
        payload.update(extra)
    return payload


def write_summary_json(outcome: BenchOutcome, path, extra: Optional[Dict[str, Any]] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'w', encoding='utf-8') as f:
        json.dump(summary_payload(outcome, extra), f, indent=2, sort_keys=True)
    os.replace(tmp_path, path)
