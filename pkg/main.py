#!/usr/bin/env python3
"""
TreeSelect - learned node selection for branch and bound
Main entry point for generating instances, training and benchmarking
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from core.baseline_cache import BaselineCache
from core.bench_harness import run_bench, summary_payload, write_bench_csv, write_summary_json
from core.bnb_engine import solve
from core.config import SolverConfig
from core.errors import EmptyAfterFilter, ModelError, PoolExhausted, SolverError
from core.instance_factory import (
    NamedInstance, candidate_batches, curate, encode_mtz, gen_tsp, gen_uflp_kochetov,
    load_instances, save_curation_report, save_instance,
)
from core.model_store import ModelFile, load_model, save_model
from core.performance_logger import log_error, log_info, log_success, logger, print_run_summary
from core.ppo_trainer import check_loss_gradients, train
from core.profile_loader import list_available_profiles
from core.report_builder import ReportBuilder
from core.selectors import SELECTORS
from core.tree_policy import PolicySelector

SELECTOR_CHOICES = ["policy"] + sorted(SELECTORS)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='Random seed')
    common.add_argument('--node-budget', type=int, help='Nodes processed per solve')
    common.add_argument('--time-budget', type=float, help='Seconds per solve (optional)')
    common.add_argument('--model', help='Model file (JSON)')
    common.add_argument('--selector', choices=SELECTOR_CHOICES, default='policy',
                        help='Node selector')
    common.add_argument('--k-steps', type=int, help='Message passing steps')
    common.add_argument('--d-model', type=int, help='Embedding width')
    common.add_argument('--temperature', type=float, help='Softmax temperature')
    common.add_argument('--out', help='Output file or directory')
    common.add_argument('--profile', help=f'Settings profile ({", ".join(list_available_profiles()) or "none"})')
    common.add_argument('--long', action='store_true', help='Use the long budget and schedule')
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARN', 'ERROR'], help='Log level')
    common.add_argument('--workers', type=int, help='Parallel worker threads')

    parser = argparse.ArgumentParser(description='Learned node selection for branch and bound')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-tsp', parents=[common], help='Generate Euclidean TSP instances')
    p.add_argument('--cities', type=int, default=8, help='Cities per instance')
    p.add_argument('--count', type=int, default=1, help='Number of instances')

    p = sub.add_parser('gen-uflp', parents=[common], help='Generate facility location instances')
    p.add_argument('--facilities', type=int, help='Facilities per instance')
    p.add_argument('--clients', type=int, help='Clients per instance')
    p.add_argument('--count', type=int, default=1, help='Number of instances')

    p = sub.add_parser('curate', parents=[common], help='Curate a training pool by median gap')
    p.add_argument('--max-batches', type=int, help='Stop after this many candidate batches')

    p = sub.add_parser('train', parents=[common], help='Train the tree policy with PPO')
    p.add_argument('pool', nargs='+', help='Instance files or directories')
    p.add_argument('--iterations', type=int, help='PPO iterations')
    p.add_argument('--curve', help='Learning curve CSV')

    p = sub.add_parser('solve', parents=[common], help='Solve one instance')
    p.add_argument('instance', help='Instance file')
    p.add_argument('--greedy', action='store_true', help='Pick the most likely candidate')

    p = sub.add_parser('bench', parents=[common], help='Compare a selector with the baseline')
    p.add_argument('instances', nargs='+', help='Instance files or directories')
    p.add_argument('--summary', help='Summary JSON (default: stdout)')
    p.add_argument('--report', help='HTML report')
    p.add_argument('--greedy', action='store_true', help='Pick the most likely candidate')

    p = sub.add_parser('grad-check', parents=[common], help='Finite-difference check of the PPO loss')
    p.add_argument('--tolerance', type=float, default=1e-4, help='Relative error bound')
    return parser


def make_config(args: argparse.Namespace, **extra) -> SolverConfig:
    node_budget = getattr(args, 'node_budget', None)
    return SolverConfig(
        profile=args.profile,
        seed=args.seed,
        node_budget=node_budget,
        long_node_budget=node_budget,
        time_budget=args.time_budget,
        k_steps=args.k_steps,
        d_model=args.d_model,
        temperature=args.temperature,
        log_level=args.log_level,
        max_workers=args.workers,
        **extra,
    )


def model_with_overrides(model: ModelFile, args: argparse.Namespace) -> ModelFile:
    changes = {}
    if args.k_steps is not None:
        changes['k_steps'] = args.k_steps
    if args.temperature is not None:
        changes['temperature'] = args.temperature
    if changes:
        model.policy = dataclasses.replace(model.policy, **changes)
    return model


def require_model(args: argparse.Namespace) -> Optional[ModelFile]:
    if args.selector != 'policy':
        return None
    if not args.model:
        raise ModelError("--selector policy needs --model")
    return model_with_overrides(load_model(args.model), args)


def cmd_gen_tsp(args, config: SolverConfig) -> None:
    rng = np.random.default_rng(config.seed)
    out = Path(args.out or 'instances')
    for k in range(args.count):
        tsp = gen_tsp(args.cities, rng, name=f"tsp{args.cities}_{k:03d}")
        save_instance(NamedInstance(name=tsp.name, program=encode_mtz(tsp), tsp=tsp),
                      out / f"{tsp.name}.json")
    log_success("Main", f"Wrote {args.count} TSP instances to {out}", "🗺️")


def cmd_gen_uflp(args, config: SolverConfig) -> None:
    rng = np.random.default_rng(config.seed)
    cfg = config.uflp
    n = args.facilities or cfg.n_facilities
    m = args.clients or cfg.m_clients
    out = Path(args.out or 'instances')
    for k in range(args.count):
        name = f"uflp{n}x{m}_{k:03d}"
        save_instance(NamedInstance(name=name, program=gen_uflp_kochetov(n, m, rng, cfg)),
                      out / f"{name}.json")
    log_success("Main", f"Wrote {args.count} facility location instances to {out}", "🏭")


def cmd_curate(args, config: SolverConfig) -> int:
    rng = np.random.default_rng(config.seed)
    out = Path(args.out or 'pool')
    batches = candidate_batches(config.curation, rng, max_batches=args.max_batches)
    try:
        pool, report = curate(batches, config.curation, config.tolerances, config.max_workers)
        status = 0
    except PoolExhausted as e:
        log_error("Main", str(e))
        pool, report = e.pool, e.report
        status = 1
    for instance in pool:
        save_instance(instance, out / f"{instance.name}.json")
    save_curation_report(report, out / "curation_report.csv")
    log_success("Main", f"Wrote {len(pool)} curated instances to {out}", "🎯")
    return status


def cmd_train(args, config: SolverConfig) -> None:
    pool = load_instances(args.pool)
    train_cfg = config.train_config(long=args.long)
    if args.iterations is not None:
        train_cfg = dataclasses.replace(train_cfg, iterations=args.iterations)
    cache = BaselineCache(config.baseline_cache_file)
    result = train(pool, config.policy, train_cfg, cache=cache, curve_path=args.curve,
                   tolerances=config.tolerances)
    if config.baseline_cache_file:
        cache.save()
    model = ModelFile(params=result.best_params, stats=result.stats, policy=config.policy,
                      train_config=config.as_dict(), seed=config.seed)
    save_model(model, args.out or args.model or 'model.json')


def cmd_solve(args, config: SolverConfig) -> None:
    [instance] = load_instances([args.instance])
    budget = config.long_budget if args.long else config.budget
    schedule = config.long_schedule if args.long else config.schedule
    model = require_model(args)
    if model is not None:
        selector = PolicySelector(model.params, model.stats, model.policy, schedule,
                                  rng=np.random.default_rng(config.seed), greedy=args.greedy)
    else:
        selector = SELECTORS[args.selector]
    result = solve(instance.program, selector, budget, config.tolerances)
    payload = {"instance": instance.name, "selector": args.selector, **result.to_dict()}
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding='utf-8')
    else:
        print(text)
    log_info("Main", f"{instance.name}: {result.terminated_by.value}, gap {result.final_gap:.4g}, "
             f"{result.nodes_processed} nodes", "🌳")


def cmd_bench(args, config: SolverConfig) -> None:
    instances = load_instances(args.instances)
    model = require_model(args)
    budget = config.long_budget if args.long else config.budget
    schedule = config.long_schedule if args.long else config.schedule
    extra = {"selector": args.selector, "node_budget": budget.max_nodes, "seed": config.seed}
    try:
        outcome = run_bench(instances, model, budget, schedule, seed=config.seed,
                            selector=args.selector, greedy=args.greedy,
                            max_workers=config.max_workers,
                            min_baseline_nodes=config.min_baseline_nodes,
                            gap_shift=config.gap_shift, time_shift=config.time_shift,
                            tolerances=config.tolerances)
    except EmptyAfterFilter as e:
        outcome = getattr(e, 'outcome', None)
        if outcome is not None:
            write_outputs(args, outcome, extra)
        raise
    write_outputs(args, outcome, extra)


def write_outputs(args, outcome, extra) -> None:
    if args.out:
        write_bench_csv(outcome.rows, args.out)
    if args.summary:
        write_summary_json(outcome, args.summary, extra)
    elif outcome.summary is not None:
        print(json.dumps(summary_payload(outcome, extra), indent=2, sort_keys=True))
    if args.report:
        ReportBuilder().write_report(outcome.rows, outcome.summary, args.report,
                                     context={**extra, "skipped": outcome.skipped})


def cmd_grad_check(args, config: SolverConfig) -> int:
    # Toy scale unless the flags say otherwise
    policy = dataclasses.replace(config.policy, d_model=args.d_model or 16, k_steps=(
        args.k_steps if args.k_steps is not None else 2))
    report = check_loss_gradients(policy, config.train, seed=config.seed, tolerance=args.tolerance)
    print(report.summary())
    return 0 if report.passed else 1


COMMANDS = {
    'gen-tsp': cmd_gen_tsp,
    'gen-uflp': cmd_gen_uflp,
    'curate': cmd_curate,
    'train': cmd_train,
    'solve': cmd_solve,
    'bench': cmd_bench,
    'grad-check': cmd_grad_check,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)

    try:
        config = make_config(args)
        logger.set_level(config.log_level)
        status = COMMANDS[args.command](args, config) or 0
        print_run_summary()
        return status
    except (EmptyAfterFilter, ModelError) as e:
        log_error("Main", f"{args.command} failed: {e}")
        return 2
    except (SolverError, ValueError, OSError) as e:
        log_error("Main", f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
