#!/usr/bin/env python3
"""
PPO Trainer
Rolls the policy-driven solver out on curated instances, scores each
episode against the classical baseline and updates the tree policy with
the clipped surrogate objective
"""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baseline_cache import BaselineCache, BaselineEntry
from .bnb_engine import BnbTree, Budget, solve
from .errors import ConfigError, EpisodeAborted, InsufficientData, NonFiniteLoss
from .features import CLAMP, STD_FLOOR, FeatureStats, clamp, fit_stats, raw_features
from .instance_factory import NamedInstance
from .lp_solver import DEFAULT_TOLERANCES, LinearProgram, LpTolerances
from .nn_core import AdamW, GradCheckReport, ParameterSet, Tensor, grad_check, no_grad
from .performance_logger import (
    log_info, log_phase_complete, log_phase_start, log_warn, time_operation, update_stats,
)
from .selectors import ScheduleConfig, best_first, hybrid_plunge
from .tree_policy import (
    PolicyConfig, PolicySelector, PolicyStep, TreeSnapshot, forward, init_parameters,
)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs_per_batch: int = 4
    minibatch_size: int = 64
    rollouts_per_iteration: int = 8
    entropy_bonus: float = 0.01
    value_loss_weight: float = 0.5
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    max_grad_norm: float = 0.5
    iterations: int = 200
    budget: Budget = Budget()
    schedule: ScheduleConfig = ScheduleConfig()
    seed: int = 0
    max_workers: int = 1
    feature_clamp: float = CLAMP
    feature_std_floor: float = STD_FLOOR

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip <= 0:
            raise ConfigError(f"clip must be positive, got {self.clip}")
        if self.epochs_per_batch <= 0 or self.minibatch_size <= 0 or self.rollouts_per_iteration <= 0:
            raise ConfigError("epochs, minibatch size and rollouts per iteration must be positive")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.feature_clamp <= 0 or self.feature_std_floor <= 0:
            raise ConfigError("feature clamp and std floor must be positive")


# =============================================================================
# REWARD AND BASELINE
# =============================================================================

def compute_reward(gap_selector: float, gap_baseline: float) -> float:
    """-(gap_selector / gap_baseline - 1) clipped to [-1, 1], with 0/0 read as ratio 0"""
    if gap_baseline == 0:
        ratio = 0.0 if gap_selector == 0 else math.inf
    elif math.isinf(gap_baseline):
        ratio = 1.0 if math.isinf(gap_selector) else 0.0
    else:
        ratio = gap_selector / gap_baseline
    return float(np.clip(-(ratio - 1.0), -1.0, 1.0))


def _baseline_entry(program: LinearProgram, budget: Budget, tolerances: LpTolerances) -> BaselineEntry:
    result = solve(program, hybrid_plunge, budget, tolerances)
    return BaselineEntry(gap=result.final_gap, nodes=result.nodes_processed)


def baseline_gap(program: LinearProgram, budget: Budget, cache: Optional[BaselineCache] = None,
                 tolerances: LpTolerances = DEFAULT_TOLERANCES) -> float:
    """Gap of hybrid_plunge on the same instance and budget"""
    if cache is None:
        return _baseline_entry(program, budget, tolerances).gap
    return cache.get_or_compute(program, budget, lambda: _baseline_entry(program, budget, tolerances)).gap


# =============================================================================
# ROLLOUTS
# =============================================================================

@dataclass
class Trajectory:
    instance: str
    steps: List[PolicyStep]
    reward: float
    gap: float
    baseline_gap: float
    nodes: int

    def __len__(self) -> int:
        return len(self.steps)


def rollout(instance: NamedInstance, params: ParameterSet, stats: FeatureStats,
            policy_cfg: PolicyConfig, train_cfg: TrainConfig, rng: np.random.Generator,
            cache: Optional[BaselineCache] = None,
            tolerances: LpTolerances = DEFAULT_TOLERANCES) -> Trajectory:
    """
    One episode with the learned selector; the only reward is the terminal one.

    Raises:
        EpisodeAborted: a node LP failed numerically during the episode
    """
    base = baseline_gap(instance.program, train_cfg.budget, cache, tolerances)
    selector = PolicySelector(params, stats, policy_cfg, train_cfg.schedule, rng=rng, record=True)
    result = solve(instance.program, selector, train_cfg.budget, tolerances)
    if result.numerical_failures:
        raise EpisodeAborted(f"{instance.name}: {result.numerical_failures} numerical failures")
    return Trajectory(
        instance=instance.name,
        steps=selector.steps,
        reward=compute_reward(result.final_gap, base),
        gap=result.final_gap,
        baseline_gap=base,
        nodes=result.nodes_processed,
    )


def gae_advantages(trajectory: Trajectory, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Raw GAE advantages and returns for a terminal-reward episode"""
    values = np.array([s.value for s in trajectory.steps], dtype=float)
    steps = len(values)
    rewards = np.zeros(steps)
    if steps:
        rewards[-1] = trajectory.reward
    advantages = np.zeros(steps)
    running = 0.0
    for t in reversed(range(steps)):
        next_value = values[t + 1] if t + 1 < steps else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    if advantages.size == 0:
        return advantages
    centered = advantages - advantages.mean()
    std = advantages.std()
    return centered / std if std > 1e-8 else centered


@dataclass
class Sample:
    step: PolicyStep
    advantage: float
    ret: float


def build_samples(batch: Sequence[Trajectory], cfg: TrainConfig) -> List[Sample]:
    steps: List[PolicyStep] = []
    advantages: List[np.ndarray] = []
    returns: List[np.ndarray] = []
    for trajectory in batch:
        adv, ret = gae_advantages(trajectory, cfg.gamma, cfg.gae_lambda)
        steps.extend(trajectory.steps)
        advantages.append(adv)
        returns.append(ret)
    if not steps:
        return []
    adv = normalize_advantages(np.concatenate(advantages))
    ret = np.concatenate(returns)
    return [Sample(step=s, advantage=float(a), ret=float(r)) for s, a, r in zip(steps, adv, ret)]


# =============================================================================
# UPDATE
# =============================================================================

@dataclass
class LossReport:
    policy_loss: float = math.nan
    value_loss: float = math.nan
    entropy: float = math.nan
    clip_fraction: float = math.nan
    grad_norm: float = math.nan


def ppo_loss(samples: Sequence[Sample], params: ParameterSet, policy_cfg: PolicyConfig,
             cfg: TrainConfig) -> Tuple[Tensor, LossReport]:
    """Mean over samples of clipped surrogate + weighted value error - entropy bonus"""
    policy_terms: List[Tensor] = []
    value_terms: List[Tensor] = []
    entropy_terms: List[Tensor] = []
    clipped = 0
    for sample in samples:
        output = forward(sample.step.snapshot, params, policy_cfg)
        new_log_prob = output.log_probs.take([sample.step.action]).sum()
        ratio = (new_log_prob - sample.step.log_prob).exp()
        surrogate = (ratio * sample.advantage).minimum(
            ratio.clip(1.0 - cfg.clip, 1.0 + cfg.clip) * sample.advantage)
        policy_terms.append(-surrogate)
        error = output.value - sample.ret
        value_terms.append(error * error)
        entropy_terms.append(-(output.log_probs.exp() * output.log_probs).sum())
        if abs(ratio.item() - 1.0) > cfg.clip:
            clipped += 1

    count = float(len(samples))
    policy_loss = _total(policy_terms) / count
    value_loss = _total(value_terms) / count
    entropy = _total(entropy_terms) / count
    loss = policy_loss + cfg.value_loss_weight * value_loss - cfg.entropy_bonus * entropy
    report = LossReport(policy_loss=policy_loss.item(), value_loss=value_loss.item(),
                        entropy=entropy.item(), clip_fraction=clipped / count)
    return loss, report


def _total(terms: List[Tensor]) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def ppo_update(batch: Sequence[Trajectory], params: ParameterSet, optimizer: AdamW,
               policy_cfg: PolicyConfig, cfg: TrainConfig, rng: np.random.Generator) -> LossReport:
    """
    Several epochs of minibatch PPO over one batch of trajectories.

    Raises:
        NonFiniteLoss: a loss or an updated parameter went non-finite;
            parameters and optimizer state are restored first
    """
    samples = build_samples(batch, cfg)
    if not samples:
        raise InsufficientData("batch has no policy steps")

    saved_params = params.arrays()
    saved_optimizer = optimizer.state_dict()
    reports: List[LossReport] = []
    for _ in range(cfg.epochs_per_batch):
        order = rng.permutation(len(samples))
        for start in range(0, len(samples), cfg.minibatch_size):
            minibatch = [samples[i] for i in order[start:start + cfg.minibatch_size]]
            params.zero_grad()
            loss, report = ppo_loss(minibatch, params, policy_cfg, cfg)
            if not math.isfinite(loss.item()):
                params.load_arrays(saved_params)
                optimizer.load_state_dict(saved_optimizer)
                raise NonFiniteLoss(f"loss is {loss.item()}")
            loss.backward()
            report.grad_norm = params.clip_grad_norm(cfg.max_grad_norm)
            optimizer.step()
            if not params.all_finite():
                params.load_arrays(saved_params)
                optimizer.load_state_dict(saved_optimizer)
                raise NonFiniteLoss("parameters became non-finite")
            reports.append(report)
    params.zero_grad()

    return LossReport(
        policy_loss=float(np.mean([r.policy_loss for r in reports])),
        value_loss=float(np.mean([r.value_loss for r in reports])),
        entropy=float(np.mean([r.entropy for r in reports])),
        clip_fraction=float(np.mean([r.clip_fraction for r in reports])),
        grad_norm=float(np.mean([r.grad_norm for r in reports])),
    )


# =============================================================================
# TRAINING LOOP
# =============================================================================

def warmup_feature_stats(pool: Sequence[NamedInstance], budget: Budget,
                         tolerances: LpTolerances = DEFAULT_TOLERANCES, clamp_limit: float = CLAMP,
                         std_floor: float = STD_FLOOR) -> FeatureStats:
    """Fit standardization over every node processed by best-first on the pool"""
    rows: List[np.ndarray] = []

    def collect(tree: BnbTree, node_id: int):
        rows.append(clamp(raw_features(tree.nodes[node_id], tree), clamp_limit))

    with time_operation("feature_warmup"):
        for instance in pool:
            solve(instance.program, best_first, budget, tolerances, on_step=collect)
    if len(rows) < 2:
        raise InsufficientData(f"warm-up visited only {len(rows)} nodes")
    log_info("PpoTrainer", f"Fitted feature statistics over {len(rows)} nodes", "📐")
    return fit_stats(rows, clamp_limit, std_floor)


def _child_rngs(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    seeds = rng.integers(0, 2**63 - 1, size=count)
    return [np.random.default_rng(int(s)) for s in seeds]


def collect_rollouts(instances: Sequence[NamedInstance], params: ParameterSet, stats: FeatureStats,
                     policy_cfg: PolicyConfig, cfg: TrainConfig, rng: np.random.Generator,
                     cache: Optional[BaselineCache] = None,
                     tolerances: LpTolerances = DEFAULT_TOLERANCES) -> List[Trajectory]:
    """Rollouts against a frozen parameter set; aborted episodes are dropped"""
    rngs = _child_rngs(rng, len(instances))

    def run(k: int) -> Optional[Trajectory]:
        try:
            return rollout(instances[k], params, stats, policy_cfg, cfg, rngs[k], cache, tolerances)
        except EpisodeAborted as e:
            log_warn("PpoTrainer", f"Dropped episode: {e}")
            update_stats('training', episodes_dropped=1)
            return None

    with ThreadPoolExecutor(max_workers=max(1, cfg.max_workers)) as executor:
        results = list(executor.map(run, range(len(instances))))
    trajectories = [t for t in results if t is not None]
    update_stats('training', episodes=len(trajectories), parallel_workers=cfg.max_workers)
    return trajectories


def evaluate(pool: Sequence[NamedInstance], params: ParameterSet, stats: FeatureStats,
             policy_cfg: PolicyConfig, cfg: TrainConfig, cache: Optional[BaselineCache] = None,
             greedy: bool = False, seed: int = 0,
             tolerances: LpTolerances = DEFAULT_TOLERANCES) -> float:
    """Mean terminal reward over the pool, one episode per instance"""
    rng = np.random.default_rng(seed)
    rewards: List[float] = []
    for instance in pool:
        base = baseline_gap(instance.program, cfg.budget, cache, tolerances)
        selector = PolicySelector(params, stats, policy_cfg, cfg.schedule, rng=rng, greedy=greedy)
        result = solve(instance.program, selector, cfg.budget, tolerances)
        if result.numerical_failures:
            continue
        rewards.append(compute_reward(result.final_gap, base))
    return float(np.mean(rewards)) if rewards else math.nan


@dataclass
class CurvePoint:
    iteration: int
    mean_reward: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


CURVE_FIELDS = ("iteration", "mean_reward", "policy_loss", "value_loss", "entropy", "clip_fraction")


def _format(value: float) -> str:
    return f"{value:.6f}" if math.isfinite(value) else str(value)


@dataclass
class TrainResult:
    params: ParameterSet
    best_params: ParameterSet
    stats: FeatureStats
    curve: List[CurvePoint] = field(default_factory=list)
    best_reward: float = -math.inf


def train(pool: Sequence[NamedInstance], policy_cfg: PolicyConfig, cfg: TrainConfig,
          params: Optional[ParameterSet] = None, stats: Optional[FeatureStats] = None,
          cache: Optional[BaselineCache] = None, curve_path: Optional[str] = None,
          tolerances: LpTolerances = DEFAULT_TOLERANCES) -> TrainResult:
    """
    Alternate rollout batches and PPO updates for cfg.iterations iterations.

    The curve gets one point per iteration with the mean reward of that
    iteration's rollouts; the best-by-mean-reward parameters are kept.
    """
    if not pool:
        raise InsufficientData("training pool is empty")
    rng = np.random.default_rng(cfg.seed)
    params = params if params is not None else init_parameters(policy_cfg, rng)
    stats = stats if stats is not None else warmup_feature_stats(
        pool, cfg.budget, tolerances, cfg.feature_clamp, cfg.feature_std_floor)
    optimizer = AdamW(params, lr=cfg.learning_rate, betas=cfg.betas, eps=cfg.adam_eps,
                      weight_decay=cfg.weight_decay)
    result = TrainResult(params=params, best_params=params.copy(), stats=stats)

    curve_file = None
    writer = None
    if curve_path:
        Path(curve_path).parent.mkdir(parents=True, exist_ok=True)
        curve_file = open(curve_path, 'w', encoding='utf-8', newline='')
        writer = csv.writer(curve_file)
        writer.writerow(CURVE_FIELDS)

    started = time.perf_counter()
    log_phase_start("PpoTrainer", f"training ({cfg.iterations} iterations, {len(pool)} instances)")
    try:
        with time_operation("train"):
            for iteration in range(cfg.iterations):
                picks = rng.integers(0, len(pool), size=cfg.rollouts_per_iteration)
                batch = collect_rollouts([pool[int(k)] for k in picks], params, stats,
                                         policy_cfg, cfg, rng, cache, tolerances)
                mean_reward = float(np.mean([t.reward for t in batch])) if batch else math.nan
                if batch and mean_reward > result.best_reward:
                    result.best_reward = mean_reward
                    result.best_params = params.copy()

                report = LossReport()
                if batch:
                    try:
                        report = ppo_update(batch, params, optimizer, policy_cfg, cfg, rng)
                    except (NonFiniteLoss, InsufficientData) as e:
                        log_warn("PpoTrainer", f"Iteration {iteration}: update skipped ({e})")

                point = CurvePoint(iteration=iteration, mean_reward=mean_reward,
                                   policy_loss=report.policy_loss, value_loss=report.value_loss,
                                   entropy=report.entropy, clip_fraction=report.clip_fraction)
                result.curve.append(point)
                if writer is not None:
                    writer.writerow([iteration] + [_format(getattr(point, f)) for f in CURVE_FIELDS[1:]])
                    curve_file.flush()
                log_info("PpoTrainer", f"Iteration {iteration}: mean reward {_format(mean_reward)}", "📈",
                         stats={"episodes": len(batch), "entropy": report.entropy,
                                "clip_fraction": report.clip_fraction})
    finally:
        if curve_file is not None:
            curve_file.close()

    log_phase_complete("PpoTrainer", "training", time.perf_counter() - started,
                       best_reward=result.best_reward)
    return result


# =============================================================================
# GRADIENT CHECK
# =============================================================================

def toy_samples(policy_cfg: PolicyConfig, params: ParameterSet, rng: np.random.Generator,
                log_prob_offset: float = 0.05) -> List[Sample]:
    """
    Frozen batch on a root with two open children, one sample per child.

    Stored log-probs sit log_prob_offset below the current ones so every
    ratio is off 1 but inside the clip range.
    """
    features = rng.standard_normal((3, policy_cfg.feature_dim))
    snapshot = TreeSnapshot.from_arrays(features, (np.array([1, -1, -1]), np.array([2, -1, -1])),
                                        [None, 0, 0], (1, 2))
    with no_grad():
        output = forward(snapshot, params, policy_cfg)
    samples = []
    for action, advantage, ret in ((0, 1.0, 0.3), (1, -0.7, -0.2)):
        step = PolicyStep(snapshot=snapshot, action=action, node_id=snapshot.candidates[action],
                          log_prob=float(output.log_probs.data[action]) - log_prob_offset,
                          value=output.value.item())
        samples.append(Sample(step=step, advantage=advantage, ret=ret))
    return samples


def generic_parameters(policy_cfg: PolicyConfig, rng: np.random.Generator) -> ParameterSet:
    """Initialized parameters moved off the zero/identity starting point"""
    params = init_parameters(policy_cfg, rng)
    for _, tensor in params.items():
        tensor.data = tensor.data + 0.1 * rng.standard_normal(tensor.shape)
    params["gnn.alpha"].data = np.array([0.5])
    return params


def check_loss_gradients(policy_cfg: PolicyConfig, cfg: TrainConfig = TrainConfig(), seed: int = 0,
                         tolerance: float = 1e-4, max_entries: Optional[int] = 64) -> GradCheckReport:
    """Central-difference check of the full PPO loss on the toy batch"""
    rng = np.random.default_rng(seed)
    params = generic_parameters(policy_cfg, rng)
    samples = toy_samples(policy_cfg, params, rng)
    report = grad_check(lambda: ppo_loss(samples, params, policy_cfg, cfg)[0], params,
                        tolerance=tolerance, max_entries=max_entries, rng=rng)
    log_info("PpoTrainer", f"Gradient check {'passed' if report.passed else 'failed'}", "🧮",
             stats={"worst": report.worst, "error": report.worst_error})
    return report
