import csv
import math

import numpy as np
import pytest

from core.baseline_cache import BaselineCache
from core.bnb_engine import Budget
from core.errors import ConfigError, InsufficientData, NonFiniteLoss
from core.features import FEATURE_DIM, FeatureStats
from core.instance_factory import NamedInstance, encode_mtz, gen_tsp
from core.nn_core import AdamW
from core.selectors import ScheduleConfig
from core.tree_policy import PolicyConfig, PolicyStep, TreeSnapshot, forward, init_parameters
from core.ppo_trainer import (
    CURVE_FIELDS, Sample, TrainConfig, Trajectory, baseline_gap, build_samples, check_loss_gradients,
    collect_rollouts, compute_reward, evaluate, gae_advantages, generic_parameters,
    normalize_advantages, ppo_loss, ppo_update, rollout, toy_samples, train, warmup_feature_stats,
)

SMALL = PolicyConfig(d_model=8, k_steps=1)


def _tiny_pool(count: int, seed: int = 0, cities: int = 5):
    rng = np.random.default_rng(seed)
    pool = []
    for k in range(count):
        tsp = gen_tsp(cities, rng, name=f"tiny{k}")
        pool.append(NamedInstance(name=tsp.name, program=encode_mtz(tsp), tsp=tsp))
    return pool


def _fast_config(**overrides) -> TrainConfig:
    settings = dict(iterations=2, rollouts_per_iteration=2, epochs_per_batch=1, minibatch_size=16,
                    budget=Budget(max_nodes=20), seed=3)
    settings.update(overrides)
    return TrainConfig(**settings)


def _trajectory(values, reward: float) -> Trajectory:
    snapshot = TreeSnapshot.from_arrays(np.zeros((1, FEATURE_DIM)), ([-1], [-1]), [None], [0])
    steps = [PolicyStep(snapshot=snapshot, action=0, node_id=0, log_prob=0.0, value=v) for v in values]
    return Trajectory(instance="t", steps=steps, reward=reward, gap=0.0, baseline_gap=0.0, nodes=len(steps))


# =============================================================================
# REWARD
# =============================================================================

@pytest.mark.parametrize("selector_gap, baseline, expected", [
    (0.5, 1.0, 0.5),
    (0.0, 0.036, 1.0),
    (0.0, 0.0, 1.0),
    (8.573, 2.952, -1.0),
    (0.3, 0.3, 0.0),
    (0.2, 0.0, -1.0),
    (math.inf, math.inf, 0.0),
    (math.inf, 0.4, -1.0),
    (0.4, math.inf, 1.0),
])
def test_compute_reward(selector_gap, baseline, expected):
    assert compute_reward(selector_gap, baseline) == pytest.approx(expected)


def test_reward_stays_in_range():
    rng = np.random.default_rng(0)
    for a, b in rng.exponential(1.0, size=(200, 2)):
        assert -1.0 <= compute_reward(a, b) <= 1.0


def test_baseline_cache_is_consulted_once():
    program = _tiny_pool(1)[0].program
    cache = BaselineCache()
    budget = Budget(max_nodes=15)
    first = baseline_gap(program, budget, cache)
    second = baseline_gap(program, budget, cache)
    assert first == second
    assert (cache.misses, cache.hits) == (1, 1)


# =============================================================================
# ADVANTAGES
# =============================================================================

def test_single_step_advantage():
    advantages, returns = gae_advantages(_trajectory([0.0], 1.0), 0.99, 0.95)
    np.testing.assert_allclose(advantages, [1.0])
    np.testing.assert_allclose(returns, [1.0])


def test_undiscounted_advantage_telescopes():
    values = [0.2, 0.5, -0.1]
    advantages, _ = gae_advantages(_trajectory(values, 0.4), 1.0, 1.0)
    np.testing.assert_allclose(advantages, [0.4 - v for v in values])


def test_zero_rewards_and_values():
    advantages, returns = gae_advantages(_trajectory([0.0] * 4, 0.0), 0.99, 0.95)
    np.testing.assert_array_equal(advantages, np.zeros(4))
    np.testing.assert_array_equal(returns, np.zeros(4))


def test_advantages_are_normalized_per_batch():
    samples = build_samples([_trajectory([0.1, 0.3], 1.0), _trajectory([0.0], -1.0)], TrainConfig())
    adv = np.array([s.advantage for s in samples])
    assert len(samples) == 3
    assert adv.mean() == pytest.approx(0.0, abs=1e-12)
    assert adv.std() == pytest.approx(1.0)
    np.testing.assert_array_equal(normalize_advantages(np.array([2.0, 2.0])), [0.0, 0.0])


# =============================================================================
# LOSS AND UPDATE
# =============================================================================

def test_unchanged_parameters_never_clip():
    rng = np.random.default_rng(0)
    params = generic_parameters(SMALL, rng)
    samples = toy_samples(SMALL, params, rng, log_prob_offset=0.0)
    cfg = TrainConfig(value_loss_weight=0.0, entropy_bonus=0.0)
    _, report = ppo_loss(samples, params, SMALL, cfg)
    assert report.clip_fraction == 0.0
    assert report.policy_loss == pytest.approx(-(1.0 - 0.7) / 2)


def test_positive_advantage_raises_the_action_probability():
    rng = np.random.default_rng(1)
    params = generic_parameters(SMALL, rng)
    sample = toy_samples(SMALL, params, rng, log_prob_offset=0.0)[0]
    before = forward(sample.step.snapshot, params, SMALL).log_probs.data[sample.step.action]

    cfg = TrainConfig(value_loss_weight=0.0, entropy_bonus=0.0)
    loss, _ = ppo_loss([Sample(step=sample.step, advantage=1.0, ret=0.0)], params, SMALL, cfg)
    params.zero_grad()
    loss.backward()
    AdamW(params, lr=1e-5, weight_decay=0.0).step()

    after = forward(sample.step.snapshot, params, SMALL).log_probs.data[sample.step.action]
    assert after >= before


def test_full_loss_gradients_match_finite_differences():
    report = check_loss_gradients(PolicyConfig(d_model=16, k_steps=2))
    assert report.passed, report.summary()


def test_update_needs_policy_steps():
    params = init_parameters(SMALL, np.random.default_rng(0))
    optimizer = AdamW(params)
    empty = Trajectory(instance="t", steps=[], reward=1.0, gap=0.0, baseline_gap=0.0, nodes=0)
    with pytest.raises(InsufficientData):
        ppo_update([empty], params, optimizer, SMALL, TrainConfig(), np.random.default_rng(0))


def test_update_changes_parameters_and_reports_finite_losses():
    pool = _tiny_pool(2)
    cfg = _fast_config()
    params = init_parameters(SMALL, np.random.default_rng(0))
    stats = FeatureStats.identity()
    batch = collect_rollouts(pool, params, stats, SMALL, cfg, np.random.default_rng(0))
    assert len(batch) == 2
    assert all(-1.0 <= t.reward <= 1.0 for t in batch)

    before = params.arrays()
    report = ppo_update(batch, params, AdamW(params), SMALL, cfg, np.random.default_rng(0))
    assert all(math.isfinite(v) for v in (report.policy_loss, report.value_loss, report.entropy))
    assert 0.0 <= report.clip_fraction <= 1.0
    assert any(not np.array_equal(before[name], params[name].data) for name in before)


def test_rollout_records_every_policy_selection():
    instance = _tiny_pool(1)[0]
    cfg = _fast_config(schedule=ScheduleConfig(dense_limit=5, sparse_limit=15, sparse_stride=5))
    params = init_parameters(SMALL, np.random.default_rng(0))
    trajectory = rollout(instance, params, FeatureStats.identity(), SMALL, cfg, np.random.default_rng(2))
    expected = sum(1 for i in range(trajectory.nodes)
                   if i < 5 or (i < 15 and (i - 5) % 5 == 0))
    assert len(trajectory) == expected
    assert trajectory.instance == instance.name


# =============================================================================
# TRAINING LOOP
# =============================================================================

def test_training_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(iterations=-1)
    with pytest.raises(ConfigError):
        TrainConfig(minibatch_size=0)


def test_zero_iterations_returns_the_initial_parameters():
    cfg = _fast_config(iterations=0)
    result = train(_tiny_pool(2), SMALL, cfg, stats=FeatureStats.identity())
    expected = init_parameters(SMALL, np.random.default_rng(cfg.seed))
    for name, tensor in expected.items():
        np.testing.assert_array_equal(result.params[name].data, tensor.data)
        np.testing.assert_array_equal(result.best_params[name].data, tensor.data)
    assert result.curve == []


def test_curve_has_one_point_per_iteration(tmp_path):
    curve_path = tmp_path / "curve.csv"
    result = train(_tiny_pool(2), SMALL, _fast_config(iterations=2), stats=FeatureStats.identity(),
                   curve_path=str(curve_path))
    assert [p.iteration for p in result.curve] == [0, 1]
    with open(curve_path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CURVE_FIELDS
    assert len(rows) == 3


def test_empty_pool_is_rejected():
    with pytest.raises(InsufficientData):
        train([], SMALL, _fast_config())


def test_warmup_statistics_cover_every_dimension():
    stats = warmup_feature_stats(_tiny_pool(2), Budget(max_nodes=20))
    assert stats.mean.shape == (FEATURE_DIM,)
    assert np.all(stats.std > 0)


@pytest.mark.slow
def test_training_beats_the_uniform_start():
    pool = _tiny_pool(20, seed=11, cities=6)
    cfg = TrainConfig(iterations=15, rollouts_per_iteration=8, epochs_per_batch=2, minibatch_size=32,
                      learning_rate=1e-3, budget=Budget(max_nodes=40), seed=0)
    cache = BaselineCache()
    result = train(pool, SMALL, cfg, cache=cache)
    start = init_parameters(SMALL, np.random.default_rng(cfg.seed))
    before = evaluate(pool, start, result.stats, SMALL, cfg, cache=cache, seed=5)
    after = evaluate(pool, result.best_params, result.stats, SMALL, cfg, cache=cache, seed=5)
    assert after >= before


def test_same_seed_training_writes_identical_curves(tmp_path):
    pool = _tiny_pool(3)
    cfg = _fast_config(iterations=2, max_workers=3)
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    a = train(pool, SMALL, cfg, curve_path=str(first))
    b = train(pool, SMALL, cfg, curve_path=str(second))
    assert first.read_bytes() == second.read_bytes()
    for name, tensor in a.best_params.items():
        np.testing.assert_array_equal(tensor.data, b.best_params[name].data)


def test_non_finite_loss_leaves_parameters_untouched():
    cfg = _fast_config()
    params = init_parameters(SMALL, np.random.default_rng(0))
    batch = collect_rollouts(_tiny_pool(2), params, FeatureStats.identity(), SMALL, cfg, np.random.default_rng(0))
    params["value_head.b"].data[...] = np.nan
    before = params.arrays()
    with pytest.raises(NonFiniteLoss):
        ppo_update(batch, params, AdamW(params), SMALL, cfg, np.random.default_rng(0))
    for name, array in before.items():
        np.testing.assert_array_equal(params[name].data, array)


def test_warmup_uses_the_configured_clamp():
    stats = warmup_feature_stats(_tiny_pool(2), Budget(max_nodes=20), clamp_limit=0.5, std_floor=0.25)
    assert (stats.clamp_limit, stats.std_floor) == (0.5, 0.25)
    assert np.all(np.abs(stats.mean) <= 0.5)
    assert np.all(stats.std >= 0.25)


def test_training_carries_the_feature_settings_into_the_stats():
    cfg = _fast_config(iterations=0, feature_clamp=3.0, feature_std_floor=0.01)
    result = train(_tiny_pool(2), SMALL, cfg)
    assert (result.stats.clamp_limit, result.stats.std_floor) == (3.0, 0.01)
