#!/usr/bin/env python3
"""
SOLVER CONFIG
=============

Reads core/settings.py, or a profile that overrides it, and hands out the
typed config objects every module takes. Command-line flags arrive as
keyword overrides named after the settings constants (lower case).
"""

from typing import Any, Dict, Optional

from .bnb_engine import Budget
from .errors import ConfigError
from .instance_factory import CurationConfig, UflpConfig
from .lp_solver import LpTolerances
from .ppo_trainer import TrainConfig
from .selectors import ScheduleConfig
from .tree_policy import PolicyConfig


class SolverConfig:
    def __init__(self, profile: Optional[str] = None, **overrides: Any):
        if profile:
            from .profile_loader import load_profile_settings
            self._settings = load_profile_settings(profile)
        else:
            from . import settings as core_settings
            self._settings = core_settings
        self.profile = profile
        self._overrides = {k.upper(): v for k, v in overrides.items() if v is not None}

        # Invalid values surface here rather than mid-run
        try:
            self.tolerances = self._build_tolerances()
            self.budget = self._build_budget(long=False)
            self.long_budget = self._build_budget(long=True)
            self.schedule = self._build_schedule(long=False)
            self.long_schedule = self._build_schedule(long=True)
            self.policy = self._build_policy()
            self.curation = self._build_curation()
            self.uflp = self._build_uflp()
            self.train = self._build_train(long=False)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e

    def get(self, name: str, default: Any = None) -> Any:
        """Override first, then the profile, then core/settings.py"""
        if name in self._overrides:
            return self._overrides[name]
        if hasattr(self._settings, name):
            return getattr(self._settings, name)
        from . import settings as core_settings
        return getattr(core_settings, name, default)

    @property
    def seed(self) -> int:
        return int(self.get('SEED', 0))

    @property
    def log_level(self) -> str:
        return str(self.get('LOG_LEVEL', "INFO"))

    @property
    def max_workers(self) -> int:
        return max(1, int(self.get('MAX_WORKERS', 1)))

    @property
    def baseline_cache_file(self) -> Optional[str]:
        return self.get('BASELINE_CACHE_FILE')

    @property
    def min_baseline_nodes(self) -> int:
        return int(self.get('MIN_BASELINE_NODES', 5))

    @property
    def gap_shift(self) -> float:
        return float(self.get('GAP_SHIFT', 1.0))

    @property
    def time_shift(self) -> float:
        return float(self.get('TIME_SHIFT', 10.0))

    def _build_tolerances(self) -> LpTolerances:
        return LpTolerances(
            feasibility=float(self.get('FEASIBILITY_TOL', 1e-7)),
            integrality=float(self.get('INTEGRALITY_TOL', 1e-6)),
            pivot=float(self.get('PIVOT_TOL', 1e-10)),
            optimality=float(self.get('OPTIMALITY_TOL', 1e-9)),
            max_iterations=int(self.get('MAX_LP_ITERATIONS', 50_000)),
            refactor_every=int(self.get('REFACTOR_EVERY', 50)),
            degenerate_switch=int(self.get('DEGENERATE_SWITCH', 20)),
            warm_start=bool(self.get('WARM_START', True)),
        )

    def _build_budget(self, long: bool) -> Budget:
        nodes = self.get('LONG_NODE_BUDGET', 1300) if long else self.get('NODE_BUDGET', 400)
        seconds = self.get('TIME_BUDGET')
        return Budget(max_nodes=int(nodes), max_seconds=None if seconds is None else float(seconds))

    def _build_schedule(self, long: bool) -> ScheduleConfig:
        dense = self.get('LONG_DENSE_LIMIT', 650) if long else self.get('DENSE_LIMIT', 250)
        sparse = int(self.get('SPARSE_LIMIT', 1000))
        return ScheduleConfig(
            dense_limit=int(dense),
            sparse_limit=max(sparse, int(dense)),
            sparse_stride=int(self.get('SPARSE_STRIDE', 10)),
        )

    def _build_policy(self) -> PolicyConfig:
        return PolicyConfig(
            d_model=int(self.get('D_MODEL', 128)),
            k_steps=int(self.get('K_STEPS', 3)),
            leaky_slope=float(self.get('LEAKY_SLOPE', 0.01)),
            weight_head_init_scale=float(self.get('WEIGHT_HEAD_INIT_SCALE', 1e-4)),
            value_head_init_scale=float(self.get('VALUE_HEAD_INIT_SCALE', 1e-2)),
            q_aggregation=str(self.get('Q_AGGREGATION', "path_mean")),
            temperature=float(self.get('TEMPERATURE', 1.0)),
            feature_dim=int(self.get('FEATURE_DIM', 19)),
        )

    def _build_curation(self) -> CurationConfig:
        cities = self.get('TSP_CITIES', (8, 10))
        return CurationConfig(
            min_nodes=int(self.get('MIN_NODES', 30)),
            budget=int(self.get('CURATION_BUDGET', 300)),
            max_gap=float(self.get('MAX_GAP', 1.0)),
            target_count=int(self.get('TARGET_COUNT', 20)),
            batch_size=int(self.get('BATCH_SIZE', 5)),
            mutation_sigma=float(self.get('MUTATION_SIGMA', 0.2)),
            cities=(int(cities[0]), int(cities[1])),
        )

    def _build_uflp(self) -> UflpConfig:
        return UflpConfig(
            n_facilities=int(self.get('UFLP_FACILITIES', 100)),
            m_clients=int(self.get('UFLP_CLIENTS', 100)),
            opening_cost=float(self.get('OPENING_COST', 3000.0)),
            cheap_connections=int(self.get('CHEAP_CONNECTIONS', 10)),
            cheap_cost_max=int(self.get('CHEAP_COST_MAX', 4)),
            expensive_cost=float(self.get('EXPENSIVE_COST', 3000.0)),
        )

    def _build_train(self, long: bool) -> TrainConfig:
        return TrainConfig(
            gamma=float(self.get('GAMMA', 0.99)),
            gae_lambda=float(self.get('GAE_LAMBDA', 0.95)),
            clip=float(self.get('CLIP', 0.2)),
            epochs_per_batch=int(self.get('EPOCHS_PER_BATCH', 4)),
            minibatch_size=int(self.get('MINIBATCH_SIZE', 64)),
            rollouts_per_iteration=int(self.get('ROLLOUTS_PER_ITERATION', 8)),
            entropy_bonus=float(self.get('ENTROPY_BONUS', 0.01)),
            value_loss_weight=float(self.get('VALUE_LOSS_WEIGHT', 0.5)),
            learning_rate=float(self.get('LEARNING_RATE', 3e-4)),
            weight_decay=float(self.get('WEIGHT_DECAY', 0.01)),
            betas=tuple(float(b) for b in self.get('ADAM_BETAS', (0.9, 0.999))),
            adam_eps=float(self.get('ADAM_EPS', 1e-8)),
            max_grad_norm=float(self.get('MAX_GRAD_NORM', 0.5)),
            iterations=int(self.get('TRAIN_ITERATIONS', 200)),
            budget=self.long_budget if long else self.budget,
            schedule=self.long_schedule if long else self.schedule,
            seed=self.seed,
            max_workers=self.max_workers,
            feature_clamp=float(self.get('FEATURE_CLAMP', 10.0)),
            feature_std_floor=float(self.get('FEATURE_STD_FLOOR', 1e-6)),
        )

    def train_config(self, long: bool = False) -> TrainConfig:
        return self._build_train(long) if long else self.train

    def as_dict(self) -> Dict[str, Any]:
        """Effective settings, for echoing into model files and logs"""
        from . import settings as core_settings
        names = [n for n in dir(core_settings) if n.isupper()]
        return {n: self.get(n) for n in names if isinstance(self.get(n), (int, float, str, bool, tuple, type(None)))}
