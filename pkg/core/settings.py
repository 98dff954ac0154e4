#!/usr/bin/env python3
"""
TREESELECT SOLVER CONFIGURATION
===============================

This is the MAIN configuration file - every tunable of the solver, the
policy and the trainer lives here. Profiles under profiles/<name>/settings.py
override any subset of these names.
"""


# =============================================================================
# LP TOLERANCES
# =============================================================================

FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6
PIVOT_TOL = 1e-10
OPTIMALITY_TOL = 1e-9

# Simplex iteration cap per attempt; an attempt that hits it is retried
# perturbed, then reported as a NumericalFailure
MAX_LP_ITERATIONS = 50_000

# Rebuild the basis inverse from scratch every N pivots
REFACTOR_EVERY = 50

# Consecutive degenerate pivots before switching to Bland's rule
DEGENERATE_SWITCH = 20

# Reuse the parent's basis and run the dual simplex after branching
WARM_START = True

# =============================================================================
# BRANCH-AND-BOUND BUDGETS
# =============================================================================

# Node-budget analogue of a 45s run
NODE_BUDGET = 400

# Node-budget analogue of a 5min run
LONG_NODE_BUDGET = 1300

# Wall-clock budget in seconds (None = unlimited, keeps runs deterministic)
TIME_BUDGET = None

# =============================================================================
# POLICY SCHEDULE
# =============================================================================

DENSE_LIMIT = 250
SPARSE_LIMIT = 1000
SPARSE_STRIDE = 10

# Dense limit used together with LONG_NODE_BUDGET
LONG_DENSE_LIMIT = 650

# =============================================================================
# MODEL
# =============================================================================

FEATURE_DIM = 19
D_MODEL = 128
K_STEPS = 3
LEAKY_SLOPE = 0.01
WEIGHT_HEAD_INIT_SCALE = 1e-4
VALUE_HEAD_INIT_SCALE = 1e-2

# "path_mean" mirrors the path weights, "subtree" is the literal recursion
Q_AGGREGATION = "path_mean"

TEMPERATURE = 1.0

FEATURE_CLAMP = 10.0
FEATURE_STD_FLOOR = 1e-6

# =============================================================================
# PPO
# =============================================================================

GAMMA = 0.99
GAE_LAMBDA = 0.95
CLIP = 0.2
EPOCHS_PER_BATCH = 4
MINIBATCH_SIZE = 64
ROLLOUTS_PER_ITERATION = 8
ENTROPY_BONUS = 0.01
VALUE_LOSS_WEIGHT = 0.5
LEARNING_RATE = 3e-4
WEIGHT_DECAY = 0.01
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
MAX_GRAD_NORM = 0.5
TRAIN_ITERATIONS = 200
SEED = 0

# =============================================================================
# INSTANCE CURATION
# =============================================================================

MIN_NODES = 30
CURATION_BUDGET = 300
MAX_GAP = 1.0
TARGET_COUNT = 20
BATCH_SIZE = 5
MUTATION_SIGMA = 0.2
TSP_CITIES = (8, 10)

# =============================================================================
# UFLP GENERATOR
# =============================================================================

UFLP_FACILITIES = 100
UFLP_CLIENTS = 100
OPENING_COST = 3000.0
CHEAP_CONNECTIONS = 10
CHEAP_COST_MAX = 4
EXPENSIVE_COST = 3000.0

# =============================================================================
# BENCHMARK
# =============================================================================

MIN_BASELINE_NODES = 5
GAP_SHIFT = 1.0
TIME_SHIFT = 10.0

# =============================================================================
# RUNTIME (usually don't need to change)
# =============================================================================

# Worker threads for per-instance parallel work (1 = sequential)
MAX_WORKERS = 1

# DEBUG, INFO, WARN, ERROR
LOG_LEVEL = "INFO"

# Baseline gaps survive between runs when set to a path
BASELINE_CACHE_FILE = None


def get_settings_dict():
    """Get all configuration as a dictionary"""
    return {
        name: value
        for name, value in globals().items()
        if name.isupper()
    }


if __name__ == "__main__":
    import json
    print(json.dumps(get_settings_dict(), indent=2, default=str))
