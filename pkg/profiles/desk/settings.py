#!/usr/bin/env python3
"""
DESK PROFILE
============

Small enough for a laptop and the test suite: narrow model, short
training, small facility-location instances. Anything not set here
comes from core/settings.py.
"""

# =============================================================================
# MODEL
# =============================================================================

D_MODEL = 64
K_STEPS = 2

# =============================================================================
# TRAINING
# =============================================================================

TRAIN_ITERATIONS = 200
ROLLOUTS_PER_ITERATION = 8
MINIBATCH_SIZE = 64

# =============================================================================
# CURATION
# =============================================================================

MIN_NODES = 30
CURATION_BUDGET = 300
TARGET_COUNT = 20
TSP_CITIES = (8, 10)

# =============================================================================
# FACILITY LOCATION
# =============================================================================

UFLP_FACILITIES = 20
UFLP_CLIENTS = 20
