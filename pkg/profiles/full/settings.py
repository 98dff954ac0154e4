#!/usr/bin/env python3
"""
FULL-SCALE PROFILE
==================

Full-width model, strict curation thresholds and a large pool for the
long training regime, 100 x 100 facility-location instances. Expect
hours, not minutes.
"""

# =============================================================================
# MODEL
# =============================================================================

D_MODEL = 512
K_STEPS = 3

# =============================================================================
# CURATION
# =============================================================================

MIN_NODES = 100
CURATION_BUDGET = 1000
TARGET_COUNT = 200
TSP_CITIES = (10, 14)

# =============================================================================
# ENGINE BUDGETS AND SCHEDULE
# =============================================================================

NODE_BUDGET = 1000
LONG_NODE_BUDGET = 2600
DENSE_LIMIT = 250
LONG_DENSE_LIMIT = 650

# =============================================================================
# FACILITY LOCATION
# =============================================================================

UFLP_FACILITIES = 100
UFLP_CLIENTS = 100
