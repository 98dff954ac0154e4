#!/usr/bin/env python3
"""
Exception hierarchy shared by the solver, the policy and the harness
"""


class SolverError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(SolverError):
    """A configuration value is out of its valid range"""


class NumericalFailure(SolverError):
    """The simplex lost numerical control even after a perturbed retry"""


class UnboundedRelaxation(SolverError):
    """A node relaxation is unbounded, so the MILP has no finite optimum"""


class ShapeMismatch(SolverError, ValueError):
    """Array shapes are incompatible for the requested operation"""


class EmptyCandidates(SolverError):
    """The candidate set handed to the policy is empty"""


class NotACandidate(SolverError, KeyError):
    """A node id is not part of the current candidate set"""


class InsufficientData(SolverError):
    """Too few feature rows to estimate statistics"""


class NonFiniteLoss(SolverError):
    """A PPO loss evaluated to NaN or infinity"""


class EpisodeAborted(SolverError):
    """A rollout hit a numerical failure and must be excluded"""


class PoolExhausted(SolverError):
    """The candidate stream ran out before the pool was filled"""


class EmptyAfterFilter(SolverError):
    """No benchmark rows survive the minimum-node filter"""


class ModelError(SolverError):
    """Base class for model file problems"""


class CorruptModel(ModelError):
    """The model file cannot be parsed or is missing arrays"""


class VersionMismatch(ModelError):
    """The model file uses an unsupported format version"""
