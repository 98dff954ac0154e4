#!/usr/bin/env python3
"""
Tree policy
Embeds node features, passes messages from children to parents over the
live branch-and-bound tree and turns root-to-leaf path means into a
distribution over the open leaves, per-leaf values and a state value
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bnb_engine import BnbTree, NodeSelector, NodeStatus
from .errors import ConfigError, EmptyCandidates, NotACandidate, ShapeMismatch
from .features import FEATURE_DIM, FeatureStats, extract_many
from .nn_core import ParameterSet, Tensor, layernorm_noaffine, linear, log_softmax, no_grad
from .selectors import ScheduleConfig, hybrid_plunge, policy_schedule

# children in these states send the constant missing-child message
_MISSING = (NodeStatus.PRUNED, NodeStatus.INFEASIBLE, NodeStatus.DISCARDED)

AGGREGATIONS = ("path_mean", "subtree")


@dataclass(frozen=True)
class PolicyConfig:
    d_model: int = 128
    k_steps: int = 3
    leaky_slope: float = 0.01
    weight_head_init_scale: float = 1e-4
    value_head_init_scale: float = 1e-2
    q_aggregation: str = "path_mean"
    temperature: float = 1.0
    feature_dim: int = FEATURE_DIM

    def __post_init__(self):
        if self.d_model <= 0:
            raise ConfigError(f"d_model must be positive, got {self.d_model}")
        if self.k_steps < 0:
            raise ConfigError(f"k_steps must be >= 0, got {self.k_steps}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.q_aggregation not in AGGREGATIONS:
            raise ConfigError(f"q_aggregation must be one of {AGGREGATIONS}, got {self.q_aggregation!r}")


def init_parameters(cfg: PolicyConfig, rng: np.random.Generator) -> ParameterSet:
    """He-scaled dense layers, near-zero weight head, ReZero scalar at 0"""
    d, f = cfg.d_model, cfg.feature_dim
    params = ParameterSet()

    def dense(name: str, fan_in: int, fan_out: int):
        params.add(f"{name}.W", rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
        params.add(f"{name}.b", np.zeros(fan_out), decay=False)

    dense("embed.in", f, d)
    dense("embed.res1", d, d)
    dense("embed.res2", d, d)
    dense("gnn", d, d)
    params.add("gnn.alpha", np.zeros(1), decay=False)

    scale = cfg.weight_head_init_scale
    params.add("weight_head.W", rng.uniform(-scale, scale, (d, 1)))
    params.add("weight_head.b", np.zeros(1), decay=False)
    params.add("value_head.W", rng.standard_normal((d, 1)) * cfg.value_head_init_scale)
    params.add("value_head.b", np.zeros(1), decay=False)
    return params


# =============================================================================
# SNAPSHOT
# =============================================================================

@dataclass(frozen=True)
class TreeSnapshot:
    """
    Array view of the tree at one selection.

    Row i describes node id i. left/right hold child rows or -1 when the
    child is absent, pruned, infeasible or discarded. The path arrays list,
    for every candidate, the nodes from the root down to it with weight
    1/(depth+1); the subtree arrays do the same for the candidate's subtree.
    """
    features: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    candidates: Tuple[int, ...]
    path_nodes: np.ndarray
    path_owner: np.ndarray
    path_scale: np.ndarray
    subtree_nodes: np.ndarray
    subtree_owner: np.ndarray
    subtree_scale: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    def index_of(self, node_id: int) -> int:
        try:
            return self.candidates.index(node_id)
        except ValueError:
            raise NotACandidate(node_id) from None

    @classmethod
    def capture(cls, tree: BnbTree, stats: FeatureStats) -> "TreeSnapshot":
        candidates = tuple(tree.open_leaves)
        if not candidates:
            raise EmptyCandidates("no open leaves to snapshot")
        n = len(tree.nodes)
        features = extract_many(tree, list(range(n)), stats)
        return cls.from_arrays(features, _child_rows(tree), [tree.nodes[i].parent for i in range(n)],
                               candidates)

    @classmethod
    def from_arrays(cls, features: np.ndarray, children: Tuple[np.ndarray, np.ndarray],
                    parents: Sequence[Optional[int]], candidates: Sequence[int]) -> "TreeSnapshot":
        """Build from explicit arrays; parents[i] is None only for the root"""
        features = np.asarray(features, dtype=float)
        left, right = (np.asarray(c, dtype=int) for c in children)
        n = features.shape[0]
        if left.shape != (n,) or right.shape != (n,) or len(parents) != n:
            raise ShapeMismatch("child and parent arrays must have one entry per node")
        if not candidates:
            raise EmptyCandidates("snapshot needs at least one candidate")

        depth = np.zeros(n, dtype=int)
        for i in range(n):
            if parents[i] is not None:
                depth[i] = depth[parents[i]] + 1

        path_nodes: List[int] = []
        path_owner: List[int] = []
        path_scale: List[float] = []
        sub_nodes: List[int] = []
        sub_owner: List[int] = []
        sub_scale: List[float] = []
        for k, cand in enumerate(candidates):
            length = depth[cand] + 1
            current: Optional[int] = cand
            while current is not None:
                path_nodes.append(current)
                path_owner.append(k)
                path_scale.append(1.0 / length)
                current = parents[current]

            stack = [cand]
            while stack:
                node = stack.pop()
                sub_nodes.append(node)
                sub_owner.append(k)
                sub_scale.append(1.0 / length)
                stack.extend(c for c in (left[node], right[node]) if c >= 0)

        return cls(
            features=features, left=left, right=right, depth=depth,
            candidates=tuple(int(c) for c in candidates),
            path_nodes=np.asarray(path_nodes, dtype=int),
            path_owner=np.asarray(path_owner, dtype=int),
            path_scale=np.asarray(path_scale, dtype=float),
            subtree_nodes=np.asarray(sub_nodes, dtype=int),
            subtree_owner=np.asarray(sub_owner, dtype=int),
            subtree_scale=np.asarray(sub_scale, dtype=float),
        )


def _child_rows(tree: BnbTree) -> Tuple[np.ndarray, np.ndarray]:
    n = len(tree.nodes)
    left = np.full(n, -1, dtype=int)
    right = np.full(n, -1, dtype=int)
    for parent, (l_id, r_id) in tree.children.items():
        for target, child in ((left, l_id), (right, r_id)):
            if child is not None and tree.nodes[child].status not in _MISSING:
                target[parent] = child
    return left, right


# =============================================================================
# FORWARD PASS
# =============================================================================

def embed_nodes(features, params: ParameterSet, cfg: PolicyConfig) -> Tensor:
    """h_0: per-node embedding that ignores the rest of the tree"""
    x = Tensor.lift(features)
    if x.ndim != 2 or x.shape[1] != params["embed.in.W"].shape[0]:
        raise ShapeMismatch(f"expected (nodes, {params['embed.in.W'].shape[0]}) features, got {x.shape}")
    slope = cfg.leaky_slope
    h = linear(x, params["embed.in.W"], params["embed.in.b"]).leaky_relu(slope)
    h = h + linear(h, params["embed.res1.W"], params["embed.res1.b"]).leaky_relu(slope)
    h = h + linear(h, params["embed.res2.W"], params["embed.res2.b"]).leaky_relu(slope)
    return layernorm_noaffine(h)


def message_pass(h0: Tensor, snapshot: TreeSnapshot, params: ParameterSet,
                 cfg: PolicyConfig, k_steps: Optional[int] = None) -> Tensor:
    """K joint updates h += alpha * gnn(mean of the two child embeddings)"""
    steps = cfg.k_steps if k_steps is None else k_steps
    n, d = h0.shape
    # row n is the zero missing-child embedding
    left = np.where(snapshot.left >= 0, snapshot.left, n)
    right = np.where(snapshot.right >= 0, snapshot.right, n)
    missing = Tensor(np.zeros((1, d)))
    h = h0
    for _ in range(steps):
        padded = Tensor.concat([h, missing], axis=0)
        message = (padded.take(left) + padded.take(right)) * 0.5
        update = linear(message, params["gnn.W"], params["gnn.b"]).leaky_relu(cfg.leaky_slope)
        h = h + params["gnn.alpha"] * update
    return h


def _aggregate(per_node: Tensor, snapshot: TreeSnapshot, aggregation: str) -> Tensor:
    if aggregation == "subtree":
        nodes, owner, scale = snapshot.subtree_nodes, snapshot.subtree_owner, snapshot.subtree_scale
    else:
        nodes, owner, scale = snapshot.path_nodes, snapshot.path_owner, snapshot.path_scale
    return (per_node.take(nodes) * scale).segment_sum(owner, snapshot.num_candidates)


def path_weights(snapshot: TreeSnapshot, h_k: Tensor, params: ParameterSet) -> Tensor:
    """W'(n): mean weight-head output along the root-to-n path, one entry per candidate"""
    if snapshot.num_candidates == 0:
        raise EmptyCandidates("no candidates")
    per_node = linear(h_k, params["weight_head.W"], params["weight_head.b"]).reshape(-1)
    return _aggregate(per_node, snapshot, "path_mean")


def policy_distribution(weights: Tensor, temperature: float = 1.0) -> Tensor:
    """Log-probabilities softmax(W'/tau) over the candidates"""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    return log_softmax(Tensor.lift(weights) / temperature)


def state_value(snapshot: TreeSnapshot, h_k: Tensor, params: ParameterSet,
                aggregation: str = "path_mean") -> Tuple[Tensor, Tensor]:
    """(V, Q): Q per candidate from the value head on detached embeddings, V = max Q"""
    if snapshot.num_candidates == 0:
        raise EmptyCandidates("no candidates")
    per_node = linear(h_k.detach(), params["value_head.W"], params["value_head.b"]).reshape(-1)
    q = _aggregate(per_node, snapshot, aggregation)
    return q.max(), q


@dataclass
class PolicyOutput:
    candidates: Tuple[int, ...]
    log_probs: Tensor
    q: Tensor
    value: Tensor

    @property
    def distribution(self) -> "PolicyDistribution":
        return PolicyDistribution(self.candidates, self.log_probs.data.copy())


def forward(snapshot: TreeSnapshot, params: ParameterSet, cfg: PolicyConfig) -> PolicyOutput:
    h0 = embed_nodes(snapshot.features, params, cfg)
    h_k = message_pass(h0, snapshot, params, cfg)
    log_probs = policy_distribution(path_weights(snapshot, h_k, params), cfg.temperature)
    value, q = state_value(snapshot, h_k, params, cfg.q_aggregation)
    return PolicyOutput(candidates=snapshot.candidates, log_probs=log_probs, q=q, value=value)


@dataclass
class PolicyDistribution:
    candidates: Tuple[int, ...]
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def sample(self, rng: np.random.Generator) -> int:
        return self.candidates[self.sample_index(rng)]

    def sample_index(self, rng: np.random.Generator) -> int:
        cumulative = np.cumsum(self.probs)
        index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        return min(index, len(self.candidates) - 1)

    def argmax(self) -> int:
        return self.candidates[int(np.argmax(self.log_probs))]

    def log_prob(self, node_id: int) -> float:
        try:
            return float(self.log_probs[self.candidates.index(node_id)])
        except ValueError:
            raise NotACandidate(node_id) from None


def sample_action(dist: PolicyDistribution, rng: np.random.Generator) -> int:
    return dist.sample(rng)


def log_prob(dist: PolicyDistribution, node_id: int) -> float:
    return dist.log_prob(node_id)


# =============================================================================
# SELECTOR
# =============================================================================

@dataclass
class PolicyStep:
    """One policy consultation, enough to replay it during the update"""
    snapshot: TreeSnapshot
    action: int
    node_id: int
    log_prob: float
    value: float


class PolicySelector:
    """
    Node selector driven by the tree policy under the consultation schedule.

    Outside the schedule, or for every call after the policy stops being
    consulted, the fallback selector decides.
    """

    def __init__(self, params: ParameterSet, stats: FeatureStats, cfg: PolicyConfig,
                 schedule: ScheduleConfig = ScheduleConfig(), rng: Optional[np.random.Generator] = None,
                 greedy: bool = False, record: bool = False,
                 fallback: NodeSelector = hybrid_plunge):
        self.params = params
        self.stats = stats
        self.cfg = cfg
        self.schedule = schedule
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.greedy = greedy
        self.record = record
        self.fallback = fallback
        self.selections = 0
        self.steps: List[PolicyStep] = []

    def __call__(self, tree: BnbTree) -> int:
        count = self.selections
        self.selections += 1
        if not policy_schedule(count, self.schedule):
            return self.fallback(tree)

        snapshot = TreeSnapshot.capture(tree, self.stats)
        with no_grad():
            output = forward(snapshot, self.params, self.cfg)
        dist = output.distribution
        index = int(np.argmax(dist.log_probs)) if self.greedy else dist.sample_index(self.rng)
        node_id = snapshot.candidates[index]
        if self.record:
            self.steps.append(PolicyStep(snapshot=snapshot, action=index, node_id=node_id,
                                         log_prob=float(dist.log_probs[index]),
                                         value=output.value.item()))
        return node_id
