#!/usr/bin/env python3
"""
Classical node selectors and the policy consultation schedule
A selector is a pure function of the tree returning an open leaf id
"""

from dataclasses import dataclass
from typing import Dict

from .bnb_engine import BnbTree, NodeSelector
from .errors import ConfigError, EmptyCandidates


def _require_open(tree: BnbTree):
    if not tree.open_leaves:
        raise EmptyCandidates("no open leaves to select from")


def best_first(tree: BnbTree) -> int:
    """Lowest lp_bound, then deepest, then lowest id"""
    _require_open(tree)
    return min(tree.open_leaves,
               key=lambda i: (tree.nodes[i].lp_bound, -tree.nodes[i].depth, i))


def depth_first(tree: BnbTree) -> int:
    """Most recently created leaf"""
    _require_open(tree)
    return max(tree.open_leaves)


def best_estimate(tree: BnbTree) -> int:
    _require_open(tree)
    return min(tree.open_leaves, key=lambda i: (tree.nodes[i].estimate, i))


def hybrid_plunge(tree: BnbTree) -> int:
    """Keep diving into the children of the last processed node, else best estimate"""
    _require_open(tree)
    last = tree.last_processed
    if last is not None and last in tree.children:
        open_children = [c for c in tree.children[last] if c is not None and c in tree.open_leaves]
        if open_children:
            return min(open_children, key=lambda i: (tree.nodes[i].estimate, i))
    return best_estimate(tree)


SELECTORS: Dict[str, NodeSelector] = {
    "bestfirst": best_first,
    "dfs": depth_first,
    "estimate": best_estimate,
    "hybrid": hybrid_plunge,
}


def get_selector(name: str) -> NodeSelector:
    try:
        return SELECTORS[name]
    except KeyError:
        raise ConfigError(f"unknown selector {name!r}; choose from {', '.join(SELECTORS)}") from None


@dataclass(frozen=True)
class ScheduleConfig:
    dense_limit: int = 250
    sparse_limit: int = 1000
    sparse_stride: int = 10

    def __post_init__(self):
        if self.dense_limit < 0 or self.sparse_limit < self.dense_limit or self.sparse_stride <= 0:
            raise ConfigError(f"invalid schedule {self}")


def policy_schedule(selections_so_far: int, cfg: ScheduleConfig = ScheduleConfig()) -> bool:
    """True when the learned policy should pick the next node"""
    if selections_so_far < cfg.dense_limit:
        return True
    if selections_so_far < cfg.sparse_limit:
        return (selections_so_far - cfg.dense_limit) % cfg.sparse_stride == 0
    return False
