import pytest

from core.bnb_engine import BnbTree, branch
from core.errors import ConfigError, EmptyCandidates
from core.lp_solver import LinearProgram
from core.selectors import (
    ScheduleConfig, best_estimate, best_first, depth_first, get_selector, hybrid_plunge,
    policy_schedule,
)


def _grown_tree() -> BnbTree:
    """root -> (1, 2), 1 -> (3, 4); open leaves 2, 3, 4"""
    p = LinearProgram.build([1.0, 1.0], upper=[5.0, 5.0], integer=[True, True])
    tree = BnbTree.create(p)
    left, _ = branch(tree, 0, 0, 1.5)
    branch(tree, left, 1, 2.5)
    tree.last_processed = left
    return tree


def test_best_first_picks_the_lowest_bound():
    tree = _grown_tree()
    tree.nodes[2].lp_bound = 6.0
    tree.nodes[3].lp_bound = 5.0
    tree.nodes[4].lp_bound = 4.0
    assert best_first(tree) == 4


def test_best_first_breaks_ties_by_depth_then_id():
    tree = _grown_tree()
    for i in (2, 3, 4):
        tree.nodes[i].lp_bound = 1.0
    assert best_first(tree) == 3


def test_depth_first_dives_into_the_newest_children():
    tree = _grown_tree()
    assert depth_first(tree) in tree.children[1]


def test_best_estimate_uses_the_estimate():
    tree = _grown_tree()
    tree.nodes[2].estimate = 1.0
    tree.nodes[3].estimate = 2.0
    tree.nodes[4].estimate = 3.0
    assert best_estimate(tree) == 2


def test_hybrid_plunges_into_an_open_child():
    tree = _grown_tree()
    tree.nodes[2].estimate = 1.0
    tree.nodes[3].estimate = 5.0
    tree.nodes[4].estimate = 3.0
    assert hybrid_plunge(tree) == 4


def test_hybrid_falls_back_to_best_estimate():
    tree = _grown_tree()
    tree.nodes[2].estimate = 1.0
    tree.nodes[3].estimate = 5.0
    tree.nodes[4].estimate = 3.0
    tree.last_processed = 2
    assert hybrid_plunge(tree) == best_estimate(tree) == 2


@pytest.mark.parametrize("selector", [best_first, depth_first, best_estimate, hybrid_plunge])
def test_selectors_need_open_leaves(selector):
    tree = _grown_tree()
    tree.open_leaves.clear()
    with pytest.raises(EmptyCandidates):
        selector(tree)


def test_get_selector():
    assert get_selector("bestfirst") is best_first
    assert get_selector("hybrid") is hybrid_plunge
    with pytest.raises(ConfigError):
        get_selector("random")


@pytest.mark.parametrize("count, expected", [
    (0, True), (249, True), (250, True), (251, False), (260, True), (999, False), (1000, False),
])
def test_policy_schedule(count, expected):
    assert policy_schedule(count) is expected


def test_schedule_trace_counts():
    trace = [policy_schedule(i) for i in range(1200)]
    assert sum(trace) == 325
    assert not any(trace[1000:])


def test_long_schedule_keeps_the_dense_window_longer():
    cfg = ScheduleConfig(dense_limit=650)
    assert policy_schedule(649, cfg)
    assert policy_schedule(650, cfg)
    assert not policy_schedule(651, cfg)
    assert policy_schedule(660, cfg)


def test_invalid_schedule():
    with pytest.raises(ConfigError):
        ScheduleConfig(dense_limit=500, sparse_limit=100)
    with pytest.raises(ConfigError):
        ScheduleConfig(sparse_stride=0)
