import csv
import itertools
import json
import math

import numpy as np
import pytest

import core.instance_factory as factory
from core.bnb_engine import Budget, Termination, solve
from core.errors import ConfigError, PoolExhausted
from core.instance_factory import (
    CurationConfig, NamedInstance, TspInstance, UflpConfig, candidate_batches, curate, decode_tour,
    decode_uflp, edge_column, encode_mtz, gen_tsp, gen_uflp_kochetov, load_instance, load_instances,
    mutate, order_column, rejection_reason, save_curation_report, save_instance, tour_cost,
)
from core.lp_solver import LinearProgram, Relation
from core.selectors import best_first


# =============================================================================
# TSP
# =============================================================================

def test_generated_distances_are_a_metric_matrix():
    inst = gen_tsp(6, np.random.default_rng(0))
    assert inst.n == 6
    np.testing.assert_array_equal(inst.dist, inst.dist.T)
    assert np.all(np.diag(inst.dist) == 0)
    assert np.all(inst.dist[~np.eye(6, dtype=bool)] > 0)
    with pytest.raises(ConfigError):
        gen_tsp(3, np.random.default_rng(0))


def test_distance_matrix_validation():
    with pytest.raises(ValueError):
        TspInstance(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        TspInstance(np.array([[1.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        TspInstance(np.zeros((2, 3)))


def test_mutation_keeps_symmetry():
    rng = np.random.default_rng(1)
    base = gen_tsp(7, rng)
    child = mutate(base, 0.2, rng, name="child")
    np.testing.assert_array_equal(child.dist, child.dist.T)
    assert np.all(np.diag(child.dist) == 0)
    assert not np.allclose(child.dist, base.dist)
    assert child.name == "child"
    with pytest.raises(ConfigError):
        mutate(base, 0.0, rng)


def test_mtz_sizes_for_four_cities():
    program = encode_mtz(gen_tsp(4, np.random.default_rng(2)))
    assert program.num_vars == 15
    assert program.num_rows == 14
    assert program.num_integer == 15
    assert [r.rel for r in program.rows[:8]] == [Relation.EQ] * 8
    assert program.var_lower[order_column(4, 1)] == 2.0
    assert program.var_upper[order_column(4, 3)] == 4.0


def test_column_layout():
    assert edge_column(4, 0, 1) == 0
    assert edge_column(4, 1, 0) == 3
    assert edge_column(4, 3, 2) == 11
    assert order_column(4, 1) == 12
    with pytest.raises(ValueError):
        edge_column(4, 2, 2)
    with pytest.raises(ValueError):
        order_column(4, 0)


def test_mtz_optimum_matches_tour_enumeration(tour_oracle):
    rng = np.random.default_rng(7)
    for k in range(20):
        inst = gen_tsp(5 + k % 3, rng)
        result = solve(encode_mtz(inst), best_first, Budget(max_nodes=10_000))
        assert result.terminated_by == Termination.OPTIMAL
        expected = tour_oracle(inst.dist)
        assert result.incumbent_objective == pytest.approx(expected, rel=1e-7)
        tour = decode_tour(result.incumbent, inst.n)
        assert sorted(tour) == list(range(inst.n))
        assert tour_cost(inst, tour) == pytest.approx(expected, rel=1e-7)


def test_decode_tour_rejects_subtours():
    n = 4
    x = np.zeros(15)
    for i, j in ((0, 1), (1, 0), (2, 3), (3, 2)):
        x[edge_column(n, i, j)] = 1.0
    with pytest.raises(ValueError):
        decode_tour(x, n)
    x = np.zeros(15)
    for i, j in ((0, 2), (2, 1), (1, 3), (3, 0)):
        x[edge_column(n, i, j)] = 1.0
    assert decode_tour(x, n) == [0, 2, 1, 3]


# =============================================================================
# FACILITY LOCATION
# =============================================================================

def _uflp_by_enumeration(program: LinearProgram, n: int, m: int) -> float:
    c = np.asarray(program.objective)
    best = math.inf
    for size in range(1, n + 1):
        for opened in itertools.combinations(range(n), size):
            cost = sum(c[n * m + i] for i in opened)
            cost += sum(min(c[i * m + j] for i in opened) for j in range(m))
            best = min(best, cost)
    return best


def test_uflp_structure():
    cfg = UflpConfig(n_facilities=3, m_clients=4, cheap_connections=2)
    program = gen_uflp_kochetov(3, 4, np.random.default_rng(0), cfg)
    assert program.num_vars == 3 * 4 + 3
    assert program.num_rows == 4 + 3
    assert program.num_integer == program.num_vars
    assert all(program.objective[12 + i] == cfg.opening_cost for i in range(3))
    for j in range(4):
        cheap = [program.objective[i * 4 + j] for i in range(3) if program.objective[i * 4 + j] < 3000]
        assert len(cheap) == 2


def test_small_uflp_matches_enumeration(binary_oracle):
    rng = np.random.default_rng(4)
    for _ in range(3):
        cfg = UflpConfig(n_facilities=3, m_clients=3, opening_cost=5.0, cheap_connections=2)
        program = gen_uflp_kochetov(3, 3, rng, cfg)
        expected = _uflp_by_enumeration(program, 3, 3)
        result = solve(program, best_first, Budget(max_nodes=10_000))
        assert result.incumbent_objective == pytest.approx(expected)
        assert binary_oracle(program)[0] == pytest.approx(expected)
        assert decode_uflp(result.incumbent, 3, 3)


# =============================================================================
# CURATION
# =============================================================================

@pytest.mark.parametrize("gap, nodes, reason", [
    (0.0, 500, "zero gap"),
    (1.5, 500, "gap above 1"),
    (math.inf, 500, "gap above 1"),
    (0.4, 10, "fewer than 30 nodes"),
    (0.4, 30, ""),
    (1.0, 30, ""),
])
def test_rejection_reason(gap, nodes, reason):
    assert rejection_reason(gap, nodes, CurationConfig()) == reason


def _fake_batches(gaps_per_batch):
    program = LinearProgram.build([1.0])
    return [[NamedInstance(name=f"b{b}_m{k}", program=program) for k in range(len(gaps))]
            for b, gaps in enumerate(gaps_per_batch)]


def _patch_evaluation(monkeypatch, gaps_per_batch, nodes=100):
    outcomes = {f"b{b}_m{k}": (gap, nodes)
                for b, gaps in enumerate(gaps_per_batch) for k, gap in enumerate(gaps)}
    monkeypatch.setattr(factory, "evaluate_candidate",
                        lambda inst, budget, tolerances=None: outcomes[inst.name])


def test_curation_picks_the_lower_median(monkeypatch):
    gaps = [[0.5, 0.0, 0.2, 0.9, 0.3], [0.7, 0.1, 2.0, 0.0, 0.4]]
    _patch_evaluation(monkeypatch, gaps)
    pool, report = curate(_fake_batches(gaps), CurationConfig(target_count=2))
    assert [inst.name for inst in pool] == ["b0_m4", "b1_m4"]
    assert report.selected == ["b0_m4", "b1_m4"]
    assert len(report.records) == 10
    assert sum(not r.accepted for r in report.records) == 3


def test_curation_stops_at_the_target(monkeypatch):
    gaps = [[0.2, 0.3]] * 4
    _patch_evaluation(monkeypatch, gaps)
    pool, report = curate(_fake_batches(gaps), CurationConfig(target_count=2))
    assert len(pool) == 2
    assert {r.batch for r in report.records} == {0, 1}


def test_exhausted_stream_keeps_the_partial_pool(monkeypatch, tmp_path):
    gaps = [[0.0, 0.0], [0.4, 0.6], [3.0, 0.0]]
    _patch_evaluation(monkeypatch, gaps)
    with pytest.raises(PoolExhausted) as info:
        curate(_fake_batches(gaps), CurationConfig(target_count=5))
    assert [inst.name for inst in info.value.pool] == ["b1_m0"]
    assert len(info.value.report.records) == 6

    path = tmp_path / "curation_report.csv"
    save_curation_report(info.value.report, path)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["reason"] == "zero gap"
    assert rows[2]["selected"] == "1"
    assert rows[4]["gap"] == "3.000000"


def test_candidate_batches_share_a_base_instance():
    cfg = CurationConfig(batch_size=3, cities=(5, 5))
    batches = list(candidate_batches(cfg, np.random.default_rng(0), max_batches=2))
    assert len(batches) == 2
    first = batches[0]
    assert [inst.name for inst in first] == ["tsp5_b0_m0", "tsp5_b0_m1", "tsp5_b0_m2"]
    assert all(inst.program.num_vars == 5 * 4 + 4 for inst in first)
    assert not np.allclose(first[0].tsp.dist, first[1].tsp.dist)


def test_curation_config_validation():
    with pytest.raises(ConfigError):
        CurationConfig(cities=(3, 5))
    with pytest.raises(ConfigError):
        CurationConfig(target_count=0)


# =============================================================================
# FILES
# =============================================================================

def test_tsp_instance_file_round_trip(tmp_path):
    tsp = gen_tsp(5, np.random.default_rng(0), name="five")
    save_instance(NamedInstance(name="five", program=encode_mtz(tsp), tsp=tsp), tmp_path / "five.json")
    loaded = load_instance(tmp_path / "five.json")
    assert loaded.name == "five"
    np.testing.assert_array_equal(loaded.tsp.dist, tsp.dist)
    assert loaded.program == encode_mtz(tsp)


def test_program_instance_file_round_trip(tmp_path, knapsack):
    save_instance(NamedInstance(name="knap", program=knapsack), tmp_path / "k.json")
    data = json.loads((tmp_path / "k.json").read_text())
    assert data["name"] == "knap" and data["num_vars"] == 2
    loaded = load_instance(tmp_path / "k.json")
    assert loaded.name == "knap" and loaded.tsp is None
    assert loaded.program == knapsack


def test_unknown_json_is_rejected(tmp_path):
    path = tmp_path / "other.json"
    path.write_text(json.dumps({"hello": 1}))
    with pytest.raises(ValueError):
        load_instance(path)
    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        load_instance(path)


def test_directories_expand_in_name_order(tmp_path):
    rng = np.random.default_rng(0)
    for name in ("b", "a", "c"):
        tsp = gen_tsp(4, rng, name=name)
        save_instance(NamedInstance(name=name, program=encode_mtz(tsp), tsp=tsp), tmp_path / f"{name}.json")
    (tmp_path / "notes.txt").write_text("ignored")
    assert [inst.name for inst in load_instances([tmp_path])] == ["a", "b", "c"]
