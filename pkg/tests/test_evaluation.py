import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixthought.errors import DomainError, EmptySelection, MissingDepth, MissingModality, SchemaError
from mixthought.evaluation import (
    BudgetCurvePoint,
    PredictionLog,
    PredictionRecord,
    accuracy,
    budget_curve,
    depth_stratified,
    format_curve,
    mot_budget_eval,
    overlap_stats,
    parse_bucket,
    pass_at_k,
    pass_at_k_exact,
    sot_budget_eval,
    solved_sets,
    write_curve,
)

from ._gen import MODS, random_log


def R(pid, m, i, ok, answer=None):
    return PredictionRecord(pid, m, i, answer or ("A" if ok else "B"), ok)


def log_of(table):
    """``table``: {problem: {modality: [bool, ...]}}."""
    return PredictionLog(R(pid, m, i, ok) for pid, mods in table.items() for m, oks in mods.items() for i, ok in enumerate(oks))


# --------------------------------------------------------------------------
# accuracy


def test_accuracy_two_of_three():
    log = log_of({"p1": {"NL": [True]}, "p2": {"NL": [True]}, "p3": {"NL": [False]}})
    assert accuracy(log, "NL") == pytest.approx(66.6667, abs=1e-3)


def test_accuracy_uses_first_sample_only():
    log = log_of({"p1": {"NL": [False, True, True]}, "p2": {"NL": [True, False]}})
    assert accuracy(log, "NL") == 50.0


def test_accuracy_all_correct_and_empty():
    log = log_of({"p1": {"Code": [True]}, "p2": {"Code": [True]}})
    assert accuracy(log, "Code") == 100.0
    with pytest.raises(EmptySelection):
        accuracy(log, "NL")


def test_accuracy_depth_filter_hand_count():
    depths = {"p1": 1, "p2": 5, "p3": 6, "p4": 8, "p5": 3}
    oks = {"p1": True, "p2": False, "p3": True, "p4": True, "p5": False}
    log = log_of({p: {"NL": [ok]} for p, ok in oks.items()})
    # depth 5..8 -> p2 (wrong), p3, p4 (right)
    assert accuracy(log, "NL", lambda pid: 5 <= depths[pid] <= 8) == pytest.approx(200 / 3)


def test_log_rejects_gappy_pools():
    with pytest.raises(SchemaError):
        PredictionLog([R("p", "NL", 0, True), R("p", "NL", 2, True)])


def test_log_gold_consistency():
    log = PredictionLog.from_answers([("p", "NL", 0, "A"), ("p", "NL", 1, None)], {"p": "A"})
    assert [r.correct for r in log.records] == [True, False]
    log.check_gold({"p": "A"})
    with pytest.raises(SchemaError):
        log.check_gold({"p": "B"})


def test_log_save_load(tmp_path):
    log = random_log(random.Random(1), 3, 2)
    path = log.save(tmp_path / "log.jsonl", {"seed": 1})
    assert PredictionLog.load(path).records == log.records


# --------------------------------------------------------------------------
# pass@k


@pytest.mark.parametrize("k", range(1, 11))
def test_pass_at_k_extremes(k):
    assert pass_at_k(10, 10, k) == 1.0
    assert pass_at_k(10, 0, k) == 0.0


def test_pass_at_k_enumeration_example():
    # subsets of size 2 from {c, c, w, w}: only {w, w} misses
    subsets = list(itertools.combinations([1, 1, 0, 0], 2))
    assert Fraction(sum(any(s) for s in subsets), len(subsets)) == Fraction(5, 6)
    assert pass_at_k_exact(4, 2, 2) == Fraction(5, 6)
    assert pass_at_k(4, 2, 2) == pytest.approx(5 / 6, abs=1e-12)


def test_pass_at_k_matches_enumeration_small_n():
    for n in range(1, 11):
        for c in range(n + 1):
            pool = [1] * c + [0] * (n - c)
            for k in range(1, n + 1):
                subsets = list(itertools.combinations(range(n), k))
                hits = sum(any(pool[i] for i in s) for s in subsets)
                assert pass_at_k_exact(n, c, k) == Fraction(hits, len(subsets))
                assert pass_at_k(n, c, k) == pytest.approx(hits / len(subsets), abs=1e-12)


@pytest.mark.parametrize("args", [(4, 5, 1), (4, -1, 1), (4, 2, 0), (4, 2, 5)])
def test_pass_at_k_domain(args):
    with pytest.raises(DomainError):
        pass_at_k(*args)


@settings(max_examples=300)
@given(st.integers(1, 128).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_pass_at_k_monotone(args):
    n, c, k = args
    v = pass_at_k(n, c, k)
    assert 0.0 <= v <= 1.0
    if k < n:
        assert pass_at_k(n, c, k + 1) >= v - 1e-12
    if c < n:
        assert pass_at_k(n, c + 1, k) >= v - 1e-12
    assert v == pytest.approx(float(pass_at_k_exact(n, c, k)), abs=1e-9)


def test_pass_at_k_monte_carlo_spot():
    rng = np.random.default_rng(0)
    n, c, k = 32, 5, 8
    draws = 200_000
    # a draw misses iff the hypergeometric count of correct picks is zero
    hits = rng.hypergeometric(c, n - c, k, size=draws) > 0
    assert abs(hits.mean() - pass_at_k(n, c, k)) < 0.005


# --------------------------------------------------------------------------
# budget curves


def test_budget_degenerate_pool():
    log = log_of({"p": {"NL": [True]}})
    pt = sot_budget_eval(log, "NL", 1, runs=10, seed=42)
    assert (pt.mean, pt.stddev, pt.runs, pt.k) == (100.0, 0.0, 10, 1)


def test_budget_full_pool_has_no_variance():
    log = random_log(random.Random(2), 30, 6)
    pt = sot_budget_eval(log, "Code", 6, runs=10, seed=1)
    assert pt.stddev == 0.0
    expected = 100 * np.mean([any(r.correct for r in log.pool(p, "Code")) for p in log.problem_ids])
    assert pt.mean == pytest.approx(expected)


def test_budget_matches_monte_carlo_and_closed_form():
    rng = random.Random(11)
    pools = {f"p{i}": [rng.random() < 0.2 for _ in range(8)] for i in range(1000)}
    log = log_of({p: {"TruthTable": oks} for p, oks in pools.items()})
    pt = sot_budget_eval(log, "TruthTable", 3, runs=10, seed=42)
    assert pt == sot_budget_eval(log, "TruthTable", 3, runs=10, seed=42)

    mc = np.random.default_rng(7)
    ids = list(pools)
    hits = 0
    for _ in range(100_000):
        oks = pools[ids[mc.integers(len(ids))]]
        hits += any(oks[j] for j in mc.choice(8, 3, replace=False))
    assert abs(pt.mean - 100 * hits / 100_000) <= 1.5
    closed = 100 * np.mean([pass_at_k(8, sum(o), 3) for o in pools.values()])
    assert abs(pt.mean - closed) <= 1.5


def test_budget_converges_on_identical_pools():
    pools = {f"p{i}": [True, False, False, False, False, False] for i in range(20)}
    log = log_of({p: {"NL": oks} for p, oks in pools.items()})
    pt = sot_budget_eval(log, "NL", 2, runs=2000, seed=3)
    assert pt.mean == pytest.approx(100 * pass_at_k(6, 1, 2), abs=0.5)


def test_budget_pool_too_small():
    log = log_of({"p": {"NL": [True, False]}})
    with pytest.raises(DomainError):
        sot_budget_eval(log, "NL", 3)


def test_mot_budget_divisibility():
    log = random_log(random.Random(3), 5, 4)
    assert mot_budget_eval(log, 3, runs=2).k == 3
    with pytest.raises(DomainError):
        mot_budget_eval(log, 5)


def test_mot_draws_one_per_modality():
    # NL always wrong, Code always wrong, TT always right: any draw with a TT sample passes
    log = log_of({f"p{i}": {"NL": [False] * 4, "Code": [False] * 4, "TruthTable": [True] * 4} for i in range(5)})
    assert mot_budget_eval(log, 3, runs=5).mean == 100.0


def test_mot_beats_sot_when_only_tt_solves():
    table = {f"e{i}": {m: [True] * 6 for m in MODS} for i in range(4)}
    table["q"] = {"NL": [False] * 6, "Code": [False] * 6, "TruthTable": [True] + [False] * 5}
    log = log_of(table)
    mot = mot_budget_eval(log, 3, runs=10, seed=42)
    sot = sot_budget_eval(log, "NL", 3, runs=10, seed=42)
    assert mot.mean > sot.mean


def test_vote_mode():
    rows = []
    for i in range(10):
        answers = ["A", "A", "B", "C", "B"]
        rows += [(f"p{i}", "NL", j, a) for j, a in enumerate(answers)]
    log = PredictionLog.from_answers(rows, {f"p{i}": "A" for i in range(10)})
    assert sot_budget_eval(log, "NL", 5, runs=3, mode="vote").mean == pytest.approx(50.0, abs=50)
    full = [sot_budget_eval(log, "NL", 5, runs=1, seed=s, mode="vote").mean for s in range(200)]
    assert 30 < np.mean(full) < 70  # A/B tie broken uniformly
    with pytest.raises(DomainError):
        sot_budget_eval(log, "NL", 2, mode="median")


def test_curve_output(tmp_path):
    log = random_log(random.Random(4), 10, 6)
    pts = budget_curve(log, [3, 6], None, runs=4, seed=1)
    text = format_curve(pts)
    lines = text.splitlines()
    assert lines[0] == "k mean stddev"
    assert [ln.split()[0] for ln in lines[1:]] == ["3", "6"]
    path = write_curve(pts, tmp_path / "c.dat", seed=1)
    body = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert body == lines
    assert path.read_text().startswith('# {"_header"')
    assert all(isinstance(p, BudgetCurvePoint) for p in pts)


# --------------------------------------------------------------------------
# overlap


def test_overlap_hand_example():
    log = log_of(
        {
            "p1": {"NL": [True], "Code": [False], "TruthTable": [False]},
            "p2": {"NL": [True], "Code": [False], "TruthTable": [True]},
            "p3": {"NL": [False], "Code": [False], "TruthTable": [False]},
        }
    )
    st_ = overlap_stats(log)
    assert (st_.only_NL, st_.pair_NL_TT, st_.union_all) == (1, 1, 2)
    assert st_.unique_coverage == 1 and st_.complementarity == 1
    assert st_.oracle_percent == pytest.approx(200 / 3)


def test_overlap_pool_semantics_flag():
    log = log_of({"p": {"NL": [False, True], "Code": [False], "TruthTable": [False]}})
    assert overlap_stats(log).union_all == 0
    assert overlap_stats(log, any_of_pool=True).only_NL == 1


def test_overlap_missing_modality():
    log = log_of({"p": {"NL": [True], "Code": [True]}})
    with pytest.raises(MissingModality):
        overlap_stats(log)


@settings(max_examples=100)
@given(st.integers(0, 10_000), st.integers(1, 30), st.integers(1, 4), st.booleans())
def test_overlap_partition(seed, n, pool, any_of_pool):
    log = random_log(random.Random(seed), n, pool)
    s = overlap_stats(log, any_of_pool)
    parts = [s.only_NL, s.only_Code, s.only_TT, s.pair_NL_Code, s.pair_NL_TT, s.pair_Code_TT, s.all_three]
    assert sum(parts) == s.union_all
    assert s.union_Code_NL <= s.union_all <= s.problem_count
    sets = solved_sets(log, any_of_pool)
    assert s.union_all == len(set().union(*sets.values()))


# --------------------------------------------------------------------------
# depth


def test_depth_buckets_hand_tally():
    depths = {f"p{i}": d for i, d in enumerate([1, 2, 5, 5, 6, 8, 8, 3])}
    oks = [True, False, True, True, False, True, False, True]
    log = log_of({p: {"NL": [ok]} for p, ok in zip(depths, oks)})
    out = depth_stratified(log, depths, [(1, 5), (5, 8)], "NL")
    # 1-5: p0 p1 p2 p3 p7 -> 4/5 ; 5-8: p2 p3 p4 p5 p6 -> 3/5
    assert out == {(1, 5): 80.0, (5, 8): 60.0}


def test_depth_single_bucket_equals_overall():
    log = random_log(random.Random(9), 12, 1)
    depths = {p: i % 7 for i, p in enumerate(log.problem_ids)}
    assert depth_stratified(log, depths, [(0, 100)], "NL") == {(0, 100): accuracy(log, "NL")}


def test_depth_empty_bucket_absent():
    log = log_of({"p": {"NL": [True]}})
    assert depth_stratified(log, {"p": 2}, [(1, 3), (9, 12)], "NL") == {(1, 3): 100.0}


def test_depth_missing():
    log = log_of({"p": {"NL": [True]}})
    with pytest.raises(MissingDepth):
        depth_stratified(log, {"p": None}, [(1, 3)])


def test_parse_bucket():
    assert parse_bucket("1-5") == (1, 5)
    assert parse_bucket("4") == (4, 4)
    with pytest.raises(DomainError):
        parse_bucket("5-1")
