import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixthought.client import fixture_path
from mixthought.data import (
    CuratedExample,
    export_round,
    import_round,
    keep_first_passing,
    label_to_option,
    load_problems,
    mix_datasets,
    option_to_label,
)
from mixthought.errors import ChecksumMismatch, DuplicateId, OverlapError, SchemaError
from mixthought.rationale import Modality, Trace, reward

NL, CODE, TT = Modality.NL, Modality.CODE, Modality.TRUTH_TABLE


def write(tmp_path, lines, name="p.jsonl"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


def rec(**kw):
    base = {"id": "1", "premises": "All cats purr.", "conclusion": "Tom purrs.", "options": ["True", "False", "Uncertain"], "label": "True"}
    base.update(kw)
    return json.dumps(base)


def test_folio_label_true_maps_to_a(tmp_path):
    [p] = load_problems(write(tmp_path, [rec(source="folio")]))
    assert p.gold == "A" and p.source == "folio"


def test_unknown_label_from_proofwriter(tmp_path):
    [p] = load_problems(write(tmp_path, [rec(label="Unknown", depth=5)]), source="proofwriter")
    assert (p.gold, p.source, p.depth) == ("C", "proofwriter", 5)


def test_malformed_line_reports_number(tmp_path):
    with pytest.raises(SchemaError) as ei:
        load_problems(write(tmp_path, [rec(), "{not json"]))
    assert ei.value.line == 2


@pytest.mark.parametrize(
    "bad",
    [
        rec(label="Maybe"),
        rec(depth=-1),
        rec(source="mmlu"),
        json.dumps({"id": "1", "premises": "x"}),
        rec(options=["True", "False"]),
        "[1, 2]",
    ],
)
def test_schema_errors(tmp_path, bad):
    with pytest.raises(SchemaError):
        load_problems(write(tmp_path, [bad]))


def test_duplicate_ids(tmp_path):
    with pytest.raises(DuplicateId):
        load_problems(write(tmp_path, [rec(), rec()]))


def test_premise_lists_are_joined(tmp_path):
    [p] = load_problems(write(tmp_path, [rec(premises=["A.", "B."])]))
    assert p.premises_text == "A.\nB."


def test_label_mapping_total_and_inverse():
    for label, letter in [("True", "A"), ("False", "B"), ("Uncertain", "C"), ("Unknown", "C")]:
        assert label_to_option(label) == letter
    for letter in "ABC":
        assert label_to_option(option_to_label(letter)) == letter


def test_bundled_problems_load():
    ps = load_problems(fixture_path("problems", "worked.jsonl"))
    assert len(ps) == 9
    thor = next(p for p in ps if p.id == "thor")
    assert thor.gold == "A" and thor.theory_file.endswith("thor.theory")


# --------------------------------------------------------------------------
# curated sets


def ex(pid, t, n=1):
    return CuratedExample(pid, t, f"prompt {pid}", f"target {pid}", n)


def parts(sizes=(10, 8, 9)):
    return [[ex(f"p{i}", t) for i in range(k)] for t, k in zip((NL, CODE, TT), sizes)]


def test_mix_sizes_and_counts():
    ds = mix_datasets(parts(), seed=42)
    assert len(ds.examples) == 27
    assert ds.counts == {"NL": 10, "Code": 8, "TruthTable": 9}
    assert ds.round == 1 and ds.seed == 42


def test_mix_deterministic():
    assert mix_datasets(parts(), 42).examples == mix_datasets(parts(), 42).examples


def test_mix_other_seed_is_permutation():
    a, b = mix_datasets(parts(), 42), mix_datasets(parts(), 43)
    assert Counter(a.examples) == Counter(b.examples)
    assert a.examples != b.examples
    concat = [e for part in parts() for e in part]
    assert Counter(a.examples) == Counter(concat)


def test_mix_matches_seeded_shuffle_of_concatenation():
    concat = [e for part in parts() for e in part]
    random.Random(7).shuffle(concat)
    assert list(mix_datasets(parts(), 7).examples) == concat


def test_mix_overlap_rejected():
    with pytest.raises(OverlapError):
        mix_datasets([[ex("p1", NL)], [ex("p1", NL)]], 1)


def trace(answer, valid=True):
    return Trace("p", NL, "raw", "z" if valid else None, answer, valid)


def test_keep_first_examples():
    ts = [trace("A", valid=False), trace("A"), trace("A")]
    assert keep_first_passing(ts, "A") is ts[1]
    assert keep_first_passing([trace("B"), trace(None)], "A") is None


def test_keep_first_matches_full_scan():
    rng = random.Random(3)
    for _ in range(200):
        ts = [trace(rng.choice("ABC"), rng.random() < 0.8) for _ in range(10)]
        scan = [i for i, t in enumerate(ts) if reward(t, "A").value == 1]
        kept = keep_first_passing(ts, "A")
        if scan:
            assert kept is ts[scan[0]]
        else:
            assert kept is None


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from("ABC"), st.booleans()), max_size=10), st.randoms(use_true_random=False))
def test_keep_first_existence_is_order_independent(items, rnd):
    ts = [trace(a, v) for a, v in items]
    shuffled = ts[:]
    rnd.shuffle(shuffled)
    assert (keep_first_passing(ts, "A") is None) == (keep_first_passing(shuffled, "A") is None)


def test_export_import_round_trip(tmp_path):
    ds = mix_datasets(parts(), 42)
    path = export_round(ds, tmp_path / "r1.jsonl")
    assert import_round(path) == ds
    lines = path.read_text().splitlines()
    assert json.loads(lines[0])["_header"]["count"] == 27
    assert list(json.loads(lines[1])) == ["problem_id", "modality", "prompt", "target", "round"]


def test_export_is_byte_stable(tmp_path):
    ds = mix_datasets(parts(), 42)
    a = export_round(ds, tmp_path / "a.jsonl").read_bytes()
    b = export_round(ds, tmp_path / "b.jsonl").read_bytes()
    assert a == b


def test_tampered_export(tmp_path):
    path = export_round(mix_datasets(parts(), 42), tmp_path / "r1.jsonl")
    text = path.read_text().replace("target p3", "target p4", 1)
    path.write_text(text)
    with pytest.raises(ChecksumMismatch):
        import_round(path)


def test_large_round_line_count(tmp_path):
    """1000 problems, S=10 with per-sample pass rates between 0.25 and 0.35."""
    rng = random.Random(42)
    rates = {NL: 0.35, CODE: 0.25, TT: 0.3}
    kept = {t: [] for t in rates}
    for i in range(1000):
        for t, p in rates.items():
            ts = [trace("A" if rng.random() < p else "B") for _ in range(10)]
            first = keep_first_passing(ts, "A")
            if first is not None:
                kept[t].append(ex(f"q{i}", t))
    ds = mix_datasets([kept[t] for t in (NL, CODE, TT)], 42)
    path = export_round(ds, tmp_path / "big.jsonl")
    data_lines = path.read_text().splitlines()[1:]  # first line is the header
    assert len(data_lines) == sum(len(v) for v in kept.values()) == sum(ds.counts.values())
