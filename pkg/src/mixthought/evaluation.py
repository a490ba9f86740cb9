"""Metrics over prediction logs: accuracy, pass@k, budget curves, overlap and depth breakdowns."""

from __future__ import annotations

import math
import os
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .artifacts import HEADER_KEY, dumps, make_header, read_jsonl, write_jsonl
from .errors import DomainError, EmptySelection, MissingDepth, MissingModality, SchemaError
from .rationale import MODALITIES, Modality

BASE_MODALITIES = tuple(m.value for m in MODALITIES)


@dataclass(frozen=True)
class PredictionRecord:
    problem_id: str
    modality: str
    sample_index: int
    answer: Optional[str]
    correct: bool

    @classmethod
    def from_record(cls, d: Mapping) -> "PredictionRecord":
        m = d["modality"]
        try:
            m = Modality.parse(m).value
        except ValueError:
            m = str(m)  # MoT / SC style aggregate rows
        return cls(str(d["problem_id"]), m, int(d["sample_index"]), d.get("answer"), bool(d["correct"]))


class PredictionLog:
    """Immutable set of predictions grouped into per-(problem, modality) pools."""

    def __init__(self, records: Iterable[PredictionRecord]):
        self.records = tuple(records)
        pools: dict[tuple[str, str], list[PredictionRecord]] = defaultdict(list)
        order: dict[str, None] = {}
        for r in self.records:
            pools[(r.problem_id, r.modality)].append(r)
            order.setdefault(r.problem_id, None)
        for key, pool in pools.items():
            pool.sort(key=lambda r: r.sample_index)
            if [r.sample_index for r in pool] != list(range(len(pool))):
                raise SchemaError(f"pool {key} must hold sample indices 0..{len(pool) - 1} exactly once")
        self._pools = dict(pools)
        self.problem_ids = tuple(order)

    def __len__(self):
        return len(self.records)

    @property
    def modalities(self) -> tuple[str, ...]:
        present = {m for _, m in self._pools}
        ordered = [m for m in BASE_MODALITIES if m in present]
        return tuple(ordered + sorted(present - set(ordered)))

    def pool(self, problem_id: str, modality: str) -> list[PredictionRecord]:
        key = (problem_id, _mod(modality))
        if key not in self._pools:
            raise MissingModality(problem_id, key[1])
        return self._pools[key]

    def has_pool(self, problem_id: str, modality: str) -> bool:
        return (problem_id, _mod(modality)) in self._pools

    def pool_size(self, problem_id: str, modality: str) -> int:
        return len(self.pool(problem_id, modality))

    def check_gold(self, gold: Mapping[str, str]) -> None:
        for r in self.records:
            if r.correct != (r.answer is not None and r.answer == gold[r.problem_id]):
                raise SchemaError(f"record {r.problem_id}/{r.modality}/{r.sample_index}: correct flag disagrees with gold")

    @classmethod
    def from_answers(cls, rows: Iterable[tuple[str, str, int, Optional[str]]], gold: Mapping[str, str]) -> "PredictionLog":
        return cls(
            PredictionRecord(pid, _mod(m), i, a, a is not None and a == gold[pid]) for pid, m, i, a in rows
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PredictionLog":
        _, recs = read_jsonl(path)
        try:
            return cls(PredictionRecord.from_record(d) for d in recs)
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"{path}: bad prediction record ({e})") from None

    def save(self, path: str | os.PathLike, header: Mapping | None = None) -> Path:
        return write_jsonl(path, (asdict(r) for r in self.records), header)


def _mod(m) -> str:
    try:
        return Modality.parse(m).value
    except ValueError:
        return str(m)


# --------------------------------------------------------------------------
# accuracy


def accuracy(
    log: PredictionLog,
    modality: Optional[str] = None,
    problem_filter: Optional[Callable[[str], bool]] = None,
) -> float:
    """Percent correct over each pool's first sample, restricted by modality and problem filter."""
    mod = _mod(modality) if modality is not None else None
    firsts = [
        pool[0]
        for (pid, m), pool in log._pools.items()
        if (mod is None or m == mod) and (problem_filter is None or problem_filter(pid))
    ]
    if not firsts:
        raise EmptySelection("no predictions match the filter")
    return 100.0 * sum(r.correct for r in firsts) / len(firsts)


# --------------------------------------------------------------------------
# pass@k


def _check_pass_args(n: int, c: int, k: int) -> None:
    if not (0 <= c <= n) or not (1 <= k <= n):
        raise DomainError(f"pass@k needs 0 <= c <= n and 1 <= k <= n (got n={n}, c={c}, k={k})")


def pass_at_k_exact(n: int, c: int, k: int) -> Fraction:
    _check_pass_args(n, c, k)
    return 1 - Fraction(math.comb(n - c, k), math.comb(n, k))


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that a uniform size-k subset of n samples (c correct) contains a correct one."""
    _check_pass_args(n, c, k)
    if n - c < k:
        return 1.0
    # product form avoids huge binomials
    return 1.0 - float(np.prod(1.0 - k / np.arange(n - c + 1, n + 1)))


# --------------------------------------------------------------------------
# budget curves


@dataclass(frozen=True)
class BudgetCurvePoint:
    k: int
    mean: float
    stddev: float
    runs: int


def _score(draw: Sequence[PredictionRecord], mode: str, rng: np.random.Generator) -> bool:
    if mode == "pass":
        return any(r.correct for r in draw)
    counts = Counter(r.answer for r in draw if r.answer is not None)
    if not counts:
        return False
    best = max(counts.values())
    tied = sorted(a for a, c in counts.items() if c == best)
    pick = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
    return any(r.correct for r in draw if r.answer == pick)


def _budget(log: PredictionLog, per_modality: dict[str, int], runs: int, seed: int, mode: str) -> BudgetCurvePoint:
    if runs < 1:
        raise DomainError("runs must be at least 1")
    if mode not in ("pass", "vote"):
        raise DomainError(f"unknown budget mode {mode!r}")
    pids = log.problem_ids
    if not pids:
        raise EmptySelection("empty prediction log")
    for pid in pids:
        for m, draws in per_modality.items():
            size = log.pool_size(pid, m)
            if size < draws:
                raise DomainError(f"pool {pid}/{m} has {size} samples, fewer than the {draws} requested")
    rng = np.random.default_rng(seed)
    scores = []
    for _ in range(runs):
        solved = 0
        for pid in pids:
            draw: list[PredictionRecord] = []
            for m, draws in per_modality.items():
                pool = log.pool(pid, m)
                draw.extend(pool[i] for i in rng.choice(len(pool), size=draws, replace=False))
            solved += _score(draw, mode, rng)
        scores.append(solved)
    # integer tallies keep a zero-variance curve at exactly 0
    arr = np.asarray(scores, dtype=np.int64)
    scale = 100.0 / len(pids)
    k = sum(per_modality.values())
    return BudgetCurvePoint(k, float(arr.mean()) * scale, float(arr.std()) * scale, runs)


def sot_budget_eval(log: PredictionLog, t, k: int, runs: int = 10, seed: int = 42, mode: str = "pass") -> BudgetCurvePoint:
    """Draw k samples per problem from one modality's pool; score any-correct or majority vote."""
    if k < 1:
        raise DomainError("k must be at least 1")
    return _budget(log, {_mod(t): k}, runs, seed, mode)


def mot_budget_eval(
    log: PredictionLog,
    k: int,
    runs: int = 10,
    seed: int = 42,
    mode: str = "pass",
    modalities: Sequence | None = None,
) -> BudgetCurvePoint:
    """Draw k/N_T samples per problem from each of the N_T modalities present."""
    mods = [_mod(m) for m in modalities] if modalities else [m for m in log.modalities if m in BASE_MODALITIES]
    if not mods:
        raise DomainError("no modality pools in the log")
    if k < 1 or k % len(mods):
        raise DomainError(f"k={k} is not a positive multiple of {len(mods)} modalities")
    return _budget(log, {m: k // len(mods) for m in mods}, runs, seed, mode)


def budget_curve(log: PredictionLog, ks: Iterable[int], modality=None, runs: int = 10, seed: int = 42, mode: str = "pass"):
    """SoT curve for ``modality``, or MoT when ``modality`` is None."""
    if modality is None:
        return [mot_budget_eval(log, k, runs, seed, mode) for k in ks]
    return [sot_budget_eval(log, modality, k, runs, seed, mode) for k in ks]


def format_curve(points: Sequence[BudgetCurvePoint], header: Mapping | None = None) -> str:
    lines = []
    if header is not None:
        lines.append("# " + dumps({HEADER_KEY: dict(header)}))
        lines.append("# stddev is the population standard deviation over runs")
    lines.append("k mean stddev")
    lines.extend(f"{p.k} {p.mean:.4f} {p.stddev:.4f}" for p in points)
    return "\n".join(lines) + "\n"


def write_curve(points: Sequence[BudgetCurvePoint], path: str | os.PathLike, seed: int, inputs=None, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = make_header("budget_curve", seed, inputs, runs=points[0].runs if points else 0, **extra)
    path.write_text(format_curve(points, header), encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# overlap


@dataclass(frozen=True)
class OverlapStats:
    only_NL: int
    only_Code: int
    only_TT: int
    pair_NL_Code: int
    pair_NL_TT: int
    pair_Code_TT: int
    all_three: int
    union_Code_NL: int
    union_all: int
    problem_count: int

    @property
    def unique_coverage(self) -> int:
        return self.only_NL + self.only_Code + self.only_TT

    @property
    def complementarity(self) -> int:
        return self.pair_NL_Code + self.pair_NL_TT + self.pair_Code_TT + self.all_three

    @property
    def oracle_percent(self) -> float:
        return 100.0 * self.union_all / self.problem_count if self.problem_count else 0.0


def solved_sets(log: PredictionLog, any_of_pool: bool = False) -> dict[str, set[str]]:
    """Problems solved per base modality, by first sample or by any sample in the pool."""
    out: dict[str, set[str]] = {m: set() for m in BASE_MODALITIES}
    for pid in log.problem_ids:
        for m in BASE_MODALITIES:
            pool = log.pool(pid, m)
            if any(r.correct for r in pool) if any_of_pool else pool[0].correct:
                out[m].add(pid)
    return out


def overlap_stats(log: PredictionLog, any_of_pool: bool = False) -> OverlapStats:
    s = solved_sets(log, any_of_pool)
    nl, code, tt = s["NL"], s["Code"], s["TruthTable"]
    return OverlapStats(
        only_NL=len(nl - code - tt),
        only_Code=len(code - nl - tt),
        only_TT=len(tt - nl - code),
        pair_NL_Code=len((nl & code) - tt),
        pair_NL_TT=len((nl & tt) - code),
        pair_Code_TT=len((code & tt) - nl),
        all_three=len(nl & code & tt),
        union_Code_NL=len(nl | code),
        union_all=len(nl | code | tt),
        problem_count=len(log.problem_ids),
    )


# --------------------------------------------------------------------------
# depth


def parse_bucket(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("-")
    if not sep:
        lo = hi = text
    try:
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise DomainError(f"bad depth bucket {text!r}; expected LO-HI") from None
    if lo_i > hi_i:
        raise DomainError(f"empty depth bucket {text!r}")
    return lo_i, hi_i


def depth_stratified(
    log: PredictionLog,
    depths: Mapping[str, Optional[int]],
    buckets: Sequence[tuple[int, int]],
    modality: Optional[str] = None,
) -> dict[tuple[int, int], float]:
    """Accuracy per inclusive depth bucket; buckets with no problems are omitted."""
    for pid in log.problem_ids:
        if depths.get(pid) is None:
            raise MissingDepth(pid)
    out = {}
    for lo, hi in buckets:
        members = {pid for pid in log.problem_ids if lo <= depths[pid] <= hi}
        if not members:
            continue
        out[(lo, hi)] = accuracy(log, modality, members.__contains__)
    return out
