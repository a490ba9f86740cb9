"""Benchmark problems and the per-round curated training sets."""

from __future__ import annotations

import json
import os
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .artifacts import HEADER_KEY, dumps, make_header, sha256_bytes
from .errors import ChecksumMismatch, DuplicateId, OverlapError, SchemaError
from .rationale import MODALITIES, Modality, Trace, reward

SOURCES = ("folio", "proofwriter", "proverqa", "custom")
OPTION_TEXT = {"A": "True", "B": "False", "C": "Uncertain"}

_LABELS = {
    "true": "A",
    "false": "B",
    "uncertain": "C",
    "unknown": "C",
    "a": "A",
    "b": "B",
    "c": "C",
}


def label_to_option(label: str) -> str:
    """``True``/``False``/``Uncertain``/``Unknown`` (or the letter itself) to A/B/C."""
    try:
        return _LABELS[str(label).strip().lower()]
    except KeyError:
        raise ValueError(f"unrecognised label {label!r}") from None


def option_to_label(option: str) -> str:
    return OPTION_TEXT[option]


@dataclass(frozen=True)
class Problem:
    id: str
    premises_text: str
    conclusion_text: str
    gold: str
    depth: Optional[int] = None
    source: str = "custom"
    theory_file: Optional[str] = None

    def __post_init__(self):
        if self.gold not in OPTION_TEXT:
            raise ValueError(f"gold must be one of A/B/C, got {self.gold!r}")
        if self.depth is not None and self.depth < 0:
            raise ValueError("depth must be nonnegative")


def _problem_from_record(rec, lineno: int, base: Path, source: str | None) -> Problem:
    if not isinstance(rec, dict):
        raise SchemaError("expected a JSON object", lineno)
    for key in ("id", "premises", "conclusion", "label"):
        if key not in rec:
            raise SchemaError(f"missing field {key!r}", lineno)
    premises = rec["premises"]
    if isinstance(premises, list):
        if not all(isinstance(s, str) for s in premises):
            raise SchemaError("premises list must hold strings", lineno)
        premises = "\n".join(premises)
    elif not isinstance(premises, str):
        raise SchemaError("premises must be a string or list of strings", lineno)
    if not isinstance(rec["conclusion"], str):
        raise SchemaError("conclusion must be a string", lineno)
    options = rec.get("options")
    if options is not None and (not isinstance(options, list) or len(options) != 3):
        raise SchemaError("options must list exactly three labels", lineno)
    try:
        gold = label_to_option(rec["label"])
    except ValueError as e:
        raise SchemaError(str(e), lineno) from None
    depth = rec.get("depth")
    if depth is not None and (not isinstance(depth, int) or isinstance(depth, bool) or depth < 0):
        raise SchemaError("depth must be a nonnegative integer", lineno)
    src = source or rec.get("source", "custom")
    if src not in SOURCES:
        raise SchemaError(f"unknown source {src!r}", lineno)
    theory = rec.get("theory_file")
    if theory is not None:
        theory = str((base / theory).resolve())
    return Problem(str(rec["id"]), premises, rec["conclusion"], gold, depth, src, theory)


def load_problems(path: str | os.PathLike, source: str | None = None) -> list[Problem]:
    """Read problem JSONL. ``source`` overrides the per-record ``source`` field."""
    path = Path(path)
    problems: list[Problem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON ({e.msg})", lineno) from None
            if lineno == 1 and isinstance(rec, dict) and HEADER_KEY in rec:
                continue
            p = _problem_from_record(rec, lineno, path.parent, source)
            if p.id in seen:
                raise DuplicateId(p.id)
            seen.add(p.id)
            problems.append(p)
    return problems


def problem_to_record(p: Problem) -> dict:
    rec = {
        "id": p.id,
        "premises": p.premises_text,
        "conclusion": p.conclusion_text,
        "options": ["True", "False", "Uncertain"],
        "label": OPTION_TEXT[p.gold],
    }
    if p.depth is not None:
        rec["depth"] = p.depth
    rec["source"] = p.source
    return rec


# --------------------------------------------------------------------------
# curated data


@dataclass(frozen=True)
class CuratedExample:
    problem_id: str
    modality: Modality
    prompt_text: str
    target_text: str
    round: int

    @property
    def key(self):
        return (self.problem_id, self.modality, self.round)

    def to_record(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "modality": self.modality.value,
            "prompt": self.prompt_text,
            "target": self.target_text,
            "round": self.round,
        }

    @classmethod
    def from_record(cls, d: dict) -> "CuratedExample":
        return cls(str(d["problem_id"]), Modality.parse(d["modality"]), d["prompt"], d["target"], int(d["round"]))


@dataclass(frozen=True)
class RoundDataset:
    round: int
    examples: tuple[CuratedExample, ...]
    counts: dict
    seed: int

    def __post_init__(self):
        if sum(self.counts.values()) != len(self.examples):
            raise ValueError("per-modality counts do not sum to the example count")


def _counts(examples: Iterable[CuratedExample]) -> dict[str, int]:
    c = Counter(e.modality for e in examples)
    return {m.value: c.get(m, 0) for m in MODALITIES}


def mix_datasets(parts: Sequence[Sequence[CuratedExample]], seed: int, round_n: int | None = None) -> RoundDataset:
    """Concatenate per-modality parts and shuffle them with ``random.Random(seed)``."""
    combined: list[CuratedExample] = []
    seen = set()
    for part in parts:
        for ex in part:
            if ex.key in seen:
                raise OverlapError(f"example {ex.key!r} appears in more than one part")
            seen.add(ex.key)
            combined.append(ex)
    random.Random(seed).shuffle(combined)
    if round_n is None:
        round_n = max((e.round for e in combined), default=0)
    return RoundDataset(round_n, tuple(combined), _counts(combined), seed)


def keep_first_passing(traces: Sequence[Trace], gold: str) -> Optional[Trace]:
    for tr in traces:
        if reward(tr, gold).value == 1:
            return tr
    return None


def _body(ds: RoundDataset) -> bytes:
    return "".join(dumps(e.to_record()) + "\n" for e in ds.examples).encode("utf-8")


def export_round(ds: RoundDataset, path: str | os.PathLike, inputs: dict | None = None, run_seed: int | None = None) -> Path:
    """Write ``ds`` as JSONL: one header line, then one line per example."""
    body = _body(ds)
    header = make_header(
        "round_dataset",
        run_seed if run_seed is not None else ds.seed,
        inputs,
        round=ds.round,
        shuffle_seed=ds.seed,
        counts=ds.counts,
        count=len(ds.examples),
        checksum=sha256_bytes(body),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write((dumps({HEADER_KEY: header}) + "\n").encode("utf-8"))
        f.write(body)
    os.replace(tmp, path)
    return path


def import_round(path: str | os.PathLike) -> RoundDataset:
    with open(path, "rb") as f:
        first = f.readline()
        body = f.read()
    try:
        header = json.loads(first)[HEADER_KEY]
    except (json.JSONDecodeError, KeyError, TypeError):
        raise SchemaError("round file lacks a header line", 1) from None
    if sha256_bytes(body) != header.get("checksum"):
        raise ChecksumMismatch(f"{path}: body does not match the recorded checksum")
    examples = []
    for lineno, line in enumerate(body.decode("utf-8").splitlines(), start=2):
        try:
            examples.append(CuratedExample.from_record(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise SchemaError(f"bad curated record: {e}", lineno) from None
    ds = RoundDataset(int(header["round"]), tuple(examples), _counts(examples), int(header["shuffle_seed"]))
    if ds.counts != header.get("counts"):
        raise ChecksumMismatch(f"{path}: per-modality counts disagree with the header")
    return ds
