"""Modality-tagged model outputs: extraction, format validity and reward."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional

OPTIONS = ("A", "B", "C")
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "<end_of_answer>"


class Modality(str, Enum):
    NL = "NL"
    CODE = "Code"
    TRUTH_TABLE = "TruthTable"

    @property
    def tag(self) -> str:
        return _TAGS[self]

    @property
    def open_tag(self) -> str:
        return f"<{self.tag}>"

    @property
    def close_tag(self) -> str:
        return f"<end_of_{self.tag}>"

    @property
    def elicitor(self) -> str:
        """String that ends a prompt to request this modality."""
        return self.open_tag

    @classmethod
    def parse(cls, s: "str | Modality") -> "Modality":
        if isinstance(s, Modality):
            return s
        try:
            return _ALIASES[s.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown modality {s!r}") from None

    def __str__(self):
        return self.value


_TAGS = {Modality.NL: "nl_cot", Modality.CODE: "code", Modality.TRUTH_TABLE: "truth_table"}
MODALITIES = tuple(Modality)
_ALIASES = {
    alias: m
    for m in Modality
    for alias in (m.value.lower(), m.tag, m.name.lower())
}
_ALIASES.update({"tt": Modality.TRUTH_TABLE, "truth-table": Modality.TRUTH_TABLE, "nl-cot": Modality.NL})


@dataclass(frozen=True)
class Trace:
    problem_id: str
    modality: Modality
    raw_text: str
    rationale: Optional[str]
    answer: Optional[str]
    valid: bool

    def to_record(self) -> dict:
        d = asdict(self)
        d["modality"] = self.modality.value
        return d

    @classmethod
    def from_record(cls, d: dict) -> "Trace":
        return cls(
            problem_id=str(d["problem_id"]),
            modality=Modality.parse(d["modality"]),
            raw_text=d["raw_text"],
            rationale=d.get("rationale"),
            answer=d.get("answer"),
            valid=bool(d["valid"]),
        )


@dataclass(frozen=True)
class RewardResult:
    value: int
    reason: str  # correct | wrong_answer | invalid_format | no_answer


def _first_pair(raw: str, open_tag: str, close_tag: str) -> Optional[str]:
    """Body of the first well-nested tag pair: the first closer and its nearest opener."""
    end = raw.find(close_tag)
    if end < 0:
        return None
    start = raw.rfind(open_tag, 0, end)
    if start < 0:
        return None
    return raw[start + len(open_tag):end]


_FINAL_RE = re.compile(r"final answer is\s*\(?\s*([ABC])\s*\)?", re.IGNORECASE)
_PAREN_RE = re.compile(r"\(\s*([ABC])\s*\)")
_BARE_RE = re.compile(r"(?<![A-Za-z0-9_])([ABC])(?![A-Za-z0-9_])")


def parse_answer(block: str) -> Optional[str]:
    """First option letter in an answer block.

    ``The final answer is (X)`` takes precedence over a parenthesised ``(X)``,
    which takes precedence over a bare letter.
    """
    for rx in (_FINAL_RE, _PAREN_RE, _BARE_RE):
        m = rx.search(block)
        if m:
            return m.group(1).upper()
    return None


def answer_block(raw: str) -> Optional[str]:
    return _first_pair(raw, ANSWER_OPEN, ANSWER_CLOSE)


def is_valid(z: Optional[str], t: Modality) -> bool:
    """Format check for a rationale extracted for modality ``t``.

    ``z`` is ``None`` when ``t``'s tags were missing or unpaired. The
    rationale may not carry another modality's tags, and code rationales
    must define both a function and a class.
    """
    if z is None or not z.strip():
        return False
    for other in MODALITIES:
        if other is not t and (other.open_tag in z or other.close_tag in z):
            return False
    if t.open_tag in z or t.close_tag in z:
        return False
    if t is Modality.CODE:
        return bool(re.search(r"\bdef\b", z)) and bool(re.search(r"\bclass\b", z))
    return True


def extract_trace(raw: str, t: Modality, problem_id: str) -> Trace:
    z = _first_pair(raw, t.open_tag, t.close_tag)
    block = answer_block(raw)
    answer = parse_answer(block) if block is not None else None
    return Trace(str(problem_id), t, raw, z, answer, is_valid(z, t))


def reward(tr: Trace, gold: str) -> RewardResult:
    if not tr.valid:
        return RewardResult(0, "invalid_format")
    if tr.answer is None:
        return RewardResult(0, "no_answer")
    if tr.answer != gold:
        return RewardResult(0, "wrong_answer")
    return RewardResult(1, "correct")


def render_answer(answer: str) -> str:
    return f"{ANSWER_OPEN}\nThe final answer is ({answer}).\n{ANSWER_CLOSE}"


def render_target(tr: Trace) -> str:
    """Completion text that follows the modality's opening tag in a prompt."""
    if tr.rationale is None or tr.answer is None:
        raise ValueError("only traces with a rationale and an answer can be rendered")
    return f"{tr.rationale}{tr.modality.close_tag}\n{render_answer(tr.answer)}"


def render_trace(tr: Trace) -> str:
    return tr.modality.open_tag + render_target(tr)


def transcript(completion: str, t: Modality) -> str:
    """Prefix the opening tag that a prompt already supplied, unless the model repeated it."""
    if completion.lstrip().startswith(t.open_tag):
        return completion
    return t.open_tag + completion
