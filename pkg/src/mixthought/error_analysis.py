"""Judge-model classification of natural-language rationale failures."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

from .client import BackendSpec, GenRequest, generate
from .data import OPTION_TEXT, Problem
from .errors import EmptyInput, JudgeUnparseable
from .rationale import Modality, Trace

CATEGORIES = ("MissingBranch", "InvalidConverse", "CommonsenseInjection", "FactualMisquote")
_CATEGORY_NAMES = {
    "missing branch": "MissingBranch",
    "invalid converse": "InvalidConverse",
    "commonsense injection": "CommonsenseInjection",
    "factual misquote": "FactualMisquote",
}

JUDGE_PROMPT = (
    "You must determine whether a rationale faithfully justifies the truth value of a conclusion given a set of premises.\n\n"
    "Faithful means all and only the steps actually used in deriving the conclusion:\n"
    "- are grounded in the given premises or prior derived steps,\n"
    "- apply valid inference rules (no illicit converse or contraposition),\n"
    "- cover every disjunction branch or quantifier case,\n"
    "- use no unstated assumptions, external knowledge, or background commonsense,\n"
    "- and correctly assess whether the conclusion is supported or contradicted by the premises.\n\n"
    "You must also diagnose where and how the rationale fails when it is unfaithful, allowing trivial unused remarks to be overridden.\n\n"
    "Error Types:\n"
    "- Missing Branch: Failing to exhaustively consider all branches of a disjunction, conditionals, or quantified cases.\n"
    "- Invalid Converse: Illicitly reversing the direction of a conditional (e.g., mistaking 'A → B' for 'B → A').\n"
    "- Commonsense Injection: Using external background knowledge or commonsense not entailed or implied by the premises.\n"
    "- Factual Misquote: Misrepresenting, distorting, or misquoting the explicit content of the premises.\n\n"
    "Input (JSON):\n"
    "{\n"
    '  "premises":   "<string>",\n'
    '  "conclusion": "<string>",\n'
    '  "rationale":  "<string>",\n'
    '  "label":      "<string>",\n'
    '  "predict":    "<string>"\n'
    "}\n\n"
    "Output (JSON):\n"
    "{\n"
    '  "faithful":         true | false,\n'
    '  "error_type":       "<missing branch | invalid converse | commonsense injection | factual misquote>",\n'
    '  "error_location":   "<e.g., Step 3, Clause 2>",\n'
    '  "override":         true | false,\n'
    '  "analysis":         "<brief summary explaining why the reasoning is faithful or unfaithful, citing specific logical failures>"\n'
    "}\n\n"
    "Notes:\n"
    "- If multiple error types apply, list them all separated by commas.\n"
    "- Always identify the first point in the rationale where the faithfulness failure occurs.\n"
    "- Be concise, precise, and consistent in your labeling.\n\n"
    "Input:\n"
)

JUDGE_MODALITY = "judge"
REQUIRED_KEYS = ("faithful", "error_type", "error_location", "override", "analysis")


@dataclass(frozen=True)
class ErrorVerdict:
    faithful: bool
    error_types: frozenset
    error_location: str
    override: bool
    analysis: str
    problem_id: Optional[str] = None

    def __post_init__(self):
        if self.faithful and self.error_types:
            raise ValueError("a faithful verdict cannot carry error types")
        unknown = set(self.error_types) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown error categories {sorted(unknown)}")

    def to_record(self) -> dict:
        d = asdict(self)
        d["error_types"] = [c for c in CATEGORIES if c in self.error_types]
        return d


@dataclass(frozen=True)
class ErrorDistribution:
    percents: dict  # category -> percent of judged cases
    counts: dict
    case_count: int


def _option_text(letter: Optional[str]) -> str:
    if letter is None:
        return "None"
    return f"({letter}) {OPTION_TEXT[letter]}"


def render_judge_prompt(p: Problem, tr: Trace) -> str:
    payload = {
        "premises": p.premises_text,
        "conclusion": p.conclusion_text,
        "rationale": tr.rationale if tr.rationale is not None else tr.raw_text,
        "label": _option_text(p.gold),
        "predict": _option_text(tr.answer),
    }
    return JUDGE_PROMPT + json.dumps(payload, ensure_ascii=False, indent=2)


def _first_json_object(text: str) -> Optional[dict]:
    fenced = re.search(r"```(?:json)?\s*(\{.*?\})\s*```", text, re.DOTALL)
    candidates = [fenced.group(1)] if fenced else []
    decoder = json.JSONDecoder()
    candidates += [text[m.start():] for m in re.finditer(r"\{", text)]
    for c in candidates:
        try:
            obj, _ = decoder.raw_decode(c)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _categories(value) -> frozenset:
    items = value if isinstance(value, list) else re.split(r"[,;]", str(value or ""))
    out = set()
    for item in items:
        name = re.sub(r"[\s_-]+", " ", str(item)).strip().lower()
        if not name or name in ("none", "n/a", "null"):
            continue
        compact = name.replace(" ", "")
        match = _CATEGORY_NAMES.get(name) or next((c for c in CATEGORIES if c.lower() == compact), None)
        if match is None:
            raise JudgeUnparseable(f"unknown error type {item!r}")
        out.add(match)
    return frozenset(out)


def parse_judge_response(text: str, problem_id: Optional[str] = None) -> ErrorVerdict:
    """Parse the judge's JSON object; extra keys are ignored, missing or ill-typed ones are not."""
    obj = _first_json_object(text)
    if obj is None:
        raise JudgeUnparseable("no JSON object in judge response")
    missing = [k for k in REQUIRED_KEYS if k not in obj]
    if missing:
        raise JudgeUnparseable(f"judge response lacks {', '.join(missing)}")
    if not isinstance(obj["faithful"], bool) or not isinstance(obj["override"], bool):
        raise JudgeUnparseable("faithful and override must be booleans")
    types = _categories(obj["error_type"])
    if obj["faithful"] and types:
        raise JudgeUnparseable("judge marked the rationale faithful but listed error types")
    if not obj["faithful"] and not types:
        raise JudgeUnparseable("judge marked the rationale unfaithful without an error type")
    return ErrorVerdict(
        obj["faithful"],
        types,
        str(obj["error_location"] or ""),
        obj["override"],
        str(obj["analysis"] or ""),
        problem_id,
    )


def judge_rationale(p: Problem, tr: Trace, judge: BackendSpec, seed: int = 42, attempts: int = 2) -> ErrorVerdict:
    """Ask the judge model for a verdict, retrying once on an unparseable reply."""
    if tr.modality is not Modality.NL:
        raise ValueError("error analysis applies to natural-language rationales only")
    prompt = render_judge_prompt(p, tr)
    last: JudgeUnparseable | None = None
    for i in range(attempts):
        req = GenRequest(
            prompt,
            temperature=0.0,
            n_samples=1,
            seed=seed + i,
            problem_id=p.id,
            modality=JUDGE_MODALITY,
            first_index=i,
        )
        text = generate(judge, req)[0]
        try:
            return parse_judge_response(text, p.id)
        except JudgeUnparseable as e:
            last = e
    raise JudgeUnparseable(f"{p.id}: {last} (after {attempts} attempts)")


def aggregate_distribution(verdicts: Iterable[ErrorVerdict]) -> ErrorDistribution:
    """Percent of judged cases showing each category; multi-label cases count once per label."""
    verdicts = list(verdicts)
    if not verdicts:
        raise EmptyInput("no verdicts to aggregate")
    counts = Counter(c for v in verdicts if not v.faithful for c in v.error_types)
    full = {c: counts.get(c, 0) for c in CATEGORIES}
    percents = {c: 100.0 * n / len(verdicts) for c, n in full.items()}
    return ErrorDistribution(percents, full, len(verdicts))
