"""Text generation: modality prompts, a scripted stub backend and a chat-completions client."""

from __future__ import annotations

import functools
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import requests

from .errors import AuthError, BackendUnavailable, SchemaError, StubMiss
from .rationale import Modality, extract_trace, transcript

log = logging.getLogger(__name__)

COLLECT_TEMPERATURE = 1.0
EVAL_TEMPERATURE = 0.7
DEFAULT_MAX_TOKENS = 2048
DEFAULT_SAMPLES = 10

INSTRUCTIONS = """\
You are a rigorous and logically precise AI assistant. Your task is to answer a logical reasoning problem strictly following one of three modes, as explicitly specified in the input. Only one mode will be present in the input. Follow that mode exclusively.

- Code Mode (<code> ... <end_of_code> <answer> ... <end_of_answer>)
  - If the input contains <code>, translate the problem into Python code.
  - Execute the logic and derive the answer.

- Natural Language Chain-of-Thought Mode (<nl_cot> ... <end_of_nl_cot> <answer> ... <end_of_answer>)
  - If the input contains <nl_cot>, solve the problem step by step in natural language.

- Truth Table Mode (<truth_table> ... <end_of_truth_table> <answer> ... <end_of_answer>)
  - If the input contains <truth_table>, construct a truth table and derive the answer from it.

### Rules
- Only use the mode specified in the input. Do not switch modes.
- Generate output strictly in the specified mode and format, with no additional text.
- Enclose all reasoning strictly within the corresponding mode tags.
- The final answer must be strictly enclosed in <answer> ... <end_of_answer>.
- Do not provide any reasoning or explanations outside of the designated mode tags."""

PROBLEM_TEMPLATE = """\
<premises>
{premises}
</premises>

<conclusion>
{conclusion}
</conclusion>

<question>
Is the following statement true, false, or uncertain? {conclusion}
</question>

<options>
(A) True
(B) False
(C) Uncertain
</options>"""

EXEMPLAR_HEADER = "Here are some examples."
EXEMPLAR_DELIMITER = "\n\n### End of example\n\n"
PROBLEM_LEAD = "The following is the problem you need to solve."


def render_problem(premises: str, conclusion: str) -> str:
    return PROBLEM_TEMPLATE.format(premises=premises.strip(), conclusion=conclusion.strip())


@dataclass(frozen=True)
class FewShotSet:
    """Worked exemplars for one modality. Targets start with the modality's opening tag."""

    modality: Modality
    exemplars: tuple[tuple[str, str], ...]

    def __post_init__(self):
        for i, (_, target) in enumerate(self.exemplars):
            tr = extract_trace(transcript(target, self.modality), self.modality, f"exemplar-{i}")
            if not tr.valid or tr.answer is None:
                raise ValueError(f"exemplar {i} is not a valid {self.modality.value} trace")


def build_prompt(p, t: Modality, fewshot: Optional[FewShotSet] = None) -> str:
    """Render the instruction prompt for problem ``p`` ending in ``t``'s opening tag."""
    t = Modality.parse(t)
    parts = [INSTRUCTIONS]
    if fewshot is not None and fewshot.exemplars:
        if fewshot.modality is not t:
            raise ValueError(f"few-shot set is for {fewshot.modality.value}, not {t.value}")
        shots = EXEMPLAR_DELIMITER.join(f"{problem}\n\n{target}" for problem, target in fewshot.exemplars)
        parts.append(f"{EXEMPLAR_HEADER}\n\n{shots}{EXEMPLAR_DELIMITER.rstrip()}")
    parts.append(PROBLEM_LEAD)
    parts.append(render_problem(p.premises_text, p.conclusion_text))
    parts.append(t.open_tag)
    return "\n\n".join(parts)


# exemplar traces per modality, drawn from the bundled worked examples
_FEWSHOT_IDS = {
    Modality.NL: ("rockie-nl", "thor-nl"),
    Modality.CODE: ("djokovic-code", "thor-code"),
    Modality.TRUTH_TABLE: ("bonnie-tt", "firtrees-tt", "thor-tt"),
}


def fixture_path(*parts: str) -> Path:
    return Path(str(resources.files("mixthought").joinpath("fixtures", *parts)))


@functools.lru_cache(maxsize=None)
def default_fewshot(t: Modality) -> FewShotSet:
    """Curated exemplars built from the shipped worked-example traces."""
    from .data import load_problems
    from .rationale import render_trace

    t = Modality.parse(t)
    problems = {p.id: p for p in load_problems(fixture_path("problems", "worked.jsonl"))}
    with open(fixture_path("traces", "worked.jsonl"), encoding="utf-8") as f:
        records = {r["id"]: r for r in map(json.loads, filter(str.strip, f))}
    shots = []
    for rid in _FEWSHOT_IDS[t]:
        rec = records[rid]
        p = problems[rec["problem_id"]]
        tr = extract_trace(rec["raw_text"], t, p.id)
        shots.append((render_problem(p.premises_text, p.conclusion_text), render_trace(tr)))
    return FewShotSet(t, tuple(shots))


# --------------------------------------------------------------------------
# requests and backends


@dataclass(frozen=True)
class GenRequest:
    """One sampling call.

    ``problem_id``/``modality``/``first_index`` identify the request for the
    stub backend and are ignored by the remote one.
    """

    prompt: str
    temperature: float = COLLECT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    n_samples: int = DEFAULT_SAMPLES
    seed: Optional[int] = None
    problem_id: Optional[str] = None
    modality: Optional[str] = None
    first_index: int = 0
    model: Optional[str] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")
        if self.max_tokens < 1 or self.n_samples < 1:
            raise ValueError("max_tokens and n_samples must be positive")


@dataclass(frozen=True)
class BackendSpec:
    kind: str  # "remote" | "stub"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = "OPENAI_API_KEY"
    stub_path: Optional[str] = None
    parallelism: int = 8
    timeout: float = 120.0
    max_retries: int = 4
    backoff: float = 1.0
    backoff_cap: float = 30.0
    extra: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.kind == "remote":
            if not self.endpoint or not self.model:
                raise ValueError("remote backend needs an endpoint and a model")
        elif self.kind == "stub":
            if not self.stub_path:
                raise ValueError("stub backend needs a response table path")
        else:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be positive")


def _stub_key_modality(m) -> str:
    try:
        return Modality.parse(m).value
    except ValueError:
        return str(m)


@functools.lru_cache(maxsize=32)
def _load_stub(path: str, mtime_ns: int, size: int) -> dict:
    table: dict = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"stub table: invalid JSON ({e.msg})", lineno) from None
            if "_header" in rec:
                continue
            try:
                key = (rec.get("model"), str(rec["problem_id"]), _stub_key_modality(rec["modality"]), int(rec["sample_index"]))
                table[key] = rec["text"]
            except (KeyError, TypeError, ValueError):
                raise SchemaError("stub table: expected problem_id, modality, sample_index, text", lineno) from None
    return table


def stub_table(path: str | os.PathLike) -> dict:
    path = os.fspath(path)
    st = os.stat(path)
    return _load_stub(path, st.st_mtime_ns, st.st_size)


def _generate_stub(b: BackendSpec, r: GenRequest) -> list[str]:
    table = stub_table(b.stub_path)
    model = r.model or b.model
    modality = _stub_key_modality(r.modality)
    out = []
    for i in range(r.first_index, r.first_index + r.n_samples):
        key = (r.problem_id, modality, i)
        text = table.get((model, *key)) if model is not None else None
        if text is None:
            text = table.get((None, *key))
        if text is None:
            raise StubMiss(key)
        out.append(text)
    return out


def _chat_url(endpoint: str) -> str:
    endpoint = endpoint.rstrip("/")
    return endpoint if endpoint.endswith("/chat/completions") else endpoint + "/chat/completions"


def _generate_remote(b: BackendSpec, r: GenRequest, session: requests.Session | None = None) -> list[str]:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(b.api_key_env) if b.api_key_env else None
    if key:
        headers["Authorization"] = f"Bearer {key}"
    url = _chat_url(b.endpoint)
    http = session or requests
    texts: list[str] = []
    failures = 0
    jitter = random.Random(r.seed)
    while len(texts) < r.n_samples:
        body = {
            "model": r.model or b.model,
            "messages": [{"role": "user", "content": r.prompt}],
            "temperature": r.temperature,
            "max_tokens": r.max_tokens,
            "n": r.n_samples - len(texts),
        }
        if r.seed is not None:
            body["seed"] = r.seed + len(texts)
        body.update(b.extra)
        try:
            resp = http.post(url, json=body, headers=headers, timeout=b.timeout)
            if resp.status_code in (401, 403):
                raise AuthError(f"{url} rejected the credentials in ${b.api_key_env} (HTTP {resp.status_code})")
            if resp.status_code >= 400:
                raise BackendUnavailable(f"HTTP {resp.status_code} from {url}")
            choices = resp.json()["choices"]
            got = [c["message"]["content"] for c in choices]
            if not got or any(not isinstance(t, str) for t in got):
                raise BackendUnavailable(f"malformed response from {url}")
            texts.extend(got[: r.n_samples - len(texts)])
            failures = 0
        except AuthError:
            raise
        except (requests.RequestException, BackendUnavailable, ValueError, KeyError, TypeError) as e:
            failures += 1
            if failures > b.max_retries:
                raise BackendUnavailable(f"{url}: giving up after {failures} attempts ({e})") from None
            delay = min(b.backoff_cap, b.backoff * 2 ** (failures - 1)) * (0.5 + jitter.random() / 2)
            log.warning("generation attempt %d failed (%s); retrying in %.2fs", failures, e, delay)
            time.sleep(delay)
    return texts


def generate(b: BackendSpec, r: GenRequest) -> list[str]:
    """Exactly ``r.n_samples`` completions; partial results are never returned."""
    if b.kind == "stub":
        return _generate_stub(b, r)
    return _generate_remote(b, r)


def generate_many(b: BackendSpec, reqs: Sequence[GenRequest], jobs: int | None = None) -> list[list[str]]:
    """Run requests concurrently, bounded by ``jobs`` (default ``b.parallelism``); results keep input order."""
    workers = max(1, min(jobs or b.parallelism, len(reqs) or 1))
    if workers == 1:
        return [generate(b, r) for r in reqs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: generate(b, r), reqs))
