"""Self-evolving rounds and mixture-of-thought inference."""

from __future__ import annotations

import logging
import os
import random
import shlex
import subprocess
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .artifacts import make_header, write_jsonl
from .client import (
    COLLECT_TEMPERATURE,
    DEFAULT_MAX_TOKENS,
    EVAL_TEMPERATURE,
    BackendSpec,
    FewShotSet,
    GenRequest,
    build_prompt,
    default_fewshot,
    generate_many,
)
from .data import CuratedExample, Problem, RoundDataset, export_round, keep_first_passing, mix_datasets
from .errors import BackendUnavailable, NoAnswerProduced, TrainerHookFailed
from .rationale import MODALITIES, Modality, Trace, extract_trace, render_target, reward, transcript

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundConfig:
    rounds: int = 2
    samples: int = 10
    seed: int = 42
    fewshot_round1: bool = True
    trainer_hook: Optional[str] = None
    base_model: Optional[str] = None
    accumulate: bool = False
    on_policy: bool = True
    temperature: float = COLLECT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    modalities: tuple[Modality, ...] = MODALITIES
    jobs: Optional[int] = None

    def __post_init__(self):
        if self.rounds < 1 or self.samples < 1:
            raise ValueError("rounds and samples must both be at least 1")


@dataclass(frozen=True)
class RoundResult:
    round: int
    dataset: RoundDataset
    path: Path
    model: Optional[str]
    next_model: Optional[str]
    kept: dict = field(default_factory=dict)
    reasons: dict = field(default_factory=dict)


def _request_seed(seed: int, n: int, problem_index: int, t: Modality) -> int:
    return seed * 1_000_003 + n * 10_007 + problem_index * 3 + MODALITIES.index(t)


def _fewshot_for(n: int, cfg: RoundConfig, fewshot: Mapping[Modality, FewShotSet] | None, t: Modality):
    if n != 1 or not cfg.fewshot_round1:
        return None
    if fewshot is not None:
        return fewshot.get(t)
    return default_fewshot(t)


def collect_round(
    n: int,
    cfg: RoundConfig,
    problems: Sequence[Problem],
    backend: BackendSpec,
    model: Optional[str] = None,
    fewshot: Mapping[Modality, FewShotSet] | None = None,
) -> tuple[dict[Modality, list[CuratedExample]], list[dict]]:
    """Sample, extract and keep-first filter. Returns per-modality examples and a trace log."""
    if n < 1:
        raise ValueError("round numbers start at 1")
    if not problems:
        raise ValueError("no problems to collect from")
    jobs = []
    for t in cfg.modalities:
        shots = _fewshot_for(n, cfg, fewshot, t)
        for i, p in enumerate(problems):
            prompt = build_prompt(p, t, shots)
            req = GenRequest(
                prompt,
                temperature=cfg.temperature,
                max_tokens=cfg.max_tokens,
                n_samples=cfg.samples,
                seed=_request_seed(cfg.seed, n, i, t),
                problem_id=p.id,
                modality=t.value,
                model=model,
            )
            jobs.append((t, p, req))
    outputs = generate_many(backend, [req for _, _, req in jobs], cfg.jobs)

    parts: dict[Modality, list[CuratedExample]] = {t: [] for t in cfg.modalities}
    trace_log: list[dict] = []
    for (t, p, req), texts in zip(jobs, outputs):
        traces = [extract_trace(transcript(text, t), t, p.id) for text in texts]
        for i, tr in enumerate(traces):
            r = reward(tr, p.gold)
            trace_log.append({**tr.to_record(), "sample_index": i, "round": n, "reward": r.value, "reason": r.reason})
        kept = keep_first_passing(traces, p.gold)
        if kept is not None:
            parts[t].append(CuratedExample(p.id, t, req.prompt, render_target(kept), n))
    return parts, trace_log


def call_trainer_hook(template: str, n: int, dataset_path: Path, model: Optional[str], base_model: Optional[str]) -> str:
    """Run the external fine-tuning command; its last stdout line names the next model."""
    fields = {
        "round": n,
        "dataset_path": str(dataset_path),
        "model": model or "",
        "base_model": base_model or "",
    }
    argv = [part.format(**fields) for part in shlex.split(template)]
    env = {**os.environ, "MIXTHOUGHT_ROUND": str(n), "MIXTHOUGHT_DATASET": str(dataset_path)}
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, env=env)
    except OSError as e:
        raise TrainerHookFailed(f"could not start trainer hook {argv[0]!r}: {e}") from None
    if proc.returncode != 0:
        tail = "\n".join(proc.stderr.strip().splitlines()[-5:])
        raise TrainerHookFailed(f"trainer hook exited with status {proc.returncode}: {tail}")
    lines = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
    if not lines:
        raise TrainerHookFailed("trainer hook printed no model identifier")
    return lines[-1]


def round_path(out_dir: str | os.PathLike, n: int) -> Path:
    return Path(out_dir) / f"round_{n}.jsonl"


def run_round(
    n: int,
    cfg: RoundConfig,
    problems: Sequence[Problem],
    backend: BackendSpec,
    out_dir: str | os.PathLike,
    model: Optional[str] = None,
    fewshot: Mapping[Modality, FewShotSet] | None = None,
    previous: Sequence[CuratedExample] = (),
    inputs: Mapping[str, str] | None = None,
) -> RoundResult:
    """One self-evolving round: collect, filter, mix, export, then hand off to the trainer hook.

    ``previous`` holds earlier rounds' examples, mixed in only when
    ``cfg.accumulate`` is set.
    """
    model = model or cfg.base_model or backend.model
    try:
        parts, trace_log = collect_round(n, cfg, problems, backend, model, fewshot)
    except BackendUnavailable:
        log.error("round %d aborted: backend unavailable; earlier round files are kept", n)
        raise
    reasons = Counter(rec["reason"] for rec in trace_log)
    header = make_header("traces", cfg.seed, inputs, round=n, model=model)
    write_jsonl(Path(out_dir) / f"round_{n}_traces.jsonl", trace_log, header)

    mix_parts = [parts[t] for t in cfg.modalities]
    if cfg.accumulate and previous:
        mix_parts.insert(0, list(previous))
    ds = mix_datasets(mix_parts, seed=cfg.seed + n - 1, round_n=n)
    path = export_round(ds, round_path(out_dir, n), inputs, run_seed=cfg.seed)
    next_model = None
    if cfg.trainer_hook:
        next_model = call_trainer_hook(cfg.trainer_hook, n, path, model, cfg.base_model or backend.model)
        log.info("round %d: trainer produced %s", n, next_model)
    kept = {t.value: len(parts[t]) for t in cfg.modalities}
    return RoundResult(n, ds, path, model, next_model, kept, dict(sorted(reasons.items())))


def evolve(
    cfg: RoundConfig,
    problems: Sequence[Problem],
    backend: BackendSpec,
    out_dir: str | os.PathLike,
    fewshot: Mapping[Modality, FewShotSet] | None = None,
    inputs: Mapping[str, str] | None = None,
) -> list[RoundResult]:
    """Run rounds 1..N. With ``on_policy`` each round samples from the previous round's model."""
    model = cfg.base_model or backend.model
    results: list[RoundResult] = []
    previous: list[CuratedExample] = []
    for n in range(1, cfg.rounds + 1):
        res = run_round(n, cfg, problems, backend, out_dir, model, fewshot, previous, inputs)
        results.append(res)
        previous = list(res.dataset.examples)
        if cfg.on_policy and res.next_model:
            model = res.next_model
    return results


# --------------------------------------------------------------------------
# inference


@dataclass(frozen=True)
class VoteOutcome:
    answers: dict  # Modality -> answer letter or None
    final: str
    tie_broken: bool
    tie_source: Optional[Modality] = None


def tie_rng(seed: int, problem_id: str) -> random.Random:
    """Per-problem stream so tie-breaks do not depend on processing order."""
    return random.Random(f"{seed}:{problem_id}")


def vote(answers: Mapping[Modality, Optional[str]], rng: random.Random) -> VoteOutcome:
    """Strict majority over non-None answers, else a uniform pick among answering modalities."""
    answers = {Modality.parse(k): v for k, v in answers.items()}
    cast = [(t, answers[t]) for t in MODALITIES if t in answers and answers[t] is not None]
    if not cast:
        raise NoAnswerProduced("no modality produced an answer")
    counts = Counter(a for _, a in cast)
    top, top_n = counts.most_common(1)[0]
    if top_n * 2 > len(cast):
        return VoteOutcome(answers, top, False, None)
    source, final = cast[rng.randrange(len(cast))]
    return VoteOutcome(answers, final, True, source)


def plurality(answers: Sequence[Optional[str]], rng: random.Random) -> str:
    """Most frequent non-None answer; ties broken uniformly among the tied letters."""
    counts = Counter(a for a in answers if a is not None)
    if not counts:
        raise NoAnswerProduced("no sample produced an answer")
    best = max(counts.values())
    tied = sorted(a for a, c in counts.items() if c == best)
    return tied[0] if len(tied) == 1 else tied[rng.randrange(len(tied))]


def _eval_request(p: Problem, t: Modality, n: int, seed: int, fewshot, model, temperature, max_tokens) -> GenRequest:
    return GenRequest(
        build_prompt(p, t, fewshot),
        temperature=temperature,
        max_tokens=max_tokens,
        n_samples=n,
        seed=seed,
        problem_id=p.id,
        modality=t.value,
        model=model,
    )


def sample_traces(
    p: Problem,
    t: Modality,
    n: int,
    backend: BackendSpec,
    seed: int,
    fewshot: FewShotSet | None = None,
    model: Optional[str] = None,
    temperature: float = EVAL_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> list[Trace]:
    req = _eval_request(p, t, n, seed, fewshot, model, temperature, max_tokens)
    return [extract_trace(transcript(text, t), t, p.id) for text in generate_many(backend, [req], 1)[0]]


def mot_infer(
    p: Problem,
    backend: BackendSpec,
    seed: int,
    fewshot: Mapping[Modality, FewShotSet] | None = None,
    model: Optional[str] = None,
    temperature: float = EVAL_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> VoteOutcome:
    """One generation per modality, then :func:`vote` with a per-problem seeded tie-break."""
    reqs = [
        _eval_request(p, t, 1, seed, (fewshot or {}).get(t), model, temperature, max_tokens)
        for t in MODALITIES
    ]
    texts = generate_many(backend, reqs, len(reqs))
    answers = {t: extract_trace(transcript(out[0], t), t, p.id).answer for t, out in zip(MODALITIES, texts)}
    return vote(answers, tie_rng(seed, p.id))


def self_consistency(
    p: Problem,
    t: Modality,
    k: int,
    backend: BackendSpec,
    seed: int,
    fewshot: FewShotSet | None = None,
    model: Optional[str] = None,
    temperature: float = EVAL_TEMPERATURE,
) -> str:
    if k < 1:
        raise ValueError("k must be at least 1")
    traces = sample_traces(p, Modality.parse(t), k, backend, seed, fewshot, model, temperature)
    return plurality([tr.answer for tr in traces], tie_rng(seed, p.id))
