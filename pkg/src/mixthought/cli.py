"""``mixthought`` command line.

Exit codes: 0 success, 2 usage error, 3 data error, 4 backend error,
5 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .artifacts import make_header, read_jsonl, write_jsonl
from .client import BackendSpec
from .config import GlobalConfig, load_config
from .data import load_problems
from .entail import format_table, ground, solve_truth_table, verdict_to_option
from .errors import BackendError, DataError, MixThoughtError, SchemaError
from .evaluation import (
    PredictionLog,
    accuracy,
    budget_curve,
    depth_stratified,
    format_curve,
    overlap_stats,
    parse_bucket,
    pass_at_k,
    write_curve,
)
from .logic import format_formula, parse_theory
from .rationale import MODALITIES, Modality, Trace, extract_trace, reward, transcript

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("mixthought")


class UsageError(MixThoughtError):
    pass


def _read_theory(path: str):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"theory file {path} does not exist")
    return parse_theory(p.read_text(encoding="utf-8"))


def _require_file(path: Optional[str], what: str) -> str:
    if not path:
        raise UsageError(f"no {what} given")
    if not Path(path).is_file():
        raise UsageError(f"{what} {path} does not exist")
    return path


# --------------------------------------------------------------------------
# logic commands


def cmd_solve(args, cfg: GlobalConfig) -> int:
    theory = _read_theory(args.theory)
    result = solve_truth_table(ground(theory, args.var_cap), args.var_cap, args.rows)
    letter, inconsistent = verdict_to_option(result.verdict)
    if inconsistent:
        print("warning: premises are inconsistent; reporting option C", file=sys.stderr)
    print(f"{result.verdict.value} ({letter})")
    if args.table:
        print(f"surviving rows: {result.surviving_count}, conclusion holds in {result.satisfying_count}")
        sys.stdout.write(format_table(result))
    return EXIT_OK


def cmd_ground(args, cfg: GlobalConfig) -> int:
    g = ground(_read_theory(args.theory), args.var_cap)
    for v in g.vars:
        print(f"p{v.id} = {v.label}")
    for i, f in enumerate(g.premises, start=1):
        print(f"premise {i}: {format_formula(f)}")
    print(f"conclusion: {format_formula(g.conclusion)}")
    return EXIT_OK


def cmd_validate(args, cfg: GlobalConfig) -> int:
    if args.theory:
        for path in args.theory:
            theory = _read_theory(path)
            g = ground(theory, args.var_cap)
            print(f"{path}: ok ({len(theory.premises)} premises, {len(g.vars)} ground atoms)")
        return EXIT_OK
    problems_path = args.problems or cfg.problems
    if not args.traces:
        problems = load_problems(_require_file(problems_path, "problems file"))
        print(f"{problems_path}: ok ({len(problems)} problems)")
        return EXIT_OK
    gold = {}
    if problems_path:
        gold = {p.id: p.gold for p in load_problems(_require_file(problems_path, "problems file"))}
    _, recs = read_jsonl(_require_file(args.traces, "traces file"))
    out, passed = [], 0
    for i, rec in enumerate(recs, start=1):
        try:
            t = Modality.parse(rec["modality"])
            pid = str(rec["problem_id"])
            g = rec.get("gold") or gold[pid]
            tr = extract_trace(transcript(rec["raw_text"], t), t, pid)
        except (KeyError, ValueError) as e:
            raise SchemaError(f"trace record {i}: {e}", i) from None
        r = reward(tr, g)
        passed += r.value
        out.append({"problem_id": pid, "modality": t.value, "valid": tr.valid, "answer": tr.answer, "reward": r.value, "reason": r.reason})
    inputs = {"traces": args.traces, **({"problems": problems_path} if problems_path else {})}
    if args.out:
        write_jsonl(args.out, out, make_header("validation", cfg.seed, inputs))
    else:
        for row in out:
            print(json.dumps(row))
    print(f"{passed}/{len(out)} traces earn reward 1", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# model commands


def _backend(args, cfg: GlobalConfig, section: str = "backend", prefix: str = "") -> BackendSpec:
    values = dict(getattr(cfg, section))
    stub = getattr(args, f"{prefix}stub", None)
    endpoint = getattr(args, f"{prefix}endpoint", None)
    model = getattr(args, f"{prefix}model", None)
    if stub:
        values.update(kind="stub", stub_path=stub)
    if endpoint:
        values.update(kind="remote", endpoint=endpoint)
    if model:
        values["model"] = model
    if not values:
        raise UsageError(f"no backend configured; pass --{prefix}stub or --{prefix}endpoint, or a [{section}] config section")
    if cfg.jobs and "parallelism" not in values:
        values["parallelism"] = cfg.jobs
    try:
        return BackendSpec(**values)
    except (TypeError, ValueError) as e:
        raise UsageError(f"backend: {e}") from None


def cmd_evolve(args, cfg: GlobalConfig) -> int:
    from dataclasses import replace

    from .pipeline import evolve

    problems_path = _require_file(args.problems or cfg.problems, "problems file")
    problems = load_problems(problems_path)
    backend = _backend(args, cfg)
    rc = cfg.round_config()
    overrides = {k: v for k, v in (("rounds", args.rounds), ("samples", args.samples), ("trainer_hook", args.trainer_hook)) if v is not None}
    if args.zero_shot:
        overrides["fewshot_round1"] = False
    rc = replace(rc, **overrides)
    out_dir = args.out_dir or cfg.out_dir
    inputs = {"problems": problems_path}
    if cfg.source:
        inputs["config"] = cfg.source
    if backend.kind == "stub":
        inputs["stub"] = backend.stub_path
    results = evolve(rc, problems, backend, out_dir, inputs=inputs)
    for res in results:
        counts = " ".join(f"{k}={v}" for k, v in res.kept.items())
        nxt = f" next_model={res.next_model}" if res.next_model else ""
        print(f"round {res.round}: {len(res.dataset.examples)} examples ({counts}) -> {res.path}{nxt}")
    return EXIT_OK


def _parse_mode(mode: str):
    kind, _, rest = mode.partition(":")
    if kind == "mot" and not rest:
        return ("mot", None, 1)
    if kind == "sot" and rest:
        return ("sot", Modality.parse(rest), 1)
    if kind == "sc" and "@" in rest:
        m, _, k = rest.partition("@")
        return ("sc", Modality.parse(m), int(k))
    if kind == "pool" and rest.isdigit():
        return ("pool", None, int(rest))
    raise ValueError(mode)


def cmd_infer(args, cfg: GlobalConfig) -> int:
    from .pipeline import sample_traces, tie_rng, plurality, vote

    try:
        kind, t, k = _parse_mode(args.mode)
    except ValueError:
        raise UsageError(f"bad --mode {args.mode!r}; use mot, sot:<modality>, sc:<modality>@k or pool:<n>") from None
    problems_path = _require_file(args.problems or cfg.problems, "problems file")
    problems = load_problems(problems_path)
    backend = _backend(args, cfg)
    temperature = args.temperature
    records, traces = [], []

    def add(p, trs, label=None):
        for i, tr in enumerate(trs):
            records.append({"problem_id": p.id, "modality": label or tr.modality.value, "sample_index": i, "answer": tr.answer, "correct": tr.answer == p.gold})
            traces.append({**tr.to_record(), "sample_index": i})

    for p in problems:
        if kind == "mot":
            trs = [sample_traces(p, m, 1, backend, cfg.seed, temperature=temperature)[0] for m in MODALITIES]
            for tr in trs:
                add(p, [tr])
            try:
                outcome = vote({tr.modality: tr.answer for tr in trs}, tie_rng(cfg.seed, p.id))
                final = outcome.final
            except DataError:
                final = None
            records.append({"problem_id": p.id, "modality": "MoT", "sample_index": 0, "answer": final, "correct": final == p.gold})
        elif kind == "sot":
            add(p, sample_traces(p, t, 1, backend, cfg.seed, temperature=temperature))
        elif kind == "sc":
            trs = sample_traces(p, t, k, backend, cfg.seed, temperature=temperature)
            add(p, trs)
            try:
                final = plurality([tr.answer for tr in trs], tie_rng(cfg.seed, p.id))
            except DataError:
                final = None
            records.append({"problem_id": p.id, "modality": f"SC@{k}", "sample_index": 0, "answer": final, "correct": final == p.gold})
        else:
            for m in MODALITIES:
                add(p, sample_traces(p, m, k, backend, cfg.seed, temperature=temperature))

    inputs = {"problems": problems_path}
    if backend.kind == "stub":
        inputs["stub"] = backend.stub_path
    header = make_header("predictions", cfg.seed, inputs, mode=args.mode, model=backend.model)
    PredictionLog.from_answers(
        ((r["problem_id"], r["modality"], r["sample_index"], r["answer"]) for r in records),
        {p.id: p.gold for p in problems},
    ).save(args.out, header)
    trace_path = Path(args.out).with_suffix(".traces.jsonl")
    write_jsonl(trace_path, traces, {**header, "kind": "traces"})
    print(f"wrote {len(records)} predictions to {args.out} and traces to {trace_path}")
    return EXIT_OK


def cmd_errors(args, cfg: GlobalConfig) -> int:
    from .error_analysis import aggregate_distribution, judge_rationale

    problems_path = _require_file(args.problems or cfg.problems, "problems file")
    problems = {p.id: p for p in load_problems(problems_path)}
    log_ = PredictionLog.load(_require_file(args.log, "prediction log"))
    _, trace_recs = read_jsonl(_require_file(args.traces, "traces file"))
    traces = {}
    for rec in trace_recs:
        tr = Trace.from_record(rec)
        traces.setdefault((tr.problem_id, tr.modality, int(rec.get("sample_index", 0))), tr)
    judge = _backend(args, cfg, "judge", "judge_")
    failed = [pid for pid in log_.problem_ids if log_.has_pool(pid, "NL") and not log_.pool(pid, "NL")[0].correct]
    verdicts = []
    for pid in failed:
        tr = traces.get((pid, Modality.NL, 0))
        if tr is None:
            raise SchemaError(f"no NL trace for failed problem {pid}")
        verdicts.append(judge_rationale(problems[pid], tr, judge, cfg.seed))
    inputs = {"problems": problems_path, "log": args.log, "traces": args.traces}
    write_jsonl(args.out, (v.to_record() for v in verdicts), make_header("error_verdicts", cfg.seed, inputs))
    dist = aggregate_distribution(verdicts)
    print(f"{dist.case_count} failed NL cases judged")
    for c, pct in dist.percents.items():
        print(f"{c} {pct:.1f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval


def cmd_eval(args, cfg: GlobalConfig) -> int:
    if args.metric == "passk":
        print(f"{pass_at_k(args.n, args.c, args.k):.4f}")
        return EXIT_OK
    log_ = PredictionLog.load(_require_file(args.log, "prediction log"))
    if args.metric == "accuracy":
        print(f"{accuracy(log_, args.modality):.2f}")
    elif args.metric == "budget":
        ks = [int(k) for k in args.ks.split(",")]
        runs = args.runs if args.runs is not None else int(cfg.eval.get("runs", 10))
        points = budget_curve(log_, ks, None if args.mot else args.modality or "NL", runs, cfg.seed, args.mode)
        if args.out:
            write_curve(points, args.out, cfg.seed, {"log": args.log}, mode=args.mode)
        sys.stdout.write(format_curve(points))
    elif args.metric == "overlap":
        any_pool = args.any_of_pool or cfg.eval.get("any_of_pool", "false").lower() in ("1", "true", "yes", "on")
        st = overlap_stats(log_, any_pool)
        for name, value in vars(st).items():
            print(f"{name} {value}")
        print(f"oracle_percent {st.oracle_percent:.2f}")
    else:
        problems = load_problems(_require_file(args.problems or cfg.problems, "problems file"))
        buckets = [parse_bucket(b) for b in args.buckets.split(",")]
        result = depth_stratified(log_, {p.id: p.depth for p in problems}, buckets, args.modality)
        for lo, hi in buckets:
            value = result.get((lo, hi))
            print(f"{lo}-{hi} {'absent' if value is None else f'{value:.2f}'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_backend_flags(p: argparse.ArgumentParser, prefix: str = "") -> None:
    dash = prefix.replace("_", "-")
    p.add_argument(f"--{dash}stub", dest=f"{prefix}stub", help="stub response table (JSONL)")
    p.add_argument(f"--{dash}endpoint", dest=f"{prefix}endpoint", help="chat-completions base URL")
    p.add_argument(f"--{dash}model", dest=f"{prefix}model", help="model identifier")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixthought", description="Mixture-of-thought logical reasoning toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--seed", type=int, default=None, help="global seed (default 42)")
    ap.add_argument("--config", help="INI config file")
    ap.add_argument("--jobs", type=int, default=None, help="in-flight request bound")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("solve", help="decide a theory file by truth-table entailment")
    p.add_argument("theory")
    p.add_argument("--table", "--dump-table", action="store_true", help="print the surviving rows")
    p.add_argument("--rows", type=int, default=64, help="max rows to print")
    p.add_argument("--var-cap", "--cap", type=int, default=24)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("ground", help="print the propositional grounding of a theory")
    p.add_argument("theory")
    p.add_argument("--var-cap", type=int, default=24)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("validate", help="check theory, problem or trace files")
    p.add_argument("--theory", nargs="+")
    p.add_argument("--problems")
    p.add_argument("--traces", help="JSONL of {problem_id, modality, raw_text[, gold]}")
    p.add_argument("--out")
    p.add_argument("--var-cap", type=int, default=24)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evolve", help="run self-evolving data-collection rounds")
    p.add_argument("--problems")
    p.add_argument("--out-dir")
    p.add_argument("--rounds", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--trainer-hook")
    p.add_argument("--zero-shot", action="store_true", help="no exemplars in round 1 either")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("infer", help="generate predictions and write a prediction log")
    p.add_argument("--problems")
    p.add_argument("--mode", default="mot", help="mot | sot:<modality> | sc:<modality>@k | pool:<n>")
    p.add_argument("--out", required=True)
    p.add_argument("--temperature", type=float, default=0.7)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metrics over prediction logs")
    esub = p.add_subparsers(dest="metric", required=True, metavar="METRIC")
    e = esub.add_parser("accuracy")
    e.add_argument("--log", required=True)
    e.add_argument("--modality")
    e = esub.add_parser("passk")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--c", type=int, required=True)
    e.add_argument("--k", type=int, required=True)
    e = esub.add_parser("budget")
    e.add_argument("--log", required=True)
    e.add_argument("--ks", default="1,3,6,12")
    grp = e.add_mutually_exclusive_group()
    grp.add_argument("--modality")
    grp.add_argument("--mot", action="store_true")
    e.add_argument("--runs", type=int)
    e.add_argument("--mode", choices=("pass", "vote"), default="pass")
    e.add_argument("--out", help="write a .dat curve file")
    e = esub.add_parser("overlap")
    e.add_argument("--log", required=True)
    e.add_argument("--any-of-pool", action="store_true")
    e = esub.add_parser("depth")
    e.add_argument("--log", required=True)
    e.add_argument("--problems")
    e.add_argument("--buckets", default="1-5,5-8")
    e.add_argument("--modality")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("errors", help="judge failed natural-language rationales")
    p.add_argument("--log", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--problems")
    p.add_argument("--out", required=True)
    _add_backend_flags(p, "judge_")
    p.set_defaults(func=cmd_errors)
    return ap


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else GlobalConfig()
        cfg = cfg.with_overrides(seed=args.seed, jobs=args.jobs)
        return args.func(args, cfg)
    except UsageError as e:
        print(f"mixthought: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"mixthought: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as e:
        print(f"mixthought: backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (OSError, json.JSONDecodeError) as e:
        print(f"mixthought: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"mixthought: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
