"""INI run configuration shared by all subcommands.

Example::

    [run]
    seed = 42
    jobs = 8

    [paths]
    problems = data/folio_train.jsonl
    out_dir = runs/folio

    [backend]
    kind = remote
    endpoint = http://localhost:8000/v1
    model = gemma-2-2b-it
    api_key_env = OPENAI_API_KEY

    [rounds]
    rounds = 2
    samples = 10
    trainer_hook = ./train.sh {round} {dataset_path} {base_model}

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .client import BackendSpec
from .errors import DataError
from .pipeline import RoundConfig
from .rationale import Modality


class ConfigError(DataError):
    pass


_BACKEND_KEYS = {
    "kind": str,
    "endpoint": str,
    "model": str,
    "api_key_env": str,
    "stub_path": str,
    "parallelism": int,
    "timeout": float,
    "max_retries": int,
    "backoff": float,
    "backoff_cap": float,
}

_ROUND_KEYS = {
    "rounds": int,
    "samples": int,
    "fewshot_round1": bool,
    "trainer_hook": str,
    "base_model": str,
    "accumulate": bool,
    "on_policy": bool,
    "temperature": float,
    "max_tokens": int,
    "modalities": "modalities",
}


@dataclass
class GlobalConfig:
    seed: int = 42
    jobs: Optional[int] = None
    problems: Optional[str] = None
    theories: Optional[str] = None
    out_dir: str = "runs"
    backend: dict = field(default_factory=dict)
    judge: dict = field(default_factory=dict)
    rounds: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    source: Optional[str] = None  # config file path, when loaded from one

    def backend_spec(self, section: str = "backend") -> BackendSpec:
        values = dict(getattr(self, section))
        if not values:
            raise ConfigError(f"no [{section}] configured")
        if self.jobs and "parallelism" not in values:
            values["parallelism"] = self.jobs
        try:
            return BackendSpec(**values)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[{section}]: {e}") from None

    def round_config(self) -> RoundConfig:
        try:
            return RoundConfig(seed=self.seed, jobs=self.jobs, **self.rounds)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[rounds]: {e}") from None

    def with_overrides(self, **kw) -> "GlobalConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _convert(section: configparser.SectionProxy, key: str, kind):
    if kind is int:
        return section.getint(key)
    if kind is float:
        return section.getfloat(key)
    if kind is bool:
        return section.getboolean(key)
    if kind == "modalities":
        return tuple(Modality.parse(m) for m in section[key].replace(",", " ").split())
    return section[key]


def _typed(parser: configparser.ConfigParser, name: str, schema: dict, base: Path) -> dict:
    if not parser.has_section(name):
        return {}
    sec = parser[name]
    out = {}
    for key in sec:
        if key not in schema:
            raise ConfigError(f"[{name}] has unknown key {key!r}")
        try:
            out[key] = _convert(sec, key, schema[key])
        except ValueError as e:
            raise ConfigError(f"[{name}] {key}: {e}") from None
    if "stub_path" in out:
        out["stub_path"] = str(base / out["stub_path"])
    return out


def load_config(path: str | os.PathLike) -> GlobalConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    base = path.parent
    known = {"run", "paths", "backend", "judge", "rounds", "eval"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    cfg = GlobalConfig(source=str(path))
    if parser.has_section("run"):
        run = parser["run"]
        cfg.seed = run.getint("seed", fallback=cfg.seed)
        if "jobs" in run:
            cfg.jobs = run.getint("jobs")
    if parser.has_section("paths"):
        for f in ("problems", "theories", "out_dir"):
            if f in parser["paths"]:
                setattr(cfg, f, str(base / parser["paths"][f]))
    cfg.backend = _typed(parser, "backend", _BACKEND_KEYS, base)
    cfg.judge = _typed(parser, "judge", _BACKEND_KEYS, base)
    cfg.rounds = _typed(parser, "rounds", _ROUND_KEYS, base)
    if parser.has_section("eval"):
        cfg.eval = dict(parser["eval"])
    return cfg

