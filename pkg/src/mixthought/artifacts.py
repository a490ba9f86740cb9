"""JSONL artifacts with a provenance header line.

Every file this package writes starts with one ``{"_header": {...}}`` record
carrying the tool version, the run seed and sha256 digests of the inputs.
Readers skip that record transparently.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from . import __version__

HEADER_KEY = "_header"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def make_header(kind: str, seed: int | None, inputs: Mapping[str, str | os.PathLike] | None = None, **extra) -> dict:
    """Header payload; ``inputs`` maps a role name to a file path that gets hashed."""
    header: dict[str, Any] = {"tool": "mixthought", "version": __version__, "kind": kind, "seed": seed}
    header["inputs"] = {
        name: {"path": os.path.basename(str(p)), "sha256": sha256_file(p)}
        for name, p in sorted((inputs or {}).items())
        if p is not None
    }
    header.update(extra)
    return header


def dumps(record: Mapping) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=False, separators=(", ", ": "))


def write_jsonl(path: str | os.PathLike, records: Iterable[Mapping], header: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        if header is not None:
            f.write(dumps({HEADER_KEY: dict(header)}) + "\n")
        for r in records:
            f.write(dumps(r) + "\n")
    os.replace(tmp, path)
    return path


def iter_jsonl(path: str | os.PathLike) -> Iterator[tuple[int, Any]]:
    """Yield ``(line_number, value)`` for every non-blank line, header included."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if line.strip():
                yield lineno, json.loads(line)


def read_jsonl(path: str | os.PathLike) -> tuple[dict | None, list[dict]]:
    """Return ``(header, records)``; raises ``json.JSONDecodeError`` on bad lines."""
    header = None
    records = []
    for lineno, value in iter_jsonl(path):
        if lineno == 1 and isinstance(value, dict) and HEADER_KEY in value:
            header = value[HEADER_KEY]
            continue
        records.append(value)
    return header, records
