"""Versioned text serialization shared by every file format.

All on-disk artifacts are UTF-8 JSON-lines documents: the first line is a
header object carrying a ``schema`` tag ("sgdata/1", "sggraph/1", ...), the
remaining lines are records. Floats are emitted with Python's shortest
round-trip repr, so save/load/save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from .errors import ParseError


def jsonable(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays for json.dumps."""
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value


def dump_record(record: dict) -> str:
    """One deterministic JSON line (sorted keys, no whitespace)."""
    return json.dumps(jsonable(record), sort_keys=True, separators=(",", ":"))


def dump_document(schema: str, header: dict, records: Iterable[dict]) -> str:
    head = dict(header)
    head["schema"] = schema
    lines = [dump_record(head)]
    lines.extend(dump_record(r) for r in records)
    return "\n".join(lines) + "\n"


def parse_document(text: str, schema: str) -> tuple[dict, Iterator[dict]]:
    """Split a document into (header, record iterator), checking the tag."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty document")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header line: {exc}") from exc
    if not isinstance(header, dict) or header.get("schema") != schema:
        raise ParseError(f"expected schema {schema!r}, got {header.get('schema') if isinstance(header, dict) else header!r}")

    def records() -> Iterator[dict]:
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {i}: {exc}") from exc

    return header, records()


def read_document(path: str | Path, schema: str) -> tuple[dict, Iterator[dict]]:
    text = Path(path).read_text(encoding="utf-8")
    return parse_document(text, schema)


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def digest(payload: Any) -> str:
    """Short stable content digest used to key caches and stamp outputs."""
    blob = dump_record({"v": jsonable(payload)}).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
