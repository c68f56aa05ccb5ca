"""Canonical JSON text and content digests.

Every digest in the project goes through :func:`canonical_json`, so the rules
live here: sorted keys, no insignificant whitespace, UTF-8, and decimals
written in plain positional notation that always carries a fraction part
(``7.5``, ``10.0``) so that a reparse with ``parse_float=Decimal`` restores
the original type.
"""
from __future__ import annotations

import hashlib
import json
from decimal import Decimal
from pathlib import Path
from typing import Any

DIGEST_ALGORITHM = "sha256"


def format_decimal(d: Decimal) -> str:
    if not d.is_finite():
        raise ValueError(f"non-finite decimal {d!r}")
    text = format(d.normalize(), "f")
    if "." not in text:
        text += ".0"
    if text.startswith("-") and text.strip("-0.") == "":
        text = text[1:]
    return text


def _encode(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, Decimal):
        out.append(format_decimal(obj))
    elif isinstance(obj, float):
        raise TypeError("floats are not allowed in canonical JSON; use Decimal")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"non-string key {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(obj[key], out)
        out.append("}")
    else:
        raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    out: list[str] = []
    _encode(obj, out)
    return "".join(out)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def digest_bytes(data: bytes) -> str:
    return hashlib.new(DIGEST_ALGORITHM, data).hexdigest()


def digest_obj(obj: Any) -> str:
    return digest_bytes(canonical_bytes(obj))


def digest_file(path: str | Path) -> str:
    return digest_bytes(Path(path).read_bytes())


def loads(text: str) -> Any:
    """Parse JSON keeping fractional numbers exact."""
    return json.loads(text, parse_float=Decimal)


def load_path(path: str | Path) -> Any:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump_pretty(obj: Any, indent: int = 2) -> str:
    """Indented JSON for run directories; not used for digests."""
    out: list[str] = []
    _pretty(obj, out, 0, indent)
    return "".join(out) + "\n"


def _pretty(obj: Any, out: list[str], level: int, indent: int) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict) and obj:
        out.append("{\n")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(",\n")
            out.append(pad + json.dumps(key, ensure_ascii=False) + ": ")
            _pretty(obj[key], out, level + 1, indent)
        out.append("\n" + end + "}")
    elif isinstance(obj, (list, tuple)) and obj:
        out.append("[\n")
        for i, item in enumerate(obj):
            if i:
                out.append(",\n")
            out.append(pad)
            _pretty(item, out, level + 1, indent)
        out.append("\n" + end + "]")
    else:
        _encode(obj, out)
