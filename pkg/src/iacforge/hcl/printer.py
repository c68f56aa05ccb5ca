"""Canonical printer: two-space indent, one attribute per line, LF endings."""
from __future__ import annotations

from decimal import Decimal
from typing import Any, Iterator

from ..canonical import format_decimal
from .ast import KEYWORDS, Block, HclProgram, Hole, RefExpr
from .lexer import IDENT_RE, Token

INDENT = "  "


def quote(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def bare_key(key: str) -> bool:
    return IDENT_RE.fullmatch(key) is not None and key not in KEYWORDS


def format_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Decimal):
        return format_decimal(value)
    if isinstance(value, str):
        return quote(value)
    if isinstance(value, RefExpr):
        return value.render()
    if isinstance(value, Hole):
        raise ValueError(f"cannot print unfilled hole {value.id} ({value.node}.{value.field})")
    raise TypeError(f"not an HCL expression: {value!r}")


def _multiline(value: Any) -> bool:
    if isinstance(value, dict):
        return bool(value)
    if isinstance(value, list):
        return any(_multiline(v) or isinstance(v, dict) for v in value)
    return False


def _expr(value: Any, level: int, out: list[str]) -> None:
    pad = INDENT * level
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for k, v in value.items():
            key = k if bare_key(k) else quote(k)
            out.append(f"{pad}{INDENT}{key} = ")
            _expr(v, level + 1, out)
            out.append("\n")
        out.append(pad + "}")
    elif isinstance(value, list):
        if not _multiline(value):
            out.append("[")
            for i, v in enumerate(value):
                if i:
                    out.append(", ")
                _expr(v, level, out)
            out.append("]")
            return
        out.append("[\n")
        for v in value:
            out.append(pad + INDENT)
            _expr(v, level + 1, out)
            out.append(",\n")
        out.append(pad + "]")
    else:
        out.append(format_scalar(value))


def _block(block: Block, level: int, out: list[str]) -> None:
    pad = INDENT * level
    head = [block.type] + [quote(label) for label in block.labels]
    out.append(pad + " ".join(head) + " {\n")
    for name, value in block.attributes.items():
        out.append(f"{pad}{INDENT}{name} = ")
        _expr(value, level + 1, out)
        out.append("\n")
    for nested in block.blocks:
        _block(nested, level + 1, out)
    out.append(pad + "}\n")


def print_block(block: Block) -> str:
    out: list[str] = []
    _block(block, 0, out)
    return "".join(out)


def print_program(program: HclProgram) -> str:
    return "\n".join(print_block(b) for b in program.blocks)


def _expr_tokens(value: Any) -> Iterator[Any]:
    if isinstance(value, Hole):
        yield value
    elif isinstance(value, bool):
        yield Token("true" if value else "false", "true" if value else "false")
    elif isinstance(value, (int, Decimal)):
        yield Token("NUMBER", value)
    elif isinstance(value, str):
        yield Token("STRING", value)
    elif isinstance(value, RefExpr):
        for i, part in enumerate(value.parts):
            if i:
                yield Token(".", ".")
            yield Token("IDENT", part)
    elif isinstance(value, list):
        yield Token("[", "[")
        multi = _multiline(value)
        for i, v in enumerate(value):
            if i and not multi:
                yield Token(",", ",")
            yield from _expr_tokens(v)
            if multi:
                yield Token(",", ",")
        yield Token("]", "]")
    elif isinstance(value, dict):
        yield Token("{", "{")
        for k, v in value.items():
            yield Token("IDENT", k) if bare_key(k) else Token("STRING", k)
            yield Token("=", "=")
            yield from _expr_tokens(v)
        yield Token("}", "}")
    else:
        raise TypeError(f"not an HCL expression: {value!r}")


def _name_token(name: str) -> Token:
    return Token(name if name in KEYWORDS else "IDENT", name)


def block_tokens(block: Block, top: bool = True) -> Iterator[Any]:
    if top:
        yield Token(block.type, block.type)
        for label in block.labels:
            yield Token("STRING", label)
    else:
        yield _name_token(block.type)
    yield Token("{", "{")
    for name, value in block.attributes.items():
        yield _name_token(name)
        yield Token("=", "=")
        yield from _expr_tokens(value)
    for nested in block.blocks:
        yield from block_tokens(nested, top=False)
    yield Token("}", "}")


def program_tokens(program: HclProgram) -> Iterator[Any]:
    """Token stream matching ``lex(print_program(program))``; holes pass through."""
    for b in program.blocks:
        yield from block_tokens(b)


def render_expr(value: Any) -> str:
    out: list[str] = []
    _expr(value, 0, out)
    return "".join(out)
