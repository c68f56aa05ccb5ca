from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Any

from ..errors import HclSyntaxError
from .ast import KEYWORDS

IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*")
NUMBER_RE = re.compile(r"-?[0-9]+(\.[0-9]+)?")
PUNCT = frozenset("{}[]=,.")
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


@dataclass(frozen=True)
class Token:
    kind: str
    value: Any
    line: int = 0
    col: int = 0

    @property
    def key(self) -> tuple:
        return (self.kind, self.value)


def token_kind_of_word(word: str) -> str:
    return word if word in KEYWORDS else "IDENT"


def lex(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#" or text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c in PUNCT:
            toks.append(Token(c, c, start_line, start_col))
            i += 1
            col += 1
            continue
        if c == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n or text[j] == "\n":
                    raise HclSyntaxError("unterminated string literal", start_line, start_col)
                ch = text[j]
                if ch == '"':
                    j += 1
                    break
                if ch == "\\":
                    if j + 1 >= n:
                        raise HclSyntaxError("unterminated escape", line, col + (j - i))
                    esc = text[j + 1]
                    if esc in _ESCAPES:
                        buf.append(_ESCAPES[esc])
                        j += 2
                        continue
                    if esc == "u" and re.fullmatch(r"[0-9a-fA-F]{4}", text[j + 2:j + 6] or ""):
                        buf.append(chr(int(text[j + 2:j + 6], 16)))
                        j += 6
                        continue
                    raise HclSyntaxError(f"unknown escape \\{esc}", line, col + (j - i))
                buf.append(ch)
                j += 1
            toks.append(Token("STRING", "".join(buf), start_line, start_col))
            col += j - i
            i = j
            continue
        m = NUMBER_RE.match(text, i)
        if m and (c.isdigit() or c == "-"):
            s = m.group()
            value: Any = Decimal(s) if "." in s else int(s)
            toks.append(Token("NUMBER", value, start_line, start_col))
            col += len(s)
            i = m.end()
            continue
        m = IDENT_RE.match(text, i)
        if m:
            word = m.group()
            kind = token_kind_of_word(word)
            toks.append(Token(kind, word, start_line, start_col))
            col += len(word)
            i = m.end()
            continue
        raise HclSyntaxError(f"unexpected character {c!r}", start_line, start_col)
    return toks
