"""Recursive-descent parser for the HCL subset.

Mirrors ``data/hcl_subset.ebnf`` rule by rule; ``tests/test_hcl.py`` checks
acceptance against the LL(1) automaton built from the same document.
"""
from __future__ import annotations

from ..errors import HclSyntaxError
from .ast import BLOCK_TYPES, Block, HclProgram, RefExpr
from .lexer import Token, lex

NAME_KINDS = frozenset({"IDENT"} | set(BLOCK_TYPES))
EXPR_START = frozenset({"STRING", "NUMBER", "true", "false", "[", "{", "IDENT"})


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    def peek(self) -> Token | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def fail(self, message: str, expected) -> HclSyntaxError:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else None
            line, col = (last.line, last.col) if last else (1, 1)
            return HclSyntaxError(f"{message}, found end of input", line, col, frozenset(expected))
        return HclSyntaxError(f"{message}, found {tok.kind} {tok.value!r}", tok.line, tok.col, frozenset(expected))

    def expect(self, kind: str, message: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            raise self.fail(message, {kind})
        self.i += 1
        return tok

    def program(self) -> HclProgram:
        blocks = []
        while self.peek() is not None:
            blocks.append(self.block())
        return HclProgram(blocks)

    def block(self) -> Block:
        tok = self.peek()
        if tok.kind not in BLOCK_TYPES:
            raise self.fail("expected a top-level block", BLOCK_TYPES)
        self.i += 1
        labels = [self.expect("STRING", f"{tok.kind} block needs a label").value]
        if tok.kind == "resource":
            labels.append(self.expect("STRING", "missing label: resource blocks take two labels (kind, name)").value)
        block = Block(tok.kind, tuple(labels), line=tok.line)
        self.body(block)
        return block

    def body(self, block: Block) -> None:
        self.expect("{", "expected '{' to open block body")
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "}":
                self.i += 1
                return
            if tok is None or tok.kind not in NAME_KINDS:
                raise self.fail("expected attribute name or '}'", NAME_KINDS | {"}"})
            self.i += 1
            nxt = self.peek()
            if nxt is not None and nxt.kind == "=":
                self.i += 1
                if tok.value in block.attributes:
                    raise HclSyntaxError(f"duplicate attribute {tok.value!r}", tok.line, tok.col)
                block.attributes[tok.value] = self.expr()
            elif nxt is not None and nxt.kind == "{":
                nested = Block(tok.value, (), line=tok.line)
                self.body(nested)
                block.blocks.append(nested)
            else:
                raise self.fail(f"expected '=' or '{{' after {tok.value!r}", {"=", "{"})

    def expr(self):
        tok = self.peek()
        if tok is None or tok.kind not in EXPR_START:
            raise self.fail("expected an expression", EXPR_START)
        kind = tok.kind
        if kind in ("STRING", "NUMBER"):
            self.i += 1
            return tok.value
        if kind in ("true", "false"):
            self.i += 1
            return kind == "true"
        if kind == "[":
            return self.list_expr()
        if kind == "{":
            return self.map_expr()
        return self.reference()

    def list_expr(self) -> list:
        self.expect("[", "expected '['")
        items = []
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "]":
                self.i += 1
                return items
            items.append(self.expr())
            tok = self.peek()
            if tok is not None and tok.kind == ",":
                self.i += 1
            elif tok is None or tok.kind != "]":
                raise self.fail("expected ',' or ']' in list", {",", "]"})

    def map_expr(self) -> dict:
        self.expect("{", "expected '{'")
        out: dict = {}
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "}":
                self.i += 1
                return out
            if tok is None or tok.kind not in ("IDENT", "STRING"):
                raise self.fail("expected map key or '}'", {"IDENT", "STRING", "}"})
            self.i += 1
            if tok.value in out:
                raise HclSyntaxError(f"duplicate map key {tok.value!r}", tok.line, tok.col)
            self.expect("=", "expected '=' after map key")
            out[tok.value] = self.expr()
            nxt = self.peek()
            if nxt is not None and nxt.kind == ",":
                self.i += 1

    def reference(self) -> RefExpr:
        parts = [self.expect("IDENT", "expected identifier").value]
        while (tok := self.peek()) is not None and tok.kind == ".":
            self.i += 1
            parts.append(self.expect("IDENT", "expected identifier after '.'").value)
        return RefExpr(tuple(parts))


def parse(text: str) -> HclProgram:
    """Parse HCL-subset text; raises HclSyntaxError with line/column."""
    return _Parser(lex(text)).program()


def parse_tokens(tokens: list[Token]) -> HclProgram:
    return _Parser(tokens).program()
