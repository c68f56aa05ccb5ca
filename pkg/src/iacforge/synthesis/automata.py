"""Provider-field automaton and the combined decoder state.

The provider-field automaton is a stack of small acceptors, one per open
syntactic context (top level, block header, block body, value). Each acceptor
reports the token descriptors it admits next and whether it may end. A token
descriptor is ``(kind, value)``; ``value`` ``None`` admits any token of the
kind.

Fixed skeleton tokens that the schema rejects (inherited from a faulty plan)
do not stop decoding: the automaton records a note and stops constraining
until the offending attribute or block closes. Validators report the fault.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..errors import DeadState
from ..hcl.ast import BLOCK_TYPES, KEYWORDS
from ..hcl.grammar import GrammarAutomaton, hcl_automaton
from ..hcl.lexer import Token
from ..iir import Effect, PROTOCOLS

ANY = None
NAME_KINDS = ("IDENT",) + BLOCK_TYPES
EXPR_KINDS = ("STRING", "NUMBER", "true", "false", "[", "{", "IDENT")
INGRESS_FIELDS = ("protocol", "from_port", "to_port", "cidr_blocks", "source")

Admit = dict  # kind -> frozenset of values, or None for any value


def _admit(*pairs) -> Admit:
    out: Admit = {}
    for kind, values in pairs:
        _merge_kind(out, kind, values)
    return out


def _merge_kind(out: Admit, kind: str, values) -> None:
    if kind in out and out[kind] is None:
        return
    if values is None:
        out[kind] = None
    else:
        out[kind] = frozenset(out.get(kind) or ()) | frozenset(values)


def _merge(out: Admit, other: Admit) -> None:
    for k, v in other.items():
        _merge_kind(out, k, v)


def _matches(admit: Admit, tok: Token) -> bool:
    if tok.kind not in admit:
        return False
    values = admit[tok.kind]
    return values is None or tok.value in values


def _name_admit(names) -> Admit:
    out: Admit = {}
    for n in names:
        _merge_kind(out, n if n in KEYWORDS else "IDENT", {n})
    return out


# -- value acceptors ----------------------------------------------------------

class Acceptor:
    """One open context. ``peek(after_child)`` -> (admissible, can_end)."""

    def peek(self, after_child: bool = False) -> tuple[Admit, bool]:
        raise NotImplementedError

    def feed(self, tok: Token) -> "Acceptor | None":
        raise NotImplementedError

    def child_done(self) -> None:
        pass

    def done(self) -> bool:
        admit, can_end = self.peek()
        return can_end and not admit


class Scalar(Acceptor):
    def __init__(self, kinds: dict):
        self.kinds = kinds          # kind -> allowed values or None
        self.seen = False

    def peek(self, after_child=False):
        return ({}, True) if self.seen else (dict(self.kinds), False)

    def feed(self, tok):
        self.seen = True
        return None


class Reference(Acceptor):
    """``head . name [. attr ...]``; ``names`` maps each head to admissible names."""

    def __init__(self, names: dict, fixed_len: int | None = None):
        self.names = names
        self.fixed_len = fixed_len
        self.parts: list[str] = []
        self.after_dot = False

    def peek(self, after_child=False):
        n = len(self.parts)
        if n == 0:
            return _admit(("IDENT", frozenset(self.names))), False
        if self.after_dot:
            if n == 1:
                return _admit(("IDENT", frozenset(self.names.get(self.parts[0], ())))), False
            return _admit(("IDENT", ANY)), False
        min_len = self.fixed_len or 3
        if self.fixed_len is not None and n >= self.fixed_len:
            return {}, True
        return _admit((".", None)), n >= min_len

    def feed(self, tok):
        if tok.kind == ".":
            self.after_dot = True
        else:
            self.parts.append(tok.value)
            self.after_dot = False
        return None


class FreeExpr(Acceptor):
    """Any grammatical expression."""

    def __init__(self):
        self.state = "start"

    def peek(self, after_child=False):
        if after_child or self.state == "end":
            return {}, True
        if self.state == "start":
            return _admit(*((k, None) for k in EXPR_KINDS)), False
        if self.state == "ref":
            return _admit((".", None)), True
        return _admit(("IDENT", None)), False  # after '.'

    def feed(self, tok):
        if self.state == "start":
            if tok.kind == "[":
                self.state = "end"
                return ListOf(FreeExpr, opened=True)
            if tok.kind == "{":
                self.state = "end"
                return MapOf(FreeExpr, opened=True)
            self.state = "ref" if tok.kind == "IDENT" else "end"
        elif self.state == "ref":
            self.state = "dot"
        else:
            self.state = "ref"
        return None


class ListOf(Acceptor):
    def __init__(self, elem, opened: bool = False):
        self.elem = elem            # factory for element acceptors
        self.state = "elem_or_close" if opened else "open"

    def peek(self, after_child=False):
        state = "sep_or_close" if after_child else self.state
        if state == "open":
            return _admit(("[", None)), False
        if state == "closed":
            return {}, True
        if state == "sep_or_close":
            return _admit((",", None), ("]", None)), False
        first, _ = self.elem().peek()
        out = dict(first)
        _merge_kind(out, "]", None)
        return out, False

    def feed(self, tok):
        if self.state == "open":
            self.state = "elem_or_close"
            return None
        if tok.kind == "]":
            self.state = "closed"
            return None
        if tok.kind == "," and self.state == "sep_or_close":
            self.state = "elem_or_close"
            return None
        child = self.elem()
        self.state = "in_elem"
        return _fed(child, tok)

    def child_done(self):
        self.state = "sep_or_close"


class MapOf(Acceptor):
    def __init__(self, value, opened: bool = False):
        self.value = value
        self.state = "key_or_close" if opened else "open"

    def peek(self, after_child=False):
        state = "after_value" if after_child else self.state
        if state == "open":
            return _admit(("{", None)), False
        if state == "closed":
            return {}, True
        if state == "eq":
            return _admit(("=", None)), False
        if state == "value":
            return self.value().peek()[0], False
        keys = _admit(("IDENT", None), ("STRING", None), ("}", None))
        if state == "after_value":
            _merge_kind(keys, ",", None)
        return keys, False

    def feed(self, tok):
        s = self.state
        if s == "open":
            self.state = "key_or_close"
        elif tok.kind == "}":
            self.state = "closed"
        elif s == "after_value" and tok.kind == ",":
            self.state = "key_or_close"
        elif s in ("key_or_close", "after_value"):
            self.state = "eq"
        elif s == "eq":
            self.state = "value"
        else:
            self.state = "in_value"
            return _fed(self.value(), tok)
        return None

    def child_done(self):
        self.state = "after_value"


def _fed(child: Acceptor, tok: Token) -> Acceptor:
    grand = child.feed(tok)
    if grand is not None:
        # the child opened a nested context on its first token
        return _Chain(child, grand)
    return child


class _Chain(Acceptor):
    """Helper returned when a freshly created acceptor immediately nests."""

    def __init__(self, outer: Acceptor, inner: Acceptor):
        self.outer, self.inner = outer, inner

    def peek(self, after_child=False):  # pragma: no cover - replaced on push
        raise AssertionError("chains are unpacked when pushed")


# -- block-level acceptors ----------------------------------------------------

class Top(Acceptor):
    def peek(self, after_child=False):
        return _admit(*((k, None) for k in BLOCK_TYPES)), True

    def feed(self, tok):
        return Header(tok.kind)


class Body(Acceptor):
    """Block body: item names restricted to ``fields``; close gated by ``required``."""

    def __init__(self, fields: dict | None, required=(), repeatable=(), nested: dict | None = None,
                 on_close=None):
        self.fields = fields            # name -> acceptor factory; None admits anything
        self.required = set(required)
        self.repeatable = set(repeatable)
        self.nested = nested or {}      # nested block name -> body factory
        self.emitted: set[str] = set()
        self.values: dict[str, Any] = {}
        self.on_close = on_close
        self.state = "open"
        self.current: str | None = None

    def remaining_required(self, pending: bool = False) -> set[str]:
        return self.required - self._done(pending)

    def _done(self, pending: bool) -> set[str]:
        # a value that may end here counts as emitted for what can follow it
        if pending and self.current is not None and self.current not in self.nested:
            return self.emitted | {self.current}
        return self.emitted

    def peek(self, after_child=False):
        state = "item" if after_child else self.state
        if state == "open":
            return _admit(("{", None)), False
        if state == "closed":
            return {}, True
        if state == "after_name":
            if self.fields is None:
                return _admit(("=", None), ("{", None)), False
            return _admit(("{", None) if self.current in self.nested else ("=", None)), False
        if self.fields is None:
            out = _admit(*((k, None) for k in NAME_KINDS))
        else:
            done = self._done(after_child)
            names = [n for n in self.fields if n not in done]
            names += list(self.nested)
            out = _name_admit(names)
        if not self.remaining_required(after_child):
            _merge_kind(out, "}", None)
        return out, False

    def feed(self, tok):
        s = self.state
        if s == "open":
            self.state = "item"
            return None
        if s == "item":
            if tok.kind == "}":
                self.state = "closed"
                if self.on_close:
                    self.on_close(self)
                return None
            self.current = tok.value
            self.state = "after_name"
            return None
        # after_name
        name = self.current
        if tok.kind == "{":
            self.state = "in_nested"
            factory = self.nested.get(name)
            body = factory() if factory else Body(None)
            body.state = "item"
            return body
        self.state = "in_value"
        factory = self.fields.get(name) if self.fields is not None else None
        value = factory() if factory else FreeExpr()
        self.values[name] = value
        return value

    def child_done(self):
        if self.current is not None and self.current not in self.nested:
            self.emitted.add(self.current)
        self.state = "item"


@dataclass
class Declared:
    """What the automaton has seen so far: resources and provider aliases."""

    resources: dict = field(default_factory=dict)  # kind -> list of names (document order)
    aliases: dict = field(default_factory=dict)    # provider -> set of aliases
    current: tuple | None = None
    known: tuple = ()  # addresses announced by the compiler, possibly later in the document

    def names_of(self, kind: str) -> list[str]:
        return [n for n in self.resources.get(kind, []) if (kind, n) != self.current]

    def all_resources(self) -> dict:
        out: dict = {}
        for kind, name in list(self.known) + [(k, n) for k, ns in self.resources.items() for n in ns]:
            if (kind, name) != self.current:
                out.setdefault(kind, set()).add(name)
        return {k: frozenset(v) for k, v in out.items()}


class Header(Acceptor):
    def __init__(self, block_type: str):
        self.type = block_type
        self.labels: list[str] = []
        self.want = 2 if block_type == "resource" else 1
        self.body: Body | None = None
        self.closed = False

    def peek(self, after_child=False):
        if after_child or self.closed:
            return {}, True
        if len(self.labels) < self.want:
            return _admit(("STRING", self._label_values())), False
        return _admit(("{", None)), False

    def _label_values(self):
        if self.type == "resource" and not self.labels:
            return self.kinds
        return None

    def feed(self, tok):
        if len(self.labels) < self.want:
            self.labels.append(tok.value)
            return None
        body = self.make_body(self)
        body.state = "item"
        self.body = body
        return body

    def child_done(self):
        self.closed = True


class ProviderFieldAutomaton:
    """Σ_prov: schema-aware restriction layered over the grammar."""

    def __init__(self, registry, known=()):
        self.registry = registry
        self.declared = Declared(known=tuple(known))
        self.stack: list[Acceptor] = [Top()]
        self.kinds = frozenset(s.kind for s in registry.kinds.values())
        self.suspended: tuple | None = None  # (depth, stack length)
        self.depth = 0
        self.prev: Token | None = None
        self.notes: list[str] = []

    # -- body construction ------------------------------------------------
    def _header(self, block_type: str) -> Header:
        h = Header(block_type)
        h.kinds = self.kinds
        h.make_body = self._make_body
        return h

    def _value_factory(self, decl):
        t = decl.type
        if t == "reference":
            kind = decl.ref_kind
            return lambda: Reference({kind: frozenset(self.declared.names_of(kind))})
        if decl.allowed is not None:
            if t == "string":
                return lambda: Scalar({"STRING": frozenset(decl.allowed)})
            if t in ("int", "decimal"):
                return lambda: Scalar({"NUMBER": frozenset(decl.allowed)})
        if t == "string":
            return lambda: Scalar({"STRING": None})
        if t in ("int", "decimal"):
            return lambda: Scalar({"NUMBER": None})
        if t == "bool":
            return lambda: Scalar({"true": None, "false": None})
        if t == "list":
            return lambda: ListOf(FreeExpr)
        if t == "map":
            return lambda: MapOf(FreeExpr)
        return FreeExpr

    def _block_body(self, decls) -> Body:
        fields = {d.name: self._value_factory(d) for d in decls}
        return Body(fields, required=[d.name for d in decls if d.required])

    def _ingress_body(self, decls=()) -> Body:
        fields = {
            "protocol": lambda: Scalar({"STRING": frozenset(PROTOCOLS)}),
            "from_port": lambda: Scalar({"NUMBER": None}),
            "to_port": lambda: Scalar({"NUMBER": None}),
            "cidr_blocks": lambda: ListOf(lambda: Scalar({"STRING": None})),
        }
        # a kind that declares ingress entries constrains their values; a
        # connectivity rule (with ``source``) only needs the common fields
        fields.update({d.name: self._value_factory(d) for d in decls})
        fields["source"] = lambda: Reference(self.declared.all_resources())
        return Body(fields, required=["protocol", "from_port", "to_port"])

    def _resource_body(self, kind: str, provider: str | None) -> Body:
        schema = self.registry.lookup(provider, kind) if provider else None
        if schema is None:
            matches = self.registry.kinds_for(kind)
            schema = matches[0] if matches else None
        if schema is None:
            return Body(None)
        fields = {}
        nested = {"ingress": self._ingress_body}
        for d in schema.fields:
            if d.type == "blocks" and d.name == "ingress":
                nested[d.name] = (lambda d=d: self._ingress_body(d.block_fields))
            elif d.type == "blocks":
                nested[d.name] = (lambda d=d: self._block_body(d.block_fields))
            else:
                fields[d.name] = self._value_factory(d)
        fields["provider"] = lambda: Reference(
            {p: frozenset(a) for p, a in self.declared.aliases.items() if a}, fixed_len=2)
        fields["depends_on"] = lambda: ListOf(
            lambda: Reference(self.declared.all_resources(), fixed_len=2))
        fields["effects"] = lambda: ListOf(lambda: Scalar({"STRING": frozenset(e.value for e in Effect)}))
        return Body(fields, required=[d.name for d in schema.fields if d.required], nested=nested)

    def _make_body(self, header: Header) -> Body:
        if header.type == "resource":
            kind, name = header.labels
            self.declared.resources.setdefault(kind, []).append(name)
            self.declared.current = (kind, name)
            return self._resource_body(kind, None)
        if header.type == "provider":
            provider = header.labels[0]

            def close(body: Body, provider=provider):
                alias = body.values.get("alias")
                value = getattr(alias, "value", None) if alias is not None else None
                self.declared.aliases.setdefault(provider, set()).add(value)

            body = Body({"alias": lambda: _Capture({"STRING": None}),
                         "region": lambda: Scalar({"STRING": None})}, on_close=close)
            return body
        return Body(None)

    # -- public -------------------------------------------------------------
    def admissible(self) -> Admit | None:
        """Admitted descriptors, or ``None`` when unconstrained."""
        if self.suspended is not None:
            return None
        out: Admit = {}
        after = False
        for fr in reversed(self.stack):
            admit, can_end = fr.peek(after)
            _merge(out, admit)
            if not can_end:
                break
            after = True
        return out

    def resource_body(self) -> Body | None:
        for fr in reversed(self.stack):
            if isinstance(fr, Body) and fr.fields is not None and "effects" in fr.fields:
                return fr
        return None

    def feed(self, tok: Token, fixed: bool = True) -> bool:
        """Advance; returns False when a fixed token was outside Σ_prov."""
        ok = True
        if self.suspended is not None:
            self._maybe_resume(tok)
        if self.suspended is None:
            ok = self._feed(tok)
            if not ok:
                if not fixed:
                    raise DeadState(f"token {tok.kind} {tok.value!r} rejected by provider-field automaton")
                self._suspend(tok)
        self._track(tok)
        return ok

    def _feed(self, tok: Token) -> bool:
        while True:
            top = self.stack[-1]
            admit, can_end = top.peek()
            if _matches(admit, tok):
                if isinstance(top, Top):
                    child = self._header(tok.kind)
                else:
                    child = top.feed(tok)
                self._push(child)
                while len(self.stack) > 1 and self.stack[-1].done():
                    self.stack.pop()
                    self.stack[-1].child_done()
                return True
            if can_end and len(self.stack) > 1:
                self.stack.pop()
                self.stack[-1].child_done()
                continue
            return False

    def _push(self, child: Acceptor | None) -> None:
        while isinstance(child, _Chain):
            self.stack.append(child.outer)
            child = child.inner
        if child is not None:
            self.stack.append(child)

    def _suspend(self, tok: Token) -> None:
        # unwind to the enclosing body (or top level) and stop constraining
        while len(self.stack) > 1 and not isinstance(self.stack[-1], Body):
            self.stack.pop()
        top = self.stack[-1]
        if isinstance(top, Body) and top.state == "item":
            if tok.kind == "}":
                # close despite unmet requirements; typing reports them
                self.notes.append(f"block closed with required fields missing: {sorted(top.remaining_required())}")
                top.state = "closed"
                if top.on_close:
                    top.on_close(top)
                while len(self.stack) > 1 and self.stack[-1].done():
                    self.stack.pop()
                    self.stack[-1].child_done()
                return
            top.current = tok.value
        body_depth = self.depth
        self.suspended = (body_depth, len(self.stack))
        self.notes.append(f"schema-inconsistent skeleton token {tok.kind} {tok.value!r}; unconstrained until next item")

    def _maybe_resume(self, tok: Token) -> None:
        depth, height = self.suspended
        if self.depth != depth or self.prev is None or self.prev.kind in (".", "=", "{", "["):
            return
        if tok.kind not in NAME_KINDS + ("}",):
            return
        del self.stack[height:]
        top = self.stack[-1]
        if isinstance(top, Body):
            if top.current is not None:
                top.emitted.add(top.current)
                top.required.discard(top.current)
            top.state = "item"
        self.suspended = None

    def _track(self, tok: Token) -> None:
        if tok.kind in ("{", "["):
            self.depth += 1
        elif tok.kind in ("}", "]"):
            self.depth -= 1
        self.prev = tok


class _Capture(Scalar):
    def feed(self, tok):
        self.value = tok.value
        return super().feed(tok)


# -- combined decoder state -------------------------------------------------------

@dataclass
class DecoderState:
    """Σ_HCL stack plus Σ_prov acceptors; owned by one decode session."""

    registry: Any
    grammar: GrammarAutomaton = field(default_factory=hcl_automaton)
    stack: tuple = ()
    prov: ProviderFieldAutomaton | None = None
    emitted: list = field(default_factory=list)
    known: tuple = ()

    def __post_init__(self):
        if not self.stack:
            self.stack = self.grammar.initial()
        if self.prov is None:
            self.prov = ProviderFieldAutomaton(self.registry, self.known)

    @property
    def notes(self) -> list[str]:
        return self.prov.notes

    def step(self, tok: Token, fixed: bool = True) -> None:
        nxt = self.grammar.feed(self.stack, tok.kind)
        if nxt is None:
            raise DeadState(f"grammar rejects {tok.kind} {tok.value!r} after {len(self.emitted)} tokens")
        self.prov.feed(tok, fixed=fixed)
        self.stack = nxt
        self.emitted.append(tok)

    def finished(self) -> bool:
        return self.grammar.feed(self.stack, "$") is not None


def admissible_tokens(state: DecoderState) -> frozenset:
    """Intersection of grammar-admissible classes and provider-field descriptors."""
    classes = state.grammar.admissible(state.stack)
    prov = state.prov.admissible()
    out = set()
    for kind in classes:
        if kind == "$":
            if prov is None or state.prov.depth == 0 and len(state.prov.stack) == 1:
                out.add(("$", None))
            continue
        if prov is None:
            out.add((kind, None))
        elif kind in prov:
            values = prov[kind]
            if values is None:
                out.add((kind, None))
            else:
                out.update((kind, v) for v in values)
    return frozenset(out)


def token_admitted(descriptors: frozenset, tok: Token) -> bool:
    return (tok.kind, None) in descriptors or (tok.kind, tok.value) in descriptors
