"""EBNF loader and the LL(1) pushdown automaton derived from it.

The grammar document in ``data/hcl_subset.ebnf`` is the single source of
truth. It is read here, desugared to BNF (``{x}``, ``[x]`` and groups become
fresh nonterminals), and turned into an LL(1) prediction table. The
resulting :class:`GrammarAutomaton` is a deterministic pushdown automaton
over token classes; the decoder uses it to compute admissible next tokens
and the test suite checks the hand-written parser against it.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

from ..registry import data_path

EOF = "$"
EPS: tuple = ()

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>\(\*.*?\*\))
  | (?P<lit>"[^"]*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[=|;{}\[\]()])
""", re.S | re.X)


class GrammarError(Exception):
    pass


def _tokenize_ebnf(text: str) -> list[tuple[str, str]]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise GrammarError(f"bad EBNF near {text[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind in ("ws", "comment"):
            continue
        out.append((kind, m.group()))
    return out


@dataclass
class Grammar:
    start: str
    productions: dict[str, list[tuple]] = field(default_factory=dict)
    terminals: set[str] = field(default_factory=set)

    @property
    def nonterminals(self) -> set[str]:
        return set(self.productions)

    def is_terminal(self, sym: str) -> bool:
        return sym not in self.productions


class _EbnfReader:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0
        self.g: Grammar | None = None
        self.fresh = 0
        self.literals: set[str] = set()

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise GrammarError(f"expected {value!r} got {tok[1]!r}")
        self.i += 1
        return tok

    def read(self) -> Grammar:
        rules: list[tuple[str, list]] = []
        while self.peek()[0] is not None:
            _, lhs = self.take()
            self.take("=")
            rules.append((lhs, self.alternatives()))
            self.take(";")
        if not rules:
            raise GrammarError("empty grammar")
        self.g = Grammar(start=rules[0][0])
        for lhs, _ in rules:
            self.g.productions[lhs] = []
        for lhs, alts in rules:
            for alt in alts:
                self.g.productions[lhs].append(tuple(self.lower(item) for item in alt))
        for prods in self.g.productions.values():
            for prod in prods:
                for sym in prod:
                    if sym not in self.g.productions:
                        self.g.terminals.add(sym)
        for t in self.g.terminals:
            if not (t.isupper() or not t.isidentifier() or t in self.literals):
                raise GrammarError(f"undefined nonterminal {t!r}")
        return self.g

    # alternatives := sequence { "|" sequence }
    def alternatives(self):
        alts = [self.sequence()]
        while self.peek()[1] == "|":
            self.take("|")
            alts.append(self.sequence())
        return alts

    def sequence(self):
        items = []
        while self.peek()[1] not in ("|", ";", "}", "]", ")", None):
            kind, text = self.peek()
            if text in ("{", "[", "("):
                self.take()
                inner = self.alternatives()
                close = {"{": "}", "[": "]", "(": ")"}[text]
                self.take(close)
                items.append((text, inner))
            elif kind == "lit":
                self.take()
                lit = text[1:-1]
                self.literals.add(lit)
                items.append(("t", lit))
            else:
                self.take()
                items.append(("n", text))
        return items

    def new_nt(self, hint: str) -> str:
        self.fresh += 1
        name = f"_{hint}{self.fresh}"
        self.g.productions[name] = []
        return name

    def lower(self, item) -> str:
        tag, val = item
        if tag in ("t", "n"):
            return val
        alts = [tuple(self.lower(x) for x in alt) for alt in val]
        if tag == "(":
            nt = self.new_nt("grp")
            self.g.productions[nt] = alts
        elif tag == "[":
            nt = self.new_nt("opt")
            self.g.productions[nt] = alts + [EPS]
        else:
            nt = self.new_nt("rep")
            self.g.productions[nt] = [alt + (nt,) for alt in alts] + [EPS]
        return nt


def parse_ebnf(text: str) -> Grammar:
    return _EbnfReader(_tokenize_ebnf(text)).read()


def _first_of_seq(seq, first, nullable):
    out = set()
    for sym in seq:
        out |= first[sym]
        if sym not in nullable:
            return out, False
    return out, True


def compute_sets(g: Grammar):
    nullable: set[str] = set()
    first: dict[str, set[str]] = {t: {t} for t in g.terminals}
    for nt in g.productions:
        first[nt] = set()
    changed = True
    while changed:
        changed = False
        for nt, prods in g.productions.items():
            for prod in prods:
                f, null = _first_of_seq(prod, first, nullable)
                if not f <= first[nt]:
                    first[nt] |= f
                    changed = True
                if null and nt not in nullable:
                    nullable.add(nt)
                    changed = True
    follow: dict[str, set[str]] = {nt: set() for nt in g.productions}
    follow[g.start].add(EOF)
    changed = True
    while changed:
        changed = False
        for nt, prods in g.productions.items():
            for prod in prods:
                for i, sym in enumerate(prod):
                    if sym not in g.productions:
                        continue
                    f, null = _first_of_seq(prod[i + 1:], first, nullable)
                    add = f | (follow[nt] if null else set())
                    if not add <= follow[sym]:
                        follow[sym] |= add
                        changed = True
    return first, follow, nullable


def build_table(g: Grammar) -> dict[str, dict[str, tuple]]:
    first, follow, nullable = compute_sets(g)
    table: dict[str, dict[str, tuple]] = {nt: {} for nt in g.productions}
    for nt, prods in g.productions.items():
        for prod in prods:
            f, null = _first_of_seq(prod, first, nullable)
            lookaheads = f | (follow[nt] if null else set())
            for t in lookaheads:
                if t in table[nt] and table[nt][t] != prod:
                    raise GrammarError(f"LL(1) conflict in {nt!r} on {t!r}")
                table[nt][t] = prod
    return table


class GrammarAutomaton:
    """Deterministic pushdown automaton over token classes.

    A configuration is the prediction stack (a tuple, top last). The
    transition function is the LL(1) table; acceptance is reaching an empty
    stack on the end marker.
    """

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self.table = build_table(grammar)
        self.alphabet = frozenset(grammar.terminals)
        self.start = grammar.start
        self._check_reachable()

    def _check_reachable(self) -> None:
        seen, todo = {self.start}, [self.start]
        while todo:
            nt = todo.pop()
            for prod in self.grammar.productions[nt]:
                for sym in prod:
                    if sym in self.grammar.productions and sym not in seen:
                        seen.add(sym)
                        todo.append(sym)
        dead = self.grammar.nonterminals - seen
        if dead:
            raise GrammarError(f"unreachable nonterminals: {sorted(dead)}")

    @property
    def states(self) -> frozenset:
        return frozenset(self.grammar.productions)

    def initial(self) -> tuple:
        return (EOF, self.start)

    def feed(self, stack: tuple, terminal: str) -> tuple | None:
        """Advance on one token class; None when the token is rejected."""
        st = list(stack)
        while st:
            top = st[-1]
            if top not in self.grammar.productions:
                if top == terminal:
                    st.pop()
                    return tuple(st)
                return None
            prod = self.table[top].get(terminal)
            if prod is None:
                return None
            st.pop()
            st.extend(reversed(prod))
        return None

    def admissible(self, stack: tuple) -> frozenset:
        """Token classes (plus ``$`` for end of input) acceptable next."""
        out = {t for t in self.alphabet if self.feed(stack, t) is not None}
        if self.feed(stack, EOF) is not None:
            out.add(EOF)
        return frozenset(out)

    def accepts(self, terminals) -> bool:
        stack = self.initial()
        for t in terminals:
            stack = self.feed(stack, t)
            if stack is None:
                return False
        return self.feed(stack, EOF) is not None


@lru_cache(maxsize=1)
def hcl_automaton() -> GrammarAutomaton:
    return GrammarAutomaton(parse_ebnf(data_path("hcl_subset.ebnf").read_text(encoding="utf-8")))
