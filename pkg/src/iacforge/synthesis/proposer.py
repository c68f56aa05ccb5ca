"""Value-level proposers for decoder holes."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Protocol

from ..hcl.ast import Hole
from ..hcl.printer import render_expr


@dataclass(frozen=True)
class HoleRequest:
    """What a proposer sees: the hole, its finite choices (if any), and context."""

    hole: Hole
    kind: str
    domain: str
    choices: tuple | None = None
    default: Any = None
    context: dict = field(default_factory=dict, compare=False)

    def admits(self, value: Any) -> bool:
        if self.choices is not None:
            return any(_same(value, c) for c in self.choices)
        d = self.domain
        if d == "string":
            return isinstance(value, str) and value != ""
        if d == "int":
            return isinstance(value, int) and not isinstance(value, bool)
        if d == "decimal":
            return isinstance(value, (int, Decimal)) and not isinstance(value, bool)
        if d == "bool":
            return isinstance(value, bool)
        if d == "list":
            return isinstance(value, list) and all(isinstance(v, str) for v in value)
        if d == "map":
            return isinstance(value, dict) and all(isinstance(v, str) for v in value.values())
        return False


def _same(a: Any, b: Any) -> bool:
    return type(a) is type(b) and a == b


def sort_key(value: Any) -> str:
    return render_expr(value)


class Proposer(Protocol):
    def propose(self, request: HoleRequest) -> Any: ...


def stub_value(request: HoleRequest) -> Any:
    """Lexicographically smallest admissible value; numbers take the default, else 0."""
    if request.choices is not None:
        return min(request.choices, key=sort_key)
    d = request.domain
    if d in ("int", "decimal"):
        return request.default if request.default is not None else 0
    if d == "string":
        return f"{request.hole.field}-{request.hole.node}".replace("_", "-")
    if d == "list":
        return []
    if d == "map":
        return {}
    raise ValueError(f"no stub value for domain {d!r}")


class DeterministicStub:
    name = "stub"

    def propose(self, request: HoleRequest) -> Any:
        return stub_value(request)


class RandomProposer:
    """Seeded random admissible choices; used for fuzzing the decoder."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def propose(self, request: HoleRequest) -> Any:
        rng = self.rng
        if request.choices is not None:
            return rng.choice(sorted(request.choices, key=sort_key))
        d = request.domain
        if d == "int":
            return rng.randint(0, 65535)
        if d == "decimal":
            return Decimal(rng.randint(0, 99999)).scaleb(-2)
        if d == "string":
            alphabet = "abcdefghijklmnopqrstuvwxyz0123456789-./ \"\\"
            return "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
        if d == "list":
            return [f"item-{rng.randint(0, 9)}" for _ in range(rng.randint(0, 3))]
        if d == "map":
            return {f"k{i}": f"v{rng.randint(0, 9)}" for i in range(rng.randint(0, 3))}
        return stub_value(request)


class ScriptedProposer:
    """Replays fixed answers (tests); falls back to the stub when exhausted."""

    name = "scripted"

    def __init__(self, answers):
        self.answers = list(answers)

    def propose(self, request: HoleRequest) -> Any:
        if self.answers:
            return self.answers.pop(0)
        return stub_value(request)
