"""AST for the HCL subset.

Literal expressions are plain Python values (``str``, ``int``, ``Decimal``,
``bool``, ``list``, ``dict``); references are :class:`RefExpr`. Skeleton
programs may also carry :class:`Hole` placeholders where the decoder has
to choose a value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterator, Union

BLOCK_TYPES = ("resource", "variable", "output", "module", "provider")
KEYWORDS = frozenset(BLOCK_TYPES + ("true", "false"))


@dataclass(frozen=True)
class RefExpr:
    parts: tuple

    def render(self) -> str:
        return ".".join(self.parts)

    @classmethod
    def of(cls, text: str) -> "RefExpr":
        return cls(tuple(text.split(".")))


@dataclass(frozen=True)
class Hole:
    id: int
    domain: str
    node: str
    field: str


HclExpr = Union[str, int, Decimal, bool, list, dict, RefExpr, Hole]


@dataclass
class Block:
    type: str
    labels: tuple = ()
    attributes: dict = field(default_factory=dict)
    blocks: list = field(default_factory=list)
    line: int = field(default=0, compare=False)

    @property
    def address(self) -> str:
        if self.type == "resource":
            return ".".join(self.labels)
        return ".".join((self.type,) + tuple(self.labels))

    def copy(self) -> "Block":
        import copy

        return copy.deepcopy(self)


@dataclass
class HclProgram:
    blocks: list = field(default_factory=list)

    def resources(self) -> list[Block]:
        return [b for b in self.blocks if b.type == "resource"]

    def find(self, kind: str, name: str) -> Block | None:
        for b in self.blocks:
            if b.type == "resource" and b.labels == (kind, name):
                return b
        return None

    def find_by_name(self, name: str) -> Block | None:
        for b in self.resources():
            if len(b.labels) == 2 and b.labels[1] == name:
                return b
        return None

    def copy(self) -> "HclProgram":
        import copy

        return copy.deepcopy(self)


def iter_exprs(expr: Any) -> Iterator[Any]:
    yield expr
    if isinstance(expr, list):
        for e in expr:
            yield from iter_exprs(e)
    elif isinstance(expr, dict):
        for e in expr.values():
            yield from iter_exprs(e)


def iter_block_exprs(block: Block) -> Iterator[tuple[Block, str, Any]]:
    for name, expr in block.attributes.items():
        for e in iter_exprs(expr):
            yield block, name, e
    for nested in block.blocks:
        yield from iter_block_exprs(nested)


def holes(program: HclProgram) -> list[Hole]:
    out = []
    for b in program.blocks:
        for _, _, e in iter_block_exprs(b):
            if isinstance(e, Hole):
                out.append(e)
    return out


def strict_form(obj: Any) -> Any:
    """Type-tagged structure for exact equality (``True`` is not ``1``)."""
    if isinstance(obj, HclProgram):
        return ("program", tuple(strict_form(b) for b in obj.blocks))
    if isinstance(obj, Block):
        return ("block", obj.type, tuple(obj.labels),
                tuple((k, strict_form(v)) for k, v in obj.attributes.items()),
                tuple(strict_form(b) for b in obj.blocks))
    if isinstance(obj, bool):
        return ("bool", obj)
    if isinstance(obj, int):
        return ("int", obj)
    if isinstance(obj, Decimal):
        return ("dec", obj)
    if isinstance(obj, str):
        return ("str", obj)
    if isinstance(obj, list):
        return ("list", tuple(strict_form(v) for v in obj))
    if isinstance(obj, dict):
        return ("map", tuple((k, strict_form(v)) for k, v in obj.items()))
    if isinstance(obj, (RefExpr, Hole)):
        return (type(obj).__name__, obj)
    raise TypeError(type(obj))
