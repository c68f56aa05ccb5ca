"""Structural compiler: plan nodes and edges to resource skeletons."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..errors import CyclicPlan, MalformedPlan
from ..iir import Connects, Depends, Plan, Ref, check_well_formed, implied_depends, topological_order, with_edges
from ..hcl.ast import Block, HclProgram, Hole, RefExpr

INGRESS = "ingress"


def provider_alias(region: str) -> str:
    return region.replace("-", "_")


@dataclass
class SymbolTable:
    addresses: dict = field(default_factory=dict)   # node id -> (kind, name)
    refs: dict = field(default_factory=dict)        # (node id, attr) -> RefExpr

    def expr_for(self, ref: Ref) -> RefExpr:
        key = (ref.target, ref.attr)
        if key not in self.refs:
            if ref.target not in self.addresses:
                raise MalformedPlan(f"reference to unknown node {ref.target!r}")
            kind, name = self.addresses[ref.target]
            self.refs[key] = RefExpr((kind, name) + tuple(ref.attr.split(".")))
        return self.refs[key]

    def address_expr(self, node_id: str) -> RefExpr:
        return RefExpr(self.addresses[node_id])


@dataclass
class SkeletonProgram:
    program: HclProgram
    holes: list = field(default_factory=list)
    addresses: tuple = ()  # (kind, name) of every resource, for connection masks

    @property
    def blocks(self):
        return self.program.blocks


def _value_expr(value: Any, symbols: SymbolTable) -> Any:
    if isinstance(value, Ref):
        return symbols.expr_for(value)
    if isinstance(value, list):
        return [_value_expr(v, symbols) for v in value]
    if isinstance(value, dict):
        return {k: _value_expr(v, symbols) for k, v in value.items()}
    return value


def provider_blocks(plan: Plan) -> list[Block]:
    pairs = sorted({(n.provider, n.region) for n in plan.nodes})
    return [Block("provider", (p,), {"alias": provider_alias(r), "region": r}) for p, r in pairs]


def compile_node(node, plan: Plan, registry, symbols: SymbolTable, next_hole: list[int]) -> tuple[Block, list[Hole]]:
    schema = registry.get(node.provider, node.kind)
    attrs: dict[str, Any] = {"provider": RefExpr((node.provider, provider_alias(node.region)))}
    nested: list[Block] = []
    holes: list[Hole] = []
    declared = schema.field_map()
    # required fields first, then optional ones, both in declaration order
    ordered = [d for d in schema.fields if d.required] + [d for d in schema.fields if not d.required]
    for decl in ordered:
        if decl.type == "blocks":
            for entry in node.fields.get(decl.name, []) or []:
                nested.append(Block(decl.name, (), {k: _value_expr(v, symbols) for k, v in entry.items()}))
            continue
        if decl.name in node.fields:
            attrs[decl.name] = _value_expr(node.fields[decl.name], symbols)
        elif decl.required:
            hole = Hole(next_hole[0], decl.domain, node.id, decl.name)
            next_hole[0] += 1
            attrs[decl.name] = hole
            holes.append(hole)
    for name in sorted(set(node.fields) - set(declared)):
        attrs[name] = _value_expr(node.fields[name], symbols)
    implied = implied_depends(plan)
    explicit = sorted(e.dst for e in plan.edges
                      if isinstance(e, Depends) and e.src == node.id and e not in implied)
    if explicit:
        attrs["depends_on"] = [symbols.address_expr(d) for d in explicit]
    if node.effects:
        attrs["effects"] = sorted(e.value for e in node.effects)
    rules = sorted((e for e in plan.edges if isinstance(e, Connects) and e.dst == node.id), key=lambda e: e.key())
    for e in rules:
        nested.append(Block(INGRESS, (), {
            "protocol": e.proto, "from_port": e.port, "to_port": e.port,
            "source": symbols.expr_for(Ref(e.src, "id")),
        }))
    return Block("resource", (node.kind, node.id), attrs, nested), holes


def build_symbols(plan: Plan) -> SymbolTable:
    symbols = SymbolTable()
    for n in plan.nodes:
        symbols.addresses[n.id] = (n.kind, n.id)
    return symbols


def compile_skeleton(plan: Plan, registry) -> tuple[SkeletonProgram, SymbolTable]:
    """One resource block per node in Depends order; unknown required values become holes."""
    check_well_formed(plan)
    for n in plan.nodes:
        registry.get(n.provider, n.kind)
    try:
        order = topological_order(with_edges(plan, set(plan.edges) | implied_depends(plan)))
    except CyclicPlan:
        raise CyclicPlan("cannot compile a plan whose Depends edges are cyclic") from None
    symbols = build_symbols(plan)
    by_id = plan.by_id()
    blocks = provider_blocks(plan)
    holes: list[Hole] = []
    counter = [0]
    for nid in order:
        block, hs = compile_node(by_id[nid], plan, registry, symbols, counter)
        blocks.append(block)
        holes.extend(hs)
    addresses = tuple(sorted(symbols.addresses.values()))
    return SkeletonProgram(HclProgram(blocks), holes, addresses), symbols
