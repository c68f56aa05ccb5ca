"""Lift an HCL program back into the I-IR.

Resource blocks become nodes; ``provider = <p>.<alias>`` selects the region
from the matching provider block; references become field values plus
Depends edges; ``depends_on`` adds explicit Depends edges; ``ingress``
blocks carrying a ``source`` reference become Connects edges; the reserved
``effects`` attribute restores node effects.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any

from ..errors import LiftError
from ..iir import (
    ConstraintSet, Connects, Depends, Effect, Plan, Ref, ResourceNode, SchemaCE, iter_refs,
)
from .ast import Block, HclProgram, Hole, RefExpr


@dataclass
class _Ctx:
    registry: Any
    strict: bool
    issues: list = field(default_factory=list)
    resources: dict = field(default_factory=dict)
    variables: dict = field(default_factory=dict)
    providers: dict = field(default_factory=dict)

    def problem(self, code: str, node: str, fname: str, message: str, **detail) -> None:
        if self.strict:
            raise LiftError(code, message, address=node)
        self.issues.append(SchemaCE(code, node, fname, dict(detail, message=message)))


def _alias_key(provider: str, alias: str | None) -> tuple:
    return (provider, alias)


def _convert(ctx: _Ctx, node: str, fname: str, expr: Any) -> Any:
    if isinstance(expr, Hole):
        raise LiftError("unfilled_hole", f"hole {expr.id} in {node}.{fname} was never decoded", node)
    if isinstance(expr, list):
        return [_convert(ctx, node, fname, e) for e in expr]
    if isinstance(expr, dict):
        return {k: _convert(ctx, node, fname, v) for k, v in expr.items()}
    if isinstance(expr, RefExpr):
        return _resolve_ref(ctx, node, fname, expr)
    return expr


def _resolve_ref(ctx: _Ctx, node: str, fname: str, expr: RefExpr) -> Any:
    parts = expr.parts
    if parts[0] == "var" and len(parts) == 2:
        var = ctx.variables.get(parts[1])
        if var is None or "default" not in var.attributes:
            ctx.problem("dangling_reference", node, fname, f"variable {parts[1]!r} has no default value",
                        target=expr.render())
            return expr.render()
        return _convert(ctx, node, fname, var.attributes["default"])
    if len(parts) < 3:
        ctx.problem("invalid_reference", node, fname,
                    f"reference {expr.render()!r} must name <kind>.<name>.<attr>", target=expr.render())
        return expr.render()
    kind, name, attr = parts[0], parts[1], ".".join(parts[2:])
    if (kind, name) not in ctx.resources:
        ctx.problem("dangling_reference", node, fname,
                    f"reference to undeclared resource {kind}.{name}", target=f"{kind}.{name}")
    return Ref(name, attr)


def _provider_region(ctx: _Ctx, block: Block, name: str, default_provider: str) -> tuple[str, str]:
    expr = block.attributes.get("provider")
    if expr is None:
        key = _alias_key(default_provider, None)
        if key in ctx.providers:
            return default_provider, ctx.providers[key]
        ctx.problem("missing_provider", name, "provider", f"resource {name!r} has no provider configuration")
        return default_provider, ""
    if not isinstance(expr, RefExpr) or len(expr.parts) != 2:
        ctx.problem("invalid_reference", name, "provider", "provider must be <provider>.<alias>")
        return default_provider, ""
    key = _alias_key(*expr.parts)
    if key not in ctx.providers:
        ctx.problem("dangling_reference", name, "provider",
                    f"no provider block for {expr.render()!r}", target=expr.render())
        return expr.parts[0], ""
    return expr.parts[0], ctx.providers[key]


def _lift(program: HclProgram, registry, strict: bool, specs: ConstraintSet | None) -> tuple[Plan, list]:
    ctx = _Ctx(registry, strict)
    for b in program.blocks:
        if b.type == "provider":
            alias = b.attributes.get("alias")
            region = b.attributes.get("region", "")
            ctx.providers[_alias_key(b.labels[0], alias if isinstance(alias, str) else None)] = region
        elif b.type == "variable":
            ctx.variables[b.labels[0]] = b
        elif b.type == "resource":
            key = tuple(b.labels)
            if key in ctx.resources:
                ctx.problem("duplicate_address", b.labels[1], "", f"duplicate resource address {b.address}")
                continue
            ctx.resources[key] = b

    nodes: list[ResourceNode] = []
    edges: set = set()
    seen_names: set[str] = set()
    for (kind, name), b in ctx.resources.items():
        if name in seen_names:
            ctx.problem("duplicate_address", name, "", f"resource name {name!r} used by two kinds")
            continue
        seen_names.add(name)
        candidates = registry.kinds_for(kind)
        if not candidates:
            ctx.problem("unknown_kind", name, "", f"unknown resource kind {kind!r}", kind=kind)
            continue
        provider, region = _provider_region(ctx, b, name, candidates[0].provider)
        schema = registry.lookup(provider, kind)
        if schema is None:
            ctx.problem("unknown_kind", name, "", f"kind {kind!r} unknown for provider {provider!r}", kind=kind)
            continue
        declared = schema.field_map()
        fields: dict[str, Any] = {}
        effects: set[Effect] = set()
        for attr, expr in b.attributes.items():
            if attr == "provider":
                continue
            if attr == "effects":
                for e in expr if isinstance(expr, list) else [expr]:
                    try:
                        effects.add(Effect(e))
                    except ValueError:
                        ctx.problem("invalid_value", name, "effects", f"unknown effect {e!r}", value=str(e))
                continue
            if attr == "depends_on":
                for e in expr if isinstance(expr, list) else [expr]:
                    if isinstance(e, RefExpr) and len(e.parts) == 2 and tuple(e.parts) in ctx.resources:
                        edges.add(Depends(name, e.parts[1]))
                    else:
                        target = e.render() if isinstance(e, RefExpr) else str(e)
                        ctx.problem("dangling_reference", name, "depends_on",
                                    f"depends_on entry {target!r} does not name a resource", target=target)
                continue
            if attr not in declared:
                ctx.problem("unknown_field", name, attr, f"{kind} declares no attribute {attr!r}")
            fields[attr] = _convert(ctx, name, attr, expr)
        for nested in b.blocks:
            if "source" in nested.attributes:
                edge = _connects_from(ctx, name, nested)
                if edge is not None:
                    edges.add(edge)
                continue
            decl = declared.get(nested.type)
            if decl is None or decl.type != "blocks":
                ctx.problem("unknown_field", name, nested.type, f"{kind} declares no nested block {nested.type!r}")
            entry = {k: _convert(ctx, name, nested.type, v) for k, v in nested.attributes.items()}
            fields.setdefault(nested.type, []).append(entry)
        for value in fields.values():
            for r in iter_refs(value):
                if r.target != name and any(k[1] == r.target for k in ctx.resources):
                    edges.add(Depends(name, r.target))
        nodes.append(ResourceNode(name, kind, provider, region, fields, frozenset(effects)))
    present = {n.id for n in nodes}
    edges = {e for e in edges if e.src in present and e.dst in present}
    plan = Plan(tuple(nodes), tuple(sorted(edges, key=lambda e: e.key())), specs or ConstraintSet())
    return plan, ctx.issues


def _connects_from(ctx: _Ctx, name: str, nested: Block) -> Connects | None:
    src = nested.attributes["source"]
    if not isinstance(src, RefExpr) or len(src.parts) < 2 or tuple(src.parts[:2]) not in ctx.resources:
        target = src.render() if isinstance(src, RefExpr) else str(src)
        ctx.problem("dangling_reference", name, nested.type, f"ingress source {target!r} is not a resource",
                    target=target)
        return None
    proto = nested.attributes.get("protocol", "tcp")
    lo, hi = nested.attributes.get("from_port"), nested.attributes.get("to_port")
    if not isinstance(lo, int) or isinstance(lo, bool) or lo != hi or proto not in ("tcp", "udp", "icmp"):
        ctx.problem("invalid_value", name, nested.type,
                    "source-based ingress needs one protocol and from_port == to_port")
        return None
    if not 0 <= lo <= 65535:
        ctx.problem("invalid_value", name, nested.type, f"port {lo} out of range")
        return None
    return Connects(src.parts[1], name, proto, lo)


def lift(program: HclProgram, registry, specs: ConstraintSet | None = None) -> Plan:
    """Strict lift: any unknown kind, attribute or dangling reference raises LiftError."""
    plan, _ = _lift(program, registry, True, specs)
    return plan


def lift_lenient(program: HclProgram, registry, specs: ConstraintSet | None = None) -> tuple[Plan, list[SchemaCE]]:
    """Best-effort lift returning the plan plus program-level issues.

    Unknown attributes are kept as fields so that typing reports them.
    """
    plan, issues = _lift(program, registry, False, specs)
    return plan, [i for i in issues if i.code != "unknown_field" or "[" in i.field]
