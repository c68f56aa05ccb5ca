"""Seeded fault injection for the evaluation corpus.

Plan faults mutate the Architect's plan before harmonization. Program faults
mutate the decoded program once, after the round-trip guard, so that they
reach the validators instead of being undone by recompilation.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from typing import Any

from .errors import CorpusError
from .hcl.ast import HclProgram, RefExpr
from .iir import Effect, Plan, Ref, node_from_json, value_from_json

PLAN_OPS = ("set_field", "drop_field", "drop_effect", "set_region", "add_ingress", "add_node")
PROGRAM_OPS = ("drop_attribute", "rename_attribute", "set_attribute", "retarget_reference")


@dataclass(frozen=True)
class FaultSpec:
    plan: tuple = ()
    program: tuple = ()

    def __post_init__(self):
        for f in self.plan:
            if f.get("op") not in PLAN_OPS:
                raise CorpusError(f"unknown plan fault op {f.get('op')!r}")
        for f in self.program:
            if f.get("op") not in PROGRAM_OPS:
                raise CorpusError(f"unknown program fault op {f.get('op')!r}")

    def __bool__(self) -> bool:
        return bool(self.plan or self.program)

    def to_json(self) -> dict:
        return {"plan": [dict(f) for f in self.plan], "program": [dict(f) for f in self.program]}

    @classmethod
    def from_json(cls, data: dict | None) -> "FaultSpec":
        data = data or {}
        return cls(tuple(data.get("plan", ())), tuple(data.get("program", ())))


def _node(plan: Plan, node_id: str):
    node = plan.by_id().get(node_id)
    if node is None:
        raise CorpusError(f"fault targets unknown node {node_id!r}")
    return node


def apply_plan_faults(plan: Plan, faults: FaultSpec) -> Plan:
    for f in faults.plan:
        op = f["op"]
        if op == "add_node":
            plan = replace(plan, nodes=plan.nodes + (node_from_json(f["node"]),))
            continue
        node = _node(plan, f["node"])
        fields = dict(node.fields)
        if op == "set_field":
            fields[f["field"]] = value_from_json(copy.deepcopy(f["value"]))
            node = replace(node, fields=fields)
        elif op == "drop_field":
            fields.pop(f["field"], None)
            node = replace(node, fields=fields)
        elif op == "drop_effect":
            node = replace(node, effects=node.effects - {Effect(f["effect"])})
        elif op == "set_region":
            node = replace(node, region=f["region"])
        elif op == "add_ingress":
            fields["ingress"] = list(fields.get("ingress", []) or []) + [dict(f["rule"])]
            node = replace(node, fields=fields)
        plan = plan.with_node(node)
    return plan


def _expr(value: Any) -> Any:
    """Wire value to an HCL expression; ``{"$ref": "kind.name.attr"}`` becomes a reference."""
    if isinstance(value, dict) and set(value) == {"$ref"}:
        return RefExpr(tuple(value["$ref"].split(".")))
    if isinstance(value, list):
        return [_expr(v) for v in value]
    if isinstance(value, dict):
        return {k: _expr(v) for k, v in value.items()}
    v = value_from_json(value)
    if isinstance(v, Ref):
        raise CorpusError("program faults use kind.name.attr references")
    return v


def apply_program_faults(program: HclProgram, faults: FaultSpec) -> HclProgram:
    out = program.copy()
    for f in faults.program:
        block = out.find_by_name(f["node"])
        if block is None or block.type != "resource":
            raise CorpusError(f"fault targets unknown resource {f['node']!r}")
        attrs = block.attributes
        op = f["op"]
        if op == "drop_attribute":
            attrs.pop(f["field"], None)
        elif op == "rename_attribute":
            block.attributes = {(f["to"] if k == f["field"] else k): v for k, v in attrs.items()}
        elif op == "set_attribute":
            attrs[f["field"]] = _expr(f["value"])
        elif op == "retarget_reference":
            attrs[f["field"]] = RefExpr(tuple(f["target"].split(".")))
    return out
