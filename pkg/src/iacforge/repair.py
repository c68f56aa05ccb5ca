"""Routing score, edit operators, edit ordering and the error-to-edit mapper."""
from __future__ import annotations

import copy
from collections import Counter
from dataclasses import dataclass, field, replace
from decimal import Decimal
from functools import lru_cache
from typing import Any, Union

from .canonical import digest_obj, load_path
from .errors import LocusNotFound, NoApplicableEdit
from .hcl.ast import Block, HclProgram, RefExpr
from .hcl.lift import lift_lenient
from .iir import Connects, Effect, Plan, Ref, ResourceNode, check_well_formed, with_edges
from .registry import data_path, harmonize
from .synthesis.decoder import decode
from .synthesis.proposer import DeterministicStub, HoleRequest, stub_value
from .synthesis.skeleton import compile_skeleton
from .validators.report import CLASS_PRIORITY, Counterexample, ValidatorReport

RESERVED_TAIL = ("depends_on", "effects")


# -- routing score ------------------------------------------------------------

@dataclass(frozen=True)
class RoutingWeights:
    schema: Decimal = Decimal(1)
    policy: Decimal = Decimal(1)
    cost: Decimal = Decimal(0)
    deploy: Decimal = Decimal(1)

    def __post_init__(self):
        vals = []
        for name in ("schema", "policy", "cost", "deploy"):
            v = getattr(self, name)
            v = v if isinstance(v, Decimal) else Decimal(str(v))
            if v < 0:
                raise ValueError(f"weight {name} must be nonnegative")
            object.__setattr__(self, name, v)
            vals.append(v)
        if not any(vals):
            raise ValueError("at least one routing weight must be positive")

    def to_json(self) -> dict:
        return {"schema": self.schema, "policy": self.policy, "cost": self.cost, "deploy": self.deploy}


def default_weights(constraints) -> RoutingWeights:
    """λ = (1, 1, 1/B, 1); the cost weight is 0 without a budget and 1 for B = 0."""
    b = constraints.budget_ceiling
    if b is None:
        cost = Decimal(0)
    elif b == 0:
        cost = Decimal(1)
    else:
        cost = Decimal(1) / b
    return RoutingWeights(Decimal(1), Decimal(1), cost, Decimal(1))


def routing_score(report: ValidatorReport, constraints, weights: RoutingWeights) -> Decimal:
    """J = λ1(1-v_schema) + λ2(1-v_policy) + λ3 max(0, v_cost - B) + λ4(1-v_deploy)."""
    j = Decimal(0)
    if not report.v_schema:
        j += weights.schema
    if not report.v_policy:
        j += weights.policy
    b = constraints.budget_ceiling
    if b is not None and "cost" not in report.gated and report.v_cost > b:
        j += weights.cost * (report.v_cost - b)
    if not report.v_deploy:
        j += weights.deploy
    return j


# -- edits --------------------------------------------------------------------

def _jsonable(value: Any) -> Any:
    if isinstance(value, (RefExpr, Ref)):
        return {"$ref": value.render()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, Effect):
        return value.value
    if isinstance(value, Connects):
        return {"src": value.src, "dst": value.dst, "proto": value.proto, "port": value.port}
    if isinstance(value, ResourceNode):
        from .iir import node_to_json

        return node_to_json(value)
    return value


class _EditBase:
    structural = False

    @property
    def op(self) -> str:
        return type(self).__name__

    def touched(self) -> tuple:
        raise NotImplementedError

    def to_json(self) -> dict:
        out = {"op": self.op}
        for k, v in self.__dict__.items():
            out[k] = _jsonable(v)
        return out

    def describe(self) -> str:
        args = ", ".join(f"{k}={_jsonable(v)!r}" for k, v in self.__dict__.items())
        return f"{self.op}({args})"


# plan-level edits

@dataclass(frozen=True)
class SetRegion(_EditBase):
    node: str
    region: str
    structural = True

    def touched(self):
        return (self.node,)


@dataclass(frozen=True)
class AddEffect(_EditBase):
    """Add an effect and set the attribute values that discharge it."""

    node: str
    effect: str
    discharge: tuple = ()  # ((field, value), ...)
    structural = True

    def touched(self):
        return (self.node,)


@dataclass(frozen=True)
class AdjustConnectivity(_EditBase):
    """Add or remove a Connects edge, or remove a CIDR ingress entry of ``node``."""

    node: str
    action: str                  # add | remove
    edge: Connects | None = None
    rule: tuple = ()             # sorted items of a CIDR ingress entry
    structural = True

    def touched(self):
        return tuple(sorted({self.node} | ({self.edge.src, self.edge.dst} if self.edge else set())))


@dataclass(frozen=True)
class AddNode(_EditBase):
    node: ResourceNode
    structural = True

    def touched(self):
        return (self.node.id,)


@dataclass(frozen=True)
class RemoveNode(_EditBase):
    node: str
    structural = True

    def touched(self):
        return (self.node,)


@dataclass(frozen=True)
class SetPlanField(_EditBase):
    node: str
    field: str
    value: Any
    structural = True

    def touched(self):
        return (self.node,)


# code-level edits; ``block`` is the resource address kind.name

@dataclass(frozen=True)
class AddRequiredField(_EditBase):
    block: str
    field: str
    value: Any

    def touched(self):
        return (self.block,)


@dataclass(frozen=True)
class CorrectReference(_EditBase):
    block: str
    field: str
    target: RefExpr

    def touched(self):
        return (self.block,)


@dataclass(frozen=True)
class RenameAttribute(_EditBase):
    block: str
    old: str
    new: str

    def touched(self):
        return (self.block,)


@dataclass(frozen=True)
class SetAttributeValue(_EditBase):
    block: str
    field: str
    value: Any

    def touched(self):
        return (self.block,)


PlanEdit = Union[SetRegion, AddEffect, AdjustConnectivity, AddNode, RemoveNode, SetPlanField]
CodeEdit = Union[AddRequiredField, CorrectReference, RenameAttribute, SetAttributeValue]
Edit = Union[PlanEdit, CodeEdit]


def edit_from_json(data: dict) -> Edit:
    """Inverse of ``Edit.to_json`` (used when replaying a blackboard)."""
    from .iir import node_from_json

    data = dict(data)
    op = data.pop("op")

    def val(v):
        if isinstance(v, dict) and set(v) == {"$ref"}:
            return RefExpr.of(v["$ref"])
        if isinstance(v, list):
            return [val(x) for x in v]
        if isinstance(v, dict):
            return {k: val(x) for k, x in v.items()}
        return v

    if op == "AddEffect":
        return AddEffect(data["node"], data["effect"], tuple((f, val(v)) for f, v in data.get("discharge", ())))
    if op == "AdjustConnectivity":
        e = data.get("edge")
        return AdjustConnectivity(data["node"], data["action"],
                                  Connects(e["src"], e["dst"], e["proto"], e["port"]) if e else None,
                                  tuple((k, val(v)) for k, v in data.get("rule", ())))
    if op == "AddNode":
        return AddNode(node_from_json(data["node"]))
    cls = {c.__name__: c for c in (SetRegion, RemoveNode, SetPlanField, AddRequiredField,
                                   CorrectReference, RenameAttribute, SetAttributeValue)}[op]
    return cls(**{k: val(v) for k, v in data.items()})


# -- ordering -----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class EditOrder:
    """Total order key: CE class priority, plan before code, blast radius, locus."""

    class_priority: int
    code_level: int
    blast_radius: int
    locus: str
    detail: str = ""

    @classmethod
    def of(cls, edit: Edit, ce: Counterexample) -> "EditOrder":
        return cls(CLASS_PRIORITY[ce.cls], 0 if edit.structural else 1, len(edit.touched()),
                   f"{ce.node}/{ce.field}/{ce.code}", edit.describe())


# -- mapping table ------------------------------------------------------------

@dataclass(frozen=True)
class MappingTable:
    entries: dict
    effect_discharge: dict
    defaults: dict
    version: str
    digest: str

    def handler(self, ce: Counterexample) -> str | None:
        return self.entries.get(f"{ce.cls}/{ce.code}")

    def discharge(self, effect: str, kind: str) -> tuple:
        fields = self.effect_discharge.get(effect, {}).get(kind, {})
        return tuple(sorted(fields.items()))


def mapping_from_json(data: dict) -> MappingTable:
    return MappingTable(dict(data.get("entries", {})), dict(data.get("effect_discharge", {})),
                        dict(data.get("defaults", {})), str(data.get("mapping_version", "0")), digest_obj(data))


@lru_cache(maxsize=1)
def default_mapping() -> MappingTable:
    return mapping_from_json(load_path(data_path("mapping_table.json")))


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def near_miss(name: str, schema, present=()) -> str | None:
    """Unique declared field within edit distance 2; reference fields also match without ``_id``."""
    best: dict[int, set[str]] = {}
    for d in schema.fields:
        if d.name in present:
            continue
        forms = [d.name]
        if d.type == "reference" and d.name.endswith("_id"):
            forms.append(d.name[:-3])
        dist = min(edit_distance(name, f) for f in forms)
        if dist <= 2:
            best.setdefault(dist, set()).add(d.name)
    if not best:
        return None
    top = best[min(best)]
    return next(iter(top)) if len(top) == 1 else None


@dataclass
class RepairContext:
    plan: Plan
    program: HclProgram
    registry: Any
    catalog: Any = None
    mapping: MappingTable = field(default_factory=default_mapping)

    def node(self, node_id: str) -> ResourceNode | None:
        return self.plan.by_id().get(node_id)

    def schema(self, node: ResourceNode):
        return self.registry.lookup(node.provider, node.kind)

    def address(self, node: ResourceNode) -> str:
        return f"{node.kind}.{node.id}"


def _value_for(ctx: RepairContext, node: ResourceNode, decl) -> Any:
    if decl.default is not None:
        return decl.default_value()
    if decl.type == "reference":
        targets = sorted(n.id for n in ctx.plan.nodes if n.kind == decl.ref_kind)
        if not targets:
            return None
        return RefExpr((decl.ref_kind, targets[0], "id"))
    choices = tuple(decl.allowed) if decl.allowed is not None else ((False, True) if decl.type == "bool" else None)
    from .hcl.ast import Hole

    req = HoleRequest(Hole(-1, decl.domain, node.id, decl.name), node.kind, decl.type, choices)
    return stub_value(req)


def _missing_required(ctx, ce, node):
    schema = ctx.schema(node)
    if "[" in ce.field or schema is None:
        return []
    for name in sorted(set(node.fields) - set(schema.field_map())):
        if near_miss(name, schema, present=node.fields) == ce.field:
            return [RenameAttribute(ctx.address(node), name, ce.field)]
    decl = schema.field_map().get(ce.field)
    if decl is None:
        return []
    value = _value_for(ctx, node, decl)
    return [] if value is None else [AddRequiredField(ctx.address(node), ce.field, value)]


def _unknown_field(ctx, ce, node):
    schema = ctx.schema(node)
    if "[" in ce.field or schema is None:
        return []
    new = near_miss(ce.field, schema, present=node.fields)
    return [RenameAttribute(ctx.address(node), ce.field, new)] if new else []


def _correct_reference(ctx, ce, node):
    schema = ctx.schema(node)
    decl = schema.field_map().get(ce.field) if schema else None
    if decl is None or decl.type != "reference":
        return []
    targets = sorted(n.id for n in ctx.plan.nodes if n.kind == decl.ref_kind and n.id != node.id)
    if targets:
        return [CorrectReference(ctx.address(node), ce.field, RefExpr((decl.ref_kind, targets[0], "id")))]
    return _add_node_for(ctx, node, decl.ref_kind)


def _add_node_for(ctx, node, kind):
    schemas = ctx.registry.kinds_for(kind)
    if not schemas:
        return []
    schema = schemas[0]
    new_id = f"{kind}_{node.id}"
    if ctx.node(new_id) is not None or node.region not in schema.regions_available:
        return []
    fields = {}
    for d in schema.required_fields():
        value = _value_for(ctx, node, d)
        if value is None:
            return []
        fields[d.name] = Ref(value.parts[1], value.parts[2]) if isinstance(value, RefExpr) else value
    return [AddNode(ResourceNode(new_id, kind, schema.provider, node.region, fields))]


def _set_value(ctx, ce, node):
    schema = ctx.schema(node)
    addr = ctx.address(node)
    if ce.cls == "schema":
        decl = schema.field_map().get(ce.field) if schema else None
        if decl is None or "[" in ce.field:
            return []
        value = _value_for(ctx, node, decl)
        return [] if value is None else [SetAttributeValue(addr, ce.field, value)]
    if ce.code == "tagging":
        owners = Counter(n.fields["tags"]["owner"] for n in ctx.plan.nodes
                         if isinstance(n.fields.get("tags"), dict) and isinstance(n.fields["tags"].get("owner"), str)
                         and n.fields["tags"]["owner"])
        owner = min(owners, key=lambda o: (-owners[o], o)) if owners else ctx.mapping.defaults.get("owner_tag", "unassigned")
        tags = dict(node.fields.get("tags") or {})
        tags["owner"] = owner
        return [SetAttributeValue(addr, "tags", tags)]
    if ce.code == "least_privilege":
        actions = [a for a in node.fields.get("policy_actions", []) if a != "*"]
        return [SetAttributeValue(addr, "policy_actions",
                                  actions or list(ctx.mapping.defaults.get("least_privilege_fallback", [])))]
    if ce.code == "budget_exceeded":
        return _downgrade(ctx, ce)
    if ce.code == "unsupported_sku":
        fname = ce.field or (ctx.catalog.sku_field(node.kind) if ctx.catalog else "")
        decl = schema.field_map().get(fname) if schema else None
        if decl is None or decl.allowed is None:
            return []
        current = node.fields.get(fname)
        others = sorted(v for v in decl.allowed if v != current)
        return [SetAttributeValue(addr, fname, others[0])] if others else []
    return []


def _downgrade(ctx, ce):
    catalog = ctx.catalog
    if catalog is None:
        return []
    items = (ce.witness or {}).get("top_items", [])
    out = []
    for item in items:
        node = ctx.node(item["node"])
        if node is None:
            continue
        fname = catalog.sku_field(node.kind)
        schema = ctx.schema(node)
        decl = schema.field_map().get(fname) if schema and fname else None
        if decl is None or decl.allowed is None:
            continue
        options = catalog.cheaper_options(node.provider, node.region, item["sku"], decl.allowed)
        if options:
            out.append(SetAttributeValue(ctx.address(node), fname, options[0][1]))
            break
    return out


def _add_effect(ctx, ce, node):
    effect = (ce.witness or {}).get("effect")
    if effect is None:
        return []
    return [AddEffect(node.id, effect, ctx.mapping.discharge(effect, node.kind))]


def _adjust_connectivity(ctx, ce, node):
    w = ce.witness or {}
    cidr, port = w.get("cidr"), w.get("port")
    for entry in node.fields.get("ingress", []) or []:
        lo, hi = entry.get("from_port"), entry.get("to_port")
        if cidr in (entry.get("cidr_blocks") or []) and isinstance(lo, int) and isinstance(hi, int) \
                and port is not None and lo <= port <= hi:
            return [AdjustConnectivity(node.id, "remove", None, tuple(sorted(entry.items(), key=lambda kv: kv[0])))]
    return []


def _set_region(ctx, ce, node):
    schema = ctx.schema(node)
    if schema is None:
        return []
    allowed = set(schema.regions_available)
    if ctx.plan.specs.residency is not None:
        allowed &= set(ctx.plan.specs.residency)
    allowed.discard(node.region)
    if not allowed:
        return []
    used = Counter(n.region for n in ctx.plan.nodes if n.id != node.id)
    region = min(allowed, key=lambda r: (-used[r], r))
    return [SetRegion(node.id, region)]


HANDLERS = {
    "AddRequiredField": _missing_required,
    "RenameAttribute": _unknown_field,
    "CorrectReference": _correct_reference,
    "SetAttributeValue": _set_value,
    "AddEffect": _add_effect,
    "AdjustConnectivity": _adjust_connectivity,
    "SetRegion": _set_region,
}


def candidate_edits(ces, plan: Plan, program: HclProgram, registry, catalog=None,
                    mapping: MappingTable | None = None) -> list[tuple[EditOrder, Edit, Counterexample]]:
    """Every mapped edit for every CE, sorted by the edit order."""
    ctx = RepairContext(plan, program, registry, catalog, mapping or default_mapping())
    out: dict[str, tuple] = {}
    for ce in ces:
        name = ctx.mapping.handler(ce)
        node = ctx.node(ce.node)
        if name is None or node is None:
            continue
        for edit in HANDLERS[name](ctx, ce, node):
            key = EditOrder.of(edit, ce)
            ident = edit.describe()
            if ident not in out or key < out[ident][0]:
                out[ident] = (key, edit, ce)
    return sorted(out.values(), key=lambda t: t[0])


def error_to_edit(ces, plan: Plan, program: HclProgram, registry, catalog=None,
                  mapping: MappingTable | None = None) -> Edit:
    """The mapped edit of the order-minimal counterexample."""
    if not ces:
        raise ValueError("error_to_edit needs at least one counterexample")
    cands = candidate_edits(ces, plan, program, registry, catalog, mapping)
    if not cands:
        raise NoApplicableEdit(list(ces))
    return cands[0][1]


# -- application --------------------------------------------------------------

def _find_node(plan: Plan, node_id: str) -> ResourceNode:
    node = plan.by_id().get(node_id)
    if node is None:
        raise LocusNotFound(f"no node {node_id!r} in plan")
    return node


def _find_block(program: HclProgram, address: str) -> Block:
    kind, _, name = address.partition(".")
    block = program.find(kind, name)
    if block is None:
        raise LocusNotFound(f"no resource block {address!r} in program")
    return block


def _plan_value(value: Any) -> Any:
    if isinstance(value, RefExpr):
        return Ref(value.parts[1], ".".join(value.parts[2:]) or "id")
    if isinstance(value, list):
        return [_plan_value(v) for v in value]
    if isinstance(value, dict):
        return {k: _plan_value(v) for k, v in value.items()}
    return value


def apply_plan_edit(plan: Plan, edit: PlanEdit) -> Plan:
    if isinstance(edit, AddNode):
        if edit.node.id in plan.by_id():
            raise LocusNotFound(f"node {edit.node.id!r} already exists")
        out = replace(plan, nodes=plan.nodes + (edit.node,))
        check_well_formed(out)
        return out
    node = _find_node(plan, edit.node)
    if isinstance(edit, SetRegion):
        return plan.with_node(replace(node, region=edit.region))
    if isinstance(edit, AddEffect):
        fields = dict(node.fields)
        for f, v in edit.discharge:
            fields[f] = _plan_value(copy.deepcopy(v))
        return plan.with_node(replace(node, fields=fields, effects=node.effects | {Effect(edit.effect)}))
    if isinstance(edit, SetPlanField):
        fields = dict(node.fields)
        fields[edit.field] = _plan_value(edit.value)
        return plan.with_node(replace(node, fields=fields))
    if isinstance(edit, RemoveNode):
        nodes = tuple(n for n in plan.nodes if n.id != edit.node)
        edges = [e for e in plan.edges if edit.node not in (e.src, e.dst)]
        return with_edges(replace(plan, nodes=nodes), edges)
    if isinstance(edit, AdjustConnectivity):
        if edit.edge is not None:
            edges = set(plan.edges)
            if edit.action == "add":
                edges.add(edit.edge)
            elif edit.edge in edges:
                edges.discard(edit.edge)
            else:
                raise LocusNotFound(f"no edge {edit.edge.key()} in plan")
            return with_edges(plan, edges)
        rule = dict(edit.rule)
        entries = list(node.fields.get("ingress", []) or [])
        if rule not in entries:
            raise LocusNotFound(f"no ingress entry {rule} on {node.id}")
        entries.remove(rule)
        fields = dict(node.fields)
        fields["ingress"] = entries
        return plan.with_node(replace(node, fields=fields))
    raise TypeError(f"not a plan edit: {edit!r}")


def apply_code_edit(program: HclProgram, edit: CodeEdit) -> HclProgram:
    out = program.copy()
    block = _find_block(out, edit.block)
    attrs = block.attributes
    if isinstance(edit, RenameAttribute):
        if edit.old not in attrs:
            raise LocusNotFound(f"{edit.block} has no attribute {edit.old!r}")
        block.attributes = {(edit.new if k == edit.old else k): v for k, v in attrs.items()}
        return out
    if isinstance(edit, CorrectReference):
        if edit.field not in attrs:
            raise LocusNotFound(f"{edit.block} has no attribute {edit.field!r}")
        attrs[edit.field] = edit.target
        return out
    if isinstance(edit, (AddRequiredField, SetAttributeValue)):
        value = copy.deepcopy(edit.value)
        if edit.field in attrs:
            attrs[edit.field] = value
            return out
        # keep reserved trailing attributes last
        items = [(k, v) for k, v in attrs.items() if k not in RESERVED_TAIL]
        tail = [(k, v) for k, v in attrs.items() if k in RESERVED_TAIL]
        block.attributes = dict(items + [(edit.field, value)] + tail)
        return out
    raise TypeError(f"not a code edit: {edit!r}")


def recompile(plan: Plan, registry, proposer=None) -> HclProgram:
    skeleton, _ = compile_skeleton(plan, registry)
    return decode(skeleton, proposer or DeterministicStub(), registry)


def sync_plan(program: HclProgram, registry, previous: Plan) -> Plan:
    """Re-lift after a code edit, keeping node metadata from ``previous``."""
    lifted, _ = lift_lenient(program, registry, previous.specs)
    old = previous.by_id()
    nodes = tuple(replace(n, meta=dict(old[n.id].meta)) if n.id in old else n for n in lifted.nodes)
    return replace(lifted, nodes=nodes)


def apply_edit(plan: Plan, program: HclProgram, edit: Edit, registry) -> tuple[Plan, HclProgram]:
    """Plan edits recompile from the edited plan; code edits patch one block and re-lift."""
    if edit.structural:
        new_plan = apply_plan_edit(plan, edit)
        if isinstance(edit, (SetRegion, AddNode)):
            new_plan = harmonize(new_plan, registry)
        return new_plan, recompile(new_plan, registry)
    new_program = apply_code_edit(program, edit)
    return sync_plan(new_program, registry, plan), new_program
