"""Infrastructure intermediate representation: a typed resource graph.

A :class:`Plan` holds resource nodes, ``Depends``/``Connects`` edges and the
constraint set. Values inside node fields are plain Python data (``str``,
``int``, ``bool``, ``Decimal``, ``list``, ``dict``) plus :class:`Ref` for
cross-node references. All objects are treated as immutable; operations
return new plans.

``Depends(src, dst)`` reads "src depends on dst": dst must exist first.
"""
from __future__ import annotations

import dataclasses
import enum
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Any, Iterable, Iterator, Union

from .canonical import DIGEST_ALGORITHM, canonical_json, digest_bytes, loads
from .errors import MalformedPlan, UnknownKind

ID_RE = re.compile(r"^[a-z][a-z0-9_]*$")
IR_VERSION = 1
PROTOCOLS = ("tcp", "udp", "icmp")


class Effect(str, enum.Enum):
    ENCRYPT_AT_REST = "encrypt_at_rest"
    LEAST_PRIVILEGE = "least_privilege"
    RESTRICTED_INGRESS = "restricted_ingress"
    REGION_PINNED = "region_pinned"
    TAGGED = "tagged"
    REDUNDANT = "redundant"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class Ref:
    """Reference to ``<target>.<attr>`` of another node."""

    target: str
    attr: str = "id"

    def render(self) -> str:
        return f"{self.target}.{self.attr}"

    @classmethod
    def parse(cls, text: str) -> "Ref":
        target, sep, attr = text.partition(".")
        if not sep or not target or not attr:
            raise MalformedPlan(f"bad reference {text!r}; expected '<id>.<attr>'")
        return cls(target, attr)


TypedValue = Union[str, int, bool, Decimal, list, dict, Ref]


@dataclass(frozen=True)
class ResourceNode:
    id: str
    kind: str
    provider: str
    region: str
    fields: dict = field(default_factory=dict)
    effects: frozenset = frozenset()
    # version pins and similar bookkeeping; ignored by plan_equiv
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "effects", frozenset(Effect(e) for e in self.effects))

    @property
    def address(self) -> str:
        return f"{self.kind}.{self.id}"


@dataclass(frozen=True, order=True)
class Depends:
    src: str
    dst: str

    def key(self) -> tuple:
        return ("depends", self.src, self.dst, "", -1)


@dataclass(frozen=True, order=True)
class Connects:
    src: str
    dst: str
    proto: str
    port: int

    def __post_init__(self):
        if self.proto not in PROTOCOLS:
            raise MalformedPlan(f"unsupported protocol {self.proto!r}")
        if isinstance(self.port, bool) or not isinstance(self.port, int) or not 0 <= self.port <= 65535:
            raise MalformedPlan(f"port out of range: {self.port!r}")

    def key(self) -> tuple:
        return ("connects", self.src, self.dst, self.proto, self.port)


PlanEdge = Union[Depends, Connects]


@dataclass(frozen=True)
class ConstraintSet:
    budget_ceiling: Decimal | None = None
    residency: frozenset | None = None
    required_effects: frozenset = frozenset()
    availability_zones_min: int | None = None

    def __post_init__(self):
        if self.budget_ceiling is not None:
            b = Decimal(str(self.budget_ceiling)) if not isinstance(self.budget_ceiling, Decimal) else self.budget_ceiling
            if b < 0:
                raise MalformedPlan("budget_ceiling must be nonnegative")
            object.__setattr__(self, "budget_ceiling", b)
        if self.residency is not None:
            res = frozenset(self.residency)
            if not res:
                raise MalformedPlan("residency must be non-empty when present")
            object.__setattr__(self, "residency", res)
        object.__setattr__(self, "required_effects", frozenset(Effect(e) for e in self.required_effects))
        if self.availability_zones_min is not None and self.availability_zones_min < 0:
            raise MalformedPlan("availability_zones_min must be nonnegative")

    def to_json(self) -> dict:
        out: dict[str, Any] = {"required_effects": sorted(e.value for e in self.required_effects)}
        if self.budget_ceiling is not None:
            out["budget_ceiling"] = self.budget_ceiling
        if self.residency is not None:
            out["residency"] = sorted(self.residency)
        if self.availability_zones_min is not None:
            out["availability_zones_min"] = self.availability_zones_min
        return out

    @classmethod
    def from_json(cls, data: dict | None) -> "ConstraintSet":
        data = data or {}
        budget = data.get("budget_ceiling")
        if budget is not None:
            budget = Decimal(str(budget))
        residency = data.get("residency")
        return cls(
            budget_ceiling=budget,
            residency=frozenset(residency) if residency is not None else None,
            required_effects=frozenset(data.get("required_effects", ())),
            availability_zones_min=data.get("availability_zones_min"),
        )


@dataclass(frozen=True)
class Plan:
    nodes: tuple = ()
    edges: tuple = ()
    specs: ConstraintSet = ConstraintSet()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))

    def node(self, node_id: str) -> ResourceNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def by_id(self) -> dict[str, ResourceNode]:
        return {n.id: n for n in self.nodes}

    def with_node(self, node: ResourceNode) -> "Plan":
        nodes = tuple(node if n.id == node.id else n for n in self.nodes)
        return replace(self, nodes=nodes)


@dataclass(frozen=True)
class PlanDigest:
    algorithm: str
    hexdigest: str

    def __str__(self) -> str:
        return f"{self.algorithm}:{self.hexdigest}"


@dataclass(frozen=True, order=True)
class SchemaCE:
    """One typing violation: ``(code, node, field)`` plus a detail payload."""

    code: str
    node: str
    field: str = ""
    detail: Any = dataclasses.field(default=None, compare=False)


# -- values -------------------------------------------------------------------

def iter_refs(value: Any) -> Iterator[Ref]:
    if isinstance(value, Ref):
        yield value
    elif isinstance(value, list):
        for item in value:
            yield from iter_refs(item)
    elif isinstance(value, dict):
        for item in value.values():
            yield from iter_refs(item)


def map_refs(value: Any, fn) -> Any:
    if isinstance(value, Ref):
        return fn(value)
    if isinstance(value, list):
        return [map_refs(v, fn) for v in value]
    if isinstance(value, dict):
        return {k: map_refs(v, fn) for k, v in value.items()}
    return value


def value_to_json(value: Any) -> Any:
    if isinstance(value, Ref):
        return {"$ref": value.render()}
    if isinstance(value, list):
        return [value_to_json(v) for v in value]
    if isinstance(value, dict):
        return {k: value_to_json(v) for k, v in value.items()}
    if isinstance(value, float):
        return Decimal(repr(value))
    return value


def value_from_json(data: Any) -> Any:
    if isinstance(data, dict):
        if set(data) == {"$ref"}:
            return Ref.parse(data["$ref"])
        return {k: value_from_json(v) for k, v in data.items()}
    if isinstance(data, list):
        return [value_from_json(v) for v in data]
    if isinstance(data, float):
        return Decimal(repr(data))
    return data


def _sorted_value(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _sorted_value(value[k]) for k in sorted(value)}
    if isinstance(value, list):
        return [_sorted_value(v) for v in value]
    return value


# -- JSON ---------------------------------------------------------------------

def edge_to_json(edge: PlanEdge) -> dict:
    if isinstance(edge, Depends):
        return {"type": "depends", "src": edge.src, "dst": edge.dst}
    return {"type": "connects", "src": edge.src, "dst": edge.dst, "proto": edge.proto, "port": edge.port}


def edge_from_json(data: dict) -> PlanEdge:
    kind = data.get("type")
    if kind == "depends":
        return Depends(data["src"], data["dst"])
    if kind == "connects":
        return Connects(data["src"], data["dst"], data["proto"], int(data["port"]))
    raise MalformedPlan(f"unknown edge type {kind!r}")


def node_to_json(node: ResourceNode) -> dict:
    out = {
        "id": node.id,
        "kind": node.kind,
        "provider": node.provider,
        "region": node.region,
        "fields": {k: value_to_json(v) for k, v in node.fields.items()},
        "effects": sorted(e.value for e in node.effects),
    }
    if node.meta:
        out["meta"] = dict(node.meta)
    return out


def node_from_json(data: dict) -> ResourceNode:
    try:
        return ResourceNode(
            id=data["id"],
            kind=data["kind"],
            provider=data.get("provider", "aws"),
            region=data["region"],
            fields={k: value_from_json(v) for k, v in data.get("fields", {}).items()},
            effects=frozenset(data.get("effects", ())),
            meta=dict(data.get("meta", {})),
        )
    except KeyError as exc:
        raise MalformedPlan(f"node missing key {exc}") from None
    except ValueError as exc:
        raise MalformedPlan(str(exc)) from None


def plan_to_json(plan: Plan) -> dict:
    return {
        "version": IR_VERSION,
        "nodes": [node_to_json(n) for n in plan.nodes],
        "edges": [edge_to_json(e) for e in plan.edges],
        "specs": plan.specs.to_json(),
    }


def plan_from_json(data: dict) -> Plan:
    if data.get("version", IR_VERSION) != IR_VERSION:
        raise MalformedPlan(f"unsupported I-IR version {data.get('version')!r}")
    return Plan(
        nodes=tuple(node_from_json(n) for n in data.get("nodes", ())),
        edges=tuple(edge_from_json(e) for e in data.get("edges", ())),
        specs=ConstraintSet.from_json(data.get("specs")),
    )


def plan_from_text(text: str) -> Plan:
    return plan_from_json(loads(text))


def canonical_plan_text(plan: Plan) -> str:
    """Canonical serialization of an already-normalized plan."""
    return canonical_json(plan_to_json(plan))


# -- structure ----------------------------------------------------------------

def check_well_formed(plan: Plan) -> None:
    seen: set[str] = set()
    for n in plan.nodes:
        if not ID_RE.match(n.id):
            raise MalformedPlan(f"node id {n.id!r} does not match [a-z][a-z0-9_]*")
        if n.id in seen:
            raise MalformedPlan(f"duplicate node id {n.id!r}")
        seen.add(n.id)
    for e in plan.edges:
        for end in (e.src, e.dst):
            if end not in seen:
                raise MalformedPlan(f"edge endpoint {end!r} does not name a node")
        if isinstance(e, Depends) and e.src == e.dst:
            raise MalformedPlan(f"self-dependency on {e.src!r}")


def check_refs_resolve(plan: Plan) -> None:
    ids = {n.id for n in plan.nodes}
    for n in plan.nodes:
        for v in n.fields.values():
            for r in iter_refs(v):
                if r.target not in ids:
                    raise MalformedPlan(f"node {n.id!r} references unknown node {r.target!r}")


def depends_graph(plan: Plan) -> dict[str, set[str]]:
    """Adjacency ``dst -> {src}``: edges point from prerequisite to dependent."""
    succ: dict[str, set[str]] = {n.id: set() for n in plan.nodes}
    for e in plan.edges:
        if isinstance(e, Depends):
            succ.setdefault(e.dst, set()).add(e.src)
            succ.setdefault(e.src, set())
    return succ


def check_acyclic(plan: Plan) -> bool:
    """True iff the Depends edges form a DAG. Connects edges are ignored."""
    check_well_formed(plan)
    succ = depends_graph(plan)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {v: WHITE for v in succ}
    for root in sorted(succ):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(succ[root])))]
        color[root] = GREY
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = BLACK
                stack.pop()
            elif color[nxt] == GREY:
                return False
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                stack.append((nxt, iter(sorted(succ[nxt]))))
    return True


def topological_order(plan: Plan) -> list[str]:
    """Kahn's algorithm with smallest-id tie breaking; raises on cycles."""
    import heapq

    succ = depends_graph(plan)
    indeg = {v: 0 for v in succ}
    for v, outs in succ.items():
        for w in outs:
            indeg[w] += 1
    ready = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    if len(order) != len(succ):
        from .errors import CyclicPlan

        raise CyclicPlan("Depends edges contain a cycle")
    return order


def implied_depends(plan: Plan) -> set[Depends]:
    ids = {n.id for n in plan.nodes}
    out = set()
    for n in plan.nodes:
        for v in n.fields.values():
            for r in iter_refs(v):
                if r.target in ids and r.target != n.id:
                    out.add(Depends(n.id, r.target))
    return out


# -- typing -------------------------------------------------------------------

def validate_types(plan: Plan, registry) -> list[SchemaCE]:
    """Typing judgment over every node; one SchemaCE per violation.

    Raises UnknownKind when a node's kind is absent from the registry.
    """
    kinds = {n.id: n.kind for n in plan.nodes}
    ces: list[SchemaCE] = []
    for n in plan.nodes:
        schema = registry.lookup(n.provider, n.kind)
        if schema is None:
            raise UnknownKind(n.kind, n.provider)
        declared = schema.field_map()
        for decl in schema.fields:
            if decl.required and decl.name not in n.fields:
                ces.append(SchemaCE("missing_required", n.id, decl.name))
        for name, value in n.fields.items():
            decl = declared.get(name)
            if decl is None:
                ces.append(SchemaCE("unknown_field", n.id, name, {"value": value_to_json(value)}))
                continue
            ces.extend(decl.check(n.id, value, kinds))
        for name, value in n.fields.items():
            if name in declared and declared[name].type == "reference":
                continue
            for r in iter_refs(value):
                if r.target not in kinds:
                    ces.append(SchemaCE("dangling_reference", n.id, name, {"target": r.target}))
    return sorted(ces)


# -- normalization and equivalence -------------------------------------------

def normalize_plan(plan: Plan, registry=None) -> Plan:
    """Canonical form: sorted nodes/fields/edges, defaults made explicit.

    Default expansion needs ``registry``; without it only ordering is fixed.
    """
    nodes = []
    for n in sorted(plan.nodes, key=lambda n: n.id):
        fields = dict(n.fields)
        if registry is not None:
            schema = registry.lookup(n.provider, n.kind)
            if schema is not None:
                for decl in schema.fields:
                    if decl.default is not None and decl.name not in fields:
                        fields[decl.name] = decl.default_value()
        fields = {k: _sorted_value(fields[k]) for k in sorted(fields)}
        meta = {k: n.meta[k] for k in sorted(n.meta)}
        nodes.append(replace(n, fields=fields, meta=meta))
    edges = sorted(set(plan.edges), key=lambda e: e.key())
    return Plan(tuple(nodes), tuple(edges), plan.specs)


def plan_digest(plan: Plan, registry=None) -> PlanDigest:
    text = canonical_plan_text(normalize_plan(plan, registry))
    return PlanDigest(DIGEST_ALGORITHM, digest_bytes(text.encode("utf-8")))


def rename_nodes(plan: Plan, mapping: dict[str, str]) -> Plan:
    """Apply an id renaming everywhere: node ids, references, edges."""
    def ren(i: str) -> str:
        return mapping.get(i, i)

    def ren_ref(r: Ref) -> Ref:
        return Ref(ren(r.target), r.attr)

    nodes = tuple(
        replace(n, id=ren(n.id), fields={k: map_refs(v, ren_ref) for k, v in n.fields.items()})
        for n in plan.nodes
    )
    edges = []
    for e in plan.edges:
        if isinstance(e, Depends):
            edges.append(Depends(ren(e.src), ren(e.dst)))
        else:
            edges.append(Connects(ren(e.src), ren(e.dst), e.proto, e.port))
    return Plan(nodes, tuple(edges), plan.specs)


def _equiv_view(plan: Plan) -> Plan:
    return Plan(tuple(replace(n, meta={}) for n in plan.nodes), plan.edges, plan.specs)


def _local_color(node: ResourceNode) -> str:
    # renaming-invariant view: references reduced to their attribute
    fields = {k: map_refs(v, lambda r: {"$ref_attr": r.attr}) for k, v in node.fields.items()}
    return canonical_json({
        "kind": node.kind, "provider": node.provider, "region": node.region,
        "effects": sorted(e.value for e in node.effects),
        "fields": {k: value_to_json(v) for k, v in fields.items()},
    })


def _refine_colors(plan: Plan, rounds: int) -> dict[str, str]:
    colors = {n.id: _local_color(n) for n in plan.nodes}
    nbrs: dict[str, list[tuple[str, str]]] = {n.id: [] for n in plan.nodes}
    for n in plan.nodes:
        for fname, v in n.fields.items():
            for r in iter_refs(v):
                nbrs[n.id].append((f"ref:{fname}:{r.attr}", r.target))
                nbrs.setdefault(r.target, []).append((f"refby:{fname}:{r.attr}", n.id))
    for e in plan.edges:
        tag = "dep" if isinstance(e, Depends) else f"con:{e.proto}:{e.port}"
        nbrs.setdefault(e.src, []).append((f"{tag}:out", e.dst))
        nbrs.setdefault(e.dst, []).append((f"{tag}:in", e.src))
    for _ in range(rounds):
        new = {}
        for nid in colors:
            sig = sorted((label, colors.get(other, "?")) for label, other in nbrs.get(nid, []))
            new[nid] = digest_bytes(canonical_json([colors[nid], sig]).encode())
        colors = new
    return colors


def plan_equiv(p1: Plan, p2: Plan, registry=None) -> bool:
    """Structural equality after normalization, up to a consistent id renaming."""
    a = normalize_plan(_equiv_view(p1), registry)
    b = normalize_plan(_equiv_view(p2), registry)
    if canonical_plan_text(a) == canonical_plan_text(b):
        return True
    if len(a.nodes) != len(b.nodes) or len(a.edges) != len(b.edges) or a.specs != b.specs:
        return False
    rounds = len(a.nodes) + 1
    ca, cb = _refine_colors(a, rounds), _refine_colors(b, rounds)
    if sorted(ca.values()) != sorted(cb.values()):
        return False
    target_text = canonical_plan_text(b)
    a_ids = sorted(ca, key=lambda i: (sum(1 for v in ca.values() if v == ca[i]), i))
    by_color: dict[str, list[str]] = {}
    for nid, c in cb.items():
        by_color.setdefault(c, []).append(nid)

    mapping: dict[str, str] = {}
    used: set[str] = set()

    def search(i: int) -> bool:
        if i == len(a_ids):
            renamed = normalize_plan(rename_nodes(a, mapping))
            return canonical_plan_text(renamed) == target_text
        src = a_ids[i]
        for cand in sorted(by_color.get(ca[src], [])):
            if cand in used:
                continue
            mapping[src] = cand
            used.add(cand)
            if search(i + 1):
                return True
            used.discard(cand)
            del mapping[src]
        return False

    return search(0)


def node_ids(plan: Plan) -> list[str]:
    return [n.id for n in plan.nodes]


def edges_of(plan: Plan, kind: type) -> list:
    return [e for e in plan.edges if isinstance(e, kind)]


def with_edges(plan: Plan, edges: Iterable[PlanEdge]) -> Plan:
    return replace(plan, edges=tuple(sorted(set(edges), key=lambda e: e.key())))
