"""Agent role contracts with deterministic backends and a remote JSON-over-HTTP adapter.

The deterministic Architect expands a structured intent through a template
table. Free-text intents need the remote backend. Remote outputs are checked
against the wire schemas in ``data/wire`` before anything is accepted; on
failure the caller falls back to the deterministic backend and records a note.
"""
from __future__ import annotations

import json
import os
import re
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import jsonschema

from .canonical import canonical_json, load_path
from .errors import (
    MalformedPlan, RemoteError, RemoteTimeout, SchemaInvalidResponse, TransportFailure, UnsupportedIntent,
)
from .hcl.ast import Block, HclProgram, RefExpr, iter_block_exprs, iter_exprs
from .iir import (
    Connects, ConstraintSet, Effect, Plan, Ref, ResourceNode, check_well_formed, plan_from_json, plan_to_json,
    value_from_json, value_to_json,
)
from .registry import data_path
from .synthesis.proposer import HoleRequest, stub_value
from .validators.report import Counterexample

WIRE_SCHEMA_VERSION = "1.0"
ENDPOINT_ENV = "IACFORGE_LLM_ENDPOINT"
API_KEY_ENV = "IACFORGE_LLM_API_KEY"
DEFAULT_TIMEOUT = 60.0
REMOTE_RETRIES = 3

ROLES = ("architect", "harmonizer", "engineer", "reviewer", "prover", "cost_planner", "devops", "curator")


# -- intents and invariants ---------------------------------------------------

@dataclass(frozen=True)
class IntentSpec:
    text: str | None = None
    structured: dict | None = None

    def __post_init__(self):
        if self.text is None and self.structured is None:
            raise MalformedPlan("an intent needs text or a structured request")
        if self.structured is not None and not isinstance(self.structured, dict):
            raise MalformedPlan("structured intent must be an object")

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        if self.text is not None:
            out["text"] = self.text
        if self.structured is not None:
            out["structured"] = self.structured
        return out

    @classmethod
    def from_json(cls, data: dict) -> "IntentSpec":
        return cls(data.get("text"), data.get("structured"))


@dataclass(frozen=True)
class Obligation:
    """A named plan-time obligation, discharged by an effect or by a constraint entry."""

    name: str
    effect: str | None = None
    constraint: str | None = None

    def __post_init__(self):
        if (self.effect is None) == (self.constraint is None):
            raise ValueError("an obligation maps to exactly one of effect or constraint")

    def key(self) -> tuple:
        return (self.name, self.effect or "", self.constraint or "")


@dataclass(frozen=True)
class PlanInvariants:
    obligations: tuple = ()

    def names(self) -> list[str]:
        return sorted({o.name for o in self.obligations})

    def to_json(self) -> list:
        return [{"name": o.name, "effect": o.effect, "constraint": o.constraint} for o in sorted(self.obligations, key=Obligation.key)]

    @classmethod
    def from_json(cls, data: list) -> "PlanInvariants":
        return cls(tuple(sorted((Obligation(d["name"], d.get("effect"), d.get("constraint")) for d in data),
                              key=Obligation.key)))


# -- deterministic Architect --------------------------------------------------

DEFAULT_REGION = "us-east-1"
DEFAULT_AMI = "ami-0a1b2c3d4e5f60718"
DB_PORTS = {"postgres": 5432, "mysql": 3306}

# component presets per intent family; explicit keys in the intent override them
TEMPLATES: dict[str, dict] = {
    "empty": {},
    "network": {"network": True},
    "web": {"network": True, "web": 1, "firewall": True},
    "web_db": {"network": True, "web": 1, "db": True},
    "three_tier": {"network": True, "web": 1, "db": True, "firewall": True, "storage": True, "identity": True},
    "storage": {"storage": True},
    "data_lake": {"storage": 2, "identity": True},
}

COMPONENT_KEYS = ("network", "web", "db", "storage", "identity", "firewall")

# which kinds an effect applies to; "*" is every kind (mirrors the bundled rule set)
EFFECT_SCOPE = {
    "encrypt_at_rest": ("rds", "s3_bucket"),
    "least_privilege": ("iam_role",),
    "redundant": ("rds",),
    "region_pinned": ("*",),
    "restricted_ingress": ("security_group",),
    "tagged": ("*",),
}


def _in_scope(effect: str, kind: str, scope: dict) -> bool:
    kinds = scope.get(effect, ())
    return "*" in kinds or kind in kinds


def _as_count(spec: Any) -> int:
    if spec is True:
        return 1
    if spec in (None, False):
        return 0
    if isinstance(spec, int):
        return max(0, spec)
    if isinstance(spec, dict):
        return max(0, int(spec.get("count", 1)))
    raise MalformedPlan(f"cannot read a component count from {spec!r}")


def _opts(spec: Any) -> dict:
    return spec if isinstance(spec, dict) else {}


def _ids(base: str, n: int) -> list[str]:
    return [base] if n == 1 else [f"{base}_{i}" for i in range(1, n + 1)]


def resolve_components(structured: dict) -> dict:
    family = structured.get("family")
    if family is not None and family not in TEMPLATES:
        raise UnsupportedIntent(f"no template for intent family {family!r}")
    comp = dict(TEMPLATES.get(family or "empty", {}))
    for key in COMPONENT_KEYS:
        if key in structured:
            comp[key] = structured[key]
    # compute and databases need a network to live in
    if (_as_count(comp.get("web")) or comp.get("db") or comp.get("firewall")) and "network" not in structured:
        comp["network"] = True
    return comp


def _pick_region(structured: dict, constraints: ConstraintSet) -> str:
    region = structured.get("region")
    if region is not None:
        return region
    if constraints.residency:
        return sorted(constraints.residency)[0]
    return DEFAULT_REGION


def architect_plan(intent: IntentSpec, constraints: ConstraintSet, motifs=(),
                   effect_scope: dict | None = None) -> tuple[Plan, PlanInvariants]:
    """Template expansion of a structured intent into (P0, invariants)."""
    if intent.structured is None:
        raise UnsupportedIntent("the deterministic architect needs a structured intent")
    s = intent.structured
    scope = effect_scope or EFFECT_SCOPE
    comp = resolve_components(s)
    region = _pick_region(s, constraints)
    provider = s.get("provider", "aws")
    nodes: list[ResourceNode] = []
    edges: list = []
    obligations: set[Obligation] = set()

    def add(node_id: str, kind: str, fields: dict) -> None:
        nodes.append(ResourceNode(node_id, kind, provider, region, fields))

    subnet = None
    if comp.get("network"):
        net = _opts(comp["network"])
        add("main", "vpc", {"cidr_block": net.get("cidr", "10.0.0.0/16")})
        azs = max(1, int(net.get("zones", 1)), constraints.availability_zones_min or 0,
                  2 if s.get("redundant") else 1)
        for i in range(azs):
            sid = "app" if i == 0 else f"app_{chr(ord('a') + i)}"
            add(sid, "subnet", {"vpc_id": Ref("main"), "cidr_block": f"10.0.{i + 1}.0/24",
                                "availability_zone": f"{region}{chr(ord('a') + i)}"})
        subnet = "app"

    web_ids = _ids("web", _as_count(comp.get("web")))
    web = _opts(comp.get("web"))
    for wid in web_ids:
        add(wid, "ec2", {"ami": web.get("ami", DEFAULT_AMI), "instance_type": web.get("instance_type", "t3.micro"),
                         "subnet_id": Ref(subnet)})

    if comp.get("firewall"):
        fw = _opts(comp["firewall"])
        cidr = fw.get("cidr", "0.0.0.0/0")
        rules = [{"protocol": "tcp", "from_port": p, "to_port": p, "cidr_blocks": [cidr]}
                 for p in fw.get("ports", [443])]
        add("web_sg", "security_group", {"vpc_id": Ref("main"), "ingress": rules})
        obligations.add(Obligation("exposure", effect="restricted_ingress"))

    if comp.get("db"):
        db = _opts(comp["db"])
        engine = db.get("engine", "postgres")
        fields = {"engine": engine, "instance_class": db.get("instance_class", "db.t3.micro")}
        if subnet:
            fields["subnet_id"] = Ref(subnet)
        add("db", "rds", fields)
        for wid in web_ids:
            edges.append(Connects(wid, "db", "tcp", DB_PORTS.get(engine, 5432)))

    store = _opts(comp.get("storage"))
    for i, bid in enumerate(_ids("assets", _as_count(comp.get("storage")))):
        add(bid, "s3_bucket", {"bucket": store.get("prefix", "assets") + f"-{region}-{i}"})

    if comp.get("identity"):
        ident = _opts(comp["identity"])
        add("app_role", "iam_role", {"name": "app-role", "assume_role_service": "ec2.amazonaws.com",
                                     "policy_actions": list(ident.get("actions", ["s3:GetObject"]))})
        obligations.add(Obligation("least_privilege", effect="least_privilege"))

    # effects requested by the intent or implied by constraints
    wanted = set(constraints.required_effects)
    if s.get("encryption"):
        wanted.add(Effect.ENCRYPT_AT_REST)
    if s.get("redundant"):
        wanted.add(Effect.REDUNDANT)
    if s.get("tags"):
        wanted.add(Effect.TAGGED)
    if constraints.residency is not None:
        wanted.add(Effect.REGION_PINNED)
    if comp.get("firewall"):
        wanted.add(Effect.RESTRICTED_INGRESS)
    if comp.get("identity"):
        wanted.add(Effect.LEAST_PRIVILEGE)

    tags = dict(s.get("tags") or {"owner": "platform"})
    out_nodes = []
    for n in nodes:
        effects = {e for e in wanted if _in_scope(e.value, n.kind, scope)}
        fields = dict(n.fields)
        if Effect.ENCRYPT_AT_REST in effects:
            if n.kind == "rds":
                fields["storage_encrypted"] = True
            elif n.kind == "s3_bucket":
                fields["encryption"] = "aes256"
        if Effect.REDUNDANT in effects and n.kind == "rds":
            fields["multi_az"] = True
        if Effect.TAGGED in effects:
            fields["tags"] = dict(tags)
        out_nodes.append(replace(n, fields=fields, effects=frozenset(effects)))

    for e in wanted:
        name = {"encrypt_at_rest": "encryption", "redundant": "availability", "tagged": "tagging",
                "region_pinned": "residency", "restricted_ingress": "exposure"}.get(e.value, e.value)
        obligations.add(Obligation(name, effect=e.value))
    if constraints.residency is not None:
        obligations.add(Obligation("residency", constraint="residency"))
    if constraints.availability_zones_min is not None:
        obligations.add(Obligation("availability", constraint="availability_zones_min"))
    if constraints.budget_ceiling is not None:
        obligations.add(Obligation("budget", constraint="budget_ceiling"))

    plan = Plan(tuple(out_nodes), tuple(sorted(edges, key=lambda e: e.key())), constraints)
    plan = splice_motifs(plan, motifs)
    check_well_formed(plan)
    return plan, PlanInvariants(tuple(sorted(obligations, key=Obligation.key)))


def splice_motifs(plan: Plan, motifs) -> Plan:
    """Fill unset scalar fields of template nodes from the best-ranked motif node of the same kind and id."""
    if not motifs:
        return plan
    nodes = []
    for n in plan.nodes:
        fields = dict(n.fields)
        for m in motifs:
            src = m.fragment.by_id().get(n.id)
            if src is None or src.kind != n.kind:
                continue
            for k, v in src.fields.items():
                if k not in fields and not isinstance(v, (Ref, list, dict)):
                    fields[k] = v
            break
        nodes.append(replace(n, fields=fields))
    return replace(plan, nodes=tuple(nodes))


# -- Reviewer -----------------------------------------------------------------

NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")


@dataclass(frozen=True)
class Diagnostic:
    code: str       # unused_variable | stray_output | dead_resource | naming | dangling_reference
    address: str
    message: str

    def to_json(self) -> dict:
        return {"code": self.code, "address": self.address, "message": self.message}


def _refs_of(block: Block) -> list[RefExpr]:
    out = []
    for _, _, expr in iter_block_exprs(block):
        out.extend(e for e in iter_exprs(expr) if isinstance(e, RefExpr))
    return out


def review_static(program: HclProgram) -> tuple[list[Diagnostic], list[Counterexample]]:
    """Advisory diagnostics plus dangling output references escalated to schema CEs."""
    diags: list[Diagnostic] = []
    ces: list[Counterexample] = []
    resources = {tuple(b.labels): b for b in program.resources()}
    used_vars: set[str] = set()
    linked: set[tuple] = set()
    for b in program.blocks:
        for ref in _refs_of(b):
            if ref.parts[0] == "var" and len(ref.parts) > 1:
                used_vars.add(ref.parts[1])
            elif tuple(ref.parts[:2]) in resources:
                linked.add(tuple(ref.parts[:2]))
                if b.type == "resource":
                    linked.add(tuple(b.labels))
    for b in program.blocks:
        if b.type == "variable" and b.labels[0] not in used_vars:
            diags.append(Diagnostic("unused_variable", b.address, f"variable {b.labels[0]!r} is never referenced"))
        if b.type == "output":
            targets = [r for r in _refs_of(b) if r.parts[0] != "var"]
            if not targets:
                diags.append(Diagnostic("stray_output", b.address, "output references nothing"))
            for r in targets:
                if tuple(r.parts[:2]) not in resources:
                    ces.append(Counterexample("schema", "dangling_reference", b.address, "",
                                              f"output references undeclared {r.render()}",
                                              {"target": r.render()}, b.address))
    for key, b in resources.items():
        if key not in linked:
            diags.append(Diagnostic("dead_resource", b.address, "resource has no inbound or outbound references"))
        if not NAME_RE.match(b.labels[1]):
            diags.append(Diagnostic("naming", b.address, f"name {b.labels[1]!r} is not lower snake case"))
    diags.sort(key=lambda d: (d.address, d.code))
    return diags, ces


# -- remote adapter -----------------------------------------------------------

def wire_schema(role: str, direction: str) -> dict:
    return load_path(data_path(f"wire/{role}.{direction}.json"))


def _validate(instance: Any, schema: dict) -> None:
    try:
        jsonschema.validate(instance, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaInvalidResponse(f"response fails wire schema: {exc.message}") from None


def call_remote(role: str, payload: dict, endpoint: str | None = None, api_key: str | None = None,
                timeout: float = DEFAULT_TIMEOUT) -> dict:
    """POST one role request and return the schema-checked response."""
    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise TransportFailure(f"no endpoint configured (set {ENDPOINT_ENV})")
    api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
    request = {"role": role, "schema_version": WIRE_SCHEMA_VERSION, "context": payload}
    _validate(request, wire_schema(role, "request"))
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    req = urllib.request.Request(f"{endpoint.rstrip('/')}/{role}", data=canonical_json(request).encode(),
                                 headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = resp.read()
    except (socket.timeout, TimeoutError) as exc:
        raise RemoteTimeout(f"{role} call timed out after {timeout}s") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise RemoteTimeout(f"{role} call timed out after {timeout}s") from exc
        raise TransportFailure(f"{role} call failed: {exc}") from exc
    except OSError as exc:
        raise TransportFailure(f"{role} call failed: {exc}") from exc
    try:
        data = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise SchemaInvalidResponse(f"{role} response is not JSON") from None
    _validate(data, wire_schema(role, "response"))
    return data


@dataclass
class RemoteBackend:
    """Retrying caller; every failure and fallback is appended to ``notes``."""

    endpoint: str | None = None
    api_key: str | None = None
    timeout: float = DEFAULT_TIMEOUT
    retries: int = REMOTE_RETRIES
    notes: list = field(default_factory=list)

    def invoke(self, role: str, payload: dict, accept: Callable[[dict], Any], fallback: Callable[[], Any]) -> Any:
        for attempt in range(1, self.retries + 1):
            try:
                return accept(call_remote(role, payload, self.endpoint, self.api_key, self.timeout))
            except (RemoteError, MalformedPlan, ValueError, KeyError, TypeError) as exc:
                self.notes.append(f"{role} attempt {attempt} failed: {type(exc).__name__}: {exc}")
                if isinstance(exc, TransportFailure) and not isinstance(exc, RemoteTimeout):
                    break  # an unreachable endpoint will not come back within a run
        self.notes.append(f"{role} fell back to the deterministic backend")
        return fallback()


@dataclass
class RemoteArchitect:
    backend: RemoteBackend

    def __call__(self, intent: IntentSpec, constraints: ConstraintSet, motifs=()) -> tuple[Plan, PlanInvariants]:
        payload = {"intent": intent.to_json(), "constraints": json.loads(canonical_json(constraints.to_json())),
                   "motifs": [json.loads(canonical_json(plan_to_json(m.fragment))) for m in motifs]}

        def accept(resp: dict):
            plan = plan_from_json(resp["plan"])
            plan = replace(plan, specs=constraints)
            check_well_formed(plan)
            return plan, PlanInvariants.from_json(resp.get("invariants", []))

        return self.backend.invoke("architect", payload, accept,
                                   lambda: architect_plan(intent, constraints, motifs))


def _value_from_wire(value: Any) -> Any:
    if isinstance(value, dict) and set(value) == {"$ref"}:
        return RefExpr(tuple(value["$ref"].split(".")))
    return value_from_json(value)


def _value_to_wire(value: Any) -> Any:
    if isinstance(value, RefExpr):
        return {"$ref": value.render()}
    return json.loads(canonical_json(value_to_json(value)))


class RemoteProposer:
    """Engineer backend: asks the remote model for one hole value at a time."""

    name = "remote"

    def __init__(self, backend: RemoteBackend):
        self.backend = backend

    def propose(self, request: HoleRequest) -> Any:
        payload = {"node": request.hole.node, "field": request.hole.field, "kind": request.kind,
                   "domain": request.domain,
                   "choices": None if request.choices is None else [_value_to_wire(c) for c in request.choices]}
        return self.backend.invoke("engineer", payload, lambda r: _value_from_wire(r["value"]),
                                   lambda: stub_value(request))
