"""Native policy rule DSL.

A rule file is JSON::

    {"rule_set_version": "...",
     "effect_scope": {"<effect>": ["<kind>", ... | "*"]},
     "rules": [{"id", "kinds", "when"?, "assert", "code", "severity", "message", "effect"?}]}

Predicates are single-key objects:

    {"field_equals": {"field": f, "value": v}}
    {"field_member_of": {"field": f, "values": [..]}}
    {"field_present": f}
    {"field_contains": {"field": f, "value": v}}
    {"port_range": {"cidr": c, "ports": [p, ..]}}     an ingress entry opens c to some p
    {"effect_present": e}
    {"tag_present": key}
    {"region_allowed": true}                          region within constraint residency
    {"all": [..]}  {"any": [..]}  {"not": p}

A rule applies to a resource when its kind matches and ``when`` holds; it
passes when ``assert`` holds. Required effects from the constraint set must be
carried by every resource in the effect's scope.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..canonical import digest_obj, load_path
from ..errors import RulesError
from ..hcl.ast import HclProgram
from ..hcl.lift import lift_lenient
from ..iir import ConstraintSet, Effect, Plan, value_from_json, value_to_json
from .report import Counterexample, PolicyTrace, sort_ces

LEAF_OPS = ("field_equals", "field_member_of", "field_present", "field_contains", "port_range",
            "effect_present", "tag_present", "region_allowed")
BOOL_OPS = ("all", "any", "not")


@dataclass(frozen=True)
class PolicyRule:
    id: str
    kinds: tuple
    check: dict
    code: str
    when: dict | None = None
    severity: str = "high"
    message: str = "{address} violates {rule}"
    effect: str | None = None

    def applies_to_kind(self, kind: str) -> bool:
        return "*" in self.kinds or kind in self.kinds


@dataclass(frozen=True)
class RuleSet:
    rules: tuple = ()
    effect_scope: dict = field(default_factory=dict)
    version: str = "0"
    digest: str = ""

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def by_id(self, rule_id: str) -> PolicyRule | None:
        return next((r for r in self.rules if r.id == rule_id), None)

    def scope_of(self, effect: str) -> tuple:
        return tuple(self.effect_scope.get(effect, ()))


def check_predicate(pred: Any, where: str = "predicate") -> None:
    if not isinstance(pred, dict) or len(pred) != 1:
        raise RulesError(f"{where}: a predicate is an object with exactly one operator")
    (op, arg), = pred.items()
    if op in ("all", "any"):
        if not isinstance(arg, list):
            raise RulesError(f"{where}: {op} takes a list")
        for i, p in enumerate(arg):
            check_predicate(p, f"{where}.{op}[{i}]")
    elif op == "not":
        check_predicate(arg, f"{where}.not")
    elif op not in LEAF_OPS:
        raise RulesError(f"{where}: unknown predicate {op!r}")
    elif op in ("field_equals", "field_contains") and not {"field", "value"} <= set(arg or {}):
        raise RulesError(f"{where}: {op} needs field and value")
    elif op == "field_member_of" and not (isinstance(arg, dict) and isinstance(arg.get("values"), list)):
        raise RulesError(f"{where}: field_member_of needs field and values")
    elif op == "port_range" and not (isinstance(arg, dict) and "cidr" in arg and "ports" in arg):
        raise RulesError(f"{where}: port_range needs cidr and ports")


def rules_from_json(data: Any) -> RuleSet:
    if isinstance(data, list):
        data = {"rules": data}
    if not isinstance(data, dict):
        raise RulesError("rule file must be an object or a list of rules")
    rules, seen = [], set()
    for i, raw in enumerate(data.get("rules", [])):
        try:
            rid = raw["id"]
            rule = PolicyRule(
                id=rid,
                kinds=tuple(raw.get("kinds", ["*"])),
                check=raw["assert"],
                code=raw.get("code", rid),
                when=raw.get("when"),
                severity=raw.get("severity", "high"),
                message=raw.get("message", "{address} violates {rule}"),
                effect=raw.get("effect"),
            )
        except (KeyError, TypeError) as exc:
            raise RulesError(f"rules[{i}]: missing {exc}") from None
        if rid in seen:
            raise RulesError(f"duplicate rule id {rid!r}")
        seen.add(rid)
        check_predicate(rule.check, f"{rid}.assert")
        if rule.when is not None:
            check_predicate(rule.when, f"{rid}.when")
        rules.append(rule)
    scope = {k: tuple(v) for k, v in data.get("effect_scope", {}).items()}
    for e in scope:
        try:
            Effect(e)
        except ValueError:
            raise RulesError(f"effect_scope names unknown effect {e!r}") from None
    version = str(data.get("rule_set_version", "0"))
    return RuleSet(tuple(rules), scope, version, digest_obj(data))


def load_rules(path: str | Path) -> RuleSet:
    try:
        data = load_path(path)
    except (OSError, ValueError) as exc:
        raise RulesError(f"cannot load rules {path}: {exc}") from None
    return rules_from_json(data)


def default_rules() -> RuleSet:
    from ..registry import data_path

    return load_rules(data_path("rules.json"))


# -- evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class ResourceView:
    id: str
    kind: str
    region: str
    fields: dict
    effects: frozenset

    @property
    def address(self) -> str:
        return f"{self.kind}.{self.id}"


def views_of(plan: Plan, registry=None) -> list[ResourceView]:
    out = []
    for n in sorted(plan.nodes, key=lambda n: n.id):
        fields = dict(n.fields)
        schema = registry.lookup(n.provider, n.kind) if registry is not None else None
        if schema is not None:
            for d in schema.fields:
                if d.default is not None and d.name not in fields:
                    fields[d.name] = d.default_value()
        out.append(ResourceView(n.id, n.kind, n.region, fields, frozenset(e.value for e in n.effects)))
    return out


def _same(a: Any, b: Any) -> bool:
    return type(a) is type(b) and a == b


def evaluate(pred: dict, view: ResourceView, constraints: ConstraintSet) -> tuple[bool, dict]:
    """Returns (truth, evidence); evidence explains the truth value."""
    (op, arg), = pred.items()
    f = view.fields
    if op == "all":
        ev: dict = {}
        for p in arg:
            ok, e = evaluate(p, view, constraints)
            if not ok:
                return False, e
            ev.update(e)
        return True, ev
    if op == "any":
        ev = {}
        for p in arg:
            ok, e = evaluate(p, view, constraints)
            if ok:
                return True, e
            ev.update(e)
        return False, ev
    if op == "not":
        ok, e = evaluate(arg, view, constraints)
        return not ok, e
    if op == "field_equals":
        want = value_from_json(arg["value"])
        have = f.get(arg["field"])
        return _same(have, want), {"field": arg["field"], "value": value_to_json(have)}
    if op == "field_member_of":
        have = f.get(arg["field"])
        values = [value_from_json(v) for v in arg["values"]]
        return any(_same(have, v) for v in values), {"field": arg["field"], "value": value_to_json(have)}
    if op == "field_present":
        return arg in f, {"field": arg}
    if op == "field_contains":
        have = f.get(arg["field"])
        want = value_from_json(arg["value"])
        ok = isinstance(have, list) and any(_same(x, want) for x in have)
        return ok, {"field": arg["field"], "value": value_to_json(want) if ok else None}
    if op == "port_range":
        for entry in f.get("ingress", []) or []:
            if not isinstance(entry, dict):
                continue
            cidrs = entry.get("cidr_blocks") or []
            lo, hi = entry.get("from_port"), entry.get("to_port")
            if arg["cidr"] not in cidrs or not isinstance(lo, int) or not isinstance(hi, int):
                continue
            for port in arg["ports"]:
                if lo <= port <= hi:
                    return True, {"cidr": arg["cidr"], "port": port, "from_port": lo, "to_port": hi}
        return False, {"cidr": arg["cidr"], "ports": list(arg["ports"])}
    if op == "effect_present":
        return arg in view.effects, {"effect": arg}
    if op == "tag_present":
        tags = f.get("tags")
        ok = isinstance(tags, dict) and isinstance(tags.get(arg), str) and tags[arg] != ""
        return ok, {"tag": arg}
    if op == "region_allowed":
        allowed = constraints.residency
        ok = allowed is None or view.region in allowed
        return ok, {"region": view.region, "allowed": sorted(allowed) if allowed else None}
    raise RulesError(f"unknown predicate {op!r}")


def describe(pred: dict) -> str:
    (op, arg), = pred.items()
    if op in ("all", "any"):
        return f"{op}(" + ", ".join(describe(p) for p in arg) + ")"
    if op == "not":
        return f"not {describe(arg)}"
    if op == "field_equals":
        return f"{arg['field']} == {arg['value']!r}"
    if op == "field_member_of":
        return f"{arg['field']} in {arg['values']!r}"
    if op == "field_contains":
        return f"{arg['field']} contains {arg['value']!r}"
    if op == "port_range":
        return f"ingress opens {arg['cidr']} to ports {arg['ports']}"
    return f"{op}({arg!r})"


def eval_views(views: list[ResourceView], rules: RuleSet, constraints: ConstraintSet
               ) -> tuple[bool, list[PolicyTrace], list[Counterexample]]:
    traces: list[PolicyTrace] = []
    ces: list[Counterexample] = []
    for v in views:
        for rule in rules:
            if not rule.applies_to_kind(v.kind):
                continue
            if rule.when is not None and not evaluate(rule.when, v, constraints)[0]:
                continue
            ok, evidence = evaluate(rule.check, v, constraints)
            text = describe(rule.check)
            traces.append(PolicyTrace(rule.id, v.address, "pass" if ok else "fail",
                                      f"{text}: {'holds' if ok else 'violated'}"))
            if not ok:
                witness = dict(evidence, rule=rule.id)
                if rule.effect:
                    witness["effect"] = rule.effect
                ces.append(Counterexample(
                    "policy", rule.code, v.id, evidence.get("field", ""),
                    rule.message.format(address=v.address, rule=rule.id), witness, v.address))
    for effect in sorted(e.value for e in constraints.required_effects):
        scope = rules.scope_of(effect)
        rid = f"required-effect:{effect}"
        for v in views:
            if "*" not in scope and v.kind not in scope:
                continue
            ok = effect in v.effects
            traces.append(PolicyTrace(rid, v.address, "pass" if ok else "fail",
                                      f"effect {effect} {'declared' if ok else 'not declared'}"))
            if not ok:
                ces.append(Counterexample("policy", "effect_missing", v.id, "",
                                          f"{v.address} must carry required effect {effect}",
                                          {"rule": rid, "effect": effect}, v.address))
    traces.sort(key=lambda t: (t.locus, t.rule))
    ces = sort_ces(ces)
    return not ces, traces, ces


def eval_plan(plan: Plan, rules: RuleSet, constraints: ConstraintSet, registry=None):
    return eval_views(views_of(plan, registry), rules, constraints)


def eval_policies(program: HclProgram, rules: RuleSet, constraints: ConstraintSet, registry=None
                  ) -> tuple[bool, list[PolicyTrace], list[Counterexample]]:
    """Evaluate every applicable rule against every resource block."""
    if registry is None:
        from ..registry import default_registry

        registry = default_registry()
    plan, _ = lift_lenient(program, registry, constraints)
    return eval_plan(plan, rules, constraints, registry)
