"""Provider schema registry and the harmonization pass."""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Any

from .canonical import digest_obj, loads
from .errors import RegionUnavailable, RegistryError, UnknownKind, VersionConflict
from .iir import (
    Plan, Ref, SchemaCE, check_well_formed, implied_depends, iter_refs, value_from_json,
    value_to_json, with_edges,
)

SCALAR_TYPES = ("string", "int", "bool", "decimal")
CONTAINER_TYPES = ("list", "map", "blocks")
_REF_TYPE = re.compile(r"^reference\(([a-z][a-z0-9_]*)\)$")

# attribute names the HCL realization reserves on resource blocks
RESERVED_ATTRIBUTES = frozenset({"provider", "depends_on", "effects"})


@dataclass(frozen=True)
class FieldDecl:
    name: str
    type: str
    required: bool = False
    default: Any = None
    allowed: tuple | None = None
    ref_kind: str | None = None
    block_fields: tuple = ()

    def __post_init__(self):
        if self.required and self.default is not None:
            raise RegistryError(f"required field {self.name!r} must not declare a default")
        if self.allowed is not None and not self.allowed:
            raise RegistryError(f"field {self.name!r} declares an empty allowed set")
        if self.type == "reference" and not self.ref_kind:
            raise RegistryError(f"reference field {self.name!r} needs a target kind")
        if self.type not in SCALAR_TYPES + CONTAINER_TYPES + ("reference",):
            raise RegistryError(f"field {self.name!r} has unknown type {self.type!r}")

    @property
    def domain(self) -> str:
        return f"reference({self.ref_kind})" if self.type == "reference" else self.type

    def default_value(self) -> Any:
        return copy.deepcopy(self.default)

    def block_map(self) -> dict[str, "FieldDecl"]:
        return {d.name: d for d in self.block_fields}

    def check(self, node_id: str, value: Any, kinds: dict[str, str], path: str = "") -> list[SchemaCE]:
        """Value-domain membership; ``kinds`` maps node id to kind."""
        name = path or self.name
        bad = SchemaCE("type_mismatch", node_id, name, {"expected": self.domain, "value": value_to_json(value)})
        t = self.type
        if t == "string":
            ok = isinstance(value, str) and value != ""
        elif t == "int":
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif t == "bool":
            ok = isinstance(value, bool)
        elif t == "decimal":
            ok = isinstance(value, (int, Decimal)) and not isinstance(value, bool)
        elif t == "list":
            ok = isinstance(value, list)
        elif t == "map":
            ok = isinstance(value, dict)
        elif t == "blocks":
            if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
                return [bad]
            out = []
            decls = self.block_map()
            for i, entry in enumerate(value):
                for d in self.block_fields:
                    if d.required and d.name not in entry:
                        out.append(SchemaCE("missing_required", node_id, f"{name}[{i}].{d.name}"))
                for k, v in entry.items():
                    d = decls.get(k)
                    if d is None:
                        out.append(SchemaCE("unknown_field", node_id, f"{name}[{i}].{k}", {"value": value_to_json(v)}))
                    else:
                        out.extend(d.check(node_id, v, kinds, f"{name}[{i}].{k}"))
            return out
        else:  # reference
            if not isinstance(value, Ref):
                return [bad]
            if value.target not in kinds:
                return [SchemaCE("dangling_reference", node_id, name, {"target": value.target})]
            if kinds[value.target] != self.ref_kind:
                return [SchemaCE("reference_kind", node_id, name,
                                 {"expected": self.ref_kind, "actual": kinds[value.target], "target": value.target})]
            return []
        if not ok:
            return [bad]
        if self.allowed is not None and value not in self.allowed:
            return [SchemaCE("invalid_value", node_id, name,
                             {"value": value_to_json(value), "allowed": [value_to_json(a) for a in self.allowed]})]
        return []

    def to_json(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "type": self.domain, "required": self.required}
        if self.default is not None:
            out["default"] = value_to_json(self.default)
        if self.allowed is not None:
            out["allowed"] = [value_to_json(a) for a in self.allowed]
        if self.block_fields:
            out["fields"] = [d.to_json() for d in self.block_fields]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "FieldDecl":
        try:
            raw_type = data["type"]
            name = data["name"]
        except KeyError as exc:
            raise RegistryError(f"field declaration missing {exc}") from None
        ref_kind = None
        m = _REF_TYPE.match(raw_type)
        if m:
            raw_type, ref_kind = "reference", m.group(1)
        allowed = data.get("allowed")
        default = data.get("default")
        return cls(
            name=name,
            type=raw_type,
            required=bool(data.get("required", False)),
            default=value_from_json(default) if default is not None else None,
            allowed=tuple(value_from_json(a) for a in allowed) if allowed is not None else None,
            ref_kind=ref_kind,
            block_fields=tuple(cls.from_json(d) for d in data.get("fields", ())),
        )


@dataclass(frozen=True)
class KindSchema:
    provider: str
    kind: str
    version: str
    regions_available: frozenset
    fields: tuple = ()

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise RegistryError(f"kind {self.kind!r} declares a field twice")
        if not self.regions_available:
            raise RegistryError(f"kind {self.kind!r} has no regions")
        clash = RESERVED_ATTRIBUTES & set(names)
        if clash:
            raise RegistryError(f"kind {self.kind!r} uses reserved attribute names {sorted(clash)}")

    def field_map(self) -> dict[str, FieldDecl]:
        return {f.name: f for f in self.fields}

    def required_fields(self) -> list[FieldDecl]:
        return [f for f in self.fields if f.required]

    def to_json(self) -> dict:
        return {
            "provider": self.provider,
            "kind": self.kind,
            "version": self.version,
            "regions": sorted(self.regions_available),
            "fields": [f.to_json() for f in self.fields],
        }


@dataclass(frozen=True)
class SchemaRegistry:
    kinds: dict = field(default_factory=dict)
    registry_version: str = "0"
    compatible_versions: frozenset = frozenset()
    digest: str = ""

    def lookup(self, provider: str, kind: str) -> KindSchema | None:
        return self.kinds.get((provider, kind))

    def get(self, provider: str, kind: str) -> KindSchema:
        schema = self.lookup(provider, kind)
        if schema is None:
            raise UnknownKind(kind, provider)
        return schema

    def kinds_for(self, kind: str) -> list[KindSchema]:
        return [s for (p, k), s in sorted(self.kinds.items()) if k == kind]

    def is_compatible(self, version: str) -> bool:
        return version == self.registry_version or version in self.compatible_versions

    def __len__(self) -> int:
        return len(self.kinds)

    def to_json(self) -> dict:
        return {
            "registry_version": self.registry_version,
            "compatible_versions": sorted(self.compatible_versions),
            "kinds": [self.kinds[k].to_json() for k in sorted(self.kinds)],
        }


def registry_from_json(data: dict) -> SchemaRegistry:
    kinds: dict[tuple[str, str], KindSchema] = {}
    for entry in data.get("kinds", []):
        try:
            schema = KindSchema(
                provider=entry["provider"],
                kind=entry["kind"],
                version=str(entry.get("version", "0.0.0")),
                regions_available=frozenset(entry.get("regions", ())),
                fields=tuple(FieldDecl.from_json(f) for f in entry.get("fields", ())),
            )
        except KeyError as exc:
            raise RegistryError(f"kind entry missing {exc}") from None
        key = (schema.provider, schema.kind)
        if key in kinds:
            raise RegistryError(f"duplicate kind {schema.kind!r} for provider {schema.provider!r}")
        kinds[key] = schema
    version = str(data.get("registry_version", "0"))
    compatible = frozenset(data.get("compatible_versions", ())) | {version}
    reg = SchemaRegistry(kinds, version, compatible)
    return replace(reg, digest=digest_obj(reg.to_json()))


def load_registry(source: str | Path) -> SchemaRegistry:
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise RegistryError(f"cannot read registry {path}: {exc}") from None
    try:
        data = loads(text)
    except json.JSONDecodeError as exc:
        raise RegistryError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise RegistryError(f"{path}: registry must be a JSON object")
    return registry_from_json(data)


def data_path(name: str) -> Path:
    return Path(str(resources.files("iacforge") / "data" / name))


def default_registry() -> SchemaRegistry:
    return load_registry(data_path("registry.json"))


def harmonize(plan: Plan, registry: SchemaRegistry) -> Plan:
    """Concretize a plan against the registry.

    Expands defaults, pins provider versions into node metadata, checks the
    region against the kind's availability, and makes the Depends edges
    implied by references explicit. Typing violations are left in place for
    ``validate_types`` to report.
    """
    check_well_formed(plan)
    nodes = []
    for n in plan.nodes:
        schema = registry.lookup(n.provider, n.kind)
        if schema is None:
            raise UnknownKind(n.kind, n.provider)
        if n.region not in schema.regions_available:
            raise RegionUnavailable(n.id, n.kind, n.region)
        pinned = n.meta.get("provider_version")
        if pinned is not None and pinned != schema.version:
            raise VersionConflict(
                f"node {n.id!r} pins {n.provider} {n.kind} to {pinned}, registry offers {schema.version}"
            )
        fields = dict(n.fields)
        for decl in schema.fields:
            if decl.default is not None and decl.name not in fields:
                fields[decl.name] = decl.default_value()
        meta = dict(n.meta)
        meta["provider_version"] = schema.version
        meta["registry_version"] = registry.registry_version
        nodes.append(replace(n, fields=fields, meta=meta))
    out = replace(plan, nodes=tuple(nodes))
    return with_edges(out, set(out.edges) | implied_depends(out))


def reference_targets(plan: Plan) -> set[str]:
    return {r.target for n in plan.nodes for v in n.fields.values() for r in iter_refs(v)}
