"""Motif store: verified, typed plan fragments with symbolic signature retrieval.

File format: a JSON list of motif objects, each
``{"id", "signature": {"nodes": [...], "edges": [...]}, "fragment": <I-IR plan>,
"registry_version", "provider_versions", "effects", "constraint_tags",
"provenance", "seq"}``. Fragments are I-IR only; no HCL text is stored.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .canonical import canonical_json, digest_obj, dump_pretty, load_path
from .errors import FragmentNotClosed, NotASuccess
from .iir import (
    Connects, ConstraintSet, Depends, Plan, check_well_formed, implied_depends, iter_refs, plan_from_json,
    plan_to_json,
)


@dataclass(frozen=True)
class Signature:
    nodes: tuple = ()   # sorted "kind[effect,...]" items, a multiset
    edges: tuple = ()   # sorted "depends:kind->kind" / "connects:kind->kind:proto"

    def kinds(self) -> Counter:
        return Counter(item.split("[", 1)[0] for item in self.nodes)

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes), "edges": list(self.edges)}

    @classmethod
    def from_json(cls, data: dict) -> "Signature":
        return cls(tuple(data.get("nodes", ())), tuple(data.get("edges", ())))

    def key(self) -> str:
        return canonical_json(self.to_json())


def signature_of(plan: Plan) -> Signature:
    kinds = {n.id: n.kind for n in plan.nodes}
    nodes = sorted(f"{n.kind}[{','.join(sorted(e.value for e in n.effects))}]" for n in plan.nodes)
    edges = []
    for e in set(plan.edges) | implied_depends(plan):
        if isinstance(e, Depends):
            edges.append(f"depends:{kinds[e.src]}->{kinds[e.dst]}")
        else:
            edges.append(f"connects:{kinds[e.src]}->{kinds[e.dst]}:{e.proto}")
    return Signature(tuple(nodes), tuple(sorted(edges)))


def query_of(kinds: Iterable[str]) -> Signature:
    """A node-only query from bare kind names."""
    return Signature(tuple(sorted(f"{k}[]" for k in kinds)))


@dataclass(frozen=True)
class Motif:
    id: str
    signature: Signature
    fragment: Plan
    registry_version: str
    provider_versions: dict = field(default_factory=dict, compare=False)
    effects: tuple = ()
    constraint_tags: tuple = ()
    provenance: str = ""
    seq: int = 0

    def to_json(self) -> dict:
        return {"id": self.id, "signature": self.signature.to_json(), "fragment": plan_to_json(self.fragment),
                "registry_version": self.registry_version, "provider_versions": dict(self.provider_versions),
                "effects": list(self.effects), "constraint_tags": list(self.constraint_tags),
                "provenance": self.provenance, "seq": self.seq}

    @classmethod
    def from_json(cls, data: dict) -> "Motif":
        return cls(data["id"], Signature.from_json(data["signature"]), plan_from_json(data["fragment"]),
                   data["registry_version"], dict(data.get("provider_versions", {})),
                   tuple(data.get("effects", ())), tuple(data.get("constraint_tags", ())),
                   data.get("provenance", ""), int(data.get("seq", 0)))


@dataclass
class MotifStore:
    path: Path | None = None
    motifs: list = field(default_factory=list)
    index: dict = field(default_factory=dict)   # signature key -> motif ids

    @classmethod
    def load(cls, path: str | Path) -> "MotifStore":
        path = Path(path)
        store = cls(path)
        if path.exists():
            for entry in load_path(path):
                store._admit(Motif.from_json(entry))
        return store

    def _admit(self, motif: Motif) -> None:
        self.motifs.append(motif)
        self.index.setdefault(motif.signature.key(), []).append(motif.id)

    def get(self, motif_id: str) -> Motif | None:
        return next((m for m in self.motifs if m.id == motif_id), None)

    def add(self, motif: Motif) -> str:
        if self.get(motif.id) is not None:
            return motif.id
        self._admit(replace(motif, seq=len(self.motifs)))
        self.save()
        return motif.id

    def save(self) -> None:
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(dump_pretty([m.to_json() for m in self.motifs]), encoding="utf-8")

    def __len__(self) -> int:
        return len(self.motifs)


def extract_fragment(plan: Plan, selector: Iterable[str] | None = None) -> Plan:
    """Sub-plan over the selected node ids; must be closed under Depends and references."""
    ids = {n.id for n in plan.nodes} if selector is None else set(selector)
    unknown = ids - {n.id for n in plan.nodes}
    if unknown:
        raise FragmentNotClosed(f"selector names unknown nodes {sorted(unknown)}")
    for e in set(plan.edges) | implied_depends(plan):
        if isinstance(e, Depends) and e.src in ids and e.dst not in ids:
            raise FragmentNotClosed(f"{e.src} depends on {e.dst}, which is not in the fragment")
    for n in plan.nodes:
        if n.id in ids:
            for v in n.fields.values():
                for r in iter_refs(v):
                    if r.target not in ids:
                        raise FragmentNotClosed(f"{n.id} references {r.target}, which is not in the fragment")
    nodes = tuple(replace(n, meta={}) for n in plan.nodes if n.id in ids)
    edges = tuple(e for e in plan.edges if e.src in ids and e.dst in ids)
    frag = Plan(nodes, edges, ConstraintSet())
    check_well_formed(frag)
    return frag


def store_motif(store: MotifStore, outcome, selector: Iterable[str] | None = None,
                registry_version: str | None = None) -> str:
    """Admit a fragment of a successful run; identical fragments share one id."""
    from .orchestrator import Success

    if not isinstance(outcome, Success):
        raise NotASuccess("only successful runs may contribute motifs")
    frag = extract_fragment(outcome.plan, selector)
    sig = signature_of(frag)
    versions = {}
    for n in outcome.plan.nodes:
        if n.id in frag.by_id() and "provider_version" in n.meta:
            versions[f"{n.provider}/{n.kind}"] = n.meta["provider_version"]
    reg_version = registry_version or next(
        (n.meta["registry_version"] for n in outcome.plan.nodes if "registry_version" in n.meta), "0")
    effects = tuple(sorted({e.value for n in frag.nodes for e in n.effects}))
    tags = tuple(sorted(k for k, v in outcome.plan.specs.to_json().items() if v not in (None, [])))
    motif_id = digest_obj({"signature": sig.to_json(), "fragment": plan_to_json(frag),
                           "registry_version": reg_version})[:16]
    return store.add(Motif(motif_id, sig, frag, reg_version, versions, effects, tags, outcome.run_digest))


def _sub_multiset(small: Counter, big: Counter) -> bool:
    return all(big[k] >= c for k, c in small.items())


def retrieve_motifs(store: MotifStore, query: Signature, registry) -> list[Motif]:
    """Motifs whose kinds (and edge shapes, if the query has any) fit inside the query, best first."""
    out = []
    qkinds = query.kinds()
    for m in store.motifs:
        if not registry.is_compatible(m.registry_version):
            continue
        if not _sub_multiset(m.signature.kinds(), qkinds):
            continue
        if query.edges and not set(m.signature.edges) <= set(query.edges):
            continue
        out.append(m)
    out.sort(key=lambda m: (-sum(m.signature.kinds().values()), -m.seq))
    return out
