"""Evidence bundle: build from a finished blackboard, verify offline.

Layout (one directory)::

    manifest.json          bundle version, digest algorithm, toolchain digests,
                           constraints, program digest, per-file digests, self digest
    program.tf             final program, canonical print
    policy_traces.json     rule id, locus, verdict, justification per applicable rule
    cost_sheet.json        line items, total, ceiling, catalog version
    static_validation.json schema verdict and counterexamples, reviewer diagnostics
    roundtrip.json         round-trip guard record and the final lifted-plan digest
    repair_path.json       committed edits with J before/after, reverted attempts
    deploy_log.json        sandbox verdict and log (attested by digest only)
    confirmations.json     residency and redundancy confirmations

JSON files are written with ``dump_pretty`` and must stay byte-identical to
that form; file digests are sha256 over the exact bytes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any

from .canonical import DIGEST_ALGORITHM, canonical_json, digest_bytes, digest_obj, dump_pretty, loads
from .errors import IncompleteBlackboard
from .hcl import HclProgram, lift_lenient, parse, print_program
from .iir import ConstraintSet, plan_digest
from .repair import default_mapping
from .validators.cost import estimate_cost
from .validators.policy import eval_policies
from .validators.schema import validate_schema

BUNDLE_VERSION = "1"
MANIFEST = "manifest.json"
PROGRAM = "program.tf"
SECTIONS = ("policy_traces", "cost_sheet", "static_validation", "roundtrip", "repair_path", "deploy_log",
            "confirmations")


@dataclass
class EvidenceBundle:
    files: dict = field(default_factory=dict)   # file name -> bytes

    @property
    def manifest(self) -> dict:
        return loads(self.files[MANIFEST].decode("utf-8"))

    @property
    def manifest_digest(self) -> str:
        return digest_bytes(self.files[MANIFEST])

    def section(self, name: str) -> Any:
        return loads(self.files[f"{name}.json"].decode("utf-8"))

    def write(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, data in sorted(self.files.items()):
            (directory / name).write_bytes(data)
        return directory

    @classmethod
    def read(cls, directory: str | Path) -> "EvidenceBundle":
        directory = Path(directory)
        return cls({p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()})


def _json_bytes(obj: Any) -> bytes:
    return dump_pretty(obj).encode("utf-8")


def confirmations(program: HclProgram, registry, constraints: ConstraintSet) -> dict:
    plan, _ = lift_lenient(program, registry, constraints)
    allowed = sorted(constraints.residency) if constraints.residency is not None else None
    residency = {n.id: {"region": n.region, "ok": allowed is None or n.region in allowed}
                 for n in sorted(plan.nodes, key=lambda n: n.id)}
    redundancy = {}
    for n in sorted(plan.nodes, key=lambda n: n.id):
        if n.kind == "rds":
            redundancy[n.id] = {"multi_az": n.fields.get("multi_az") is True,
                                "effect_redundant": "redundant" in {e.value for e in n.effects}}
    zones = sorted({n.fields["availability_zone"] for n in plan.nodes
                    if n.kind == "subnet" and isinstance(n.fields.get("availability_zone"), str)})
    zmin = constraints.availability_zones_min
    return {
        "residency": {"allowed": allowed, "nodes": residency, "ok": all(r["ok"] for r in residency.values())},
        "redundancy": {"nodes": redundancy,
                       "ok": all(r["multi_az"] for r in redundancy.values() if r["effect_redundant"])},
        "availability_zones": {"zones": zones, "minimum": zmin, "ok": zmin is None or len(zones) >= zmin},
    }


def _latest(bb, kind: str, type_: str | None = None):
    for e in reversed(bb.entries):
        if e.kind == kind and (type_ is None or (isinstance(e.payload, dict) and e.payload.get("type") == type_)):
            return e
    return None


def _require(entry, what: str):
    if entry is None:
        raise IncompleteBlackboard(f"blackboard has no {what}")
    return entry.payload


def build_bundle(bb, program: HclProgram, registry, mapping=None) -> EvidenceBundle:
    """Assemble the bundle from blackboard artifacts; deterministic for a given blackboard."""
    intent = _require(_latest(bb, "intent"), "intent record")
    constraints = ConstraintSet.from_json(intent["constraints"])
    report = _require(_latest(bb, "report"), "validator report")["report"]
    traces = _require(_latest(bb, "trace", "policy"), "policy traces")
    cost = _require(_latest(bb, "log", "cost"), "cost sheet")
    roundtrip = _require(_latest(bb, "trace", "roundtrip"), "round-trip record")
    deploy = _require(_latest(bb, "log", "deploy"), "deploy log")
    edits = [e.payload for e in bb.entries if e.kind == "edit"]
    toolchain = dict(bb.entries[-1].toolchain) if bb.entries else {}
    if "mapping" not in toolchain:
        m = mapping or default_mapping()
        toolchain["mapping"] = f"{m.version}:{m.digest}"

    text = print_program(program)
    lifted, _ = lift_lenient(program, registry, constraints)
    sections = {
        "policy_traces": {"traces": traces["traces"]},
        "cost_sheet": {"catalog_version": cost["catalog_version"], "currency": cost["currency"],
                       "items": cost["items"], "total": cost["total"],
                       "ceiling": constraints.budget_ceiling},
        "static_validation": {"schema_ok": report["v_schema"], "counterexamples": report["logs"].get("schema", []),
                              "review": report["logs"].get("review", [])},
        "roundtrip": {"guard": {k: roundtrip[k] for k in ("equivalent", "repaired", "plan_digest", "lifted_digest")},
                      "final_lifted_digest": str(plan_digest(lifted, registry))},
        "repair_path": {"committed": [e for e in edits if e.get("status") == "committed"],
                        "attempts": [e for e in edits if e.get("status") != "committed"]},
        "deploy_log": {"sandbox": deploy["sandbox"], "ok": deploy["ok"], "log": deploy["log"]},
        "confirmations": confirmations(program, registry, constraints),
    }
    files = {PROGRAM: text.encode("utf-8")}
    for name in SECTIONS:
        files[f"{name}.json"] = _json_bytes(sections[name])
    manifest = {
        "bundle_version": BUNDLE_VERSION,
        "digest_algorithm": DIGEST_ALGORITHM,
        "toolchain": toolchain,
        "registry_version": registry.registry_version,
        "constraints": constraints.to_json(),
        "program_digest": digest_bytes(files[PROGRAM]),
        "files": {name: digest_bytes(data) for name, data in sorted(files.items())},
    }
    manifest["self_digest"] = digest_obj(manifest)
    files[MANIFEST] = _json_bytes(manifest)
    return EvidenceBundle(files)


# -- verification -------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    code: str
    section: str
    message: str

    def to_json(self) -> dict:
        return {"code": self.code, "section": self.section, "message": self.message}


@dataclass
class VerifyReport:
    findings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, code: str, section: str, message: str) -> None:
        self.findings.append(Finding(code, section, message))

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}

    def to_json(self) -> dict:
        return {"verdict": "pass" if self.ok else "fail", "findings": [f.to_json() for f in self.findings]}


def _load_json(report: VerifyReport, files: dict, name: str) -> Any:
    data = files.get(name)
    if data is None:
        report.add("missing_file", name, f"{name} is absent")
        return None
    try:
        obj = loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        report.add("unparsable", name, f"{name} does not parse: {exc}")
        return None
    if _json_bytes(obj) != data:
        report.add("noncanonical", name, f"{name} is not in canonical form")
    return obj


def _same(a: Any, b: Any) -> bool:
    return canonical_json(a) == canonical_json(b)


def verify_bundle(bundle_dir: str | Path, program_path: str | Path, registry, rules, catalog,
                  mapping=None) -> VerifyReport:
    """Offline audit: digests, toolchain, re-run validators, repair-path monotonicity."""
    out = VerifyReport()
    bundle_dir = Path(bundle_dir)
    files = {p.name: p.read_bytes() for p in sorted(bundle_dir.iterdir()) if p.is_file()} \
        if bundle_dir.is_dir() else {}
    manifest = _load_json(out, files, MANIFEST)
    if not isinstance(manifest, dict):
        if manifest is not None:
            out.add("unparsable", MANIFEST, "manifest is not an object")
        return out
    body = {k: v for k, v in manifest.items() if k != "self_digest"}
    if digest_obj(body) != manifest.get("self_digest"):
        out.add("digest_mismatch", MANIFEST, "manifest self digest does not match its content")
    expected = manifest.get("files") or {}
    for name in sorted(set(expected) | (set(files) - {MANIFEST})):
        if name not in files:
            out.add("missing_file", name, f"{name} listed in manifest but absent")
        elif name not in expected:
            out.add("unlisted_file", name, f"{name} is not listed in the manifest")
        elif digest_bytes(files[name]) != expected[name]:
            out.add("digest_mismatch", name, f"{name} digest differs from manifest")

    # the audited program
    try:
        program_bytes = Path(program_path).read_bytes()
    except OSError as exc:
        out.add("missing_file", "program", f"cannot read program: {exc}")
        return out
    if digest_bytes(program_bytes) != manifest.get("program_digest"):
        out.add("digest_mismatch", "program", "program digest differs from manifest")
    if files.get(PROGRAM) is not None and files[PROGRAM] != program_bytes:
        out.add("digest_mismatch", PROGRAM, "bundled program differs from the audited program")
    try:
        program = parse(program_bytes.decode("utf-8"))
    except Exception as exc:  # any parse failure is a finding, never an error
        out.add("unparsable", "program", f"program does not parse: {exc}")
        return out

    m = mapping or default_mapping()
    current = {"registry": f"{registry.registry_version}:{registry.digest}",
               "rules": f"{rules.version}:{rules.digest}",
               "catalog": f"{catalog.version}:{catalog.digest}",
               "mapping": f"{m.version}:{m.digest}"}
    toolchain = manifest.get("toolchain") or {}
    for key, value in current.items():
        if toolchain.get(key) != value:
            out.add("toolchain_mismatch", MANIFEST, f"{key} digest {toolchain.get(key)!r} != active {value!r}")

    try:
        constraints = ConstraintSet.from_json(manifest.get("constraints"))
    except Exception as exc:
        out.add("unparsable", MANIFEST, f"constraints do not parse: {exc}")
        return out

    static = _load_json(out, files, "static_validation.json")
    ok, ces = validate_schema(program, registry, constraints)
    if isinstance(static, dict):
        if static.get("schema_ok") is not ok or not _same(static.get("counterexamples"), [c.to_json() for c in ces]):
            out.add("schema_divergence", "static_validation", "schema verdict differs on re-validation")
    if not ok:
        out.add("schema_failure", "program", "program fails schema validation")
        return out

    traces = _load_json(out, files, "policy_traces.json")
    p_ok, p_traces, _ = eval_policies(program, rules, constraints, registry)
    if not isinstance(traces, dict) or not _same(traces.get("traces"), [t.to_json() for t in p_traces]):
        out.add("trace_divergence", "policy_traces", "policy traces differ on re-evaluation")
    if not p_ok:
        out.add("policy_failure", "program", "program violates policy")

    sheet = _load_json(out, files, "cost_sheet.json")
    total, items, cost_ces = estimate_cost(program, catalog, constraints, registry)
    if not isinstance(sheet, dict) or not _same(
            {"items": sheet.get("items"), "total": sheet.get("total"), "catalog_version": sheet.get("catalog_version")},
            {"items": [i.to_json() for i in items], "total": total, "catalog_version": catalog.version}):
        out.add("cost_divergence", "cost_sheet", "cost sheet differs on re-estimation")
    if cost_ces:
        out.add("budget_failure", "program", "estimate exceeds the budget")

    path = _load_json(out, files, "repair_path.json")
    if isinstance(path, dict):
        committed = path.get("committed") or []
        js = []
        for e in committed:
            try:
                js.append((Decimal(str(e["j_before"])), Decimal(str(e["j_after"]))))
            except (KeyError, TypeError, ArithmeticError, ValueError):
                out.add("repair_path_malformed", "repair_path", "committed edit lacks J values")
        for i, (before, after) in enumerate(js):
            if after > before or (i and before != js[i - 1][1]):
                out.add("non_monotone", "repair_path", f"J increases or jumps at committed edit {i}")
        if js and js[-1][1] != 0:
            out.add("non_monotone", "repair_path", "final committed J is not zero")

    rt = _load_json(out, files, "roundtrip.json")
    lifted, _ = lift_lenient(program, registry, constraints)
    if not isinstance(rt, dict) or rt.get("final_lifted_digest") != str(plan_digest(lifted, registry)):
        out.add("roundtrip_divergence", "roundtrip", "lifted plan digest differs")

    conf = _load_json(out, files, "confirmations.json")
    if not _same(conf, confirmations(program, registry, constraints)):
        out.add("confirmation_divergence", "confirmations", "residency or redundancy confirmation differs")

    _load_json(out, files, "deploy_log.json")
    return out
