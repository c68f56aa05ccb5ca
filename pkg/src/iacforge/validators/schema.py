"""Schema validator: lift the program, then type the lifted plan."""
from __future__ import annotations

from ..errors import UnknownKind
from ..hcl.ast import HclProgram, RefExpr, iter_exprs
from ..hcl.lift import lift_lenient
from ..iir import ConstraintSet, validate_types
from .report import Counterexample, sort_ces

MESSAGES = {
    "missing_required": "required attribute {field!r} is missing",
    "unknown_field": "attribute {field!r} is not declared for this kind",
    "type_mismatch": "attribute {field!r} has the wrong type",
    "invalid_value": "attribute {field!r} is outside its allowed values",
    "dangling_reference": "attribute {field!r} references an undeclared resource",
    "reference_kind": "attribute {field!r} references a resource of the wrong kind",
}


def _ce_from_schema(ce, kinds: dict) -> Counterexample:
    detail = dict(ce.detail or {})
    message = detail.pop("message", None) or MESSAGES.get(ce.code, ce.code).format(field=ce.field)
    kind = kinds.get(ce.node)
    address = f"{kind}.{ce.node}" if kind else ce.node
    return Counterexample("schema", ce.code, ce.node, ce.field, message, detail or None, address)


def _output_checks(program: HclProgram) -> list[Counterexample]:
    declared = {tuple(b.labels) for b in program.resources()}
    out = []
    for b in program.blocks:
        if b.type != "output":
            continue
        for name, expr in b.attributes.items():
            for e in iter_exprs(expr):
                if isinstance(e, RefExpr) and e.parts[0] != "var" and tuple(e.parts[:2]) not in declared:
                    out.append(Counterexample("schema", "dangling_reference", b.address, name,
                                              f"output references undeclared {e.render()}",
                                              {"target": e.render()}, b.address))
    return out


def validate_schema(program: HclProgram, registry, specs: ConstraintSet | None = None
                    ) -> tuple[bool, list[Counterexample]]:
    plan, issues = lift_lenient(program, registry, specs)
    kinds = {n.id: n.kind for n in plan.nodes}
    for b in program.resources():
        kinds.setdefault(b.labels[1], b.labels[0])
    ces = [_ce_from_schema(i, kinds) for i in issues]
    try:
        ces += [_ce_from_schema(c, kinds) for c in validate_types(plan, registry)]
    except UnknownKind as exc:  # lenient lift already drops unknown kinds
        ces.append(Counterexample("schema", "unknown_kind", "", "", str(exc)))
    ces += _output_checks(program)
    ces = sort_ces(ces)
    return not ces, ces
