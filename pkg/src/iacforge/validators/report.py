"""Counterexamples and the merged validator report."""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any

CE_CLASSES = ("schema", "run", "policy", "cost")
CLASS_PRIORITY = {c: i for i, c in enumerate(CE_CLASSES)}


@dataclass(frozen=True)
class Counterexample:
    cls: str
    code: str
    node: str = ""       # node id / resource name
    field: str = ""
    message: str = ""
    witness: Any = None
    address: str = ""    # HCL block address when known

    def __post_init__(self):
        if self.cls not in CLASS_PRIORITY:
            raise ValueError(f"unknown counterexample class {self.cls!r}")

    @property
    def locus(self) -> str:
        return f"{self.node}.{self.field}" if self.field else self.node

    def sort_key(self) -> tuple:
        return (CLASS_PRIORITY[self.cls], self.node, self.field, self.code, self.message)

    def to_json(self) -> dict:
        return {"class": self.cls, "code": self.code, "node": self.node, "field": self.field,
                "address": self.address, "message": self.message, "witness": self.witness}

    @classmethod
    def from_json(cls, data: dict) -> "Counterexample":
        return cls(data["class"], data["code"], data.get("node", ""), data.get("field", ""),
                   data.get("message", ""), data.get("witness"), data.get("address", ""))


def sort_ces(ces) -> list[Counterexample]:
    seen, out = set(), []
    for ce in sorted(ces, key=Counterexample.sort_key):
        rule = ce.witness.get("rule") if isinstance(ce.witness, dict) else None
        key = (ce.cls, ce.code, ce.node, ce.field, rule)
        if key not in seen:
            seen.add(key)
            out.append(ce)
    return out


@dataclass(frozen=True)
class PolicyTrace:
    rule: str
    locus: str
    verdict: str          # pass | fail
    justification: str

    def to_json(self) -> dict:
        return {"rule": self.rule, "locus": self.locus, "verdict": self.verdict,
                "justification": self.justification}


@dataclass(frozen=True)
class LineItem:
    node: str
    kind: str
    region: str
    sku: str
    unit_price: Decimal
    quantity: int = 1

    @property
    def amount(self) -> Decimal:
        return self.unit_price * self.quantity

    def to_json(self) -> dict:
        return {"node": self.node, "kind": self.kind, "region": self.region, "sku": self.sku,
                "unit_price": self.unit_price, "quantity": self.quantity, "amount": self.amount}


@dataclass
class ValidatorReport:
    v_schema: bool
    v_policy: bool
    v_cost: Decimal
    v_deploy: bool
    counterexamples: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    cost_sheet: list = field(default_factory=list)
    gated: tuple = ()          # validators that did not run this round
    logs: dict = field(default_factory=dict)

    def classes(self) -> set[str]:
        return {ce.cls for ce in self.counterexamples}

    def to_json(self) -> dict:
        return {
            "v_schema": self.v_schema, "v_policy": self.v_policy, "v_cost": self.v_cost,
            "v_deploy": self.v_deploy, "gated": list(self.gated),
            "counterexamples": [c.to_json() for c in self.counterexamples],
            "traces": [t.to_json() for t in self.traces],
            "cost_sheet": [i.to_json() for i in self.cost_sheet],
            "logs": self.logs,
        }
