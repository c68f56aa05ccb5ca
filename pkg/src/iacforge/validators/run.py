"""Run the validator family with gating and merge the results."""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from ..hcl.ast import HclProgram
from ..hcl.lift import lift_lenient
from ..iir import ConstraintSet
from .cost import PriceCatalog, cost_of_plan
from .policy import RuleSet, eval_plan
from .report import ValidatorReport, sort_ces
from .sandbox import deploy_test
from .schema import validate_schema


@dataclass
class Toolchain:
    """The configured validator inputs."""

    registry: object
    rules: RuleSet
    catalog: PriceCatalog
    sandbox: object

    def digests(self) -> dict:
        return {
            "registry": f"{self.registry.registry_version}:{self.registry.digest}",
            "rules": f"{self.rules.version}:{self.rules.digest}",
            "catalog": f"{self.catalog.version}:{self.catalog.digest}",
        }


def run_all(program: HclProgram, registry, rules: RuleSet, catalog: PriceCatalog, sandbox,
            constraints: ConstraintSet) -> ValidatorReport:
    """Schema first; policy, cost and deploy only on schema-valid programs; deploy only after policy."""
    ok_schema, ces = validate_schema(program, registry, constraints)
    logs = {"schema": [c.to_json() for c in ces]}
    if not ok_schema:
        return ValidatorReport(False, False, Decimal(0), False, ces, gated=("policy", "cost", "deploy"), logs=logs)
    plan, _ = lift_lenient(program, registry, constraints)
    ok_policy, traces, pces = eval_plan(plan, rules, constraints, registry)
    total, sheet, cces = cost_of_plan(plan, catalog, constraints)
    gated: tuple = ()
    ok_deploy, dces = False, []
    if ok_policy:
        ok_deploy, dces, logs["deploy"] = deploy_test(program, sandbox)
    else:
        gated = ("deploy",)
    return ValidatorReport(ok_schema, ok_policy, total, ok_deploy, sort_ces(pces + cces + dces),
                           traces, sheet, gated, logs)
