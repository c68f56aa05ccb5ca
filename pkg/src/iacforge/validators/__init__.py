"""Validator family: schema, policy, cost and deploy."""
from .cost import PriceCatalog, default_catalog, estimate_cost, load_catalog
from .policy import PolicyRule, RuleSet, default_rules, eval_policies, load_rules
from .report import Counterexample, LineItem, PolicyTrace, ValidatorReport
from .run import Toolchain, run_all
from .sandbox import ExternalToolSandbox, StubSandbox, deploy_test
from .schema import validate_schema

__all__ = [
    "Counterexample", "ExternalToolSandbox", "LineItem", "PolicyRule", "PolicyTrace", "PriceCatalog",
    "RuleSet", "StubSandbox", "Toolchain", "ValidatorReport", "default_catalog", "default_rules",
    "deploy_test", "estimate_cost", "eval_policies", "load_catalog", "load_rules", "run_all",
    "validate_schema",
]
