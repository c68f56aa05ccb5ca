import copy
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from iacforge.errors import MissingSku, SandboxUnavailable
from iacforge.hcl import parse, print_program
from iacforge.iir import ConstraintSet, Effect, Plan, Ref, ResourceNode
from iacforge.registry import data_path, default_registry
from iacforge.repair import recompile
from iacforge.validators import (
    ExternalToolSandbox, StubSandbox, deploy_test, estimate_cost, eval_policies, run_all, validate_schema,
)
from iacforge.validators import default_catalog, default_rules
from iacforge.validators.policy import rules_from_json
from oracles import cost_oracle, load_json, policy_oracle
from plans import policy_plan, random_plan

R = "eu-west-1"
PROVIDER = 'provider "aws" {\n  alias = "euw1"\n  region = "eu-west-1"\n}\n'
NET = ('resource "vpc" "main" {\n  provider = aws.euw1\n  cidr_block = "10.0.0.0/16"\n}\n'
       'resource "subnet" "a" {\n  provider = aws.euw1\n  vpc_id = vpc.main.id\n  cidr_block = "10.0.1.0/24"\n}\n')


def ec2(name="web", itype="t3.small", extra=""):
    return (f'resource "ec2" "{name}" {{\n  provider = aws.euw1\n  ami = "ami-1"\n'
            f'  instance_type = "{itype}"\n  subnet_id = subnet.a.id\n{extra}}}\n')


def program(*blocks):
    return parse(PROVIDER + NET + "".join(blocks))


def web_plan():
    return Plan((
        ResourceNode("main", "vpc", "aws", R, {"cidr_block": "10.0.0.0/16"}),
        ResourceNode("a", "subnet", "aws", R, {"vpc_id": Ref("main"), "cidr_block": "10.0.1.0/24"}),
        ResourceNode("web", "ec2", "aws", R, {"ami": "ami-1", "instance_type": "t3.micro", "subnet_id": Ref("a")}),
        ResourceNode("db", "rds", "aws", R, {"engine": "postgres", "instance_class": "db.t3.micro",
                                             "storage_encrypted": True}, {Effect.ENCRYPT_AT_REST}),
    ), (), ConstraintSet())


# -- schema -------------------------------------------------------------------

def test_compiled_program_is_schema_valid(registry):
    assert validate_schema(recompile(web_plan(), registry), registry) == (True, [])


def test_schema_missing_ami(registry):
    prog = program(ec2().replace('  ami = "ami-1"\n', ""))
    ok, ces = validate_schema(prog, registry)
    assert not ok
    assert [(c.cls, c.code, c.node, c.field) for c in ces] == [("schema", "missing_required", "web", "ami")]
    assert ces[0].address == "ec2.web"


def test_schema_dangling_reference(registry):
    prog = program(ec2().replace("subnet.a.id", "subnet.ghost.id"))
    ok, ces = validate_schema(prog, registry)
    assert not ok and ces[0].code == "dangling_reference" and ces[0].field == "subnet_id"


def test_schema_is_pure(registry):
    prog = program(ec2())
    before = copy.deepcopy(prog)
    validate_schema(prog, registry)
    assert prog == before


# -- policy -------------------------------------------------------------------

def test_s3_encryption_passes_citing_rule(registry, rules):
    prog = parse(PROVIDER + 'resource "s3_bucket" "logs" {\n  provider = aws.euw1\n  bucket = "logs"\n'
                 '  encryption = "aes256"\n  effects = ["encrypt_at_rest"]\n}\n')
    ok, traces, ces = eval_policies(prog, rules, ConstraintSet(), registry)
    assert ok and ces == []
    assert ("encrypt-at-rest-s3", "s3_bucket.logs", "pass") in {(t.rule, t.locus, t.verdict) for t in traces}


def test_open_admin_port_fails_with_witness(registry, rules):
    sg = ('resource "security_group" "sg" {\n  provider = aws.euw1\n  vpc_id = vpc.main.id\n'
          '  ingress {\n    protocol = "tcp"\n    from_port = 22\n    to_port = 22\n'
          '    cidr_blocks = ["0.0.0.0/0"]\n  }\n}\n')
    ok, traces, ces = eval_policies(program(sg), rules, ConstraintSet(), registry)
    assert not ok
    ce, = ces
    assert (ce.cls, ce.code, ce.node) == ("policy", "restricted_ingress", "sg")
    assert ce.witness["cidr"] == "0.0.0.0/0" and ce.witness["port"] == 22
    assert ce.witness["rule"] == "restricted-ingress"


def test_empty_rule_set(registry):
    empty = rules_from_json({"rule_set_version": "0", "rules": []})
    assert eval_policies(program(ec2()), empty, ConstraintSet(), registry) == (True, [], [])


def test_required_effect_and_residency(registry, rules):
    cons = ConstraintSet(residency=frozenset({"us-east-1"}), required_effects=frozenset({Effect.TAGGED}))
    ok, traces, ces = eval_policies(program(ec2()), rules, cons, registry)
    assert not ok
    codes = {(c.code, c.node) for c in ces}
    assert ("residency", "web") in codes and ("effect_missing", "web") in codes
    assert len([t for t in traces if t.rule == "required-effect:tagged"]) == 3


# -- cost ---------------------------------------------------------------------

def test_cost_empty_program(catalog, registry):
    assert estimate_cost(parse(""), catalog, ConstraintSet(), registry) == (Decimal(0), [], [])


def test_cost_single_instance(catalog, registry):
    total, items, ces = estimate_cost(program(ec2()), catalog, ConstraintSet(budget_ceiling=Decimal(10)), registry)
    assert total == Decimal("7.50") and len(items) == 1 and ces == []


def test_cost_two_instances_over_budget(catalog, registry):
    prog = program(ec2("web"), ec2("web2"))
    total, items, ces = estimate_cost(prog, catalog, ConstraintSet(budget_ceiling=Decimal(10)), registry)
    assert total == Decimal("15.00") and len(items) == 2
    ce, = ces
    assert ce.cls == "cost" and ce.witness["overrun"] == Decimal("5.00")


def test_cost_missing_sku(catalog, registry):
    prog = parse(PROVIDER.replace("eu-west-1", "ap-south-9") + NET + ec2())
    with pytest.raises(MissingSku):
        estimate_cost(prog, catalog, ConstraintSet(), registry)


# -- deploy -------------------------------------------------------------------

def test_stub_empty_manifest_passes():
    ok, ces, log = deploy_test(program(ec2()), StubSandbox([]))
    assert ok and ces == [] and "result: ok" in log


def test_stub_manifest_flags_sku():
    box = StubSandbox([{"match": {"kind": "ec2", "field": "instance_type", "value": "t3.mega"},
                        "code": "unsupported_sku", "message": "t3.mega is not offered"}])
    assert deploy_test(program(ec2()), box)[0]
    ok, ces, _ = deploy_test(program(ec2(itype="t3.mega")), box)
    assert not ok
    assert [(c.cls, c.code, c.node, c.field) for c in ces] == [("run", "unsupported_sku", "web", "instance_type")]


def test_external_sandbox_unconfigured(monkeypatch):
    monkeypatch.delenv("IACFORGE_TF_BIN", raising=False)
    with pytest.raises(SandboxUnavailable):
        deploy_test(program(ec2()), ExternalToolSandbox())


def test_external_sandbox_reads_diagnostics(tmp_path):
    fake = tmp_path / "fake-tf"
    fake.write_text('#!/bin/sh\nif [ "$1" = plan ]; then\n'
                    'echo "Error: Missing required argument" >&2\necho "  with ec2.web," >&2\nexit 1\nfi\n')
    fake.chmod(0o755)
    ok, ces, _ = deploy_test(program(ec2()), ExternalToolSandbox(str(fake)))
    assert not ok and [(c.code, c.node) for c in ces] == [("missing_required", "web")]


# -- run_all --------------------------------------------------------------------

def test_schema_failure_gates_the_rest(registry, rules, catalog, sandbox):
    prog = program(ec2().replace('  ami = "ami-1"\n', ""))
    rep = run_all(prog, registry, rules, catalog, sandbox, ConstraintSet())
    assert not rep.v_schema and rep.gated == ("policy", "cost", "deploy")
    assert rep.classes() == {"schema"}


def test_policy_and_cost_failures_reported_together(registry, rules, catalog, sandbox):
    sg = ('resource "security_group" "sg" {\n  provider = aws.euw1\n  vpc_id = vpc.main.id\n'
          '  ingress {\n    protocol = "tcp"\n    from_port = 0\n    to_port = 65535\n'
          '    cidr_blocks = ["0.0.0.0/0"]\n  }\n}\n')
    rep = run_all(program(ec2(), ec2("web2"), sg), registry, rules, catalog, sandbox,
                  ConstraintSet(budget_ceiling=Decimal(10)))
    assert rep.v_schema and not rep.v_policy and not rep.v_deploy
    assert rep.gated == ("deploy",)
    assert [c.cls for c in rep.counterexamples] == ["policy", "cost"]
    assert rep.v_cost == Decimal("15.00")


def test_run_all_clean_and_deterministic(registry, rules, catalog, sandbox):
    prog = recompile(web_plan(), registry)
    a = run_all(prog, registry, rules, catalog, sandbox, ConstraintSet())
    b = run_all(parse(print_program(prog)), registry, rules, catalog, sandbox, ConstraintSet())
    assert a.v_schema and a.v_policy and a.v_deploy and a.counterexamples == []
    assert a.to_json() == b.to_json()



# -- oracles --------------------------------------------------------------------

@given(st.randoms(use_true_random=False))
def test_policy_matches_raw_ast_oracle(rng):
    reg, rules = default_registry(), default_rules()
    plan, cons = policy_plan(rng, reg)
    prog = recompile(plan, reg)
    ok, traces, ces = eval_policies(prog, rules, cons, reg)
    want = policy_oracle(prog, load_json(data_path("rules.json")), load_json(data_path("registry.json")),
                         cons.residency, sorted(e.value for e in cons.required_effects))
    assert {(t.rule, t.locus, t.verdict) for t in traces} == want
    assert ok == all(v == "pass" for _, _, v in want)
    assert {(c.node, c.witness["rule"]) for c in ces} == {(a.split(".", 1)[1], r) for r, a, v in want if v == "fail"}


@given(st.randoms(use_true_random=False))
def test_cost_matches_oracle(rng):
    reg, cat = default_registry(), default_catalog()
    plan = random_plan(rng, reg, max_nodes=6)
    prog = recompile(plan, reg)
    total, items, _ = estimate_cost(prog, cat, ConstraintSet(), reg)
    assert total == cost_oracle(prog, load_json(data_path("catalog.json")), load_json(data_path("registry.json")))
    assert total == sum((i.amount for i in items), Decimal(0))
