import hashlib
import itertools
import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from iacforge.errors import MalformedPlan
from iacforge.iir import (
    ConstraintSet, Connects, Depends, Effect, Plan, Ref, ResourceNode, check_acyclic, normalize_plan,
    plan_digest, plan_equiv, plan_from_json, plan_to_json, rename_nodes, topological_order, validate_types,
)
from iacforge.registry import data_path, default_registry
from plans import random_plan

R = "eu-west-1"


def web_plan():
    nodes = (
        ResourceNode("main", "vpc", "aws", R, {"cidr_block": "10.0.0.0/16"}),
        ResourceNode("app", "subnet", "aws", R, {"vpc_id": Ref("main"), "cidr_block": "10.0.1.0/24"}),
        ResourceNode("web", "ec2", "aws", R, {"ami": "ami-1", "instance_type": "t3.micro",
                                              "subnet_id": Ref("app")}),
        ResourceNode("db", "rds", "aws", R, {"engine": "postgres", "instance_class": "db.t3.micro"},
                     {Effect.ENCRYPT_AT_REST}),
    )
    edges = (Depends("app", "main"), Depends("web", "app"), Connects("web", "db", "tcp", 5432))
    return Plan(nodes, edges, ConstraintSet())


def _json_digest(plan):
    # second serializer: stdlib json with sorted keys and compact separators
    text = json.dumps(plan_to_json(plan), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- acyclicity ---------------------------------------------------------------

def _bruteforce_acyclic(ids, edges):
    # acyclic iff some ordering puts every prerequisite before its dependent
    for order in itertools.permutations(ids):
        pos = {v: i for i, v in enumerate(order)}
        if all(pos[d] < pos[s] for s, d in edges):
            return True
    return False


def _nodes(n):
    return tuple(ResourceNode(f"n{i}", "vpc", "aws", R, {"cidr_block": "10.0.0.0/16"}) for i in range(n))


def test_acyclic_zero_edges():
    assert check_acyclic(Plan(_nodes(3), (), ConstraintSet()))


def test_self_dependency_is_malformed():
    with pytest.raises(MalformedPlan):
        check_acyclic(Plan(_nodes(1), (Depends("n0", "n0"),), ConstraintSet()))


def test_three_cycle_detected():
    edges = (Depends("n0", "n1"), Depends("n1", "n2"), Depends("n2", "n0"))
    assert not check_acyclic(Plan(_nodes(3), edges, ConstraintSet()))
    assert not _bruteforce_acyclic(["n0", "n1", "n2"], [(e.src, e.dst) for e in edges])


def test_connects_edges_do_not_count():
    edges = (Connects("n0", "n1", "tcp", 1), Connects("n1", "n0", "tcp", 1))
    assert check_acyclic(Plan(_nodes(2), edges, ConstraintSet()))


def test_acyclic_exhaustive_four_nodes():
    ids = [f"n{i}" for i in range(4)]
    pairs = [(a, b) for a in ids for b in ids if a != b]
    nodes = _nodes(4)
    for mask in range(1 << len(pairs)):
        es = [p for k, p in enumerate(pairs) if mask >> k & 1]
        plan = Plan(nodes, tuple(Depends(s, d) for s, d in es), ConstraintSet())
        assert check_acyclic(plan) == _bruteforce_acyclic(ids, es), es


@given(st.randoms(use_true_random=False))
def test_topological_order_respects_edges(rng):
    n = rng.randint(1, 7)
    ids = [f"n{i}" for i in range(n)]
    edges = {Depends(ids[j], ids[i]) for j in range(n) for i in range(j) if rng.random() < 0.3}
    order = topological_order(Plan(_nodes(n), tuple(edges), ConstraintSet()))
    pos = {v: i for i, v in enumerate(order)}
    assert sorted(order) == sorted(ids)
    assert all(pos[e.dst] < pos[e.src] for e in edges)


# -- typing -------------------------------------------------------------------

def test_vpc_with_required_fields_types(registry):
    plan = Plan((ResourceNode("main", "vpc", "aws", R, {"cidr_block": "10.0.0.0/16"}),), (), ConstraintSet())
    assert validate_types(plan, registry) == []


def test_missing_ami(registry):
    p = web_plan()
    web = p.node("web")
    p = p.with_node(replace(web, fields={k: v for k, v in web.fields.items() if k != "ami"}))
    ces = validate_types(p, registry)
    assert [(c.code, c.node, c.field) for c in ces] == [("missing_required", "web", "ami")]


def test_subnet_versus_subnet_id(registry):
    p = web_plan()
    web = p.node("web")
    fields = dict(web.fields)
    fields["subnet"] = fields.pop("subnet_id")
    ces = validate_types(p.with_node(replace(web, fields=fields)), registry)
    codes = {(c.code, c.field) for c in ces}
    assert ("unknown_field", "subnet") in codes
    assert ("missing_required", "subnet_id") in codes


def test_reference_to_wrong_kind(registry):
    p = web_plan()
    web = p.node("web")
    p = p.with_node(replace(web, fields=dict(web.fields, subnet_id=Ref("main"))))
    assert [c.code for c in validate_types(p, registry)] == ["reference_kind"]


@given(st.randoms(use_true_random=False))
def test_no_type_errors_means_required_present(rng):
    reg = default_registry()
    plan = random_plan(rng, reg, holes=True)
    # brute-force scan of the raw registry file
    raw = {(k["provider"], k["kind"]): k for k in json.loads(data_path("registry.json").read_text())["kinds"]}
    missing = [(n.id, f["name"]) for n in plan.nodes for f in raw[(n.provider, n.kind)]["fields"]
               if f["required"] and f["name"] not in n.fields]
    assert (not validate_types(plan, reg)) == (not missing)


# -- normalization, equivalence, digests ----------------------------------------

def test_normalize_idempotent_on_canonical(registry):
    n = normalize_plan(web_plan(), registry)
    assert normalize_plan(n, registry) == n


def test_normalize_order_invariant(registry):
    p = web_plan()
    shuffled = Plan(tuple(reversed(p.nodes)), tuple(reversed(p.edges)), p.specs)
    assert plan_to_json(normalize_plan(p, registry)) == plan_to_json(normalize_plan(shuffled, registry))


def test_normalize_inserts_defaults(registry):
    n = normalize_plan(web_plan(), registry)
    assert n.node("db").fields["storage_gb"] == 20
    assert n.node("web").fields["monitoring"] is False


@given(st.randoms(use_true_random=False))
def test_normalize_idempotent_generated(rng):
    reg = default_registry()
    p = random_plan(rng, reg)
    once = normalize_plan(p, reg)
    assert normalize_plan(once, reg) == once


def test_equiv_reflexive_and_renaming():
    p = web_plan()
    assert plan_equiv(p, p)
    q = rename_nodes(p, {"web": "srv"})
    assert q.node("srv")
    assert plan_equiv(p, q)


def test_equiv_discriminates_field_change():
    p = web_plan()
    web = p.node("web")
    q = p.with_node(replace(web, fields=dict(web.fields, ami="ami-2")))
    assert not plan_equiv(p, q)


def test_equiv_ignores_meta():
    p = web_plan()
    q = p.with_node(replace(p.node("web"), meta={"provider_version": "x"}))
    assert plan_equiv(p, q)


@given(st.randoms(use_true_random=False))
def test_equiv_is_an_equivalence(rng):
    reg = default_registry()
    p = random_plan(rng, reg, max_nodes=5)
    ids = [n.id for n in p.nodes]
    perm = ids[:]
    rng.shuffle(perm)
    q = rename_nodes(p, {a: f"x_{b}" for a, b in zip(ids, perm)})
    r = Plan(tuple(reversed(q.nodes)), q.edges, q.specs)
    assert plan_equiv(p, p, reg)
    assert plan_equiv(p, q, reg) and plan_equiv(q, p, reg)
    assert plan_equiv(q, r, reg) and plan_equiv(p, r, reg)


def test_digest_stable_and_order_free(registry):
    p = web_plan()
    assert plan_digest(p) == plan_digest(p)
    web = p.node("web")
    reordered = p.with_node(replace(web, fields=dict(reversed(list(web.fields.items())))))
    assert plan_digest(reordered) == plan_digest(p)


def test_digest_matches_oracle_and_flips():
    p = normalize_plan(web_plan())
    assert plan_digest(p).hexdigest == _json_digest(p)
    web = p.node("web")
    q = normalize_plan(p.with_node(replace(web, fields=dict(web.fields, ami="ami-2"))))
    assert plan_digest(q).hexdigest == _json_digest(q)
    assert plan_digest(q) != plan_digest(p)


def test_plan_json_roundtrip():
    p = web_plan()
    assert plan_from_json(json.loads(json.dumps(plan_to_json(p)))) == p


@pytest.mark.parametrize("bad", ["Web", "1x", "", "a-b"])
def test_bad_ids_rejected(bad):
    with pytest.raises(MalformedPlan):
        check_acyclic(Plan((ResourceNode(bad, "vpc", "aws", R, {}),), (), ConstraintSet()))


def test_duplicate_ids_rejected():
    with pytest.raises(MalformedPlan):
        check_acyclic(Plan(_nodes(1) * 2, (), ConstraintSet()))


def test_unknown_effect_rejected():
    with pytest.raises(ValueError):
        ResourceNode("a", "vpc", "aws", R, {}, {"telepathy"})


def test_constraint_set_guards():
    with pytest.raises((ValueError, MalformedPlan)):
        ConstraintSet(budget_ceiling=-1)
    with pytest.raises((ValueError, MalformedPlan)):
        ConstraintSet(residency=frozenset())


def test_random_plans_are_acyclic(registry):
    for seed in range(30):
        assert check_acyclic(random_plan(random.Random(seed), registry))
