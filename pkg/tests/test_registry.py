import json
from dataclasses import replace

import pytest

from iacforge.errors import RegionUnavailable, RegistryError, UnknownKind, VersionConflict
from iacforge.iir import ConstraintSet, Plan, Ref, ResourceNode, implied_depends, normalize_plan
from iacforge.registry import harmonize, load_registry, registry_from_json

from conftest import FIXTURES


def test_fixture_registry_has_seven_kinds():
    reg = load_registry(FIXTURES / "registry.json")
    raw = json.loads((FIXTURES / "registry.json").read_text())
    assert len(reg) == len(raw["kinds"]) == 7
    assert sorted(k for _, k in reg.kinds) == sorted(
        ["vpc", "subnet", "ec2", "rds", "s3_bucket", "security_group", "iam_role"])


def test_empty_registry(tmp_path):
    p = tmp_path / "r.json"
    p.write_text('{"kinds": []}')
    assert len(load_registry(p)) == 0


def test_duplicate_kind_rejected():
    entry = {"provider": "aws", "kind": "ec2", "regions": ["us-east-1"], "fields": []}
    with pytest.raises(RegistryError, match="duplicate"):
        registry_from_json({"kinds": [entry, entry]})


@pytest.mark.parametrize("text", ["not json", "[1, 2]"])
def test_bad_registry_file(tmp_path, text):
    p = tmp_path / "r.json"
    p.write_text(text)
    with pytest.raises(RegistryError):
        load_registry(p)


@pytest.mark.parametrize("decl", [
    {"name": "x", "type": "string", "required": True, "default": "a"},
    {"name": "x", "type": "string", "allowed": []},
    {"name": "x", "type": "quaternion"},
])
def test_bad_field_declarations(decl):
    with pytest.raises(RegistryError):
        registry_from_json({"kinds": [{"provider": "aws", "kind": "k", "regions": ["r"], "fields": [decl]}]})


def test_digest_is_content_addressed():
    data = json.loads((FIXTURES / "registry.json").read_text())
    a, b = registry_from_json(data), registry_from_json(json.loads(json.dumps(data)))
    assert a.digest == b.digest
    data["kinds"][0]["fields"][0]["name"] = "cidr"
    assert registry_from_json(data).digest != a.digest


def _rds(**fields):
    base = {"engine": "postgres", "instance_class": "db.t3.micro"}
    return ResourceNode("db", "rds", "aws", "eu-west-1", dict(base, **fields))


def test_harmonize_fills_storage_default(registry):
    out = harmonize(Plan((_rds(),), (), ConstraintSet()), registry)
    node = out.node("db")
    assert node.fields["storage_gb"] == 20
    assert node.meta["provider_version"] == registry.get("aws", "rds").version


def test_harmonize_fixpoint(registry):
    once = harmonize(Plan((_rds(),), (), ConstraintSet()), registry)
    twice = harmonize(once, registry)
    assert normalize_plan(once, registry) == normalize_plan(twice, registry)


def test_harmonize_region_unavailable(registry):
    node = ResourceNode("web", "ec2", "aws", "eu-central-1", {})
    with pytest.raises(RegionUnavailable):
        harmonize(Plan((node,), (), ConstraintSet()), registry)


def test_harmonize_unknown_kind(registry):
    with pytest.raises(UnknownKind):
        harmonize(Plan((ResourceNode("x", "lambda", "aws", "eu-west-1", {}),), (), ConstraintSet()), registry)


def test_harmonize_version_conflict(registry):
    node = replace(_rds(), meta={"provider_version": "0.0.1"})
    with pytest.raises(VersionConflict):
        harmonize(Plan((node,), (), ConstraintSet()), registry)


def test_harmonize_adds_reference_edges(registry):
    vpc = ResourceNode("main", "vpc", "aws", "eu-west-1", {"cidr_block": "10.0.0.0/16"})
    sub = ResourceNode("a", "subnet", "aws", "eu-west-1", {"vpc_id": Ref("main"), "cidr_block": "10.0.1.0/24"})
    plan = Plan((vpc, sub), (), ConstraintSet())
    out = harmonize(plan, registry)
    assert set(out.edges) == implied_depends(plan)
    assert len(out.edges) == 1


def test_compatible_versions(registry):
    assert registry.is_compatible(registry.registry_version)
    assert registry.is_compatible("2024.03-fixture")
    assert not registry.is_compatible("1999.01")
