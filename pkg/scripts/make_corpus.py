#!/usr/bin/env python3
"""Generate the seeded task corpora under fixtures/.

    python3 scripts/make_corpus.py [--seed 7] [--out fixtures]

Writes three directories:

* ``corpus/``      50 single-fault tasks; every fault maps to a known CE code
* ``zero_fault/``  3 fault-free tasks
* ``mixed/``       4 tasks, one carrying a fault no edit can repair

Each task gets a ``<id>.tf`` reference: the canonical program the pipeline
emits for the same intent with no fault injected.
"""
from __future__ import annotations

import argparse
import random
import shutil
from pathlib import Path

from iacforge.agents import IntentSpec
from iacforge.canonical import dump_pretty
from iacforge.hcl import print_program
from iacforge.iir import ConstraintSet
from iacforge.orchestrator import RunConfig, run
from iacforge.registry import default_registry
from iacforge.validators import StubSandbox
from iacforge.validators.cost import default_catalog
from iacforge.validators.policy import default_rules

REGIONS = ("eu-west-1", "us-east-1")

# (name, intent families it applies to, builder(rng, region) -> (structured extras, constraints, faults, sandbox))
def _drop(node, field):
    return lambda rng, region: ({}, {}, {"program": [{"op": "drop_attribute", "node": node, "field": field}]}, [])


def _rename(node, field, to):
    return lambda rng, region: ({}, {}, {"program": [{"op": "rename_attribute", "node": node, "field": field,
                                                      "to": to}]}, [])


def _set_attr(node, field, value):
    return lambda rng, region: ({}, {}, {"program": [{"op": "set_attribute", "node": node, "field": field,
                                                      "value": value}]}, [])


def _retarget(rng, region):
    return {}, {}, {"program": [{"op": "retarget_reference", "node": "web", "field": "subnet_id",
                                 "target": "vpc.main.id"}]}, []


def _bad_region(rng, region):
    # rds is not offered in us-west-2 by the fixture registry
    return {}, {}, {"plan": [{"op": "set_region", "node": "db", "region": "us-west-2"}]}, []


def _residency(rng, region):
    other = "eu-central-1" if region != "eu-central-1" else "eu-west-1"
    return {}, {"residency": [region]}, {"plan": [{"op": "set_region", "node": "main", "region": other}]}, []


def _open_port(rng, region):
    port = rng.choice([22, 3389])
    rule = {"protocol": "tcp", "from_port": port, "to_port": port, "cidr_blocks": ["0.0.0.0/0"]}
    return {}, {}, {"plan": [{"op": "add_ingress", "node": "web_sg", "rule": rule}]}, []


def _unencrypted_db(rng, region):
    return ({"encryption": True}, {}, {"program": [{"op": "set_attribute", "node": "db",
                                                    "field": "storage_encrypted", "value": False}]}, [])


def _unencrypted_bucket(rng, region):
    return ({"encryption": True}, {}, {"program": [{"op": "drop_attribute", "node": "assets",
                                                    "field": "encryption"}]}, [])


def _untagged(rng, region):
    return ({"tags": {"owner": rng.choice(["team-a", "team-b"])}}, {},
            {"program": [{"op": "set_attribute", "node": "web", "field": "tags", "value": {}}]}, [])


def _wildcard(rng, region):
    return {}, {}, {"program": [{"op": "set_attribute", "node": "app_role", "field": "policy_actions",
                                 "value": ["*"]}]}, []


def _single_az(rng, region):
    return ({"redundant": True}, {}, {"program": [{"op": "set_attribute", "node": "db", "field": "multi_az",
                                                   "value": False}]}, [])


def _over_budget(rng, region):
    return {}, {"budget_ceiling": 50}, {"program": [{"op": "set_attribute", "node": "db",
                                                     "field": "instance_class", "value": "db.m5.large"}]}, []


def _unsupported_sku(rng, region):
    entry = {"match": {"kind": "ec2", "field": "instance_type", "value": "t3.small"},
             "code": "unsupported_sku", "message": "instance type not offered in this account"}
    return {"web": {"instance_type": "t3.small"}}, {}, {}, [entry]


FAULTS = [
    ("missing_ami", ("web", "web_db", "three_tier"), _drop("web", "ami")),
    ("missing_cidr", ("network", "web", "web_db"), _drop("main", "cidr_block")),
    ("missing_engine", ("web_db", "three_tier"), _drop("db", "engine")),
    ("renamed_subnet_id", ("web", "web_db", "three_tier"), _rename("web", "subnet_id", "subnet")),
    ("renamed_instance_type", ("web", "web_db"), _rename("web", "instance_type", "instance_typ")),
    ("bad_instance_type", ("web", "web_db"), _set_attr("web", "instance_type", "t3.large")),
    ("bad_engine", ("web_db", "three_tier"), _set_attr("db", "engine", "oracle")),
    ("wrong_reference", ("web", "web_db", "three_tier"), _retarget),
    ("region_unavailable", ("web_db", "three_tier"), _bad_region),
    ("residency", ("network", "web", "web_db"), _residency),
    ("open_admin_port", ("web", "three_tier"), _open_port),
    ("unencrypted_db", ("web_db", "three_tier"), _unencrypted_db),
    ("unencrypted_bucket", ("storage", "three_tier"), _unencrypted_bucket),
    ("untagged", ("web", "web_db"), _untagged),
    ("wildcard_actions", ("three_tier", "data_lake"), _wildcard),
    ("single_az", ("web_db", "three_tier"), _single_az),
    ("over_budget", ("web_db",), _over_budget),
    ("unsupported_sku", ("web", "web_db"), _unsupported_sku),
]

# an attribute no schema declares and no edit can remove
UNMAPPABLE = {"program": [{"op": "set_attribute", "node": "web", "field": "zzz_extra", "value": "x"}]}


def _task(tid, family, region, extras=None, constraints=None, faults=None, sandbox=None, expected="success"):
    structured = dict({"family": family, "region": region}, **(extras or {}))
    return {"id": tid, "intent": {"structured": structured, "text": f"{family.replace('_', ' ')} in {region}"},
            "constraints": constraints or {}, "faults": faults or {"plan": [], "program": []},
            "sandbox": sandbox or [], "expected": expected}


def _reference(task: dict) -> str:
    """Canonical program for the task's intent with faults and sandbox findings removed."""
    reg = default_registry()
    cfg = RunConfig(reg, default_rules(), default_catalog(), StubSandbox([]), clock=lambda: 0.0)
    out = run(IntentSpec.from_json(task["intent"]), ConstraintSet.from_json(task["constraints"]), cfg)
    if not out.ok:
        raise SystemExit(f"{task['id']}: clean run failed: {out.reason}")
    return print_program(out.program)


def _write(directory: Path, tasks: list[dict], references: bool = True) -> None:
    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    for t in tasks:
        (directory / f"{t['id']}.json").write_text(dump_pretty(t), encoding="utf-8")
        if references:
            (directory / f"{t['id']}.tf").write_text(_reference(t), encoding="utf-8")


def single_fault_corpus(seed: int, n: int = 50) -> list[dict]:
    rng = random.Random(seed)
    tasks = []
    for i in range(n):
        # cycle through the catalogue so every fault class is covered, then randomize the rest
        name, families, build = FAULTS[i % len(FAULTS)] if i < len(FAULTS) else rng.choice(FAULTS)
        family = rng.choice(families)
        region = rng.choice(REGIONS)
        extras, cons, faults, sandbox = build(rng, region)
        tasks.append(_task(f"t{i:02d}_{name}", family, region, extras, cons,
                           {"plan": faults.get("plan", []), "program": faults.get("program", [])}, sandbox))
    return tasks


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "fixtures"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    _write(out / "corpus", single_fault_corpus(args.seed))
    zero = [_task("z0_web_db", "web_db", "eu-west-1", {"encryption": True}),
            _task("z1_three_tier", "three_tier", "us-east-1", {"tags": {"owner": "team-a"}}),
            _task("z2_storage", "storage", "eu-west-1", {"encryption": True})]
    _write(out / "zero_fault", zero)
    mixed = zero + [_task("u0_unmappable", "web_db", "eu-west-1", faults=UNMAPPABLE, expected="unsatisfied")]
    _write(out / "mixed", mixed, references=False)
    print(f"wrote corpora under {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
