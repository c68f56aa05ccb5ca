"""Random typed-plan generators over the fixture registry (shared by tests)."""
from __future__ import annotations

import random
import string

from hypothesis import strategies as st

from iacforge.iir import PROTOCOLS, ConstraintSet, Connects, Depends, Effect, Plan, Ref, ResourceNode

# generation order guarantees every reference has an earlier target of the right kind
KIND_ORDER = ("vpc", "subnet", "ec2", "rds", "s3_bucket", "security_group", "iam_role")
ROOT_KINDS = {"subnet": "vpc", "ec2": "subnet", "security_group": "vpc"}
STRING_ALPHABET = string.ascii_letters + string.digits + "-_./: \"\\${}"


def _string(rng: random.Random) -> str:
    return "".join(rng.choice(STRING_ALPHABET) for _ in range(rng.randint(1, 10)))


def _value(rng: random.Random, decl, pool: dict) -> object:
    if decl.allowed is not None:
        return rng.choice(decl.allowed)
    t = decl.type
    if t == "string":
        return _string(rng)
    if t == "int":
        return rng.randint(0, 100000)
    if t == "bool":
        return rng.random() < 0.5
    if t == "list":
        return [_string(rng) for _ in range(rng.randint(0, 3))]
    if t == "map":
        return {f"k{rng.randint(0, 99)}": _string(rng) for _ in range(rng.randint(0, 3))}
    if t == "reference":
        return Ref(rng.choice(pool[decl.ref_kind]))
    if t == "blocks":
        # an empty block list has no HCL spelling distinct from an absent field
        return [{d.name: _value(rng, d, pool) for d in decl.block_fields} for _ in range(rng.randint(1, 2))]
    raise AssertionError(t)


def random_plan(rng: random.Random, registry, max_nodes: int = 8, holes: bool = False) -> Plan:
    """A well-typed, acyclic plan. With ``holes`` some required scalar fields are left unset."""
    n = rng.randint(1, max_nodes)
    kinds = sorted((rng.choice(KIND_ORDER) for _ in range(n)), key=KIND_ORDER.index)
    # add missing reference roots so every required reference can resolve
    needed = set()
    for k in kinds:
        while k in ROOT_KINDS:
            k = ROOT_KINDS[k]
            needed.add(k)
    kinds = sorted(kinds + sorted(needed - set(kinds)), key=KIND_ORDER.index)

    pool: dict[str, list[str]] = {}
    nodes = []
    for i, kind in enumerate(kinds):
        schema = registry.kinds_for(kind)[0]
        nid = f"{kind[:3]}_{i}" if rng.random() < 0.8 else f"n{rng.randint(0, 999)}_{i}"
        fields = {}
        for decl in schema.fields:
            if decl.type == "reference" and not pool.get(decl.ref_kind):
                continue
            if decl.required:
                if holes and decl.type != "reference" and rng.random() < 0.3:
                    continue
                fields[decl.name] = _value(rng, decl, pool)
            elif rng.random() < 0.5:
                fields[decl.name] = _value(rng, decl, pool)
        effects = frozenset(e for e in Effect if rng.random() < 0.15)
        region = rng.choice(sorted(schema.regions_available))
        nodes.append(ResourceNode(nid, kind, schema.provider, region, fields, effects))
        pool.setdefault(kind, []).append(nid)

    ids = [nd.id for nd in nodes]
    edges = set()
    for j in range(1, len(ids)):
        for i in range(j):
            r = rng.random()
            if r < 0.1:
                edges.add(Depends(ids[j], ids[i]))
            elif r < 0.15:
                edges.add(Connects(ids[i], ids[j], rng.choice(PROTOCOLS), rng.randint(0, 65535)))
    return Plan(tuple(nodes), tuple(sorted(edges, key=lambda e: e.key())), ConstraintSet())


def plans(registry, max_nodes: int = 8, holes: bool = False):
    """Hypothesis strategy over :func:`random_plan`."""
    return st.randoms(use_true_random=False).map(lambda rng: random_plan(rng, registry, max_nodes, holes))


ADMIN_PORTS = (22, 3389)
CIDRS = (["0.0.0.0/0"], ["10.0.0.0/8"], ["10.0.0.0/8", "0.0.0.0/0"])
REGIONS = ("eu-central-1", "eu-west-1", "us-east-1", "us-west-2")


def _ingress(rng: random.Random) -> dict:
    port = rng.choice(ADMIN_PORTS + (80, 443))
    lo = port - rng.choice((0, 0, 1, 20))
    hi = port + rng.choice((0, 0, 1, 20))
    if rng.random() < 0.2:
        lo, hi = hi + 1, hi + 30     # a range that misses the port
    return {"protocol": "tcp", "from_port": max(lo, 0), "to_port": hi, "cidr_blocks": list(rng.choice(CIDRS))}


def policy_plan(rng: random.Random, registry, max_nodes: int = 6) -> tuple[Plan, ConstraintSet]:
    """A plan whose fields and constraints are biased toward the fixture rules' triggers."""
    from dataclasses import replace

    plan = random_plan(rng, registry, max_nodes)
    nodes = []
    for n in plan.nodes:
        f = dict(n.fields)
        r = rng.random()
        if r < 0.3:
            f["tags"] = {"owner": rng.choice(["ops", ""])}
        elif r < 0.5:
            f["tags"] = {"team": "x"}
        elif r < 0.7:
            f.pop("tags", None)
        if n.kind == "iam_role":
            f["policy_actions"] = rng.choice([["*"], ["s3:GetObject"], ["s3:GetObject", "*"], []])
        elif n.kind == "security_group":
            if rng.random() < 0.8:
                f["ingress"] = [_ingress(rng) for _ in range(rng.randint(1, 2))]
            else:
                f.pop("ingress", None)
        elif n.kind == "rds":
            for name in ("storage_encrypted", "multi_az"):
                if rng.random() < 0.3:
                    f.pop(name, None)
                else:
                    f[name] = rng.random() < 0.5
        elif n.kind == "s3_bucket":
            if rng.random() < 0.3:
                f.pop("encryption", None)
            else:
                f["encryption"] = rng.choice(["aes256", "aws:kms"])
        effects = frozenset(e for e in Effect if rng.random() < 0.4)
        nodes.append(replace(n, fields=f, effects=effects))
    residency = None
    if rng.random() < 0.6:
        residency = frozenset(rng.sample(REGIONS, rng.randint(1, 3)))
    required = frozenset(e for e in Effect if rng.random() < 0.25)
    cons = ConstraintSet(residency=residency, required_effects=required)
    return Plan(tuple(nodes), plan.edges, cons), cons
