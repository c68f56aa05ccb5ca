"""Independent reference implementations used as test oracles.

Each oracle works from raw inputs (the parsed HCL tree, the JSON rule and
registry files) without going through the package's lifter, policy engine,
cost model or BLEU code.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from decimal import Decimal

from iacforge.hcl.ast import RefExpr

RESERVED = ("provider", "depends_on", "effects")


# -- policy -------------------------------------------------------------------

def _raw_defaults(registry_json: dict) -> dict:
    out = {}
    for k in registry_json["kinds"]:
        out[(k["provider"], k["kind"])] = {f["name"]: f["default"] for f in k["fields"] if "default" in f}
    return out


def _json_value(v):
    if isinstance(v, float):
        return Decimal(repr(v))
    return v


def _resources(program, registry_json: dict) -> list[dict]:
    aliases = {}
    for b in program.blocks:
        if b.type == "provider":
            aliases[(b.labels[0], b.attributes.get("alias"))] = b.attributes.get("region")
    defaults = _raw_defaults(registry_json)
    out = []
    for b in program.blocks:
        if b.type != "resource":
            continue
        kind, name = b.labels
        prov = b.attributes.get("provider")
        provider, alias = (prov.parts[0], prov.parts[1]) if isinstance(prov, RefExpr) else ("aws", None)
        fields = {k: v for k, v in b.attributes.items() if k not in RESERVED}
        for nested in b.blocks:
            if "source" not in nested.attributes:
                fields.setdefault(nested.type, []).append(dict(nested.attributes))
        for k, v in defaults.get((provider, kind), {}).items():
            fields.setdefault(k, _json_value(v))
        out.append({"address": f"{kind}.{name}", "kind": kind, "region": aliases.get((provider, alias)),
                    "fields": fields, "effects": set(b.attributes.get("effects", []))})
    return out


def _same(a, b) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, (int, Decimal)) and isinstance(b, (int, Decimal)):
        return type(a) is type(b) and a == b
    return type(a) is type(b) and a == b


def _holds(pred: dict, res: dict, residency) -> bool:
    (op, arg), = pred.items()
    f = res["fields"]
    if op == "all":
        return all(_holds(p, res, residency) for p in arg)
    if op == "any":
        return any(_holds(p, res, residency) for p in arg)
    if op == "not":
        return not _holds(arg, res, residency)
    if op == "field_equals":
        return arg["field"] in f and _same(f[arg["field"]], _json_value(arg["value"]))
    if op == "field_member_of":
        return arg["field"] in f and any(_same(f[arg["field"]], _json_value(v)) for v in arg["values"])
    if op == "field_present":
        return arg in f
    if op == "field_contains":
        have = f.get(arg["field"])
        return isinstance(have, list) and any(_same(x, _json_value(arg["value"])) for x in have)
    if op == "port_range":
        for entry in f.get("ingress") or []:
            if not isinstance(entry, dict) or arg["cidr"] not in (entry.get("cidr_blocks") or []):
                continue
            lo, hi = entry.get("from_port"), entry.get("to_port")
            if type(lo) is int and type(hi) is int and any(lo <= p <= hi for p in arg["ports"]):
                return True
        return False
    if op == "effect_present":
        return arg in res["effects"]
    if op == "tag_present":
        tags = f.get("tags")
        return isinstance(tags, dict) and isinstance(tags.get(arg), str) and tags[arg] != ""
    if op == "region_allowed":
        return residency is None or res["region"] in residency
    raise ValueError(op)


def policy_oracle(program, rules_json: dict, registry_json: dict, residency=None, required_effects=()):
    """Set of (rule id, address, verdict) for every applicable rule and resource."""
    out = set()
    resources = _resources(program, registry_json)
    for res in resources:
        for rule in rules_json["rules"]:
            kinds = rule.get("kinds", ["*"])
            if "*" not in kinds and res["kind"] not in kinds:
                continue
            if rule.get("when") is not None and not _holds(rule["when"], res, residency):
                continue
            ok = _holds(rule["assert"], res, residency)
            out.add((rule["id"], res["address"], "pass" if ok else "fail"))
    scope = rules_json.get("effect_scope", {})
    for effect in required_effects:
        kinds = scope.get(effect, [])
        for res in resources:
            if "*" in kinds or res["kind"] in kinds:
                out.add((f"required-effect:{effect}", res["address"],
                         "pass" if effect in res["effects"] else "fail"))
    return out


# -- cost ---------------------------------------------------------------------

def cost_oracle(program, catalog_json: dict, registry_json: dict) -> Decimal:
    prices = {(p["provider"], p["region"], p["sku"]): Decimal(str(p["price"])) for p in catalog_json["prices"]}
    total = Decimal(0)
    for res in _resources(program, registry_json):
        rule = catalog_json["sku_map"].get(res["kind"])
        if rule is None:
            continue
        sku = rule.get("sku") or res["fields"].get(rule.get("field"))
        total += prices[("aws", res["region"], sku)]
    return total


# -- BLEU ---------------------------------------------------------------------

def bleu_oracle(pairs, tokenize) -> float:
    """Corpus BLEU through nltk, rescaled to 0-100; zero n-gram matches give 0."""
    from nltk.translate.bleu_score import corpus_bleu

    refs, hyps = [], []
    for cand, ref in pairs:
        hyps.append(tokenize(cand))
        refs.append([tokenize(ref)])
    if not any(hyps):
        return 0.0
    # nltk warns and returns a tiny value for zero matches; the project defines it as 0
    for n in range(1, 5):
        matches = 0
        for h, (r,) in zip(hyps, refs):
            hc = Counter(tuple(h[i:i + n]) for i in range(len(h) - n + 1))
            rc = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
            matches += sum(min(c, rc[g]) for g, c in hc.items())
        if matches == 0:
            return 0.0
    return 100.0 * corpus_bleu(refs, hyps)


def bleu_formula(pairs, tokenize) -> float:
    """Straight transcription of the corpus BLEU formula."""
    clipped, total = [0] * 4, [0] * 4
    c_len = r_len = 0
    for cand, ref in pairs:
        c, r = tokenize(cand), tokenize(ref)
        c_len, r_len = c_len + len(c), r_len + len(r)
        for n in range(1, 5):
            cc = Counter(tuple(c[i:i + n]) for i in range(len(c) - n + 1))
            rc = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
            clipped[n - 1] += sum((cc & rc).values())
            total[n - 1] += max(len(c) - n + 1, 0)
    if c_len == 0 or 0 in clipped:
        return 0.0
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100.0 * bp * math.exp(sum(math.log(m / t) for m, t in zip(clipped, total)) / 4)


def load_json(path):
    return json.loads(open(path, encoding="utf-8").read())
