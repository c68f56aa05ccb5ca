"""Cost estimator over a pinned price catalog."""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from ..canonical import digest_obj, load_path
from ..errors import ConfigError, MissingSku
from ..hcl.ast import HclProgram
from ..hcl.lift import lift_lenient
from ..iir import ConstraintSet, Plan
from .report import Counterexample, LineItem

TOP_ITEMS = 3


@dataclass(frozen=True)
class PriceCatalog:
    prices: dict = field(default_factory=dict)    # (provider, region, sku) -> Decimal per month
    sku_map: dict = field(default_factory=dict)   # kind -> {"field": name} | {"sku": fixed}
    version: str = "0"
    currency: str = "USD"
    digest: str = ""

    def price(self, provider: str, region: str, sku: str) -> Decimal | None:
        return self.prices.get((provider, region, sku))

    def sku_for(self, kind: str, fields: dict) -> str | None:
        rule = self.sku_map.get(kind)
        if rule is None:
            return None
        if "sku" in rule:
            return rule["sku"]
        value = fields.get(rule["field"])
        return value if isinstance(value, str) else None

    def sku_field(self, kind: str) -> str | None:
        return self.sku_map.get(kind, {}).get("field")

    def cheaper_options(self, provider: str, region: str, sku: str, candidates) -> list[tuple[Decimal, str]]:
        """Candidates priced strictly below ``sku``, most expensive first."""
        current = self.price(provider, region, sku)
        if current is None:
            return []
        out = []
        for c in candidates:
            p = self.price(provider, region, c)
            if p is not None and p < current:
                out.append((p, c))
        return sorted(out, key=lambda t: (-t[0], t[1]))


def catalog_from_json(data: dict) -> PriceCatalog:
    prices = {}
    for i, entry in enumerate(data.get("prices", [])):
        try:
            key = (entry["provider"], entry["region"], entry["sku"])
            price = Decimal(str(entry["price"]))
        except (KeyError, TypeError, ArithmeticError) as exc:
            raise ConfigError(f"catalog prices[{i}] is malformed: {exc}") from None
        if price < 0:
            raise ConfigError(f"catalog prices[{i}] is negative")
        if key in prices:
            raise ConfigError(f"catalog lists {key} twice")
        prices[key] = price
    return PriceCatalog(prices, dict(data.get("sku_map", {})), str(data.get("catalog_version", "0")),
                        data.get("currency", "USD"), digest_obj(data))


def load_catalog(path: str | Path) -> PriceCatalog:
    try:
        data = load_path(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load catalog {path}: {exc}") from None
    return catalog_from_json(data)


def default_catalog() -> PriceCatalog:
    from ..registry import data_path

    return load_catalog(data_path("catalog.json"))


def line_items(plan: Plan, catalog: PriceCatalog) -> list[LineItem]:
    items = []
    for n in sorted(plan.nodes, key=lambda n: n.id):
        if n.kind not in catalog.sku_map:
            continue
        sku = catalog.sku_for(n.kind, n.fields)
        price = catalog.price(n.provider, n.region, sku) if sku is not None else None
        if price is None:
            raise MissingSku(n.provider, n.region, str(sku), n.id)
        items.append(LineItem(n.id, n.kind, n.region, sku, price))
    return items


def cost_of_plan(plan: Plan, catalog: PriceCatalog, constraints: ConstraintSet
                 ) -> tuple[Decimal, list[LineItem], list[Counterexample]]:
    items = line_items(plan, catalog)
    total = sum((i.amount for i in items), Decimal(0))
    ceiling = constraints.budget_ceiling
    ces = []
    if ceiling is not None and total > ceiling:
        ranked = sorted(items, key=lambda i: (-i.amount, i.node))
        top = ranked[0]
        ces.append(Counterexample(
            "cost", "budget_exceeded", top.node, catalog.sku_field(top.kind) or "",
            f"estimate {total} exceeds budget {ceiling} by {total - ceiling}",
            {"estimate": total, "ceiling": ceiling, "overrun": total - ceiling,
             "top_items": [i.to_json() for i in ranked[:TOP_ITEMS]]},
            f"{top.kind}.{top.node}"))
    return total, items, ces


def estimate_cost(program: HclProgram, catalog: PriceCatalog, constraints: ConstraintSet, registry=None
                  ) -> tuple[Decimal, list[LineItem], list[Counterexample]]:
    """Sum of per-resource monthly line items; a cost CE when over the ceiling."""
    if registry is None:
        from ..registry import default_registry

        registry = default_registry()
    plan, _ = lift_lenient(program, registry, constraints)
    return cost_of_plan(plan, catalog, constraints)
