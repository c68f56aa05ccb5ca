#!/usr/bin/env python3
"""Run the evaluation harness over the fixture corpora and print one summary row each.

    python3 scripts/run_eval.py [--budget-k 8] [--jobs 4] [--out results]

With --out, each corpus report is written to <out>/<corpus>.json.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from iacforge.evaluation import EvalConfig, run_eval
from iacforge.registry import default_registry
from iacforge.validators import default_catalog, default_rules

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budget-k", type=int, default=8)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    config = EvalConfig(default_registry(), default_rules(), default_catalog(), budget_k=args.budget_k, jobs=args.jobs)
    print(f"{'corpus':<12}{'tasks':>6}{'success%':>10}{'<=3%':>8}{'BLEU':>8}  t histogram")
    for name in ("corpus", "zero_fault", "mixed"):
        rep = run_eval(ROOT / name, config)
        bleu = f"{rep.bleu:.2f}" if rep.bleu is not None else "-"
        print(f"{name:<12}{rep.m:>6}{rep.success_pct:>10}{rep.within(3):>8}{bleu:>8}  {rep.histogram()}")
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{name}.json").write_text(json.dumps(rep.to_json(), indent=2, default=str) + "\n")


if __name__ == "__main__":
    main()
