"""Command-line interface.

Exit status: 0 on a success verdict, 1 on a task failure, 2 on a usage or
configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .canonical import dump_pretty, load_path
from .errors import ConfigError, HclSyntaxError, IacForgeError, UnsupportedIntent
from .evaluation import EvalConfig, TaskCase, run_eval
from .hcl import lift_lenient, parse, print_program
from .iir import ConstraintSet, plan_from_json
from .orchestrator import DEFAULT_BUDGET_K, RunConfig, run
from .registry import default_registry, load_registry
from .repair import apply_edit, candidate_edits, default_weights, routing_score
from .validators import ExternalToolSandbox, StubSandbox, run_all
from .validators.cost import default_catalog, load_catalog
from .validators.policy import default_rules, load_rules

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--registry", default=d, help="provider schema registry JSON")
    p.add_argument("--rules", default=d, help="policy rule set JSON")
    p.add_argument("--catalog", default=d, help="price catalog JSON")
    p.add_argument("--sandbox", choices=("stub", "external"), default=d if suppress else "stub")
    p.add_argument("--budget-k", type=int, default=d if suppress else DEFAULT_BUDGET_K)
    p.add_argument("--out-dir", default=d)
    p.add_argument("--seed", type=int, default=d if suppress else 0)
    p.add_argument("--jobs", type=int, default=d if suppress else 1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iacforge", description="Synthesize and verify Terraform-subset IaC.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        return p

    p = cmd("synth", "run the pipeline on an intent or task file")
    p.add_argument("task")
    p = cmd("validate", "validate a program and print the report")
    p.add_argument("program")
    p.add_argument("--constraints")
    p.add_argument("--sandbox-manifest")
    p = cmd("repair", "apply one repair round to a program")
    p.add_argument("program")
    p.add_argument("--plan")
    p.add_argument("--constraints")
    p.add_argument("--sandbox-manifest")
    p.add_argument("--output")
    p = cmd("bundle-verify", "verify an evidence bundle offline")
    p.add_argument("bundle")
    p.add_argument("program")
    p = cmd("eval", "run the evaluation harness over a corpus directory")
    p.add_argument("corpus")
    p.add_argument("--report")
    p.add_argument("--min-success", type=float, default=0.0)
    p = cmd("fmt", "print a program in canonical form")
    p.add_argument("program")
    p.add_argument("--write", action="store_true")
    p.add_argument("--check", action="store_true")
    cmd("registry-check", "load and summarize a registry")
    return parser


def _toolchain(args):
    registry = load_registry(args.registry) if args.registry else default_registry()
    rules = load_rules(args.rules) if args.rules else default_rules()
    catalog = load_catalog(args.catalog) if args.catalog else default_catalog()
    return registry, rules, catalog


def _sandbox(args, manifest=None):
    if args.sandbox == "external":
        sb = ExternalToolSandbox()
        sb._resolve()
        return sb
    return StubSandbox(manifest or [])


def _constraints(path) -> ConstraintSet:
    return ConstraintSet.from_json(load_path(path)) if path else ConstraintSet()


def _manifest(path) -> list:
    return StubSandbox.from_file(path).manifest if path else []


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _emit(obj) -> None:
    sys.stdout.write(dump_pretty(obj))


def cmd_synth(args) -> int:
    registry, rules, catalog = _toolchain(args)
    path = Path(args.task)
    data = load_path(path)
    if "id" not in data:
        data = dict(data, id=path.stem)
    task = TaskCase.from_json(data)
    out_dir = Path(args.out_dir) if args.out_dir else Path("runs") / task.id
    config = RunConfig(registry, rules, catalog, _sandbox(args, list(task.sandbox)), budget_k=args.budget_k,
                       run_dir=out_dir, faults=task.faults, seed=args.seed)
    outcome = run(task.intent, task.constraints, config)
    summary = {"task": task.id, "outcome": "success" if outcome.ok else "unsatisfied",
               "run_dir": str(out_dir), "iterations": outcome.iterations,
               "j_history": [str(j) for j in outcome.j_history]}
    if outcome.ok:
        summary["bundle"] = str(out_dir / "bundle")
        summary["manifest_digest"] = outcome.bundle.manifest_digest
    else:
        summary["reason"] = outcome.reason
        summary["counterexamples"] = [c.to_json() for c in outcome.counterexamples]
    _emit(summary)
    return EXIT_OK if outcome.ok else EXIT_FAIL


def _parse_or_report(text: str):
    try:
        return parse(text), None
    except HclSyntaxError as exc:
        return None, {"error": "syntax", "message": str(exc), "line": exc.line, "col": exc.col}


def cmd_validate(args) -> int:
    registry, rules, catalog = _toolchain(args)
    constraints = _constraints(args.constraints)
    program, err = _parse_or_report(_read(args.program))
    if program is None:
        _emit(err)
        return EXIT_FAIL
    report = run_all(program, registry, rules, catalog, _sandbox(args, _manifest(args.sandbox_manifest)),
                     constraints)
    j = routing_score(report, constraints, default_weights(constraints))
    _emit(dict(report.to_json(), J=j))
    return EXIT_OK if j == 0 else EXIT_FAIL


def cmd_repair(args) -> int:
    registry, rules, catalog = _toolchain(args)
    constraints = _constraints(args.constraints)
    program, err = _parse_or_report(_read(args.program))
    if program is None:
        _emit(err)
        return EXIT_FAIL
    sandbox = _sandbox(args, _manifest(args.sandbox_manifest))
    plan = plan_from_json(load_path(args.plan)) if args.plan else lift_lenient(program, registry, constraints)[0]
    weights = default_weights(constraints)
    report = run_all(program, registry, rules, catalog, sandbox, constraints)
    j_before = routing_score(report, constraints, weights)
    if j_before == 0:
        _emit({"J": j_before, "edit": None, "message": "program already passes every validator"})
        return EXIT_OK
    cands = candidate_edits(report.counterexamples, plan, program, registry, catalog)
    if not cands:
        _emit({"J": j_before, "edit": None, "counterexamples": [c.to_json() for c in report.counterexamples]})
        return EXIT_FAIL
    _, edit, ce = cands[0]
    _, new_program = apply_edit(plan, program, edit, registry)
    j_after = routing_score(run_all(new_program, registry, rules, catalog, sandbox, constraints), constraints, weights)
    text = print_program(new_program)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    _emit({"edit": edit.to_json(), "ce": ce.to_json(), "j_before": j_before, "j_after": j_after,
           "program": None if args.output else text})
    return EXIT_OK if j_after <= j_before else EXIT_FAIL


def cmd_bundle_verify(args) -> int:
    from .evidence import verify_bundle

    registry, rules, catalog = _toolchain(args)
    report = verify_bundle(args.bundle, args.program, registry, rules, catalog)
    _emit(report.to_json())
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_eval(args) -> int:
    registry, rules, catalog = _toolchain(args)
    config = EvalConfig(registry, rules, catalog, budget_k=args.budget_k, jobs=max(1, args.jobs), seed=args.seed,
                        out_dir=Path(args.out_dir) if args.out_dir else None)
    report = run_eval(args.corpus, config)
    payload = report.to_json()
    if args.report:
        Path(args.report).write_text(dump_pretty(payload), encoding="utf-8")
    _emit(payload)
    return EXIT_OK if report.success_pct >= args.min_success else EXIT_FAIL


def cmd_fmt(args) -> int:
    text = _read(args.program)
    program, err = _parse_or_report(text)
    if program is None:
        _emit(err)
        return EXIT_FAIL
    out = print_program(program)
    if args.check:
        return EXIT_OK if out == text else EXIT_FAIL
    if args.write:
        Path(args.program).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_registry_check(args) -> int:
    registry = load_registry(args.registry) if args.registry else default_registry()
    _emit({"registry_version": registry.registry_version, "digest": registry.digest,
           "compatible_versions": sorted(registry.compatible_versions),
           "kinds": [f"{p}/{k}@{s.version}" for (p, k), s in sorted(registry.kinds.items())]})
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "validate": cmd_validate, "repair": cmd_repair, "bundle-verify": cmd_bundle_verify,
    "eval": cmd_eval, "fmt": cmd_fmt, "registry-check": cmd_registry_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("iacforge: a subcommand is required")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, UnsupportedIntent) as exc:
        print(f"iacforge: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"iacforge: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IacForgeError as exc:
        print(f"iacforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
