"""Controller FSM, run loop and round-trip guard.

States follow the pipeline: plan, harmonize, compile, review, prove, price,
deploy, repair, done. ``review`` runs the whole validator family once;
``prove``, ``price`` and ``deploy`` then gate on the policy, cost and deploy
parts of that report. Any failure moves to ``repair``, which applies one
mapped edit and returns to ``compile`` (plan edits) or ``review`` (code edits).
The routing score J is re-evaluated after every edit and an edit that raises
it is reverted.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable

from .agents import IntentSpec, PlanInvariants, architect_plan, review_static
from .blackboard import Blackboard
from .canonical import digest_obj, dump_pretty
from .errors import (
    ContractViolation, CyclicPlan, DeadState, LocusNotFound, MalformedPlan, ProposerExhausted,
    RegionUnavailable, UnknownKind, VersionConflict,
)
from .faults import FaultSpec, apply_plan_faults, apply_program_faults
from .hcl import HclProgram, lift_lenient, parse, print_program
from .iir import ConstraintSet, Plan, plan_digest, plan_equiv, plan_to_json
from .memory import MotifStore, query_of, retrieve_motifs
from .registry import harmonize
from .repair import (
    MappingTable, RoutingWeights, apply_code_edit, apply_plan_edit, candidate_edits, default_mapping,
    default_weights, recompile, routing_score, sync_plan,
)
from .synthesis import DeterministicStub, compile_skeleton, decode_detailed
from .validators import ValidatorReport, run_all
from .validators.report import Counterexample, sort_ces

DEFAULT_BUDGET_K = 8


class OrchestratorState(str, enum.Enum):
    PLAN = "plan"
    HARMONIZE = "harmonize"
    COMPILE = "compile"
    REVIEW = "review"
    PROVE = "prove"
    PRICE = "price"
    DEPLOY = "deploy"
    REPAIR = "repair"
    DONE = "done"


S = OrchestratorState
TRANSITIONS: dict[OrchestratorState, frozenset] = {
    S.PLAN: frozenset({S.HARMONIZE}),
    S.HARMONIZE: frozenset({S.COMPILE, S.REPAIR}),
    S.COMPILE: frozenset({S.REVIEW, S.REPAIR}),
    S.REVIEW: frozenset({S.PROVE, S.REPAIR}),
    S.PROVE: frozenset({S.PRICE, S.REPAIR}),
    S.PRICE: frozenset({S.DEPLOY, S.REPAIR}),
    S.DEPLOY: frozenset({S.DONE, S.REPAIR}),
    S.REPAIR: frozenset({S.COMPILE, S.REVIEW, S.DONE}),
    S.DONE: frozenset(),
}


def transition_allowed(src: str, dst: str) -> bool:
    return S(dst) in TRANSITIONS[S(src)]


# -- outcomes -----------------------------------------------------------------

@dataclass
class Success:
    program: HclProgram
    bundle: Any
    plan: Plan
    report: ValidatorReport
    repair_path: list
    j_history: list
    run_digest: str
    blackboard: Blackboard = field(repr=False, default=None)

    ok = True

    @property
    def iterations(self) -> int:
        return len(self.repair_path)


@dataclass
class UnsatisfiedCore:
    counterexamples: list
    repair_path: list
    program: HclProgram | None
    reason: str
    j_history: list = field(default_factory=list)
    run_digest: str = ""
    blackboard: Blackboard = field(repr=False, default=None)

    ok = False

    @property
    def iterations(self) -> int:
        return len(self.repair_path)


RunOutcome = Success | UnsatisfiedCore


# -- configuration and controller state ---------------------------------------

@dataclass
class RunConfig:
    registry: Any
    rules: Any
    catalog: Any
    sandbox: Any
    mapping: MappingTable | None = None
    weights: RoutingWeights | None = None
    budget_k: int = DEFAULT_BUDGET_K
    proposer: Any = None
    architect: Callable | None = None
    memory: MotifStore | None = None
    run_dir: Path | None = None
    faults: FaultSpec = field(default_factory=FaultSpec)
    clock: Callable[[], float] = time.time
    seed: int = 0

    def toolchain_digests(self) -> dict:
        mapping = self.mapping or default_mapping()
        return {
            "registry": f"{self.registry.registry_version}:{self.registry.digest}",
            "rules": f"{self.rules.version}:{self.rules.digest}",
            "catalog": f"{self.catalog.version}:{self.catalog.digest}",
            "mapping": f"{mapping.version}:{mapping.digest}",
        }


@dataclass
class ControllerState:
    intent: IntentSpec
    constraints: ConstraintSet
    K: int = DEFAULT_BUDGET_K
    state: OrchestratorState = S.PLAN
    plan: Plan | None = None
    program: HclProgram | None = None
    report: ValidatorReport | None = None
    ces: list = field(default_factory=list)
    k: int = 0
    j: Decimal | None = None
    j_history: list = field(default_factory=list)
    repair_path: list = field(default_factory=list)    # committed edits
    attempts: list = field(default_factory=list)       # every attempt, including reverted ones
    tried: set = field(default_factory=set)
    pending: dict | None = None                        # edit awaiting its J verdict
    snapshot: tuple | None = None
    invariants: PlanInvariants | None = None
    faults_applied: bool = False
    outcome: Any = None

    @property
    def terminal(self) -> bool:
        return self.state is S.DONE


# -- round-trip guard ---------------------------------------------------------

def _fold_admissible(plan: Plan, lifted: Plan, registry) -> Plan:
    """Copy program-only attribute values into the plan when the schema admits them."""
    kinds = {n.id: n.kind for n in plan.nodes}
    other = lifted.by_id()
    nodes = []
    for n in plan.nodes:
        m = other.get(n.id)
        schema = registry.lookup(n.provider, n.kind)
        fields = dict(n.fields)
        if m is not None and m.kind == n.kind and schema is not None:
            decls = schema.field_map()
            for name, value in m.fields.items():
                decl = decls.get(name)
                if name not in fields and decl is not None and not decl.check(n.id, value, kinds):
                    fields[name] = value
        nodes.append(replace(n, fields=fields))
    return replace(plan, nodes=tuple(nodes))


def repair_roundtrip(plan: Plan, program: HclProgram, registry, proposer=None) -> tuple[Plan, HclProgram]:
    """Restore plan_equiv(plan, lift(program)) with the plan as the structural authority."""
    lifted, _ = lift_lenient(program, registry, plan.specs)
    if plan_equiv(plan, lifted, registry):
        return plan, program
    new_plan = _fold_admissible(plan, lifted, registry)
    new_program = recompile(new_plan, registry, proposer)
    again, _ = lift_lenient(new_program, registry, plan.specs)
    if not plan_equiv(new_plan, again, registry):
        raise ContractViolation("plan and program still diverge after recompilation")
    return new_plan, new_program


# -- helpers ------------------------------------------------------------------

def _normalize(program: HclProgram) -> tuple[HclProgram, str]:
    text = print_program(program)
    return parse(text), text


def _failure_report(ces: list[Counterexample]) -> ValidatorReport:
    """Report for a round that never produced a program (harmonize or compile failed)."""
    return ValidatorReport(False, False, Decimal(0), False, sort_ces(ces),
                           gated=("schema", "policy", "cost", "deploy"))


def _weights(config: RunConfig, constraints: ConstraintSet) -> RoutingWeights:
    return config.weights or default_weights(constraints)


def run_digest_of(intent: IntentSpec, constraints: ConstraintSet, config: RunConfig) -> str:
    return digest_obj({"intent": intent.to_json(), "constraints": constraints.to_json(),
                       "toolchain": config.toolchain_digests(), "faults": config.faults.to_json(),
                       "budget_k": config.budget_k, "seed": config.seed})


class Controller:
    """Executes one run; ``step`` advances the FSM by one state."""

    def __init__(self, config: RunConfig, blackboard: Blackboard):
        self.config = config
        self.bb = blackboard
        self.proposer = config.proposer or DeterministicStub()
        self.mapping = config.mapping or default_mapping()

    # recording

    def _record(self, cs: ControllerState, kind: str, payload: Any):
        return self.bb.append(cs.state.value, kind, payload)

    def _note(self, cs: ControllerState, text: str) -> None:
        self._record(cs, "note", {"text": text})

    def _goto(self, cs: ControllerState, dst: OrchestratorState) -> ControllerState:
        if dst not in TRANSITIONS[cs.state]:
            raise ContractViolation(f"illegal transition {cs.state.value} -> {dst.value}")
        self._record(cs, "transition", {"from": cs.state.value, "to": dst.value, "k": cs.k})
        cs.state = dst
        return cs

    def _write(self, name: str, text: str) -> None:
        if self.config.run_dir is not None:
            path = Path(self.config.run_dir) / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")

    def _stop(self, cs: ControllerState, reason: str) -> ControllerState:
        self._record(cs, "log", {"type": "unsatisfied", "reason": reason,
                                 "counterexamples": [c.to_json() for c in cs.ces]})
        cs.outcome = UnsatisfiedCore(list(cs.ces), list(cs.repair_path), cs.program, reason, list(cs.j_history))
        return self._goto(cs, S.DONE)

    # state contracts

    def step(self, cs: ControllerState) -> ControllerState:
        if cs.terminal:
            raise ContractViolation("step called on a terminal state")
        handler = {
            S.PLAN: self._plan, S.HARMONIZE: self._harmonize, S.COMPILE: self._compile, S.REVIEW: self._review,
            S.PROVE: self._prove, S.PRICE: self._price, S.DEPLOY: self._deploy, S.REPAIR: self._repair,
        }[cs.state]
        return handler(cs)

    def _retrieve(self, cs: ControllerState, kinds) -> list:
        if self.config.memory is None:
            return []
        motifs = retrieve_motifs(self.config.memory, query_of(kinds), self.config.registry)
        self._record(cs, "trace", {"type": "memory", "stage": cs.state.value, "motifs": [m.id for m in motifs]})
        return motifs

    def _plan(self, cs: ControllerState) -> ControllerState:
        self._record(cs, "intent", {"intent": cs.intent.to_json(), "constraints": cs.constraints.to_json()})
        architect = self.config.architect or architect_plan
        motifs = []
        if self.config.memory is not None and cs.intent.structured is not None:
            draft, _ = architect_plan(cs.intent, cs.constraints)
            motifs = self._retrieve(cs, [n.kind for n in draft.nodes])
        plan, invariants = architect(cs.intent, cs.constraints, motifs)
        if not isinstance(plan, Plan) or not isinstance(invariants, PlanInvariants):
            raise ContractViolation("architect returned a malformed artifact")
        notes = getattr(getattr(architect, "backend", None), "notes", [])
        for text in notes:
            self._note(cs, text)
        del notes[:]
        cs.invariants = invariants
        self._record(cs, "plan", {"stage": "architect", "plan": plan_to_json(plan),
                                  "invariants": invariants.to_json()})
        if self.config.faults.plan:
            plan = apply_plan_faults(plan, self.config.faults)
            self._record(cs, "note", {"text": "plan faults applied", "faults": list(self.config.faults.plan)})
        cs.plan = plan
        return self._goto(cs, S.HARMONIZE)

    def _harmonize_plan(self, cs: ControllerState) -> list[Counterexample]:
        try:
            cs.plan = harmonize(cs.plan, self.config.registry)
        except RegionUnavailable as exc:
            return [Counterexample("run", "region_unavailable", exc.node, "region", str(exc),
                                   {"kind": exc.kind, "region": exc.region}, f"{exc.kind}.{exc.node}")]
        except UnknownKind as exc:
            return [Counterexample("schema", "unknown_kind", "", "", str(exc))]
        except VersionConflict as exc:
            return [Counterexample("schema", "version_conflict", "", "", str(exc))]
        return []

    def _fail_round(self, cs: ControllerState, ces: list[Counterexample]) -> ControllerState:
        report = _failure_report(ces)
        self._record(cs, "report", {"report": report.to_json()})
        return self._score(cs, report)

    def _harmonize(self, cs: ControllerState) -> ControllerState:
        ces = self._harmonize_plan(cs)
        if ces:
            return self._fail_round(cs, ces)
        self._record(cs, "plan", {"stage": "harmonized", "plan": plan_to_json(cs.plan)})
        return self._goto(cs, S.COMPILE)

    def _compile(self, cs: ControllerState) -> ControllerState:
        registry = self.config.registry
        ces = self._harmonize_plan(cs)
        if ces:
            return self._fail_round(cs, ces)
        self._retrieve(cs, [n.kind for n in cs.plan.nodes])
        try:
            skeleton, _ = compile_skeleton(cs.plan, registry)
            result = decode_detailed(skeleton, self.proposer, registry)
        except CyclicPlan as exc:
            return self._fail_round(cs, [Counterexample("schema", "cyclic_plan", "", "", str(exc))])
        except (MalformedPlan, DeadState, ProposerExhausted) as exc:
            return self._fail_round(cs, [Counterexample("schema", "compile_failed", "", "", str(exc))])
        for text in result.notes:
            self._note(cs, text)
        for text in getattr(getattr(self.proposer, "backend", None), "notes", []):
            self._note(cs, text)
        program = result.program
        lifted, _ = lift_lenient(program, registry, cs.plan.specs)
        equivalent = plan_equiv(cs.plan, lifted, registry)
        repaired = False
        if not equivalent:
            try:
                cs.plan, program = repair_roundtrip(cs.plan, program, registry, self.proposer)
            except ContractViolation as exc:
                return self._fail_round(cs, [Counterexample("schema", "roundtrip_divergence", "", "", str(exc))])
            repaired = True
            lifted, _ = lift_lenient(program, registry, cs.plan.specs)
        self._record(cs, "trace", {
            "type": "roundtrip", "equivalent": equivalent, "repaired": repaired,
            "plan_digest": str(plan_digest(cs.plan, registry)), "lifted_digest": str(plan_digest(lifted, registry)),
        })
        if self.config.faults.program and not cs.faults_applied:
            program = apply_program_faults(program, self.config.faults)
            cs.faults_applied = True
            self._record(cs, "note", {"text": "program faults applied", "faults": list(self.config.faults.program)})
        cs.program, text = _normalize(program)
        if cs.faults_applied and self.config.faults.program:
            # keep exactly one plan/program pair: the plan follows the faulted program
            cs.plan = sync_plan(cs.program, registry, cs.plan)
        self._record(cs, "plan", {"stage": "compiled", "plan": plan_to_json(cs.plan)})
        self._record(cs, "program", {"text": text})
        self._write("candidate.tf", text)
        self._write(f"iterations/{cs.k:02d}/candidate.tf", text)
        return self._goto(cs, S.REVIEW)

    def _score(self, cs: ControllerState, report: ValidatorReport) -> ControllerState:
        """Revert-on-increase, then route on the (possibly restored) report."""
        j = routing_score(report, cs.constraints, _weights(self.config, cs.constraints))
        if cs.pending is not None:
            entry = dict(cs.pending, j_after=j)
            cs.pending = None
            if j > cs.j:
                entry["status"] = "reverted"
                cs.attempts.append(entry)
                self._record(cs, "edit", entry)
                cs.plan, cs.program, cs.report, cs.ces = cs.snapshot
                self._note(cs, f"reverted {entry['edit']['op']}: J rose from {cs.j} to {j}")
                return self._goto(cs, S.REPAIR)
            entry["status"] = "committed"
            cs.attempts.append(entry)
            cs.repair_path.append(entry)
            self._record(cs, "edit", entry)
        cs.j = j
        cs.j_history.append(j)
        cs.report, cs.ces = report, list(report.counterexamples)
        return self._goto(cs, S.PROVE if report.v_schema else S.REPAIR)

    def _review(self, cs: ControllerState) -> ControllerState:
        c = self.config
        report = run_all(cs.program, c.registry, c.rules, c.catalog, c.sandbox, cs.constraints)
        diags, _ = review_static(cs.program)
        report.logs["review"] = [d.to_json() for d in diags]
        j = routing_score(report, cs.constraints, _weights(c, cs.constraints))
        payload = {"report": report.to_json(), "J": j}
        self._record(cs, "report", payload)
        self._write("report.json", dump_pretty(payload))
        self._write(f"iterations/{cs.k:02d}/report.json", dump_pretty(payload))
        return self._score(cs, report)

    def _prove(self, cs: ControllerState) -> ControllerState:
        self._record(cs, "trace", {"type": "policy", "traces": [t.to_json() for t in cs.report.traces]})
        return self._goto(cs, S.PRICE if cs.report.v_policy else S.REPAIR)

    def _price(self, cs: ControllerState) -> ControllerState:
        report = cs.report
        total = sum((i.amount for i in report.cost_sheet), Decimal(0))
        self._record(cs, "log", {"type": "cost", "total": report.v_cost, "line_item_sum": total,
                                 "catalog_version": self.config.catalog.version,
                                 "currency": self.config.catalog.currency,
                                 "items": [i.to_json() for i in report.cost_sheet]})
        b = cs.constraints.budget_ceiling
        over = b is not None and report.v_cost > b
        return self._goto(cs, S.REPAIR if over else S.DEPLOY)

    def _deploy(self, cs: ControllerState) -> ControllerState:
        report = cs.report
        self._record(cs, "log", {"type": "deploy", "ok": report.v_deploy,
                                 "sandbox": type(self.config.sandbox).__name__,
                                 "log": report.logs.get("deploy", "")})
        if not report.v_deploy:
            return self._goto(cs, S.REPAIR)
        if cs.j != 0:
            raise ContractViolation(f"all validators passed but J = {cs.j}")
        from .evidence import build_bundle

        bundle = build_bundle(self.bb, cs.program, self.config.registry)
        if self.config.run_dir is not None:
            bundle.write(Path(self.config.run_dir) / "bundle")
        self._record(cs, "bundle", {"manifest_digest": bundle.manifest_digest})
        cs.outcome = Success(cs.program, bundle, cs.plan, cs.report, list(cs.repair_path), list(cs.j_history), "")
        return self._goto(cs, S.DONE)

    def _repair(self, cs: ControllerState) -> ControllerState:
        c = self.config
        while True:
            if cs.k >= cs.K:
                return self._stop(cs, "budget-exhausted")
            cands = [t for t in candidate_edits(cs.ces, cs.plan, cs.program, c.registry, c.catalog, self.mapping)
                     if t[1].describe() not in cs.tried]
            if not cands:
                return self._stop(cs, "no-applicable-edit")
            key, edit, ce = cands[0]
            cs.tried.add(edit.describe())
            cs.k += 1
            entry = {"k": cs.k, "edit": edit.to_json(), "ce": ce.to_json(), "j_before": cs.j}
            try:
                if edit.structural:
                    new_plan, new_program, dst = apply_plan_edit(cs.plan, edit), cs.program, S.COMPILE
                else:
                    patched, _ = _normalize(apply_code_edit(cs.program, edit))
                    new_plan, new_program, dst = sync_plan(patched, c.registry, cs.plan), patched, S.REVIEW
            except (LocusNotFound, MalformedPlan) as exc:
                entry.update(status="inapplicable", j_after=cs.j, error=str(exc))
                cs.attempts.append(entry)
                self._record(cs, "edit", entry)
                continue
            cs.snapshot = (cs.plan, cs.program, cs.report, list(cs.ces))
            cs.pending = entry
            cs.plan, cs.program = new_plan, new_program
            if dst is S.REVIEW:
                text = print_program(new_program)
                self._record(cs, "program", {"text": text})
                self._write("candidate.tf", text)
                self._write(f"iterations/{cs.k:02d}/candidate.tf", text)
            return self._goto(cs, dst)


def run(intent: IntentSpec, constraints: ConstraintSet, config: RunConfig) -> RunOutcome:
    """Drive the FSM to ``done``; task failures come back as UnsatisfiedCore values."""
    digest = run_digest_of(intent, constraints, config)
    bb_path = Path(config.run_dir) / "run.jsonl" if config.run_dir is not None else None
    bb = Blackboard(bb_path, config.toolchain_digests(), config.clock)
    ctl = Controller(config, bb)
    cs = ControllerState(intent, constraints, K=config.budget_k)
    # every repair visit consumes budget, so the loop is bounded by K plus a constant per visit
    limit = 16 * (config.budget_k + 1) + 16
    for _ in range(limit):
        if cs.terminal:
            break
        cs = ctl.step(cs)
    else:
        raise ContractViolation("run did not terminate within its step bound")
    outcome = cs.outcome
    outcome.run_digest = digest
    outcome.blackboard = bb
    return outcome
