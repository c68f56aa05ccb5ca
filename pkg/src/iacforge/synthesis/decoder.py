"""Constrained decoder: walk the skeleton token stream and fill holes.

Proposals are whole values; each value is then emitted token by token
through the grammar automaton and the provider-field automaton, so a
proposal that slips past the value check still cannot produce an
inadmissible token.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from ..errors import DeadState, ProposerExhausted
from ..hcl.ast import HclProgram, Hole, RefExpr
from ..hcl.lexer import Token
from ..hcl.printer import _expr_tokens, program_tokens
from .automata import DecoderState, admissible_tokens, token_admitted
from .proposer import DeterministicStub, HoleRequest, stub_value
from .skeleton import SkeletonProgram

MAX_PROPOSALS = 3

Observer = Callable[[DecoderState, frozenset, Token], None]


@dataclass
class DecodeResult:
    program: HclProgram
    filled: dict = field(default_factory=dict)     # hole id -> value
    notes: list = field(default_factory=list)
    steps: int = 0


def hole_request(hole: Hole, state: DecoderState, registry) -> HoleRequest:
    body = state.prov.resource_body()
    kind = state.prov.declared.current[0] if state.prov.declared.current else ""
    schemas = registry.kinds_for(kind)
    decl = schemas[0].field_map().get(hole.field) if schemas else None
    if decl is None:
        raise DeadState(f"hole {hole.id} names undeclared field {kind}.{hole.field}")
    choices = None
    if decl.type == "reference":
        names = state.prov.declared.names_of(decl.ref_kind)
        choices = tuple(RefExpr((decl.ref_kind, n, "id")) for n in names)
    elif decl.allowed is not None:
        choices = tuple(decl.allowed)
    elif decl.type == "bool":
        choices = (False, True)
    if choices is not None and not choices:
        raise DeadState(f"no admissible value for {kind}.{hole.field} on {hole.node}")
    context = {"node": hole.node, "kind": kind,
               "emitted": sorted(body.emitted) if body is not None else []}
    return HoleRequest(hole, kind, decl.type, choices, decl.default_value(), context)


def _emit(state: DecoderState, tok: Token, fixed: bool, observer: Observer | None) -> None:
    if observer is not None or not fixed:
        allowed = admissible_tokens(state)
        if observer is not None:
            observer(state, allowed, tok)
        if not fixed and not token_admitted(allowed, tok):
            raise DeadState(f"decoded token {tok.kind} {tok.value!r} is not admissible")
    state.step(tok, fixed=fixed)


def _fill(program: HclProgram, filled: dict) -> HclProgram:
    out = program.copy()

    def sub(value: Any) -> Any:
        if isinstance(value, Hole):
            return filled[value.id]
        if isinstance(value, list):
            return [sub(v) for v in value]
        if isinstance(value, dict):
            return {k: sub(v) for k, v in value.items()}
        return value

    def walk(block) -> None:
        for k, v in block.attributes.items():
            block.attributes[k] = sub(v)
        for nested in block.blocks:
            walk(nested)

    for b in out.blocks:
        walk(b)
    return out


def decode_detailed(skeleton: SkeletonProgram, proposer, registry,
                    observer: Observer | None = None) -> DecodeResult:
    proposer = proposer or DeterministicStub()
    state = DecoderState(registry, known=skeleton.addresses)
    result = DecodeResult(skeleton.program)
    for item in program_tokens(skeleton.program):
        if isinstance(item, Hole):
            request = hole_request(item, state, registry)
            value = _propose(proposer, request, result)
            result.filled[item.id] = value
            for tok in _expr_tokens(value):
                _emit(state, tok, False, observer)
                result.steps += 1
        else:
            _emit(state, item, True, observer)
            result.steps += 1
    if not state.finished():
        raise DeadState("skeleton token stream ended before the grammar accepted")
    result.notes.extend(state.notes)
    result.program = _fill(skeleton.program, result.filled)
    return result


def _propose(proposer, request: HoleRequest, result: DecodeResult) -> Any:
    for _ in range(MAX_PROPOSALS):
        try:
            value = proposer.propose(request)
        except Exception as exc:  # a remote backend may fail in many ways
            result.notes.append(f"proposer error on {request.hole.node}.{request.hole.field}: {exc}")
            continue
        if request.admits(value):
            return value
        result.notes.append(f"proposer returned inadmissible {value!r} for "
                            f"{request.hole.node}.{request.hole.field}")
    value = stub_value(request)
    if not request.admits(value):
        raise ProposerExhausted(f"no admissible value for {request.hole.node}.{request.hole.field}")
    result.notes.append(f"forced stub choice {value!r} for {request.hole.node}.{request.hole.field} "
                        f"after {MAX_PROPOSALS} proposals")
    return value


def decode(skeleton: SkeletonProgram, proposer, registry, observer: Observer | None = None) -> HclProgram:
    return decode_detailed(skeleton, proposer, registry, observer).program
