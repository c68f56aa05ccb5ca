import random

import pytest
from hypothesis import given, strategies as st

from iacforge.errors import DeadState, MalformedPlan, ProposerExhausted
from iacforge.hcl import lift, parse, print_program
from iacforge.hcl.ast import Hole, RefExpr
from iacforge.hcl.lexer import lex
from iacforge.iir import ConstraintSet, Plan, Ref, ResourceNode, plan_equiv
from iacforge.registry import harmonize
from iacforge.synthesis import (
    DecoderState, DeterministicStub, HoleRequest, RandomProposer, ScriptedProposer, admissible_tokens,
    compile_skeleton, decode, decode_detailed,
)
from iacforge.synthesis.automata import token_admitted
from plans import random_plan

R = "eu-west-1"


def chain_plan(**ec2):
    fields = {"ami": "ami-1", "subnet_id": Ref("a")}
    fields.update(ec2)
    return Plan((
        ResourceNode("web", "ec2", "aws", R, fields),
        ResourceNode("a", "subnet", "aws", R, {"vpc_id": Ref("main"), "cidr_block": "10.0.1.0/24"}),
        ResourceNode("main", "vpc", "aws", R, {"cidr_block": "10.0.0.0/16"}),
    ), (), ConstraintSet())


def _state_after(registry, text):
    state = DecoderState(registry)
    for tok in lex(text):
        state.step(tok)
    return state


def test_skeleton_order_and_reference(registry):
    sk, symbols = compile_skeleton(chain_plan(instance_type="t3.micro"), registry)
    res = sk.program.resources()
    assert [b.labels for b in res] == [("vpc", "main"), ("subnet", "a"), ("ec2", "web")]
    assert res[2].attributes["subnet_id"] == RefExpr(("subnet", "a", "id"))
    assert sk.holes == []
    assert symbols.addresses["web"] == ("ec2", "web")


def test_skeleton_holes_for_unset_required(registry):
    sk, _ = compile_skeleton(chain_plan(), registry)
    assert [(h.node, h.field) for h in sk.holes] == [("web", "instance_type")]


def test_empty_plan(registry):
    sk, symbols = compile_skeleton(Plan((), (), ConstraintSet()), registry)
    assert sk.program.blocks == [] and sk.holes == [] and symbols.addresses == {}


def test_bad_edge_endpoint(registry):
    from iacforge.iir import Depends

    plan = Plan(chain_plan().nodes, (Depends("web", "ghost"),), ConstraintSet())
    with pytest.raises(MalformedPlan):
        compile_skeleton(plan, registry)


def test_admissible_inside_ec2_body(registry):
    state = _state_after(registry, 'resource "ec2" "web" {')
    allowed = admissible_tokens(state)
    assert ("IDENT", "ami") in allowed
    assert ("IDENT", "cidr_block") not in allowed
    assert ("}", None) not in allowed


def test_admissible_allowed_values(registry):
    state = _state_after(registry, 'resource "ec2" "web" { instance_type =')
    assert admissible_tokens(state) == {("STRING", "t3.micro"), ("STRING", "t3.small")}


def test_admissible_close_after_required(registry):
    text = ('resource "subnet" "a" { vpc_id = vpc.main.id cidr_block = "x" } '
            'resource "ec2" "web" { ami = "a" instance_type = "t3.micro" subnet_id = subnet.a.id')
    state = DecoderState(registry, known=(("vpc", "main"),))
    for tok in lex(text):
        state.step(tok)
    assert ("}", None) in admissible_tokens(state)


def test_stub_picks_lexicographic_first(registry):
    sk, _ = compile_skeleton(chain_plan(), registry)
    prog = decode(sk, DeterministicStub(), registry)
    assert prog.find("ec2", "web").attributes["instance_type"] == "t3.micro"


def test_hole_free_identity(registry):
    sk, _ = compile_skeleton(chain_plan(instance_type="t3.small"), registry)
    assert print_program(decode(sk, DeterministicStub(), registry)) == print_program(sk.program)


def test_bad_proposals_fall_back_to_stub(registry):
    sk, _ = compile_skeleton(chain_plan(), registry)
    res = decode_detailed(sk, ScriptedProposer(["t3.mega", 7, None]), registry)
    assert res.program.find("ec2", "web").attributes["instance_type"] == "t3.micro"
    assert any("forced stub" in n for n in res.notes)


def test_scripted_choice_is_used(registry):
    sk, _ = compile_skeleton(chain_plan(), registry)
    prog = decode(sk, ScriptedProposer(["t3.small"]), registry)
    assert prog.find("ec2", "web").attributes["instance_type"] == "t3.small"


def test_hole_request_admits():
    hole = Hole(0, "int", "n", "f")
    req = HoleRequest(hole, "k", "int")
    assert req.admits(3) and not req.admits(True) and not req.admits("3")
    assert HoleRequest(hole, "k", "string", ("a",)).admits("a")
    assert not HoleRequest(hole, "k", "string", ("a",)).admits("b")


def test_no_reference_candidates_is_dead(registry):
    # an ec2 hole on subnet_id with no subnet declared anywhere
    plan = Plan((ResourceNode("web", "ec2", "aws", R, {"ami": "a", "instance_type": "t3.micro"}),), (),
                ConstraintSet())
    sk, _ = compile_skeleton(plan, registry)
    with pytest.raises((DeadState, ProposerExhausted)):
        decode(sk, DeterministicStub(), registry)


@given(st.randoms(use_true_random=False))
def test_roundtrip_law(rng):
    from iacforge.registry import default_registry

    reg = default_registry()
    p = random_plan(rng, reg)
    sk, _ = compile_skeleton(p, reg)
    q = lift(parse(print_program(decode(sk, DeterministicStub(), reg))), reg)
    assert plan_equiv(q, harmonize(p, reg), reg)


@given(st.integers(0, 10**6))
def test_random_decoding_stays_admissible(seed):
    from iacforge.registry import default_registry

    reg = default_registry()
    rng = random.Random(seed)
    p = random_plan(rng, reg, holes=True)
    sk, _ = compile_skeleton(p, reg)

    def observe(state, allowed, tok):
        assert token_admitted(allowed, tok), (tok, sorted(allowed, key=str))

    prog = decode(sk, RandomProposer(seed), reg, observer=observe)
    text = print_program(prog)
    assert parse(text) == prog
