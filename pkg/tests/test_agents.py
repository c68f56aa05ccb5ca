import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from iacforge.agents import (
    IntentSpec, Obligation, PlanInvariants, RemoteArchitect, RemoteBackend, RemoteProposer, architect_plan,
    call_remote, review_static,
)
from iacforge.errors import SchemaInvalidResponse, TransportFailure, UnsupportedIntent
from iacforge.hcl import parse
from iacforge.hcl.ast import Hole
from iacforge.iir import ConstraintSet, Connects, Effect, plan_to_json
from iacforge.synthesis import HoleRequest


def test_web_db_with_encryption():
    plan, inv = architect_plan(IntentSpec(structured={"family": "web_db", "region": "eu-west-1",
                                                      "encryption": True}), ConstraintSet())
    assert sorted(n.kind for n in plan.nodes) == ["ec2", "rds", "subnet", "vpc"]
    db = plan.node("db")
    assert Effect.ENCRYPT_AT_REST in db.effects and db.fields["storage_encrypted"] is True
    assert Connects("web", "db", "tcp", 5432) in plan.edges
    assert "encryption" in inv.names()
    assert all(n.region == "eu-west-1" for n in plan.nodes)


def test_empty_intent_gives_empty_plan():
    plan, inv = architect_plan(IntentSpec(structured={"family": "empty"}), ConstraintSet())
    assert plan.nodes == () and plan.edges == () and inv.obligations == ()


def test_text_only_intent_unsupported():
    with pytest.raises(UnsupportedIntent):
        architect_plan(IntentSpec(text="a web app with a database"), ConstraintSet())


def test_constraints_shape_the_plan():
    cons = ConstraintSet(residency=frozenset({"eu-central-1"}), availability_zones_min=2)
    plan, inv = architect_plan(IntentSpec(structured={"family": "network"}), cons)
    assert {n.region for n in plan.nodes} == {"eu-central-1"}
    assert len([n for n in plan.nodes if n.kind == "subnet"]) == 2
    assert {"residency", "availability"} <= set(inv.names())


def test_architect_is_deterministic():
    intent = IntentSpec(structured={"family": "three_tier", "region": "us-east-1", "tags": {"owner": "a"}})
    a, b = architect_plan(intent, ConstraintSet()), architect_plan(intent, ConstraintSet())
    assert plan_to_json(a[0]) == plan_to_json(b[0]) and a[1] == b[1]


def test_obligation_guard_and_json():
    with pytest.raises(ValueError):
        Obligation("x")
    inv = PlanInvariants((Obligation("b", effect="tagged"), Obligation("a", constraint="residency")))
    assert PlanInvariants.from_json(inv.to_json()).names() == ["a", "b"]


def test_review_static():
    prog = parse('variable "unused" {}\noutput "o" { value = ec2.ghost.id }\n'
                 'resource "vpc" "Main" { cidr_block = "10.0.0.0/16" }\n')
    diags, ces = review_static(prog)
    assert {d.code for d in diags} == {"unused_variable", "dead_resource", "naming"}
    assert [(c.cls, c.code) for c in ces] == [("schema", "dangling_reference")]


# -- remote adapter -----------------------------------------------------------

class _Stub:
    """A local JSON endpoint that replays canned responses and records requests."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                stub.requests.append((self.path, json.loads(body), self.headers.get("Authorization")))
                out = stub.responses.pop(0) if stub.responses else b"{}"
                out = out if isinstance(out, bytes) else json.dumps(out).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(out)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    servers = []

    def make(responses):
        s = _Stub(responses)
        servers.append(s)
        return s

    yield make
    for s in servers:
        s.close()


VALID_PLAN = {"plan": {"nodes": [{"id": "main", "kind": "vpc", "provider": "aws", "region": "eu-west-1",
                                  "fields": {"cidr_block": "10.0.0.0/16"}, "effects": []}], "edges": []},
              "invariants": [{"name": "tagging", "effect": "tagged", "constraint": None}]}


def test_remote_architect_accepts_valid_response(stub_server):
    srv = stub_server([VALID_PLAN])
    backend = RemoteBackend(srv.url, api_key="k")
    plan, inv = RemoteArchitect(backend)(IntentSpec(text="one vpc"), ConstraintSet())
    assert [n.id for n in plan.nodes] == ["main"] and inv.names() == ["tagging"]
    path, req, auth = srv.requests[0]
    assert path == "/architect" and req["role"] == "architect" and auth == "Bearer k"
    assert backend.notes == []


def test_remote_malformed_three_times_falls_back(stub_server):
    srv = stub_server([b"not json", {"plan": {"nodes": "x"}}, {"nothing": 1}])
    backend = RemoteBackend(srv.url)
    intent = IntentSpec("web", {"family": "web_db", "region": "eu-west-1"})
    plan, _ = RemoteArchitect(backend)(intent, ConstraintSet())
    assert plan_to_json(plan) == plan_to_json(architect_plan(intent, ConstraintSet())[0])
    assert len(srv.requests) == 3
    assert backend.notes[-1] == "architect fell back to the deterministic backend"
    assert sum("attempt" in n for n in backend.notes) == 3


def test_remote_unreachable_falls_back():
    backend = RemoteBackend("http://127.0.0.1:9", timeout=2)
    req = HoleRequest(Hole(0, "string", "web", "instance_type"), "ec2", "string", ("t3.micro", "t3.small"))
    assert RemoteProposer(backend).propose(req) == "t3.micro"
    assert "TransportFailure" in backend.notes[0]
    assert len(backend.notes) == 2


def test_call_remote_errors(stub_server, monkeypatch):
    monkeypatch.delenv("IACFORGE_LLM_ENDPOINT", raising=False)
    with pytest.raises(TransportFailure):
        call_remote("architect", {"intent": {"text": "x"}})
    srv = stub_server([{"val": "t3.small"}, {"value": "t3.small"}])
    payload = {"node": "web", "field": "instance_type", "kind": "ec2", "domain": "string", "choices": None}
    with pytest.raises(SchemaInvalidResponse):
        call_remote("engineer", payload, srv.url)
    assert call_remote("engineer", payload, srv.url)["value"] == "t3.small"
