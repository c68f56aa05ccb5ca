import json
import shutil

import pytest

from iacforge import IntentSpec, RunConfig, run
from iacforge.blackboard import Blackboard
from iacforge.errors import IncompleteBlackboard
from iacforge.evidence import MANIFEST, PROGRAM, SECTIONS, build_bundle, verify_bundle
from iacforge.faults import FaultSpec
from iacforge.iir import ConstraintSet
from iacforge.validators import StubSandbox

INTENT = IntentSpec(structured={"family": "three_tier", "region": "eu-west-1", "encryption": True})


def clock():
    return 1700000000.0


@pytest.fixture
def bundle_dir(tmp_path, registry, rules, catalog):
    cfg = RunConfig(registry, rules, catalog, StubSandbox([]), run_dir=tmp_path / "run", clock=clock,
                    faults=FaultSpec(program=({"op": "drop_attribute", "node": "web", "field": "ami"},)))
    out = run(INTENT, ConstraintSet(residency=frozenset({"eu-west-1"})), cfg)
    assert out.ok
    return tmp_path / "run" / "bundle", out


def verify(d, registry, rules, catalog, program=None):
    return verify_bundle(d, program or d / PROGRAM, registry, rules, catalog)


def test_bundle_has_all_sections(bundle_dir):
    d, out = bundle_dir
    names = sorted(p.name for p in d.iterdir())
    assert names == sorted([MANIFEST, PROGRAM] + [f"{s}.json" for s in SECTIONS])
    assert len(SECTIONS) == 7
    assert out.bundle.section("repair_path")["committed"][0]["edit"]["op"] == "AddRequiredField"
    assert out.bundle.section("confirmations")["residency"]["ok"] is True


def test_clean_bundle_verifies(bundle_dir, registry, rules, catalog):
    d, _ = bundle_dir
    rep = verify(d, registry, rules, catalog)
    assert rep.ok, rep.to_json()


def test_rebuild_is_identical(bundle_dir, registry):
    d, out = bundle_dir
    again = build_bundle(Blackboard.load(d.parent / "run.jsonl"), out.program, registry)
    assert again.manifest_digest == out.bundle.manifest_digest
    assert again.files == out.bundle.files


def test_incomplete_blackboard(registry):
    bb = Blackboard()
    bb.append("plan", "intent", {"intent": {"text": "x"}, "constraints": {}})
    with pytest.raises(IncompleteBlackboard):
        build_bundle(bb, None, registry)


def test_tampered_program_is_caught(bundle_dir, registry, rules, catalog, tmp_path):
    d, _ = bundle_dir
    prog = tmp_path / "audited.tf"
    prog.write_bytes((d / PROGRAM).read_bytes().replace(b"t3.micro", b"t3.small"))
    rep = verify(d, registry, rules, catalog, prog)
    assert "digest_mismatch" in rep.codes()


def test_flipped_trace_is_caught(bundle_dir, registry, rules, catalog, tmp_path):
    d, _ = bundle_dir
    work = tmp_path / "copy"
    shutil.copytree(d, work)
    path = work / "policy_traces.json"
    data = json.loads(path.read_text())
    data["traces"][0]["verdict"] = "fail"
    from iacforge.canonical import dump_pretty

    path.write_text(dump_pretty(data))
    rep = verify(work, registry, rules, catalog)
    assert {"trace_divergence", "digest_mismatch"} <= rep.codes()


def test_missing_and_extra_files(bundle_dir, registry, rules, catalog, tmp_path):
    d, _ = bundle_dir
    work = tmp_path / "copy"
    shutil.copytree(d, work)
    (work / "deploy_log.json").unlink()
    (work / "extra.txt").write_text("x")
    codes = verify(work, registry, rules, catalog, d / PROGRAM).codes()
    assert {"missing_file", "unlisted_file"} <= codes


def test_toolchain_drift_is_reported(bundle_dir, registry, rules, catalog):
    from dataclasses import replace

    d, _ = bundle_dir
    drifted = replace(catalog, version="2099.01")
    rep = verify(d, registry, rules, drifted)
    assert "toolchain_mismatch" in rep.codes()


def test_missing_bundle_dir(registry, rules, catalog, tmp_path):
    rep = verify_bundle(tmp_path / "nope", tmp_path / "nope.tf", registry, rules, catalog)
    assert not rep.ok and rep.codes() == {"missing_file"}
