import json
import math
import random
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from iacforge.errors import CorpusError
from iacforge.evaluation import EvalConfig, EvalReport, TaskResult, bleu, corpus_bleu, load_corpus, run_eval, tokenize

from conftest import FIXTURES
from oracles import bleu_formula, bleu_oracle

VOCAB = ["resource", '"ec2"', '"web"', "{", "}", "ami", "=", '"ami-1"', "tags", "owner", "[", "]", "vpc.main.id"]


def test_tokenize():
    assert tokenize('a_b = "x.y"{') == ["a_b", "=", '"', "x", ".", "y", '"', "{"]


def test_bleu_identity_and_disjoint():
    text = 'resource "ec2" "web" { ami = "ami-1" }'
    assert bleu(text, text) == 100.0
    assert bleu("alpha beta gamma delta", "one two three four") == 0.0
    assert corpus_bleu([]) == 0.0
    assert bleu("", text) == 0.0


def test_bleu_brevity_penalty_by_hand():
    # every n-gram matches; only the brevity penalty exp(1 - 7/5) applies
    assert math.isclose(bleu("a b c d e", "a b c d e f g"), 100 * math.exp(-0.4), abs_tol=1e-12)


def test_bleu_matches_nltk_examples():
    pairs = [('resource "ec2" "web" { ami = "ami-1" }', 'resource "ec2" "web" { ami = "ami-2" }'),
             ("a b c d e f", "a b c d x f")]
    assert math.isclose(corpus_bleu(pairs), bleu_oracle(pairs, tokenize), abs_tol=1e-9)


def random_pairs(rng, min_cand=1):
    pairs = []
    for _ in range(rng.randint(1, 4)):
        ref = [rng.choice(VOCAB) for _ in range(rng.randint(4, 25))]
        cand = [t if rng.random() < 0.8 else rng.choice(VOCAB) for t in ref]
        if rng.random() < 0.3:
            cand = cand[: rng.randint(min(min_cand, len(cand)), len(cand))]
        pairs.append((" ".join(cand), " ".join(ref)))
    return pairs


@given(st.randoms(use_true_random=False))
def test_bleu_agrees_with_formula(rng):
    pairs = random_pairs(rng)
    ours = corpus_bleu(pairs)
    assert math.isclose(ours, bleu_formula(pairs, tokenize), abs_tol=1e-9)
    assert 0.0 <= ours <= 100.0


@given(st.randoms(use_true_random=False))
def test_bleu_agrees_with_nltk(rng):
    # nltk floors each sentence's n-gram denominator at 1, so candidates shorter than 4 tokens are excluded
    pairs = random_pairs(rng, min_cand=4)
    assert math.isclose(corpus_bleu(pairs), bleu_oracle(pairs, tokenize), abs_tol=1e-9)


def test_short_candidate_follows_formula():
    # 3-token candidate has no 4-grams and contributes nothing to the 4-gram denominator
    pairs = [("a b c d e", "a b c d e"), ("a b c", "a b c")]
    assert corpus_bleu(pairs) == 100.0


def _config(registry, rules, catalog):
    return EvalConfig(registry, rules, catalog)


def test_zero_fault_corpus(registry, rules, catalog):
    rep = run_eval(FIXTURES / "zero_fault", _config(registry, rules, catalog))
    assert rep.m == 3 and rep.success_pct == Decimal("100.00")
    assert rep.bleu == 100.0
    assert rep.histogram() == {"0": 3}


def test_mixed_corpus(registry, rules, catalog):
    rep = run_eval(FIXTURES / "mixed", _config(registry, rules, catalog))
    assert rep.m == 4 and rep.success_pct == Decimal("75.00")
    failed = [r for r in rep.results if not r.t]
    assert [(r.id, r.reason) for r in failed] == [("u0_unmappable", "no-applicable-edit")]


def test_eval_is_deterministic(registry, rules, catalog):
    cfg = _config(registry, rules, catalog)
    a = run_eval(FIXTURES / "zero_fault", cfg).to_json()
    b = run_eval(FIXTURES / "zero_fault", EvalConfig(registry, rules, catalog, jobs=3)).to_json()
    assert a == b


def test_report_arithmetic():
    rep = EvalReport([TaskResult("a", "success", 1, 0, []), TaskResult("b", "success", 1, 4, []),
                      TaskResult("c", "unsatisfied", 0, 8, [])])
    assert rep.success_pct == Decimal("66.67")
    assert rep.within(3) == Decimal("33.33")
    assert rep.histogram() == {"0": 1, "4": 1}
    assert EvalReport().success_pct == Decimal("0.00") and EvalReport().bleu is None


def test_corpus_errors(tmp_path):
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "absent")
    task = {"id": "x", "intent": {"structured": {"family": "empty"}}}
    (tmp_path / "a.json").write_text(json.dumps(task))
    (tmp_path / "b.json").write_text(json.dumps(task))
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(tmp_path)
    (tmp_path / "b.json").write_text(json.dumps({"intent": {}}))
    with pytest.raises(CorpusError):
        load_corpus(tmp_path)
