"""Evaluation harness: task corpus, success rate and BLEU.

Tokenization for BLEU: ``re.findall(r"\\w+|[^\\w\\s]", text)``, i.e. runs of
word characters plus every other non-space character as its own token.
Corpus BLEU uses N = 4, uniform weights and no smoothing: a zero clipped
count at any order makes the score 0.

Corpus layout: one ``<id>.json`` per task in a directory, optionally with a
reference program ``<id>.tf`` next to it. Task JSON::

    {"id": str, "intent": {"structured": {...}, "text": str},
     "constraints": {...}, "faults": {"plan": [...], "program": [...]},
     "sandbox": [stub sandbox manifest entries], "expected": "success" | "unsatisfied"}
"""
from __future__ import annotations

import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Any

from .agents import IntentSpec
from .canonical import load_path
from .errors import CorpusError
from .faults import FaultSpec
from .hcl import parse, print_program
from .iir import ConstraintSet
from .orchestrator import DEFAULT_BUDGET_K, RunConfig, run
from .repair import default_weights, routing_score
from .validators import StubSandbox, run_all

TOKEN_RE = re.compile(r"\w+|[^\w\s]")
MAX_N = 4


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(pairs: list[tuple[str, str]], max_n: int = MAX_N) -> float:
    """Corpus BLEU on a 0-100 scale over (candidate, reference) pairs."""
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in pairs:
        c, r = tokenize(cand), tokenize(ref)
        cand_len += len(c)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            cg, rg = _ngrams(c, n), _ngrams(r, n)
            matches[n - 1] += sum(min(k, rg[g]) for g, k in cg.items())
            totals[n - 1] += max(0, len(c) - n + 1)
    if cand_len == 0 or any(m == 0 for m in matches):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    return 100.0 * bp * math.exp(log_p)


def bleu(candidate: str, reference: str) -> float:
    return corpus_bleu([(candidate, reference)])


# -- corpus -------------------------------------------------------------------

@dataclass(frozen=True)
class TaskCase:
    id: str
    intent: IntentSpec
    constraints: ConstraintSet = ConstraintSet()
    reference: str | None = None
    faults: FaultSpec = FaultSpec()
    sandbox: tuple = ()
    expected: str = "success"

    @classmethod
    def from_json(cls, data: dict, reference: str | None = None) -> "TaskCase":
        try:
            case = cls(data["id"], IntentSpec.from_json(data["intent"]),
                       ConstraintSet.from_json(data.get("constraints")), reference,
                       FaultSpec.from_json(data.get("faults")), tuple(data.get("sandbox", ())),
                       data.get("expected", "success"))
        except KeyError as exc:
            raise CorpusError(f"task missing key {exc}") from None
        if reference is not None:
            parse(reference)
        return case


def load_task(path: str | Path) -> TaskCase:
    path = Path(path)
    try:
        data = load_path(path)
    except (OSError, ValueError) as exc:
        raise CorpusError(f"{path}: {exc}") from None
    ref_path = path.with_suffix(".tf")
    reference = ref_path.read_text(encoding="utf-8") if ref_path.exists() else None
    try:
        return TaskCase.from_json(data, reference)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from None
    except Exception as exc:
        raise CorpusError(f"{path}: {type(exc).__name__}: {exc}") from None


def load_corpus(directory: str | Path) -> list[TaskCase]:
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"corpus directory {directory} does not exist")
    tasks = [load_task(p) for p in sorted(directory.glob("*.json"))]
    ids = [t.id for t in tasks]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise CorpusError(f"duplicate task ids {dupes}")
    return sorted(tasks, key=lambda t: t.id)


# -- harness ------------------------------------------------------------------

@dataclass
class EvalConfig:
    registry: Any
    rules: Any
    catalog: Any
    budget_k: int = DEFAULT_BUDGET_K
    jobs: int = 1
    seed: int = 0
    out_dir: Path | None = None


@dataclass
class TaskResult:
    id: str
    outcome: str          # success | unsatisfied
    t: int
    iterations: int
    j_history: list
    reason: str = ""
    bleu: float | None = None
    candidate: str = ""

    def to_json(self) -> dict:
        return {"id": self.id, "outcome": self.outcome, "t": self.t, "iterations": self.iterations,
                "j_history": list(self.j_history), "reason": self.reason, "bleu": self.bleu}


@dataclass
class EvalReport:
    results: list = field(default_factory=list)
    references: dict = field(default_factory=dict, repr=False)   # task id -> reference text

    @property
    def m(self) -> int:
        return len(self.results)

    @property
    def success_pct(self) -> Decimal:
        if not self.results:
            return Decimal("0.00")
        pct = Decimal(100) * sum(r.t for r in self.results) / len(self.results)
        return pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)

    @property
    def bleu(self) -> float | None:
        pairs = [(r.candidate, self.references[r.id]) for r in self.results
                 if self.references.get(r.id) is not None]
        return corpus_bleu(pairs) if pairs else None

    def histogram(self) -> dict:
        hist = Counter(r.iterations for r in self.results if r.t)
        return {str(k): hist[k] for k in sorted(hist)}

    def within(self, k: int) -> Decimal:
        if not self.results:
            return Decimal("0.00")
        pct = Decimal(100) * sum(1 for r in self.results if r.t and r.iterations <= k) / len(self.results)
        return pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)

    def to_json(self) -> dict:
        b = self.bleu
        return {
            "tasks": self.m,
            "success_pct": self.success_pct,
            "bleu": None if b is None else Decimal(repr(b)),
            "success_within_3_pct": self.within(3),
            "iteration_histogram": self.histogram(),
            "results": [dict(r.to_json(), bleu=None if r.bleu is None else Decimal(repr(r.bleu)))
                        for r in self.results],
        }


def run_task(task: TaskCase, config: EvalConfig) -> TaskResult:
    sandbox = StubSandbox(list(task.sandbox))
    run_dir = Path(config.out_dir) / task.id if config.out_dir is not None else None
    rc = RunConfig(config.registry, config.rules, config.catalog, sandbox, budget_k=config.budget_k,
                   run_dir=run_dir, faults=task.faults, seed=config.seed)
    outcome = run(task.intent, task.constraints, rc)
    js = [str(j) for j in outcome.j_history]
    if not outcome.ok:
        return TaskResult(task.id, "unsatisfied", 0, outcome.iterations, js, outcome.reason)
    text = print_program(outcome.program)
    t = 1
    if task.reference is not None:
        # the result must also pass the task's own validators on a fresh run
        report = run_all(parse(text), config.registry, config.rules, config.catalog, sandbox, task.constraints)
        if routing_score(report, task.constraints, default_weights(task.constraints)) != 0:
            t = 0
    ref_bleu = bleu(text, task.reference) if task.reference is not None else None
    return TaskResult(task.id, "success", t, outcome.iterations, js, "", ref_bleu, text)


def run_eval(corpus: str | Path | list, config: EvalConfig) -> EvalReport:
    tasks = load_corpus(corpus) if not isinstance(corpus, list) else sorted(corpus, key=lambda t: t.id)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(lambda t: run_task(t, config), tasks))
    else:
        results = [run_task(t, config) for t in tasks]
    return EvalReport(sorted(results, key=lambda r: r.id), {t.id: t.reference for t in tasks})
