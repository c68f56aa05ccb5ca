"""Append-only, digest-stamped blackboard persisted as JSON lines."""
from __future__ import annotations

import time
from decimal import Decimal
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .canonical import canonical_json, digest_obj, loads

ARTIFACT_KINDS = ("intent", "plan", "program", "report", "edit", "trace", "log", "bundle", "transition", "note")


@dataclass(frozen=True)
class BlackboardEntry:
    seq: int
    state: str
    kind: str
    digest: str
    toolchain: dict
    timestamp: Decimal
    payload: Any

    def to_json(self) -> dict:
        return {"seq": self.seq, "state": self.state, "kind": self.kind, "digest": self.digest,
                "toolchain": self.toolchain, "timestamp": self.timestamp, "payload": self.payload}

    @classmethod
    def from_json(cls, data: dict) -> "BlackboardEntry":
        return cls(data["seq"], data["state"], data["kind"], data["digest"], data.get("toolchain", {}),
                   data.get("timestamp", Decimal(0)), data["payload"])


@dataclass
class Blackboard:
    """Single-writer log; ``path`` is ``run.jsonl`` inside a run directory, or None for memory only."""

    path: Path | None = None
    toolchain: dict = field(default_factory=dict)
    clock: Callable[[], float] = time.time
    entries: list = field(default_factory=list)

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, state: str, kind: str, payload: Any) -> BlackboardEntry:
        if kind not in ARTIFACT_KINDS:
            raise ValueError(f"unknown artifact kind {kind!r}")
        entry = BlackboardEntry(len(self.entries), state, kind, digest_obj(payload), dict(self.toolchain),
                                Decimal(repr(float(self.clock()))), payload)
        self.entries.append(entry)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(entry.to_json()) + "\n")
        return entry

    def of_kind(self, kind: str) -> list[BlackboardEntry]:
        return [e for e in self.entries if e.kind == kind]

    def latest(self, kind: str, state: str | None = None) -> BlackboardEntry | None:
        for e in reversed(self.entries):
            if e.kind == kind and (state is None or e.state == state):
                return e
        return None

    def transitions(self) -> list[tuple[str, str]]:
        return [(e.payload["from"], e.payload["to"]) for e in self.of_kind("transition")]

    def verify(self) -> list[str]:
        """Digest and sequence problems; empty when the log is intact."""
        problems = []
        for i, e in enumerate(self.entries):
            if e.seq != i:
                problems.append(f"entry {i} has sequence number {e.seq}")
            if digest_obj(e.payload) != e.digest:
                problems.append(f"entry {i} payload digest mismatch")
        return problems

    @classmethod
    def load(cls, path: str | Path) -> "Blackboard":
        bb = cls.__new__(cls)
        bb.path, bb.toolchain, bb.clock = None, {}, time.time
        bb.entries = [BlackboardEntry.from_json(loads(line))
                      for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        return bb
