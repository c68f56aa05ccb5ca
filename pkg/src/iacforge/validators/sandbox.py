"""Deploy adapters: a manifest-driven stub and an external plan binary."""
from __future__ import annotations

import os
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from ..canonical import load_path
from ..errors import ConfigError, HclSyntaxError, SandboxUnavailable
from ..hcl.ast import HclProgram, RefExpr
from ..hcl.parser import parse
from ..hcl.printer import print_program
from .report import Counterexample

TF_BIN_ENV = "IACFORGE_TF_BIN"


@dataclass
class SandboxResult:
    ok: bool
    errors: list = field(default_factory=list)   # {code, locus, message, excerpt}
    log: str = ""


class SandboxAdapter(Protocol):
    name: str

    def run(self, program_text: str) -> SandboxResult: ...


def _plain(value: Any) -> Any:
    return value.render() if isinstance(value, RefExpr) else value


class StubSandbox:
    """Verdicts are a pure function of the program text and the fault manifest.

    Manifest entries: ``{"match": {"kind", "field", "value", "region"}, "code", "message"}``;
    every selector key is optional and all present keys must match.
    """

    name = "stub"

    def __init__(self, manifest: list | None = None):
        self.manifest = list(manifest or [])
        for i, entry in enumerate(self.manifest):
            if not isinstance(entry, dict) or "code" not in entry or not isinstance(entry.get("match", {}), dict):
                raise ConfigError(f"sandbox manifest entry {i} needs a match object and a code")

    @classmethod
    def from_file(cls, path: str | Path) -> "StubSandbox":
        try:
            return cls(load_path(path))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load sandbox manifest {path}: {exc}") from None

    def run(self, program_text: str) -> SandboxResult:
        try:
            program = parse(program_text)
        except HclSyntaxError as exc:
            return SandboxResult(False, [{"code": "syntax_error", "locus": "", "message": str(exc),
                                          "excerpt": str(exc)}], f"error: {exc}\n")
        regions = {}
        for b in program.blocks:
            if b.type == "provider":
                regions[(b.labels[0], b.attributes.get("alias"))] = b.attributes.get("region")
        errors = []
        log = [f"plan: {len(program.resources())} resources"]
        for b in program.resources():
            kind, name = b.labels
            prov = b.attributes.get("provider")
            region = regions.get(tuple(prov.parts)) if isinstance(prov, RefExpr) and len(prov.parts) == 2 else None
            for entry in self.manifest:
                if self._matches(entry.get("match", {}), kind, region, b.attributes):
                    message = entry.get("message", entry["code"])
                    excerpt = f"Error: {message} (on {kind}.{name})"
                    errors.append({"code": entry["code"], "locus": f"{kind}.{name}", "message": message,
                                   "excerpt": excerpt, "field": entry.get("match", {}).get("field", "")})
                    log.append(excerpt)
        log.append("result: " + ("ok" if not errors else f"{len(errors)} error(s)"))
        return SandboxResult(not errors, errors, "\n".join(log) + "\n")

    @staticmethod
    def _matches(sel: dict, kind: str, region: str | None, attrs: dict) -> bool:
        if "kind" in sel and sel["kind"] != kind:
            return False
        if "region" in sel and sel["region"] != region:
            return False
        if "field" in sel:
            if sel["field"] not in attrs:
                return False
            if "value" in sel and _plain(attrs[sel["field"]]) != sel["value"]:
                return False
        return True


# stderr line pattern -> run CE code
DIAGNOSTIC_PATTERNS = (
    (re.compile(r"Missing required argument"), "missing_required"),
    (re.compile(r"Unsupported argument"), "unknown_field"),
    (re.compile(r"Reference to undeclared resource"), "dangling_reference"),
    (re.compile(r"not available in (the )?region|Unsupported region|InvalidLocation"), "region_unavailable"),
    (re.compile(r"[Uu]nsupported (instance|SKU|sku)|InvalidInstanceType"), "unsupported_sku"),
    (re.compile(r"Invalid value|expected .+ to be one of"), "invalid_value"),
)
LOCUS_RE = re.compile(r"with ([a-z][a-z0-9_]*)\.([a-z][a-z0-9_-]*)")
ERROR_RE = re.compile(r"Error: (.+)")


def parse_diagnostics(stderr: str) -> list[dict]:
    errors = []
    lines = stderr.splitlines()
    for i, line in enumerate(lines):
        m = ERROR_RE.search(line)
        if not m:
            continue
        window = "\n".join(lines[i:i + 6])
        code = next((c for rx, c in DIAGNOSTIC_PATTERNS if rx.search(window)), "plan_failed")
        loc = LOCUS_RE.search(window)
        errors.append({"code": code, "locus": f"{loc.group(1)}.{loc.group(2)}" if loc else "",
                       "message": m.group(1).strip(), "excerpt": window[:400]})
    return errors


class ExternalToolSandbox:
    """Runs ``<bin> init`` and ``<bin> plan`` in a scratch workspace."""

    name = "external"

    def __init__(self, binary: str | None = None, timeout: float = 300.0, workdir: str | None = None):
        self.binary = binary or os.environ.get(TF_BIN_ENV)
        self.timeout = timeout
        self.workdir = workdir

    def _resolve(self) -> str:
        if not self.binary:
            raise SandboxUnavailable(f"no plan binary configured (set {TF_BIN_ENV})")
        path = shutil.which(self.binary)
        if path is None:
            raise SandboxUnavailable(f"plan binary {self.binary!r} not found")
        return path

    def run(self, program_text: str) -> SandboxResult:
        binary = self._resolve()
        with tempfile.TemporaryDirectory(dir=self.workdir) as ws:
            Path(ws, "main.tf").write_text(program_text, encoding="utf-8")
            log = []
            for args in (["init", "-input=false", "-no-color"], ["plan", "-input=false", "-no-color"]):
                try:
                    proc = subprocess.run([binary, *args], cwd=ws, capture_output=True, text=True,
                                          timeout=self.timeout)
                except subprocess.TimeoutExpired:
                    return SandboxResult(False, [{"code": "timeout", "locus": "", "message": f"{args[0]} timed out",
                                                  "excerpt": ""}], "\n".join(log))
                log.append(f"$ {args[0]} (exit {proc.returncode})\n{proc.stdout}{proc.stderr}")
                if proc.returncode != 0:
                    errors = parse_diagnostics(proc.stderr) or [
                        {"code": "plan_failed", "locus": "", "message": f"{args[0]} exited {proc.returncode}",
                         "excerpt": proc.stderr[:400]}]
                    return SandboxResult(False, errors, "\n".join(log))
            return SandboxResult(True, [], "\n".join(log))


def _node_of(locus: str) -> str:
    return locus.split(".", 1)[1] if "." in locus else locus


def deploy_test(program: HclProgram, sandbox) -> tuple[bool, list[Counterexample], str]:
    """Run the sandbox; errors become class=run counterexamples."""
    result = sandbox.run(print_program(program))
    ces = [Counterexample("run", e["code"], _node_of(e["locus"]), e.get("field", ""), e["message"],
                          {"code": e["code"], "locus": e["locus"], "excerpt": e["excerpt"]}, e["locus"])
           for e in result.errors]
    return result.ok, ces, result.log
