"""Exception hierarchy.

Configuration faults (bad files, missing catalog entries, absent binaries)
derive from :class:`ConfigError`; the CLI maps those to exit status 2. Task
level failures are never exceptions, they come back as values.
"""
from __future__ import annotations


class IacForgeError(Exception):
    pass


class ConfigError(IacForgeError):
    pass


class MalformedPlan(IacForgeError):
    pass


class UnknownKind(IacForgeError):
    def __init__(self, kind: str, provider: str | None = None):
        self.kind = kind
        self.provider = provider
        where = f" for provider {provider!r}" if provider else ""
        super().__init__(f"unknown resource kind {kind!r}{where}")


class RegionUnavailable(IacForgeError):
    def __init__(self, node: str, kind: str, region: str):
        self.node, self.kind, self.region = node, kind, region
        super().__init__(f"kind {kind!r} is not offered in region {region!r} (node {node!r})")


class VersionConflict(IacForgeError):
    pass


class RegistryError(ConfigError):
    pass


class HclSyntaxError(IacForgeError):
    def __init__(self, message: str, line: int, col: int, expected: frozenset[str] = frozenset()):
        self.line, self.col = line, col
        self.expected = frozenset(expected)
        self.bare = message
        text = f"{line}:{col}: {message}"
        if expected:
            text += f" (expected one of: {', '.join(sorted(expected))})"
        super().__init__(text)


class LiftError(IacForgeError):
    def __init__(self, code: str, message: str, address: str | None = None):
        self.code = code
        self.address = address
        super().__init__(message)


class CyclicPlan(IacForgeError):
    pass


class DeadState(IacForgeError):
    """Skeleton and automata disagree; always a bug, never a task failure."""


class ProposerExhausted(IacForgeError):
    pass


class RulesError(ConfigError):
    pass


class MissingSku(ConfigError):
    def __init__(self, provider: str, region: str, sku: str, node: str):
        self.provider, self.region, self.sku, self.node = provider, region, sku, node
        super().__init__(f"price catalog has no entry for {provider}/{region}/{sku} (node {node!r})")


class SandboxUnavailable(ConfigError):
    pass


class NoApplicableEdit(IacForgeError):
    def __init__(self, counterexamples):
        self.counterexamples = list(counterexamples)
        codes = ", ".join(sorted({ce.code for ce in self.counterexamples}))
        super().__init__(f"no edit maps from counterexamples: {codes}")


class LocusNotFound(IacForgeError):
    pass


class ContractViolation(IacForgeError):
    pass


class UnsupportedIntent(IacForgeError):
    pass


class RemoteError(IacForgeError):
    pass


class TransportFailure(RemoteError):
    pass


class RemoteTimeout(TransportFailure):
    pass


class SchemaInvalidResponse(RemoteError):
    pass


class IncompleteBlackboard(IacForgeError):
    pass


class NotASuccess(IacForgeError):
    pass


class FragmentNotClosed(IacForgeError):
    pass


class CorpusError(ConfigError):
    pass
