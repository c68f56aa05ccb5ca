"""Structural compiler, decoding automata, proposers and the constrained decoder."""
from .automata import DecoderState, ProviderFieldAutomaton, admissible_tokens
from .decoder import DecodeResult, decode, decode_detailed
from .proposer import DeterministicStub, HoleRequest, RandomProposer, ScriptedProposer, stub_value
from .skeleton import SkeletonProgram, SymbolTable, compile_skeleton, provider_alias

__all__ = [
    "DecodeResult", "DecoderState", "DeterministicStub", "HoleRequest", "ProviderFieldAutomaton",
    "RandomProposer", "ScriptedProposer", "SkeletonProgram", "SymbolTable", "admissible_tokens",
    "compile_skeleton", "decode", "decode_detailed", "provider_alias", "stub_value",
]
