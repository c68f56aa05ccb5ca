"""HCL-subset front end: AST, parser, canonical printer, and the lifter."""
from .ast import Block, HclProgram, Hole, RefExpr
from .lift import lift, lift_lenient
from .parser import parse
from .printer import print_program

__all__ = ["Block", "HclProgram", "Hole", "RefExpr", "lift", "lift_lenient", "parse", "print_program"]
