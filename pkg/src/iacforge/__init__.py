"""iacforge: typed-IR synthesis of Terraform-subset configurations with counterexample-guided repair."""
from .agents import IntentSpec, architect_plan
from .iir import ConstraintSet, Plan
from .orchestrator import RunConfig, Success, UnsatisfiedCore, run
from .registry import default_registry, harmonize

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet", "IntentSpec", "Plan", "RunConfig", "Success", "UnsatisfiedCore", "architect_plan",
    "default_registry", "harmonize", "run",
]
