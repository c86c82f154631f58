"""Job planning and execution over daemon rings."""

from .executor import JobHandle, JobRegistry, JobState
from .placement import plan_placement
from .program import Instruction, Program, parse_program

__all__ = [
    "Instruction",
    "Program",
    "parse_program",
    "plan_placement",
    "JobHandle",
    "JobRegistry",
    "JobState",
]
