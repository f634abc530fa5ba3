"""Executable Raft model with an explicit-state explorer and property checks."""

from .core import Config
from .explorer import Lts, StateLimitExceeded, explore, export_aut, initial_state, successors
from .properties import Verdict, run_check

__all__ = [
    "Config",
    "Lts",
    "StateLimitExceeded",
    "Verdict",
    "explore",
    "export_aut",
    "initial_state",
    "run_check",
    "successors",
]
