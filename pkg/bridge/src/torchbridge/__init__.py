"""Torch-backed executor speaking the operator-task wire protocol.

Independent of the simulated stack on purpose: the only things shared are
the task JSON shape, the candidate JSON shape, and the socket protocol, so
this package doubles as a living check that those contracts are complete.
"""

from .rewrites import Candidate, CandidateError, apply_candidate, parse_candidate
from .runtime import BridgeSession
from .server import BridgeServer, serve
from .taskspec import Graph, Node, Task, TaskError, parse_task

__all__ = [
    "BridgeServer",
    "BridgeSession",
    "Candidate",
    "CandidateError",
    "Graph",
    "Node",
    "Task",
    "TaskError",
    "apply_candidate",
    "parse_candidate",
    "parse_task",
    "serve",
]
