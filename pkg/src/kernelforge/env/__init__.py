"""Agent sandbox: workspace jail, tools, episode loop, scripted policy."""

from .episode import (
    BYTES_PER_TOKEN,
    Action,
    Budgets,
    EpisodeError,
    EpisodeState,
    Stop,
    Submit,
    count_tokens,
    step,
)
from .guards import detect_fallback_violation, scan_workspace_sources
from .policy import ScriptedPolicy, build_candidate
from .skill import DEFAULT_SKILL_TEXT
from .tools import (
    OBSERVATION_BYTE_CAP,
    Observation,
    ToolCall,
    dispatch_tool,
    truncate_observation,
    validate_call,
)
from .workspace import (
    LAYOUT,
    Workspace,
    check_permission,
    init_workspace,
    render_model_py,
    tree_digest,
)

__all__ = [
    "Action",
    "Budgets",
    "BYTES_PER_TOKEN",
    "DEFAULT_SKILL_TEXT",
    "EpisodeError",
    "EpisodeState",
    "LAYOUT",
    "OBSERVATION_BYTE_CAP",
    "Observation",
    "ScriptedPolicy",
    "Stop",
    "Submit",
    "ToolCall",
    "Workspace",
    "build_candidate",
    "check_permission",
    "count_tokens",
    "detect_fallback_violation",
    "dispatch_tool",
    "init_workspace",
    "render_model_py",
    "scan_workspace_sources",
    "step",
    "tree_digest",
    "truncate_observation",
    "validate_call",
]
