"""Workspace layout and the permission jail.

Each episode owns a directory with a fixed seven-entry tree. Permissions
are enforced by the tool layer through check_permission, not by the OS, so
workspaces stay cheap to create and destroy. Every path coming from the
agent goes through _resolve, which refuses traversal out of the root.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from ..seeding import canonical_json
from ..task.graph import OperatorTask
from ..task.serialize import task_to_dict
from .skill import DEFAULT_SKILL_TEXT

LAYOUT = (
    "binding_registry.h",
    "binding.cpp",
    "kernels",
    "utils",
    "model.py",
    "model_new.py",
    "SKILL.md",
)

# Top-level entries the agent may write under; everything else is fixed.
WRITABLE = ("kernels", "model_new.py")

DENY_ESCAPE = "escape"
DENY_FIXED = "fixed infrastructure"
DENY_OUTSIDE = "outside writable area"

_BINDING_REGISTRY = """\
/* Registration table for candidate schedules. Fixed infrastructure:
 * the measurement harness owns this file. */
#ifndef BINDING_REGISTRY_H
#define BINDING_REGISTRY_H
#define REGISTER_CANDIDATE(name) /* handled by the harness */
#endif
"""

_BINDING_CPP = """\
/* Module binding between the candidate spec and the harness. Fixed
 * infrastructure: candidates are described in kernels/candidate.json,
 * not by editing this file. */
#include "binding_registry.h"
"""

_MODEL_NEW_TEMPLATE = """\
# Optimized-schedule notes. This file is yours.
#
# The measured artifact is kernels/candidate.json: a structured-text spec
# with "rewrites" (whitelisted rule applications, each naming its rule and
# bound node ids) and an optional "partition" (explicit schedule; omit it
# to get singleton groups plus any fusion hints).
#
# Keep whatever working notes you like here; nothing in this file is
# executed or scanned for scoring, but fallback calls are still forbidden.
"""

_UTILS_INIT = "# Fixed infrastructure: measurement entry points.\n"

_UTILS_VERIFICATION = """\
# Entry point: python3 -m utils.verification
# The session shell intercepts this module and runs the correctness check
# for kernels/candidate.json against the reference graph on held-out
# inputs. The file body exists so the tree is inspectable.
"""

_UTILS_PROFILING = """\
# Entry point: python3 -m utils.profiling
# The session shell intercepts this module and reports baseline timings,
# plus the candidate timing when kernels/candidate.json is present and
# verifies. Incorrect candidates are never timed.
"""


@dataclass(frozen=True)
class Workspace:
    root: Path

    def path(self, rel: str) -> Path:
        return self.root / rel


class WorkspaceError(OSError):
    pass


def render_model_py(task: OperatorTask) -> str:
    """Reference module text: the graph both as comments and as data."""
    graph = task.graph
    lines = [
        f'"""Reference operator graph for task {task.task_id}."""',
        "",
        "# inputs:",
    ]
    for i, spec in enumerate(graph.inputs):
        shape = "x".join(str(d) for d in spec.shape) or "scalar"
        lines.append(f"#   in{i}: {spec.dtype}[{shape}]")
    lines.append("# nodes:")
    for node in graph.nodes:
        args = ", ".join(node.inputs)
        params = ""
        if node.params:
            params = ", " + ", ".join(
                f"{k}={json.dumps(v)}" for k, v in sorted(node.params.items())
            )
        lines.append(f"#   {node.id} = {node.kind}({args}{params})")
    lines.append(f"# outputs: {', '.join(graph.outputs)}")
    lines.append("")
    lines.append("TASK = " + canonical_json(task_to_dict(task)))
    lines.append("")
    return "\n".join(lines)


def init_workspace(
    task: OperatorTask,
    root: str | Path,
    skill_asset: str = DEFAULT_SKILL_TEXT,
) -> Workspace:
    """Materialize the fixed tree; re-running on the same root is a no-op
    in the sense that the tree digest comes out identical."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "kernels").mkdir(exist_ok=True)
        utils_dir = root / "utils"
        utils_dir.mkdir(exist_ok=True)
        files = {
            "binding_registry.h": _BINDING_REGISTRY,
            "binding.cpp": _BINDING_CPP,
            "model.py": render_model_py(task),
            "model_new.py": _MODEL_NEW_TEMPLATE,
            "SKILL.md": skill_asset,
            "utils/__init__.py": _UTILS_INIT,
            "utils/verification.py": _UTILS_VERIFICATION,
            "utils/profiling.py": _UTILS_PROFILING,
        }
        for rel, content in files.items():
            (root / rel).write_text(content, encoding="utf-8")
    except OSError as e:
        raise WorkspaceError(f"workspace init failed: {e}") from e
    return Workspace(root=root)


def _resolve(ws: Workspace, path: str | Path) -> tuple[Path | None, str | None]:
    """Absolute jailed path, or a denial reason. Paths are taken relative
    to the root; absolute paths must already live inside it."""
    raw = Path(path)
    candidate = raw if raw.is_absolute() else ws.root / raw
    resolved = Path(os.path.realpath(candidate))
    root = Path(os.path.realpath(ws.root))
    if resolved != root and root not in resolved.parents:
        return None, DENY_ESCAPE
    return resolved, None


def check_permission(
    ws: Workspace, path: str | Path, mode: str
) -> tuple[bool, str | None]:
    """(allowed, deny_reason). mode is "read" or "write"."""
    if mode not in ("read", "write"):
        raise ValueError(f"unknown mode {mode!r}")
    resolved, reason = _resolve(ws, path)
    if resolved is None:
        return False, reason
    if mode == "read":
        return True, None
    root = Path(os.path.realpath(ws.root))
    if resolved == root:
        return False, DENY_OUTSIDE
    rel = resolved.relative_to(root)
    top = rel.parts[0]
    if top == "kernels" and len(rel.parts) > 1:
        return True, None
    if str(rel) == "model_new.py":
        return True, None
    if top in LAYOUT:
        return False, DENY_FIXED
    return False, DENY_OUTSIDE


def resolve_for_read(ws: Workspace, path: str | Path) -> tuple[Path | None, str | None]:
    allowed, reason = check_permission(ws, path, "read")
    if not allowed:
        return None, reason
    resolved, _ = _resolve(ws, path)
    return resolved, None


def resolve_for_write(ws: Workspace, path: str | Path) -> tuple[Path | None, str | None]:
    allowed, reason = check_permission(ws, path, "write")
    if not allowed:
        return None, reason
    resolved, _ = _resolve(ws, path)
    return resolved, None


def tree_digest(ws: Workspace) -> str:
    """Digest of every file's path and content, order-independent."""
    h = hashlib.sha256()
    for path in sorted(ws.root.rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(ws.root)).encode())
            h.update(b"\0")
            h.update(path.read_bytes())
            h.update(b"\0")
    return h.hexdigest()
