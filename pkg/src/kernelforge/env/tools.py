"""Tool registry and dispatch for the agent loop.

Every observation an agent sees is produced here. Two hard rules shape the
implementation: nothing may leak host-absolute paths (episode logs must be
byte-identical across machines and worker counts), and no tool may touch
anything outside the workspace root. Denials and failures come back as
observations, never exceptions; the episode continues either way.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .workspace import (
    Workspace,
    check_permission,
    resolve_for_read,
    resolve_for_write,
)

OBSERVATION_BYTE_CAP = 32 * 1024
TRUNCATION_MARKER = "\n[output truncated]"

TOOL_NAMES = (
    "Bash",
    "Read",
    "Write",
    "Edit",
    "MultiEdit",
    "Glob",
    "Grep",
    "BashOutput",
    "KillBash",
)

# required/optional argument names and their types, per tool
TOOL_SCHEMAS: dict[str, tuple[dict[str, type], dict[str, type]]] = {
    "Bash": ({"command": str}, {"background": bool}),
    "Read": ({"file_path": str}, {"offset": int, "limit": int}),
    "Write": ({"file_path": str, "content": str}, {}),
    "Edit": ({"file_path": str, "old_string": str, "new_string": str}, {}),
    "MultiEdit": ({"file_path": str, "edits": list}, {}),
    "Glob": ({"pattern": str}, {}),
    "Grep": ({"pattern": str}, {"glob": str}),
    "BashOutput": ({"job_id": str}, {}),
    "KillBash": ({"job_id": str}, {}),
}


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict
    turn_index: int = 0


@dataclass(frozen=True)
class Observation:
    text: str
    schema_ok: bool = True
    denied: bool = False


def truncate_observation(text: str, cap: int = OBSERVATION_BYTE_CAP) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= cap:
        return text
    marker = TRUNCATION_MARKER.encode("utf-8")
    head = raw[: cap - len(marker)]
    # avoid splitting a multibyte character at the cut
    return head.decode("utf-8", errors="ignore") + TRUNCATION_MARKER


def validate_call(call: ToolCall) -> Optional[str]:
    """None when well-formed, else a description of the schema violation."""
    if call.tool not in TOOL_SCHEMAS:
        return f"unknown tool {call.tool!r}"
    if not isinstance(call.args, dict):
        return "args must be a mapping"
    required, optional = TOOL_SCHEMAS[call.tool]
    for name, typ in required.items():
        if name not in call.args:
            return f"{call.tool} requires argument {name!r}"
        if not isinstance(call.args[name], typ):
            return f"{call.tool} argument {name!r} must be {typ.__name__}"
    for name, value in call.args.items():
        if name in required:
            continue
        if name not in optional:
            return f"{call.tool} got unexpected argument {name!r}"
        if not isinstance(value, optional[name]):
            return f"{call.tool} argument {name!r} must be {optional[name].__name__}"
    if call.tool == "MultiEdit":
        for i, edit in enumerate(call.args["edits"]):
            if (
                not isinstance(edit, dict)
                or not isinstance(edit.get("old_string"), str)
                or not isinstance(edit.get("new_string"), str)
            ):
                return f"MultiEdit edit {i} must carry old_string and new_string"
        if not call.args["edits"]:
            return "MultiEdit requires at least one edit"
    return None


@dataclass
class _Job:
    command: str
    output: str
    delivered: bool = False
    killed: bool = False


class BashSession:
    """Persistent jailed mini-shell: allowlisted commands, cwd inside root.

    The harness intercepts the measurement entry points (python3 -m
    utils.profiling / utils.verification) instead of spawning a real
    interpreter; `harness` supplies their output.
    """

    def __init__(self, ws: Workspace, harness):
        self.ws = ws
        self.harness = harness
        self.cwd = Path(".")
        self.jobs: dict[str, _Job] = {}
        self._next_job = 1

    def _rel(self, argument: str) -> str:
        # resolve a command argument against the session cwd
        return str((self.cwd / argument)) if not argument.startswith("/") else argument

    def run(self, command: str, background: bool = False) -> str:
        if background:
            output = self._execute(command)
            job_id = f"job{self._next_job}"
            self._next_job += 1
            self.jobs[job_id] = _Job(command=command, output=output)
            return f"started background job {job_id}"
        return self._execute(command)

    def _execute(self, command: str) -> str:
        # command substitution has no meaning here but gets rejected anyway
        if "`" in command or "$(" in command:
            return "shell operators are not supported in this sandbox"
        try:
            tokens = shlex.split(command)
        except ValueError as e:
            return f"parse error: {e}"
        if not tokens:
            return ""
        if any(t in ("|", "&&", "||", ";", ">", ">>", "<", "&") for t in tokens):
            return "shell operators are not supported in this sandbox"
        if tokens[0] == "sudo":
            tokens = tokens[1:]
            if not tokens:
                return ""
        name, args = tokens[0], tokens[1:]
        if name == "python3":
            return self._cmd_python3(args)
        if name == "bash":
            return self._cmd_bash(args)
        if name in ("ls", "cat", "echo", "pwd", "cd"):
            return getattr(self, f"_cmd_{name}")(args)
        return f"command not allowed in this sandbox: {name}"

    def _cmd_pwd(self, args) -> str:
        rel = str(self.cwd)
        return "." if rel == "." else rel

    def _cmd_cd(self, args) -> str:
        if len(args) != 1:
            return "cd: expected one argument"
        target = self._rel(args[0])
        resolved, reason = resolve_for_read(self.ws, target)
        if resolved is None:
            return f"cd: permission denied ({reason})"
        if not resolved.is_dir():
            return f"cd: not a directory: {args[0]}"
        root = self.ws.root.resolve()
        self.cwd = Path(".") if resolved == root else resolved.relative_to(root)
        return ""

    def _cmd_ls(self, args) -> str:
        target = self._rel(args[0]) if args else str(self.cwd)
        resolved, reason = resolve_for_read(self.ws, target)
        if resolved is None:
            return f"ls: permission denied ({reason})"
        if resolved.is_file():
            return args[0]
        if not resolved.is_dir():
            return f"ls: no such file or directory: {args[0] if args else '.'}"
        entries = sorted(resolved.iterdir(), key=lambda p: p.name)
        return "\n".join(p.name + ("/" if p.is_dir() else "") for p in entries)

    def _cmd_cat(self, args) -> str:
        if not args:
            return "cat: expected at least one file"
        chunks = []
        for arg in args:
            resolved, reason = resolve_for_read(self.ws, self._rel(arg))
            if resolved is None:
                chunks.append(f"cat: permission denied ({reason})")
            elif not resolved.is_file():
                chunks.append(f"cat: no such file: {arg}")
            else:
                chunks.append(resolved.read_text(encoding="utf-8", errors="replace"))
        return "".join(chunks)

    def _cmd_echo(self, args) -> str:
        return " ".join(args)

    def _cmd_python3(self, args) -> str:
        if len(args) >= 2 and args[0] == "-m":
            module = args[1]
            if module == "utils.profiling":
                return self.harness.profiling_text()
            if module == "utils.verification":
                return self.harness.verification_text()
            return f"module not allowed in this sandbox: {module}"
        return "python3 is only available as: python3 -m utils.<tool>"

    def _cmd_bash(self, args) -> str:
        if args and args[0] in ("utils/compile.sh", "./utils/compile.sh"):
            return "nothing to compile: candidates are structured text in kernels/"
        return "bash is only available for utils/compile.sh"

    def output_of(self, job_id: str) -> str:
        job = self.jobs.get(job_id)
        if job is None:
            return f"no such job: {job_id}"
        if job.killed:
            return f"job {job_id} was killed"
        if job.delivered:
            return "(no new output)"
        job.delivered = True
        return job.output if job.output else "(no output)"

    def kill(self, job_id: str) -> str:
        job = self.jobs.get(job_id)
        if job is None:
            return f"no such job: {job_id}"
        job.killed = True
        return f"killed {job_id}"


@dataclass
class ToolContext:
    """Mutable tool-side state owned by one episode."""

    ws: Workspace
    bash: BashSession
    read_files: set = field(default_factory=set)


def _read_rel(ctx: ToolContext, resolved: Path) -> str:
    return str(resolved.relative_to(ctx.ws.root.resolve()))


def _tool_read(ctx: ToolContext, args: dict) -> Observation:
    resolved, reason = resolve_for_read(ctx.ws, args["file_path"])
    if resolved is None:
        return Observation(f"Read denied: {reason}", denied=True)
    if resolved.is_dir():
        return Observation(f"Read failed: {args['file_path']} is a directory")
    if not resolved.is_file():
        return Observation(f"Read failed: no such file: {args['file_path']}")
    text = resolved.read_text(encoding="utf-8", errors="replace")
    lines = text.splitlines()
    offset = max(args.get("offset", 1), 1)
    limit = args.get("limit", len(lines))
    window = lines[offset - 1 : offset - 1 + max(limit, 0)]
    ctx.read_files.add(_read_rel(ctx, resolved))
    return Observation("\n".join(window))


def _tool_write(ctx: ToolContext, args: dict) -> Observation:
    resolved, reason = resolve_for_write(ctx.ws, args["file_path"])
    if resolved is None:
        return Observation(f"Write denied: {reason}", denied=True)
    rel = _read_rel(ctx, resolved)
    if resolved.exists() and rel not in ctx.read_files:
        return Observation(
            f"Write refused: read-before-write policy; Read {rel} first"
        )
    resolved.parent.mkdir(parents=True, exist_ok=True)
    data = args["content"]
    resolved.write_text(data, encoding="utf-8")
    ctx.read_files.add(rel)
    return Observation(f"wrote {len(data.encode('utf-8'))} bytes to {rel}")


def _load_for_edit(ctx: ToolContext, file_path: str):
    resolved, reason = resolve_for_write(ctx.ws, file_path)
    if resolved is None:
        return None, None, Observation(f"Edit denied: {reason}", denied=True)
    if not resolved.is_file():
        return None, None, Observation(f"Edit failed: no such file: {file_path}")
    rel = _read_rel(ctx, resolved)
    if rel not in ctx.read_files:
        return None, None, Observation(
            f"Edit refused: read-before-write policy; Read {rel} first"
        )
    return resolved, rel, None


def _apply_one_edit(text: str, old: str, new: str) -> tuple[Optional[str], str]:
    count = text.count(old)
    if count == 0:
        return None, "old_string not found"
    if count > 1:
        return None, f"old_string matches {count} times; make it unique"
    return text.replace(old, new, 1), ""


def _tool_edit(ctx: ToolContext, args: dict) -> Observation:
    resolved, rel, failure = _load_for_edit(ctx, args["file_path"])
    if failure is not None:
        return failure
    text = resolved.read_text(encoding="utf-8")
    updated, problem = _apply_one_edit(text, args["old_string"], args["new_string"])
    if updated is None:
        return Observation(f"Edit failed: {problem}")
    resolved.write_text(updated, encoding="utf-8")
    return Observation(f"edited {rel}")


def _tool_multi_edit(ctx: ToolContext, args: dict) -> Observation:
    resolved, rel, failure = _load_for_edit(ctx, args["file_path"])
    if failure is not None:
        return failure
    # all edits apply to an in-memory copy; the file changes only if every
    # edit lands, so a half-applied sequence can never reach disk
    text = resolved.read_text(encoding="utf-8")
    for i, edit in enumerate(args["edits"], start=1):
        text, problem = _apply_one_edit(text, edit["old_string"], edit["new_string"])
        if text is None:
            return Observation(f"MultiEdit failed at edit {i}: {problem}; no edits applied")
    resolved.write_text(text, encoding="utf-8")
    return Observation(f"applied {len(args['edits'])} edits to {rel}")


def _tool_glob(ctx: ToolContext, args: dict) -> Observation:
    pattern = args["pattern"]
    if pattern.startswith("/") or ".." in pattern.split("/"):
        return Observation("Glob denied: escape", denied=True)
    root = ctx.ws.root
    matches = sorted(
        str(p.relative_to(root)) for p in root.glob(pattern) if p.is_file()
    )
    return Observation("\n".join(matches) if matches else "(no matches)")


def _tool_grep(ctx: ToolContext, args: dict) -> Observation:
    try:
        pattern = re.compile(args["pattern"])
    except re.error as e:
        return Observation(f"Grep failed: bad pattern: {e}")
    root = ctx.ws.root
    file_filter = args.get("glob", "**/*")
    if file_filter.startswith("/") or ".." in file_filter.split("/"):
        return Observation("Grep denied: escape", denied=True)
    hits = []
    for path in sorted(root.glob(file_filter)):
        if not path.is_file():
            continue
        try:
            text = path.read_text(encoding="utf-8")
        except (UnicodeDecodeError, OSError):
            continue
        rel = path.relative_to(root)
        for lineno, line in enumerate(text.splitlines(), start=1):
            if pattern.search(line):
                hits.append(f"{rel}:{lineno}:{line}")
    return Observation("\n".join(hits) if hits else "(no matches)")


def _tool_bash(ctx: ToolContext, args: dict) -> Observation:
    return Observation(ctx.bash.run(args["command"], args.get("background", False)))


def _tool_bash_output(ctx: ToolContext, args: dict) -> Observation:
    return Observation(ctx.bash.output_of(args["job_id"]))


def _tool_kill_bash(ctx: ToolContext, args: dict) -> Observation:
    return Observation(ctx.bash.kill(args["job_id"]))


_HANDLERS = {
    "Bash": _tool_bash,
    "Read": _tool_read,
    "Write": _tool_write,
    "Edit": _tool_edit,
    "MultiEdit": _tool_multi_edit,
    "Glob": _tool_glob,
    "Grep": _tool_grep,
    "BashOutput": _tool_bash_output,
    "KillBash": _tool_kill_bash,
}


def dispatch_tool(call: ToolCall, ctx: ToolContext) -> Observation:
    problem = validate_call(call)
    if problem is not None:
        return Observation(f"schema violation: {problem}", schema_ok=False)
    raw = _HANDLERS[call.tool](ctx, call.args)
    return Observation(
        text=truncate_observation(raw.text),
        schema_ok=raw.schema_ok,
        denied=raw.denied,
    )
