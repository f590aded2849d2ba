"""Fallback-call detection over submitted sources.

The ban is syntactic and deliberately conservative: a banned call spelled
inside a comment or a string still trips it. Catching dead text costs a
false positive on weird-but-honest sources; missing a live call costs a
reward exploit. The scan covers the files a submission could smuggle work
through: everything under kernels/, model_new.py, and the binding sources.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .workspace import Workspace

FALLBACK_PATTERNS = (
    re.compile(r"torch::\w+"),
    re.compile(r"\bat::\w+"),
    re.compile(r"torch\.nn\.functional"),
    re.compile(r"\bF\.\w+\s*\("),
)

SCANNED_RELATIVE = ("model_new.py", "binding.cpp", "binding_registry.h")


@dataclass(frozen=True)
class FallbackMatch:
    path: str
    line: int
    text: str


def detect_fallback_violation(source: str) -> tuple[bool, list[FallbackMatch]]:
    matches = []
    for lineno, line in enumerate(source.splitlines(), start=1):
        for pattern in FALLBACK_PATTERNS:
            m = pattern.search(line)
            if m:
                matches.append(FallbackMatch(path="", line=lineno, text=m.group(0)))
                break
    return bool(matches), matches


def scan_workspace_sources(ws: Workspace) -> list[FallbackMatch]:
    targets: list[Path] = []
    kernels = ws.root / "kernels"
    if kernels.is_dir():
        targets.extend(sorted(p for p in kernels.rglob("*") if p.is_file()))
    for rel in SCANNED_RELATIVE:
        p = ws.root / rel
        if p.is_file():
            targets.append(p)
    found = []
    for path in targets:
        try:
            text = path.read_text(encoding="utf-8")
        except (UnicodeDecodeError, OSError):
            continue
        violated, matches = detect_fallback_violation(text)
        if violated:
            rel = str(path.relative_to(ws.root))
            found.extend(
                FallbackMatch(path=rel, line=m.line, text=m.text) for m in matches
            )
    return found
