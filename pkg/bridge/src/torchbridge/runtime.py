"""Torch materialization of operator graphs plus measured sessions.

Verification runs both graphs in float64 and compares with
|a - b| <= atol + rtol*|b| on five inputs seeded from the task; profiling
runs in the task's declared dtype with warmup iterations, a synchronization
barrier around every timing window, and the mean of the post-warmup
repeats reported. Verification always precedes profiling: an incorrect
candidate is never timed.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import torch

from .rewrites import Candidate, CandidateError, apply_candidate
from .taskspec import Graph, Task

VERIFY_SEED_COUNT = 5

_DTYPES = {"f32": torch.float32, "f64": torch.float64}


class BridgeError(RuntimeError):
    pass


def _stream_seed(*parts) -> int:
    h = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


def generate_inputs(
    graph: Graph, seed: int, dtype: torch.dtype, device: str
) -> list[torch.Tensor]:
    """Standard-normal per-input streams; non-seedable inputs are zeros.

    Stream k depends only on (seed, k). Draws happen on CPU so the values
    do not depend on the device the session runs on.
    """
    values = []
    for k, spec in enumerate(graph.inputs):
        if spec.seedable:
            g = torch.Generator().manual_seed(_stream_seed(seed, k))
            t = torch.randn(spec.shape, generator=g, dtype=torch.float64)
        else:
            t = torch.zeros(spec.shape, dtype=torch.float64)
        values.append(t.to(dtype=dtype, device=device))
    return values


def _run_node(node, args: list[torch.Tensor]) -> torch.Tensor:
    kind = node.kind
    if kind == "ew":
        op = node.params["op"]
        if op in ("add", "mul"):
            a, b = args
            if a.shape != b.shape:
                if a.dim() == 1:
                    a = a.reshape((a.shape[0],) + (1,) * (b.dim() - 1))
                else:
                    b = b.reshape((b.shape[0],) + (1,) * (a.dim() - 1))
            return a + b if op == "add" else a * b
        if op == "relu":
            return torch.relu(args[0])
        if op == "sigmoid":
            return torch.sigmoid(args[0])
        if op == "div_const":
            return args[0] / float(node.params["const"])
    if kind == "matmul":
        return args[0] @ args[1]
    if kind == "diag_matmul":
        return args[0].unsqueeze(1) * args[1]
    if kind == "reduction":
        fn = torch.sum if node.params["op"] == "sum" else torch.mean
        axis = node.params.get("axis")
        return fn(args[0]) if axis is None else fn(args[0], dim=axis)
    if kind == "scale":
        return args[0] * float(node.params["factor"])
    if kind == "conv":
        x = args[0]
        w = torch.as_tensor(node.params["weight"], dtype=x.dtype, device=x.device)
        out = torch.nn.functional.conv2d(
            x.unsqueeze(0).unsqueeze(0), w.unsqueeze(0).unsqueeze(0)
        )
        return out.squeeze(0).squeeze(0)
    raise BridgeError(f"node {node.id}: no torch lowering for kind {kind!r}")


def graph_callable(graph: Graph) -> Callable[..., list[torch.Tensor]]:
    """Positional-arg callable evaluating the graph; compile-friendly."""

    def run(*inputs: torch.Tensor) -> list[torch.Tensor]:
        env = {f"in{k}": v for k, v in enumerate(inputs)}
        for node in graph.nodes:
            env[node.id] = _run_node(node, [env[r] for r in node.inputs])
        return [env[r] for r in graph.outputs]

    return run


def outputs_close(
    got: list[torch.Tensor], want: list[torch.Tensor], atol: float, rtol: float
) -> bool:
    if len(got) != len(want):
        return False
    for g, w in zip(got, want):
        if g.shape != w.shape:
            return False
        if not bool(torch.all(torch.abs(g - w) <= atol + rtol * torch.abs(w))):
            return False
    return True


def failure_report(reason: str) -> dict:
    return {
        "correct": False,
        "candidate_ms": None,
        "eager_ms": None,
        "compile_ms": None,
        "per_input_verdicts": [False] * VERIFY_SEED_COUNT,
        "failure_reason": reason,
    }


@dataclass(frozen=True)
class BridgeSession:
    """One measurement context: a device, tolerances, and timing counts."""

    device: str = "cpu"
    atol: float = 1e-2
    rtol: float = 1e-2
    warmup: int = 5
    repeats: int = 20
    workspace: Optional[Path] = None
    compile_backend: str = "inductor"

    def banner(self) -> dict:
        return {
            "device": self.device,
            "torch": torch.__version__,
            "compile_backend": self.compile_backend,
            "warmup": self.warmup,
            "repeats": self.repeats,
            "atol": self.atol,
            "rtol": self.rtol,
        }

    def with_counts(self, warmup: Optional[int], repeats: Optional[int]) -> "BridgeSession":
        return replace(
            self,
            warmup=self.warmup if warmup is None else warmup,
            repeats=self.repeats if repeats is None else repeats,
        )

    def _sync(self) -> None:
        if self.device.startswith("cuda"):
            torch.cuda.synchronize(self.device)

    def _time(self, fn, args, clock=time.perf_counter) -> float:
        for _ in range(self.warmup):
            fn(*args)
        self._sync()
        samples = []
        for _ in range(self.repeats):
            start = clock()
            fn(*args)
            self._sync()
            samples.append((clock() - start) * 1000.0)
        return sum(samples) / len(samples)

    def _timing_inputs(self, task: Task) -> list[torch.Tensor]:
        dtype = _DTYPES.get(task.graph.inputs[0].dtype if task.graph.inputs else "f32",
                            torch.float32)
        return generate_inputs(
            task.graph, _stream_seed(task.base_seed, "profile"), dtype, self.device
        )

    def _compiled(self, graph: Graph):
        return torch.compile(graph_callable(graph), backend=self.compile_backend)

    def baselines(self, task: Task) -> tuple[float, float]:
        args = self._timing_inputs(task)
        eager_ms = self._time(graph_callable(task.graph), args)
        try:
            compiled = self._compiled(task.graph)
            compile_ms = self._time(compiled, args)
        except Exception as e:  # noqa: BLE001 - surfaced to the caller verbatim
            raise BridgeError(f"baseline compilation failed: {e}") from e
        return eager_ms, compile_ms

    def verify_graphs(self, reference: Graph, candidate: Graph, base_seed: int) -> list[bool]:
        """Per-seed verdicts in float64; any evaluation failure is a miss."""
        ref_fn = graph_callable(reference)
        cand_fn = graph_callable(candidate)
        verdicts = []
        for i in range(VERIFY_SEED_COUNT):
            seed = _stream_seed(base_seed, "verify", i)
            inputs = generate_inputs(reference, seed, torch.float64, self.device)
            want = ref_fn(*inputs)
            try:
                got = cand_fn(*inputs)
                ok = outputs_close(got, want, self.atol, self.rtol) and all(
                    bool(torch.all(torch.isfinite(t))) for t in got
                )
            except (RuntimeError, BridgeError, ValueError):
                ok = False
            verdicts.append(ok)
        return verdicts

    def measure(self, task: Task, candidate: Candidate) -> dict:
        """Full verify-then-profile flow; returns the report dict."""
        try:
            graph, _partition = apply_candidate(task.graph, candidate)
        except CandidateError as e:
            return failure_report(f"invalid candidate: {e}")

        verdicts = self.verify_graphs(task.graph, graph, task.base_seed)
        if not all(verdicts):
            return {
                "correct": False,
                "candidate_ms": None,
                "eager_ms": None,
                "compile_ms": None,
                "per_input_verdicts": verdicts,
                "failure_reason": f"verification failed on input seed {verdicts.index(False)}",
            }

        args = self._timing_inputs(task)
        try:
            built = self._compiled(graph)
            built(*args)
        except Exception as e:  # noqa: BLE001 - compiler output is the diagnosis
            return failure_report(f"compilation failed: {str(e)[:500]}")
        candidate_ms = self._time(built, args)
        eager_ms, compile_ms = self.baselines(task)
        return {
            "correct": True,
            "candidate_ms": candidate_ms,
            "eager_ms": eager_ms,
            "compile_ms": compile_ms,
            "per_input_verdicts": verdicts,
            "failure_reason": None,
        }
