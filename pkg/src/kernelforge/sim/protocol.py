"""Length-delimited JSON wire protocol for out-of-process executors.

Frame: 4-byte big-endian payload length, then UTF-8 JSON. A session starts
with version negotiation ({"op": "hello", "version": 1}); afterwards the
client sends one request per frame and reads one response per frame.

Request ops and their responses:
  baselines {task}             -> {ok, eager_ms, compile_ms}
  verify    {task, candidate}  -> {ok, report: {measurement fields}}
  profile   {task, candidate}  -> {ok, candidate_ms}  (verify still runs
                                   first; failures come back as errors)
Optional per-request {"config": {...}} overrides cost-model parameters.

Errors: {"ok": false, "error": code, "message": str} with codes
"version", "protocol", "unsupported", "task", "candidate", "config",
"verification", "internal". A malformed frame gets a protocol error and the
connection is closed.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from typing import Any, Optional

from ..task.serialize import TaskFormatError, task_from_dict, task_to_dict
from .costmodel import CostModelParams
from .executor import BaselineTimes, MeasurementReport, SimulatedExecutor
from .rewrites import CandidateError, KernelCandidate

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 << 20
_LEN = struct.Struct(">I")


class ProtocolError(RuntimeError):
    pass


class ExecutorUnavailable(RuntimeError):
    """Connection refused, dropped, or timed out."""


def send_frame(sock: socket.socket, obj: Any) -> None:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError("frame too large")
    sock.sendall(_LEN.pack(len(payload)) + payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed connection")
        buf += chunk
    return buf


def recv_frame(sock: socket.socket) -> Any:
    (length,) = _LEN.unpack(_recv_exact(sock, 4))
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    payload = _recv_exact(sock, length)
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"bad frame payload: {e}") from e


def _error(code: str, message: str) -> dict:
    return {"ok": False, "error": code, "message": message}


def _handle_request(req: Any, params: CostModelParams) -> dict:
    if not isinstance(req, dict) or "op" not in req:
        return _error("protocol", "request must be an object with an op")
    op = req["op"]
    if op not in ("baselines", "verify", "profile"):
        return _error("unsupported", f"unknown op {op!r}")

    if "config" in req and req["config"] is not None:
        try:
            params = CostModelParams.from_dict({**params.to_dict(), **req["config"]})
        except (ValueError, TypeError) as e:
            return _error("config", str(e))
    executor = SimulatedExecutor(params)

    try:
        task = task_from_dict(req.get("task"))
    except (TaskFormatError, TypeError) as e:
        return _error("task", str(e))

    if op == "baselines":
        base = executor.baselines(task)
        return {"ok": True, "eager_ms": base.eager_ms, "compile_ms": base.compile_ms}

    try:
        candidate = KernelCandidate.from_dict(req.get("candidate"))
    except (CandidateError, TypeError) as e:
        return _error("candidate", str(e))

    report = executor.measure(task, candidate)
    if op == "verify":
        return {"ok": True, "report": report.to_dict()}
    if not report.correct:
        return _error("verification", report.failure_reason or "verification failed")
    return {"ok": True, "candidate_ms": report.candidate_ms}


def serve_connection(conn: socket.socket, params: CostModelParams) -> None:
    """Run one client session to completion; closes on protocol errors."""
    try:
        try:
            hello = recv_frame(conn)
        except ProtocolError as e:
            send_frame(conn, _error("protocol", str(e)))
            return
        if (
            not isinstance(hello, dict)
            or hello.get("op") != "hello"
            or not isinstance(hello.get("version"), int)
        ):
            send_frame(conn, _error("protocol", "expected hello frame"))
            return
        if hello["version"] != PROTOCOL_VERSION:
            send_frame(
                conn,
                _error("version", f"server speaks version {PROTOCOL_VERSION}"),
            )
            return
        send_frame(conn, {"ok": True, "op": "hello", "version": PROTOCOL_VERSION})

        while True:
            try:
                req = recv_frame(conn)
            except ConnectionError:
                return
            except ProtocolError as e:
                send_frame(conn, _error("protocol", str(e)))
                return
            try:
                send_frame(conn, _handle_request(req, params))
            except Exception as e:  # noqa: BLE001 - report, don't kill the server
                send_frame(conn, _error("internal", f"{type(e).__name__}: {e}"))
    finally:
        conn.close()


class ExecutorServer:
    """TCP server wrapping a SimulatedExecutor. One thread per connection."""

    def __init__(self, params: CostModelParams | None = None, host: str = "127.0.0.1", port: int = 0):
        self.params = params or CostModelParams()
        self._sock = socket.create_server((host, port))
        self.host, self.port = self._sock.getsockname()[:2]
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def serve_forever(self) -> None:
        self._sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(
                target=serve_connection, args=(conn, self.params), daemon=True
            )
            t.start()
        self._sock.close()

    def start(self) -> "ExecutorServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {address!r}")
    return host, int(port)


class RemoteExecutor:
    """Client side of the protocol; satisfies the Executor surface the
    episode loop needs (run_eager stays local-only by design)."""

    def __init__(self, address: str, timeout: float = 10.0):
        self.address = address
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None

    def _connect(self) -> socket.socket:
        if self._sock is not None:
            return self._sock
        host, port = parse_address(self.address)
        try:
            sock = socket.create_connection((host, port), timeout=self.timeout)
        except OSError as e:
            raise ExecutorUnavailable(f"cannot reach executor at {self.address}: {e}") from e
        try:
            send_frame(sock, {"op": "hello", "version": PROTOCOL_VERSION})
            ack = recv_frame(sock)
        except (OSError, ProtocolError) as e:
            sock.close()
            raise ExecutorUnavailable(f"handshake failed: {e}") from e
        if not (isinstance(ack, dict) and ack.get("ok")):
            sock.close()
            raise ExecutorUnavailable(f"handshake rejected: {ack!r}")
        self._sock = sock
        return sock

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def _call(self, request: dict) -> dict:
        sock = self._connect()
        try:
            send_frame(sock, request)
            resp = recv_frame(sock)
        except (OSError, ConnectionError, ProtocolError) as e:
            self.close()
            raise ExecutorUnavailable(f"executor call failed: {e}") from e
        if not isinstance(resp, dict):
            raise ExecutorUnavailable(f"malformed response: {resp!r}")
        return resp

    def baselines(self, task) -> BaselineTimes:
        resp = self._call({"op": "baselines", "task": task_to_dict(task)})
        if not resp.get("ok"):
            raise ExecutorUnavailable(f"baselines error: {resp.get('message')}")
        return BaselineTimes(eager_ms=resp["eager_ms"], compile_ms=resp["compile_ms"])

    def measure(self, task, candidate: KernelCandidate) -> MeasurementReport:
        resp = self._call(
            {"op": "verify", "task": task_to_dict(task), "candidate": candidate.to_dict()}
        )
        if not resp.get("ok"):
            raise ExecutorUnavailable(f"verify error: {resp.get('message')}")
        return MeasurementReport.from_dict(resp["report"])

    def run_eager(self, task, seed: int):
        raise NotImplementedError("eager evaluation is local-only")
