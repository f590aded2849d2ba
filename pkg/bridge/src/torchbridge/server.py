"""Socket server speaking the executor wire protocol.

Frame: 4-byte big-endian payload length, then UTF-8 JSON. Session opens
with {"op": "hello", "version": 1}; afterwards one request per frame, one
response per frame.

  baselines {task}            -> {ok, eager_ms, compile_ms}
  verify    {task, candidate} -> {ok, report}
  profile   {task, candidate} -> {ok, candidate_ms}; failed verification
                                 comes back as an error frame

Optional per-request {"config": {"warmup": int, "repeats": int}} adjusts
timing counts for that request only. Error frames are
{"ok": false, "error": code, "message": str} with the shared code set:
version, protocol, unsupported, task, candidate, config, verification,
internal.
"""

from __future__ import annotations

import argparse
import json
import socket
import struct
import threading
from typing import Any, Optional

from .rewrites import CandidateError, parse_candidate
from .runtime import BridgeError, BridgeSession
from .taskspec import TaskError, parse_task

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 << 20
_LEN = struct.Struct(">I")


class ProtocolError(RuntimeError):
    pass


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


def _session_for_request(req: dict, session: BridgeSession) -> BridgeSession:
    config = req.get("config")
    if config is None:
        return session
    if not isinstance(config, dict):
        raise ValueError("config must be an object")
    unknown = set(config) - {"warmup", "repeats"}
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    for key in ("warmup", "repeats"):
        if key in config and (not isinstance(config[key], int) or config[key] < 0):
            raise ValueError(f"{key} must be a nonnegative integer")
    if config.get("repeats") == 0:
        raise ValueError("repeats must be positive")
    return session.with_counts(config.get("warmup"), config.get("repeats"))


def handle_request(req: Any, session: BridgeSession) -> dict:
    if not isinstance(req, dict) or "op" not in req:
        return _error("protocol", "request must be an object with an op")
    op = req["op"]
    if op not in ("baselines", "verify", "profile"):
        return _error("unsupported", f"unknown op {op!r}")

    try:
        session = _session_for_request(req, session)
    except ValueError as e:
        return _error("config", str(e))

    try:
        task = parse_task(req.get("task"))
    except (TaskError, TypeError) as e:
        return _error("task", str(e))

    if op == "baselines":
        eager_ms, compile_ms = session.baselines(task)
        return {"ok": True, "eager_ms": eager_ms, "compile_ms": compile_ms}

    try:
        candidate = parse_candidate(req.get("candidate"))
    except (CandidateError, TypeError) as e:
        return _error("candidate", str(e))

    report = session.measure(task, candidate)
    if op == "verify":
        return {"ok": True, "report": report}
    if not report["correct"]:
        return _error("verification", report["failure_reason"] or "verification failed")
    return {"ok": True, "candidate_ms": report["candidate_ms"]}


def serve_connection(conn: socket.socket, session: BridgeSession) -> None:
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
            send_frame(conn, _error("version", f"server speaks version {PROTOCOL_VERSION}"))
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
                send_frame(conn, handle_request(req, session))
            except BridgeError as e:
                send_frame(conn, _error("internal", str(e)))
            except Exception as e:  # noqa: BLE001 - report, don't kill the session
                send_frame(conn, _error("internal", f"{type(e).__name__}: {e}"))
    finally:
        conn.close()


class BridgeServer:
    """One measurement session served over TCP, one thread per connection.

    Requests within a connection are handled serially; bind one server per
    device when running a pool.
    """

    def __init__(
        self,
        session: BridgeSession | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.session = session or BridgeSession()
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
                target=serve_connection, args=(conn, self.session), daemon=True
            )
            t.start()
        self._sock.close()

    def start(self) -> "BridgeServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)


def serve(endpoint: str, session: BridgeSession | None = None) -> None:
    """Blocking serve on host:port (port 0 picks a free one)."""
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {endpoint!r}")
    server = BridgeServer(session, host=host, port=int(port))
    print(f"serving torch bridge on {server.address}", flush=True)
    print(f"session: {json.dumps(server.session.banner(), sort_keys=True)}", flush=True)
    server.serve_forever()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="torch-backed executor server")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=0)
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--warmup", type=int, default=5)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--compile-backend", default="inductor")
    args = ap.parse_args(argv)
    session = BridgeSession(
        device=args.device,
        warmup=args.warmup,
        repeats=args.repeats,
        compile_backend=args.compile_backend,
    )
    try:
        serve(f"{args.host}:{args.port}", session)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
