import socket

import pytest

from torchbridge.server import PROTOCOL_VERSION, recv_frame, send_frame


def graph_dict(inputs, nodes, outputs):
    return {
        "inputs": [{"shape": list(s)} for s in inputs],
        "nodes": [
            {"id": i, "kind": k, "inputs": list(refs), "params": params}
            for i, k, refs, params in nodes
        ],
        "outputs": list(outputs),
    }


def task_dict(task_id, inputs, nodes, outputs, base_seed=3):
    d = graph_dict(inputs, nodes, outputs)
    d["task_id"] = task_id
    d["provenance"] = "seed"
    d["level_tag"] = None
    d["base_seed"] = base_seed
    return d


def diag_task(task_id="diag", n=16, m=8, base_seed=3):
    return task_dict(
        task_id,
        [(n,), (n, m)],
        [("d0", "diag_matmul", ["in0", "in1"], {})],
        ["d0"],
        base_seed=base_seed,
    )


def sum_dot_task(task_id="sumdot", a=8, k=6, b=5, op="sum", with_scale=False):
    nodes = [("m0", "matmul", ["in0", "in1"], {})]
    last = "m0"
    if with_scale:
        nodes.append(("s0", "scale", ["m0"], {"factor": 0.5}))
        last = "s0"
    nodes.append(("red", "reduction", [last], {"op": op, "axis": 1}))
    return task_dict(task_id, [(a, k), (k, b)], nodes, ["red"])


def fold_task(task_id="fold", n=32):
    return task_dict(
        task_id,
        [(n,)],
        [
            ("s0", "scale", ["in0"], {"factor": 1.5}),
            ("s1", "scale", ["s0"], {"factor": 0.25}),
        ],
        ["s1"],
    )


def fuse_task(task_id="fuse", n=8, m=8):
    return task_dict(
        task_id,
        [(n, m), (n, m)],
        [
            ("a0", "ew", ["in0", "in1"], {"op": "add"}),
            ("r0", "ew", ["a0"], {"op": "relu"}),
        ],
        ["r0"],
    )


def candidate_dict(rewrites=(), partition=None):
    return {
        "rewrites": [{"rule": r, "nodes": list(nodes)} for r, nodes in rewrites],
        "partition": None if partition is None else [list(g) for g in partition],
        "source_digest": "",
    }


class WireClient:
    """Minimal protocol client for exercising servers in tests."""

    def __init__(self, address: str):
        host, _, port = address.rpartition(":")
        self.sock = socket.create_connection((host, int(port)), timeout=30)
        send_frame(self.sock, {"op": "hello", "version": PROTOCOL_VERSION})
        ack = recv_frame(self.sock)
        assert ack.get("ok"), f"handshake rejected: {ack!r}"

    def call(self, request: dict) -> dict:
        send_frame(self.sock, request)
        return recv_frame(self.sock)

    def close(self) -> None:
        self.sock.close()


@pytest.fixture
def wire_client():
    clients = []

    def connect(address: str) -> WireClient:
        c = WireClient(address)
        clients.append(c)
        return c

    yield connect
    for c in clients:
        c.close()
