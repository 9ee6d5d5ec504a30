"""Backend wire protocol: newline-delimited JSON over stdio pipes or TCP.

Requests carry {"id": <int>, "op": "embed"|"predict"|"fine_tune"|"info", ...};
responses echo the id. Responses may arrive out of order; the client matches
them by id. Floats travel through json at full round-trip precision.

The client side (WireBackend) lets the engine drive any external adapter
process; serve_stream is the matching server loop for putting a local
backend behind the protocol.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import sys
from typing import IO, Sequence

import numpy as np

from .backend import Backend, SpanDistribution
from .data import QAInstance


class TransportError(RuntimeError):
    """Adapter process or connection is gone."""


class RemoteBackendError(RuntimeError):
    """Adapter answered with an error payload."""


def instance_payload(inst: QAInstance) -> dict:
    return {
        "id": inst.id,
        "question": inst.question,
        "context": inst.context,
        "answer_text": inst.gold_answer_text,
        "answer_start": inst.gold_answer_char_start,
    }


class WireBackend(Backend):
    """Protocol client implementing the backend contract over a byte stream."""

    def __init__(self, reader: IO[bytes], writer: IO[bytes], name: str = "wire",
                 proc: subprocess.Popen | None = None, sock: socket.socket | None = None):
        self._reader = reader
        self._writer = writer
        self._proc = proc
        self._sock = sock
        self._next_id = 0
        self._pending: dict[int, dict] = {}
        self.name = name
        self._t = 0
        try:
            info = self._call("info")
        except TransportError as e:
            raise TransportError(f"backend unreachable during handshake: {e}") from e
        self._dim = int(info["dim"])
        if "t" in info:
            self._t = int(info["t"])

    @classmethod
    def spawn(cls, command: str) -> "WireBackend":
        """Start an adapter child process speaking the protocol on its stdio."""
        try:
            proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as e:
            raise TransportError(f"cannot spawn adapter {command!r}: {e}") from e
        return cls(proc.stdout, proc.stdin, name=f"wire:cmd:{command}", proc=proc)

    @classmethod
    def connect_tcp(cls, host: str, port: int) -> "WireBackend":
        try:
            sock = socket.create_connection((host, port), timeout=30)
        except OSError as e:
            raise TransportError(f"cannot connect to {host}:{port}: {e}") from e
        reader = sock.makefile("rb")
        writer = sock.makefile("wb")
        return cls(reader, writer, name=f"wire:tcp:{host}:{port}", sock=sock)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def t(self) -> int:
        return self._t

    def _send(self, op: str, payload: dict) -> int:
        rid = self._next_id
        self._next_id += 1
        message = {"id": rid, "op": op, **payload}
        try:
            self._writer.write(json.dumps(message).encode("utf-8") + b"\n")
            self._writer.flush()
        except (BrokenPipeError, OSError, ValueError) as e:
            raise TransportError(f"write to adapter failed: {e}") from e
        return rid

    def _receive(self, rid: int) -> dict:
        while rid not in self._pending:
            try:
                line = self._reader.readline()
            except OSError as e:
                raise TransportError(f"read from adapter failed: {e}") from e
            if not line:
                raise TransportError("adapter closed the stream")
            if not line.strip():
                continue
            response = json.loads(line)
            self._pending[int(response["id"])] = response
        response = self._pending.pop(rid)
        if "error" in response:
            raise RemoteBackendError(str(response["error"]))
        return response

    def _call(self, op: str, **payload) -> dict:
        return self._receive(self._send(op, payload))

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("embed requires non-empty text")
        response = self._call("embed", text=text)
        return np.asarray(response["vector"], dtype=np.float64)

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Pipelined embed: all requests go out before any response is read."""
        rids = [self._send("embed", {"text": t}) for t in texts]
        return [
            np.asarray(self._receive(rid)["vector"], dtype=np.float64) for rid in rids
        ]

    def predict(self, question: str, context: str) -> SpanDistribution:
        if not question.strip() or not context.strip():
            raise ValueError("predict requires non-empty question and context")
        response = self._call("predict", question=question, context=context)
        return SpanDistribution(
            start_probs=np.asarray(response["start_probs"], dtype=np.float64),
            end_probs=np.asarray(response["end_probs"], dtype=np.float64),
            token_offsets=[tuple(o) for o in response["token_offsets"]],
        ).validate()

    def fine_tune(self, labeled: Sequence[QAInstance]) -> int:
        if not labeled:
            raise ValueError("fine_tune requires a non-empty batch")
        response = self._call(
            "fine_tune", instances=[instance_payload(i) for i in labeled]
        )
        self._t = int(response["t"])
        return self._t

    def close(self) -> None:
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except OSError:
                pass
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self) -> "WireBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _handle_request(backend: Backend, request: dict) -> dict:
    rid = request["id"]
    op = request.get("op")
    try:
        if op == "info":
            return {"id": rid, "dim": backend.dim, "t": backend.t}
        if op == "embed":
            vec = backend.embed(request["text"])
            return {"id": rid, "vector": vec.tolist()}
        if op == "predict":
            dist = backend.predict(request["question"], request["context"])
            return {
                "id": rid,
                "start_probs": dist.start_probs.tolist(),
                "end_probs": dist.end_probs.tolist(),
                "token_offsets": [list(o) for o in dist.token_offsets],
            }
        if op == "fine_tune":
            batch = [
                QAInstance(
                    id=i["id"],
                    question=i["question"],
                    context=i["context"],
                    gold_answer_text=i["answer_text"],
                    gold_answer_char_start=int(i["answer_start"]),
                )
                for i in request["instances"]
            ]
            return {"id": rid, "t": backend.fine_tune(batch)}
        return {"id": rid, "error": f"unknown op: {op!r}"}
    except Exception as e:  # adapter must stay alive on bad requests
        return {"id": rid, "error": f"{type(e).__name__}: {e}"}


def serve_stream(backend: Backend, reader: IO[bytes], writer: IO[bytes]) -> None:
    """Answer protocol requests from reader on writer until EOF."""
    for line in reader:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as e:
            writer.write(
                json.dumps({"id": None, "error": f"bad request json: {e.msg}"}).encode()
                + b"\n"
            )
            writer.flush()
            continue
        response = _handle_request(backend, request)
        writer.write(json.dumps(response).encode("utf-8") + b"\n")
        writer.flush()


def serve_stdio(backend: Backend) -> None:
    serve_stream(backend, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(backend: Backend, host: str, port: int, ready_out: IO[str] | None = None) -> None:
    """Listen, announce the bound port on ready_out, serve one connection."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        if ready_out is not None:
            ready_out.write(f"listening on {server.getsockname()[0]}:{server.getsockname()[1]}\n")
            ready_out.flush()
        conn, _ = server.accept()
        with conn:
            serve_stream(backend, conn.makefile("rb"), conn.makefile("wb"))
