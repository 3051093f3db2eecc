"""Wire protocol for the prediction and masked-LM oracles.

Newline-delimited JSON request/response records, either over a local TCP
socket ("host:port") or the stdin/stdout pipe of a spawned subprocess
("exec:COMMAND").  Every record carries a mandatory "version" field.

Requests:
  {"version": 1, "kind": "predict", "id": ..., "width": W, "height": H,
   "words": [{"text": ..., "box": [x1, y1, x2, y2]}, ...]}
  {"version": 1, "kind": "fill_mask", "words": [...], "mask_index": i, "k": k}

Responses:
  {"version": 1, "labels": [...]}                       (predict)
  {"version": 1, "candidates": [{"token": ..., "score": ...}, ...]}
  {"version": 1, "error": "message"}                    (failure)
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
from typing import Sequence

from .errors import OracleError
from .model import Document

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


class OracleConnection:
    """One line-delimited JSON channel to an oracle process."""

    def __init__(self, address: str, timeout: float = DEFAULT_TIMEOUT):
        self.address = address
        self.timeout = timeout
        self._proc = None
        self._sock = None
        if address.startswith("exec:"):
            self._proc = subprocess.Popen(
                shlex.split(address[len("exec:"):]),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
            )
        else:
            host, _, port = address.rpartition(":")
            if not host or not port.isdigit():
                raise OracleError(f"bad oracle address {address!r}; expected host:port or exec:CMD")
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            except OSError as err:
                raise OracleError(f"cannot reach oracle at {address}: {err}") from err
            self._reader = self._sock.makefile("r", encoding="utf-8")
            self._writer = self._sock.makefile("w", encoding="utf-8")

    def request(self, payload: dict) -> dict:
        payload = dict(payload, version=PROTOCOL_VERSION)
        line = json.dumps(payload, ensure_ascii=False)
        try:
            if self._proc is not None:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
                raw = self._proc.stdout.readline()
            else:
                self._writer.write(line + "\n")
                self._writer.flush()
                raw = self._reader.readline()
        except (OSError, socket.timeout, BrokenPipeError) as err:
            raise OracleError(f"oracle I/O failure for request {payload.get('kind')}: {err}") from err
        if not raw:
            raise OracleError(f"oracle closed the connection ({self.address})")
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as err:
            raise OracleError(f"malformed oracle response: {err}") from err
        if not isinstance(response, dict):
            raise OracleError("oracle response is not an object")
        if response.get("version") != PROTOCOL_VERSION:
            raise OracleError(
                f"oracle protocol version {response.get('version')!r}, "
                f"expected {PROTOCOL_VERSION}"
            )
        if "error" in response:
            raise OracleError(f"oracle error: {response['error']}")
        return response

    def close(self) -> None:
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)
        if self._sock is not None:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class PredictorClient:
    """Prediction oracle: per-word labels for a document."""

    def __init__(self, connection: OracleConnection):
        self.connection = connection

    def predict(self, doc: Document) -> list[str]:
        response = self.connection.request({
            "kind": "predict",
            "id": doc.id,
            "width": doc.width,
            "height": doc.height,
            "words": [
                {"text": w.text, "box": w.box.as_list()} for w in doc.words
            ],
        })
        labels = response.get("labels")
        if not isinstance(labels, list) or not all(isinstance(v, str) for v in labels):
            raise OracleError("prediction response lacks a 'labels' list of strings")
        return labels


class MaskedLMClient:
    """Masked-LM oracle: top-k fillers for one masked word."""

    def __init__(self, connection: OracleConnection):
        self.connection = connection

    def fill_mask(self, words: Sequence[str], mask_index: int, k: int) -> list[tuple[str, float]]:
        response = self.connection.request({
            "kind": "fill_mask",
            "words": list(words),
            "mask_index": mask_index,
            "k": k,
        })
        raw = response.get("candidates")
        if not isinstance(raw, list):
            raise OracleError("fill-mask response lacks a 'candidates' list")
        candidates = []
        for item in raw:
            if (
                not isinstance(item, dict)
                or not isinstance(item.get("token"), str)
                or not isinstance(item.get("score"), (int, float))
            ):
                raise OracleError(f"malformed fill-mask candidate: {item!r}")
            candidates.append((item["token"], float(item["score"])))
        if any(candidates[i][1] < candidates[i + 1][1] for i in range(len(candidates) - 1)):
            raise OracleError("fill-mask candidates not sorted by descending score")
        return candidates


def serve_stdio(handler, stdin=None, stdout=None) -> None:
    """Answer protocol requests on stdin/stdout until EOF.

    `handler(request_dict) -> response_dict` need not set the version field.
    Used by scripted stub oracles in tests; production servers live in the
    separate harness package.
    """
    import sys

    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            if request.get("version") != PROTOCOL_VERSION:
                response = {"error": f"unsupported version {request.get('version')!r}"}
            else:
                response = handler(request)
        except Exception as err:  # noqa: BLE001 - stub servers must keep answering
            response = {"error": str(err)}
        response = dict(response, version=PROTOCOL_VERSION)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
