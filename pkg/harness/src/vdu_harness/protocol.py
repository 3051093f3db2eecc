"""Wire protocol shared with the shift toolkit, implemented from its
published contract: newline-delimited JSON records, mandatory "version"
field, two request kinds.

  {"version": 1, "kind": "predict", "id": ..., "width": W, "height": H,
   "words": [{"text": ..., "box": [x1, y1, x2, y2]}, ...]}
  {"version": 1, "kind": "fill_mask", "words": [...], "mask_index": i, "k": k}

Responses carry {"labels": [...]}, {"candidates": [{"token", "score"}, ...]}
sorted by descending score, or {"error": ...}; all stamped with the version.
"""

from __future__ import annotations

import json
import socketserver
import sys

PROTOCOL_VERSION = 1


def validate_request(request) -> str | None:
    """Returns an error message for a bad request, None when well-formed."""
    if not isinstance(request, dict):
        return "request is not an object"
    if request.get("version") != PROTOCOL_VERSION:
        return f"unsupported version {request.get('version')!r}"
    kind = request.get("kind")
    if kind == "predict":
        words = request.get("words")
        if not isinstance(words, list):
            return "'words' must be a list"
        for i, word in enumerate(words):
            if not isinstance(word, dict) or not isinstance(word.get("text"), str):
                return f"words[{i}] needs a 'text' string"
            box = word.get("box")
            if (
                not isinstance(box, list) or len(box) != 4
                or not all(isinstance(v, (int, float)) for v in box)
            ):
                return f"words[{i}] needs a 4-number 'box'"
        return None
    if kind == "fill_mask":
        words = request.get("words")
        if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
            return "'words' must be a list of strings"
        if not words:
            return "'words' must be non-empty"
        index = request.get("mask_index")
        if not isinstance(index, int) or not 0 <= index < len(words):
            return f"'mask_index' out of range for {len(words)} words"
        k = request.get("k")
        if not isinstance(k, int) or k < 1:
            return "'k' must be a positive integer"
        return None
    return f"unknown request kind {kind!r}"


def handle_request(request, fill_mask=None, predict=None) -> dict:
    """Dispatches one parsed request to the configured backends.

    Backend callables: fill_mask(words, mask_index, k) -> [(token, score)]
    descending; predict(words) -> one label per word, where words is the
    request's list of {"text", "box"} records.
    """
    error = validate_request(request)
    if error is not None:
        return {"version": PROTOCOL_VERSION, "error": error}
    try:
        if request["kind"] == "fill_mask":
            if fill_mask is None:
                return {"version": PROTOCOL_VERSION, "error": "no masked-LM backend"}
            candidates = fill_mask(request["words"], request["mask_index"], request["k"])
            return {
                "version": PROTOCOL_VERSION,
                "candidates": [
                    {"token": token, "score": float(score)}
                    for token, score in candidates
                ],
            }
        if predict is None:
            return {"version": PROTOCOL_VERSION, "error": "no predictor backend"}
        labels = predict(request["words"])
        if len(labels) != len(request["words"]):
            return {
                "version": PROTOCOL_VERSION,
                "error": f"backend produced {len(labels)} labels for "
                         f"{len(request['words'])} words",
            }
        return {"version": PROTOCOL_VERSION, "labels": list(labels)}
    except Exception as err:  # noqa: BLE001 - a serving loop must not die
        return {"version": PROTOCOL_VERSION, "error": f"{type(err).__name__}: {err}"}


def serve_stream(reader, writer, fill_mask=None, predict=None) -> None:
    """Answer requests line by line until EOF."""
    for line in reader:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as err:
            response = {"version": PROTOCOL_VERSION, "error": f"invalid JSON: {err}"}
        else:
            response = handle_request(request, fill_mask=fill_mask, predict=predict)
        writer.write(json.dumps(response, ensure_ascii=False) + "\n")
        writer.flush()


def serve_stdio(fill_mask=None, predict=None) -> None:
    serve_stream(sys.stdin, sys.stdout, fill_mask=fill_mask, predict=predict)


def serve_tcp(host: str, port: int, fill_mask=None, predict=None, ready=None):
    """Blocking TCP server; one serialized request stream per connection."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            reader = (line.decode("utf-8") for line in self.rfile)

            class _Writer:
                def write(inner, text):
                    self.wfile.write(text.encode("utf-8"))

                def flush(inner):
                    self.wfile.flush()

            serve_stream(reader, _Writer(), fill_mask=fill_mask, predict=predict)

    server = socketserver.ThreadingTCPServer((host, port), Handler)
    if ready is not None:
        ready(server)
    with server:
        server.serve_forever()
