import io
import json
import random
import socket
import threading

from vdu_harness.protocol import (
    PROTOCOL_VERSION,
    handle_request,
    serve_stream,
    serve_tcp,
    validate_request,
)


def stub_fill_mask(words, index, k):
    return [(f"cand{i}", 1.0 - i * 0.1) for i in range(k)]


def stub_predict(words):
    return ["B-question"] * len(words)


def predict_request(n_words=3):
    return {
        "version": 1, "kind": "predict", "id": "d", "width": 100, "height": 100,
        "words": [{"text": f"w{i}", "box": [i, 0, i + 5, 10]} for i in range(n_words)],
    }


def mask_request(n_words=3, index=0, k=4):
    return {"version": 1, "kind": "fill_mask",
            "words": [f"w{i}" for i in range(n_words)],
            "mask_index": index, "k": k}


def test_validate_accepts_both_kinds():
    assert validate_request(predict_request()) is None
    assert validate_request(mask_request()) is None


def test_validate_rejects_malformed():
    cases = [
        "not a dict",
        {"kind": "predict"},                                 # missing version
        {"version": 2, "kind": "predict", "words": []},      # wrong version
        {"version": 1, "kind": "translate"},                 # unknown kind
        {"version": 1, "kind": "predict", "words": "x"},
        {"version": 1, "kind": "predict", "words": [{"box": [0, 0, 1, 1]}]},
        {"version": 1, "kind": "predict", "words": [{"text": "a", "box": [0, 0, 1]}]},
        {"version": 1, "kind": "fill_mask", "words": [], "mask_index": 0, "k": 1},
        {"version": 1, "kind": "fill_mask", "words": ["a"], "mask_index": 5, "k": 1},
        {"version": 1, "kind": "fill_mask", "words": ["a"], "mask_index": 0, "k": 0},
    ]
    for request in cases:
        assert validate_request(request) is not None, request


def test_handle_predict():
    response = handle_request(predict_request(4), predict=stub_predict)
    assert response == {"version": 1, "labels": ["B-question"] * 4}


def test_handle_fill_mask():
    response = handle_request(mask_request(k=3), fill_mask=stub_fill_mask)
    assert response["version"] == 1
    scores = [c["score"] for c in response["candidates"]]
    assert scores == sorted(scores, reverse=True)
    assert len(scores) == 3


def test_handle_missing_backend():
    response = handle_request(predict_request())
    assert "error" in response and response["version"] == 1


def test_handle_backend_exception_becomes_error():
    def broken(words):
        raise RuntimeError("weights corrupted")

    response = handle_request(predict_request(), predict=broken)
    assert "weights corrupted" in response["error"]
    assert response["version"] == 1


def test_handle_label_count_mismatch():
    response = handle_request(predict_request(3), predict=lambda words: ["O"])
    assert "1 labels for 3 words" in response["error"]


def test_fuzz_1000_valid_requests():
    rng = random.Random(42)
    for _ in range(1000):
        if rng.random() < 0.5:
            n = rng.randint(1, 12)
            request = predict_request(n)
            response = handle_request(request, fill_mask=stub_fill_mask,
                                      predict=stub_predict)
            assert response["version"] == PROTOCOL_VERSION
            assert len(response["labels"]) == n
            assert all(isinstance(l, str) for l in response["labels"])
        else:
            n = rng.randint(1, 12)
            request = mask_request(n, index=rng.randrange(n), k=rng.randint(1, 10))
            response = handle_request(request, fill_mask=stub_fill_mask,
                                      predict=stub_predict)
            assert response["version"] == PROTOCOL_VERSION
            scores = [c["score"] for c in response["candidates"]]
            assert scores == sorted(scores, reverse=True)
            assert all(isinstance(c["token"], str) for c in response["candidates"])


def test_serve_stream_round_trip():
    lines = [json.dumps(predict_request(2)), "not json", json.dumps(mask_request())]
    reader = io.StringIO("\n".join(lines) + "\n")
    writer = io.StringIO()
    serve_stream(reader, writer, fill_mask=stub_fill_mask, predict=stub_predict)
    responses = [json.loads(l) for l in writer.getvalue().splitlines()]
    assert len(responses) == 3
    assert responses[0]["labels"] == ["B-question"] * 2
    assert "invalid JSON" in responses[1]["error"]
    assert "candidates" in responses[2]
    assert all(r["version"] == 1 for r in responses)


def test_serve_tcp_round_trip():
    started = threading.Event()
    holder = {}

    def ready(server):
        holder["server"] = server
        started.set()

    thread = threading.Thread(
        target=serve_tcp,
        args=("127.0.0.1", 0),
        kwargs={"predict": stub_predict, "ready": ready},
        daemon=True,
    )
    thread.start()
    assert started.wait(5)
    server = holder["server"]
    try:
        with socket.create_connection(server.server_address, timeout=5) as sock:
            fh = sock.makefile("rw", encoding="utf-8")
            for _ in range(2):  # the stream stays open between requests
                fh.write(json.dumps(predict_request(2)) + "\n")
                fh.flush()
                response = json.loads(fh.readline())
                assert response["labels"] == ["B-question"] * 2
    finally:
        server.shutdown()
