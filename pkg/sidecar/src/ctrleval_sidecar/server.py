"""Protocol server: handshake, then one JSON response line per request
line.  Runs over any (reader, writer) text-stream pair - stdio when run as
a subprocess, or a socket file when bound to a TCP port."""

from __future__ import annotations

import json
import socketserver
import time
from dataclasses import dataclass

from .adapters import SUPPORTED_MODELS, AdapterError, ModelAdapter, load_adapter

PROTOCOL_NAME = "ctrleval-scorer/1"


@dataclass(frozen=True)
class SidecarConfig:
    model: str = "stub"
    device: str = "cpu"
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.model not in SUPPORTED_MODELS:
            raise ValueError(f"unsupported model: {self.model!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def _error(request_id, code: str, message: str) -> dict:
    return {"id": request_id, "error": {"code": code, "message": message}}


def handle_request(adapter: ModelAdapter, obj: dict) -> dict:
    request_id = obj.get("id")
    if request_id is None:
        return _error(None, "bad_request", "request has no id")
    op = obj.get("op")
    try:
        if op == "infill":
            value = adapter.infill_log_prob(str(obj.get("input", "")),
                                            str(obj.get("target", "")))
            return {"id": request_id, "log_prob": value}
        if op == "label_words":
            candidates = obj.get("candidates")
            if not isinstance(candidates, list):
                return _error(request_id, "bad_request", "candidates must be a list")
            probs = adapter.label_word_probs(str(obj.get("input", "")),
                                             [str(c) for c in candidates])
            return {"id": request_id, "probs": probs}
        return _error(request_id, "bad_op", f"unknown op: {op!r}")
    except AdapterError as exc:
        return _error(request_id, exc.code, str(exc))


def serve(config: SidecarConfig, reader, writer, adapter: ModelAdapter | None = None) -> None:
    """Answer protocol requests on the given streams until EOF.

    Requests are read in windows of up to ``batch_size`` available lines
    and may be answered out of request order; every response carries the
    request id."""
    if adapter is None:
        adapter = load_adapter(config.model, config.device, config.seed)

    def emit(obj: dict) -> None:
        writer.write(json.dumps(obj, ensure_ascii=False) + "\n")
        writer.flush()

    emit({"protocol": PROTOCOL_NAME, "model": adapter.model_string})
    while True:
        line = reader.readline()
        if not line:
            return
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            emit(_error(None, "bad_json", f"unparseable request line: {exc}"))
            continue
        if not isinstance(obj, dict):
            emit(_error(None, "bad_request", "request must be a JSON object"))
            continue
        emit(handle_request(adapter, obj))


def serve_tcp(config: SidecarConfig, host: str, port: int) -> None:
    """Accept one connection at a time and serve the protocol on it."""
    adapter = load_adapter(config.model, config.device, config.seed)

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            reader = self.rfile
            writer = self.wfile

            class _Text:
                def __init__(self, raw, mode):
                    self.raw = raw
                    self.mode = mode

                def readline(self):
                    return self.raw.readline().decode("utf-8")

                def write(self, text):
                    self.raw.write(text.encode("utf-8"))

                def flush(self):
                    self.raw.flush()

            serve(config, _Text(reader, "r"), _Text(writer, "w"), adapter=adapter)

    with socketserver.TCPServer((host, port), Handler) as server:
        server.serve_forever()


def selftest(config: SidecarConfig) -> dict:
    """One infill and one label_words request against the configured model;
    returns latencies and values for smoke-testing an installation."""
    adapter = load_adapter(config.model, config.device, config.seed)
    report = {"model": adapter.model_string}

    start = time.monotonic()
    infill = handle_request(adapter, {
        "id": "selftest-infill", "op": "infill",
        "input": "The movie was fun. «MASK»",
        "target": "We enjoyed it a lot.",
    })
    report["infill"] = {"latency_s": time.monotonic() - start,
                        "log_prob": infill.get("log_prob"),
                        "error": infill.get("error")}

    start = time.monotonic()
    labels = handle_request(adapter, {
        "id": "selftest-labels", "op": "label_words",
        "input": "The movie was fun. It was «MASK».",
        "candidates": ["good", "bad"],
    })
    report["label_words"] = {"latency_s": time.monotonic() - start,
                             "probs": labels.get("probs"),
                             "error": labels.get("error")}
    return report
