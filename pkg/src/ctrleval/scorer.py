"""Scorer backends: the contract abstracting the text-infilling model,
a deterministic mock for offline testing, and the JSON-lines client to an
external model sidecar.

Backends answer two request kinds:

* infill: log-probability of a target span in the mask slot of an input
  pattern (summed over the target's tokens, never length-normalized);
* label words: unnormalized generation probability of each candidate word
  in the mask slot.
"""

from __future__ import annotations

import hashlib
import json
import shlex
import socket
import subprocess
import uuid
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import MASK
from .errors import ProtocolError, TransportError, ValidationError

PROTOCOL_NAME = "ctrleval-scorer/1"

#: Total smoothing mass of the mock model; the per-token floor is EPS / V.
MOCK_SMOOTHING = 1e-6


@dataclass(frozen=True)
class InfillRequest:
    request_id: str
    input_pattern: str
    output_target: str

    def __post_init__(self):
        if self.input_pattern.count(MASK) != 1:
            raise ValidationError("input pattern must contain the mask exactly once")
        if not self.output_target:
            raise ValidationError("empty output target")


@dataclass(frozen=True)
class LabelWordsRequest:
    request_id: str
    input_pattern: str
    candidate_words: tuple[str, ...]

    def __post_init__(self):
        if self.input_pattern.count(MASK) != 1:
            raise ValidationError("input pattern must contain the mask exactly once")
        if len(self.candidate_words) < 2:
            raise ValidationError("need at least two candidate words")
        if len(set(self.candidate_words)) != len(self.candidate_words):
            raise ValidationError("candidate words must be unique")


class ScorerBackend(Protocol):
    def infill_log_prob(self, request: InfillRequest) -> float: ...

    def label_word_probs(self, request: LabelWordsRequest) -> list[float]: ...


def score_infill(backend: ScorerBackend, request: InfillRequest) -> float:
    """log P(target | input pattern); validated to be <= 0."""
    value = backend.infill_log_prob(request)
    if value > 1e-9:
        raise ProtocolError(
            f"backend returned positive log-probability {value}", request.request_id
        )
    return min(value, 0.0)


def score_label_words(backend: ScorerBackend, request: LabelWordsRequest) -> list[float]:
    """P(word | input pattern) per candidate, each in (0, 1], unnormalized."""
    probs = list(backend.label_word_probs(request))
    if len(probs) != len(request.candidate_words):
        raise ProtocolError("candidate/probability length mismatch", request.request_id)
    for p in probs:
        if not (0.0 < p <= 1.0):
            raise ProtocolError(f"probability out of range: {p}", request.request_id)
    return probs


# ---------------------------------------------------------------------------
# Mock backend: a seeded, smoothed bigram model over a fixed vocabulary
# ---------------------------------------------------------------------------

_BOS = "\x02"


class MockBackend:
    """Deterministic bigram model for desk-scale testing.

    Next-token distributions are derived from a keyed hash of
    (seed, previous token), smoothed so every in-vocabulary token gets at
    least ``MOCK_SMOOTHING / V`` mass and the distribution sums to one.
    Out-of-vocabulary tokens receive exactly the floor mass.  Identical
    (seed, vocab, request) triples yield bit-identical outputs.
    """

    def __init__(self, seed: int, vocab: Sequence[str]):
        if not vocab:
            raise ValidationError("empty vocabulary")
        self.seed = seed
        self.vocab = tuple(dict.fromkeys(vocab))
        self._index = {w: i for i, w in enumerate(self.vocab)}
        self._key = seed.to_bytes(8, "little", signed=True)
        self._dists: dict[str, np.ndarray] = {}

    def _distribution(self, prev: str) -> np.ndarray:
        dist = self._dists.get(prev)
        if dist is None:
            raw = np.empty(len(self.vocab))
            for i, word in enumerate(self.vocab):
                digest = hashlib.blake2b(
                    f"{prev}\x00{word}".encode("utf-8"), key=self._key, digest_size=8
                ).digest()
                raw[i] = int.from_bytes(digest, "little") / 2.0**64
            dist = (1.0 - MOCK_SMOOTHING) * raw / raw.sum() + MOCK_SMOOTHING / len(self.vocab)
            self._dists[prev] = dist
        return dist

    def token_prob(self, prev: str, token: str) -> float:
        i = self._index.get(token)
        if i is None:
            return MOCK_SMOOTHING / len(self.vocab)
        return float(self._distribution(prev)[i])

    def _context_token(self, input_pattern: str) -> str:
        before = input_pattern.split(MASK)[0].split()
        return before[-1] if before else _BOS

    def _chain_log_prob(self, prev: str, tokens: Sequence[str]) -> float:
        total = 0.0
        for tok in tokens:
            total += float(np.log(self.token_prob(prev, tok)))
            prev = tok
        return total

    def infill_log_prob(self, request: InfillRequest) -> float:
        prev = self._context_token(request.input_pattern)
        return self._chain_log_prob(prev, request.output_target.split())

    def label_word_probs(self, request: LabelWordsRequest) -> list[float]:
        prev = self._context_token(request.input_pattern)
        probs = []
        for word in request.candidate_words:
            tokens = word.split()
            probs.append(float(np.exp(self._chain_log_prob(prev, tokens))))
        return probs


class UniformBackend:
    """Uniform unigram model over a vocabulary of size V: every token has
    probability 1/V regardless of context.  Useful for closed-form tests."""

    def __init__(self, vocab_size: int):
        if vocab_size < 1:
            raise ValidationError("vocabulary size must be positive")
        self.vocab_size = vocab_size

    def infill_log_prob(self, request: InfillRequest) -> float:
        n_tokens = len(request.output_target.split())
        return n_tokens * float(np.log(1.0 / self.vocab_size))

    def label_word_probs(self, request: LabelWordsRequest) -> list[float]:
        return [
            (1.0 / self.vocab_size) ** len(word.split())
            for word in request.candidate_words
        ]


def mock_backend(seed: int, vocab: Sequence[str]) -> MockBackend:
    return MockBackend(seed, vocab)


# ---------------------------------------------------------------------------
# Remote backend: JSON-lines protocol over stdio (subprocess) or TCP
# ---------------------------------------------------------------------------


class RemoteBackend:
    """Client for a model sidecar speaking the JSON-lines scorer protocol.

    Endpoint specs:
      ``cmd:<command line>``  spawn a subprocess and talk over stdio
      ``tcp:<host>:<port>``   connect to a listening sidecar
    """

    def __init__(self, endpoint: str, batch_window: int = 16, timeout: float = 300.0):
        self.endpoint = endpoint
        self.batch_window = max(1, batch_window)
        self._proc = None
        self._sock = None
        try:
            if endpoint.startswith("cmd:"):
                self._proc = subprocess.Popen(
                    shlex.split(endpoint[4:]),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                )
                self._writer = self._proc.stdin
                self._reader = self._proc.stdout
            elif endpoint.startswith("tcp:"):
                host, _, port = endpoint[4:].rpartition(":")
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
                stream = self._sock.makefile("rw", encoding="utf-8", newline="\n")
                self._writer = stream
                self._reader = stream
            else:
                raise ValidationError(f"unrecognized endpoint spec: {endpoint!r}")
        except (OSError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise TransportError(f"cannot reach scorer endpoint {endpoint!r}: {exc}",
                                 retriable=True) from exc
        self.model = self._handshake()

    def _handshake(self) -> str:
        line = self._read_line()
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"bad handshake line: {line!r}") from exc
        if obj.get("protocol") != PROTOCOL_NAME:
            raise ProtocolError(f"unsupported protocol: {obj.get('protocol')!r}")
        return str(obj.get("model", "unknown"))

    def _read_line(self) -> str:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise TransportError(f"read failed: {exc}", retriable=True) from exc
        if not line:
            raise TransportError("scorer stream closed", retriable=False)
        return line

    def _write_line(self, obj: dict) -> None:
        try:
            self._writer.write(json.dumps(obj, ensure_ascii=False) + "\n")
            self._writer.flush()
        except (OSError, BrokenPipeError) as exc:
            raise TransportError(f"write failed: {exc}", retriable=False) from exc

    def submit(self, wire_requests: Sequence[dict]) -> dict[str, dict]:
        """Send a batch of wire objects; collect one response per id.

        Responses may arrive in any order; correlation is by id.  Batches
        are chunked to the configured in-flight window.
        """
        results: dict[str, dict] = {}
        for start in range(0, len(wire_requests), self.batch_window):
            chunk = wire_requests[start: start + self.batch_window]
            pending = set()
            for obj in chunk:
                self._write_line(obj)
                pending.add(obj["id"])
            while pending:
                line = self._read_line()
                try:
                    resp = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ProtocolError(f"unparseable response: {line!r}") from exc
                rid = resp.get("id")
                if rid not in pending:
                    raise ProtocolError(f"unexpected response id: {rid!r}", rid)
                pending.discard(rid)
                results[rid] = resp
        return results

    @staticmethod
    def _check_error(resp: dict) -> None:
        err = resp.get("error")
        if err is not None:
            code = err.get("code", "unknown")
            message = err.get("message", "")
            if code in ("timeout", "overloaded"):
                raise TransportError(f"{code}: {message}", retriable=True,
                                     request_id=resp.get("id"))
            raise ProtocolError(f"{code}: {message}", resp.get("id"))

    def infill_log_prob(self, request: InfillRequest) -> float:
        rid = request.request_id or uuid.uuid4().hex
        resp = self.submit([{"id": rid, "op": "infill",
                             "input": request.input_pattern,
                             "target": request.output_target}])[rid]
        self._check_error(resp)
        if "log_prob" not in resp:
            raise ProtocolError("infill response missing log_prob", rid)
        return float(resp["log_prob"])

    def label_word_probs(self, request: LabelWordsRequest) -> list[float]:
        rid = request.request_id or uuid.uuid4().hex
        resp = self.submit([{"id": rid, "op": "label_words",
                             "input": request.input_pattern,
                             "candidates": list(request.candidate_words)}])[rid]
        self._check_error(resp)
        if "probs" not in resp:
            raise ProtocolError("label_words response missing probs", rid)
        return [float(p) for p in resp["probs"]]

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.wait(timeout=10)
        if self._sock is not None:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def remote_backend(endpoint: str, **kwargs) -> RemoteBackend:
    return RemoteBackend(endpoint, **kwargs)


def backend_from_spec(spec: str, vocab: Sequence[str] | None = None) -> ScorerBackend:
    """Parse a backend spec string: ``mock:<seed>`` or one of the remote
    endpoint forms (``cmd:...``, ``tcp:host:port``)."""
    if spec.startswith("mock:"):
        try:
            seed = int(spec[5:])
        except ValueError:
            raise ValidationError(f"bad mock seed in spec {spec!r}") from None
        if not vocab:
            raise ValidationError("mock backend needs a vocabulary")
        return MockBackend(seed, vocab)
    if spec.startswith(("cmd:", "tcp:")):
        return RemoteBackend(spec)
    raise ValidationError(f"unrecognized scorer spec: {spec!r}")
