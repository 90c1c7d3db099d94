"""Model adapters: render the protocol's mask placeholder to each model's
native infilling sentinel and score target spans under teacher forcing.

The target log-probability is the sum over target tokens; label-word
probabilities are the product over the word's tokens in the mask slot.
Nothing here normalizes across candidates - that happens engine-side.
"""

from __future__ import annotations

import hashlib
import math

#: Mask placeholder of the wire protocol, rendered per model before encoding.
MASK = "«MASK»"

SUPPORTED_MODELS = (
    "stub",
    "pegasus-large",
    "bart-large",
    "t5-small",
    "t5-base",
    "t5-large",
)


class AdapterError(Exception):
    """Scoring failed in a way the protocol should report, not crash on."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ModelAdapter:
    """Base adapter. Subclasses set ``mask_sentinel`` and implement
    ``target_log_prob(source, target)``."""

    #: What the protocol mask renders to in the model's input.
    mask_sentinel = MASK
    #: Reported in the handshake so engine outputs record the convention.
    model_string = "unknown"

    def render_mask(self, input_pattern: str) -> str:
        if input_pattern.count(MASK) != 1:
            raise AdapterError("bad_request", "input must contain the mask exactly once")
        return input_pattern.replace(MASK, self.mask_sentinel)

    def target_log_prob(self, source: str, target: str) -> float:
        raise NotImplementedError

    def infill_log_prob(self, input_pattern: str, target: str) -> float:
        if not target:
            raise AdapterError("bad_request", "empty output target")
        return min(self.target_log_prob(self.render_mask(input_pattern), target), 0.0)

    def label_word_probs(self, input_pattern: str, candidates: list[str]) -> list[float]:
        if len(candidates) < 2:
            raise AdapterError("bad_request", "need at least two candidate words")
        source = self.render_mask(input_pattern)
        probs = []
        for word in candidates:
            if not word.strip():
                raise AdapterError("unencodable", f"blank candidate word: {word!r}")
            p = math.exp(self.target_log_prob(source, word))
            probs.append(min(max(p, 1e-300), 1.0))
        return probs


class StubAdapter(ModelAdapter):
    """Deterministic hash-driven scores for protocol testing; no model
    weights needed.  Values depend on the full (source, token) pair, so
    distinct requests get distinct but reproducible answers."""

    mask_sentinel = "<mask>"
    model_string = "stub (deterministic hash scores)"

    def __init__(self, seed: int = 0):
        self._key = seed.to_bytes(8, "little", signed=True)

    def _token_log_prob(self, source: str, token: str) -> float:
        digest = hashlib.blake2b(
            f"{source}\x00{token}".encode("utf-8"), key=self._key, digest_size=8
        ).digest()
        u = int.from_bytes(digest, "little") / 2.0**64
        # log-probs in roughly [-8, -0.1], never exactly zero
        return -0.1 - 7.9 * u

    def target_log_prob(self, source: str, target: str) -> float:
        return sum(self._token_log_prob(source, tok) for tok in target.split())


class _TransformersAdapter(ModelAdapter):
    """Shared teacher-forcing scorer over a Hugging Face seq2seq model."""

    hf_name = ""

    def __init__(self, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise AdapterError(
                "unavailable",
                f"model backend needs torch+transformers: {exc}",
            ) from exc
        self._torch = torch
        self.device = device
        self.tokenizer = AutoTokenizer.from_pretrained(self.hf_name)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(self.hf_name)
        self.model.to(device)
        self.model.eval()
        torch.use_deterministic_algorithms(True, warn_only=True)

    def _score_tokens(self, source: str, target_text: str, target_ids) -> float:
        torch = self._torch
        enc = self.tokenizer(source, return_tensors="pt", truncation=True).to(self.device)
        labels = target_ids.to(self.device)
        with torch.no_grad():
            out = self.model(**enc, labels=labels)
            log_probs = torch.log_softmax(out.logits, dim=-1)
            picked = log_probs[0].gather(1, labels[0].unsqueeze(1)).squeeze(1)
        return float(picked.sum())

    def target_log_prob(self, source: str, target: str) -> float:
        try:
            ids = self.tokenizer(
                text_target=target, return_tensors="pt", truncation=True
            ).input_ids
            if ids.numel() == 0:
                raise AdapterError("unencodable", f"target does not tokenize: {target!r}")
            return self._score_tokens(source, target, ids)
        except AdapterError:
            raise
        except RuntimeError as exc:  # pragma: no cover - device-dependent
            if "out of memory" in str(exc).lower():
                raise AdapterError("oom", str(exc)) from exc
            raise


class PegasusAdapter(_TransformersAdapter):
    hf_name = "google/pegasus-large"
    mask_sentinel = "<mask_1>"
    model_string = "pegasus-large (mask -> <mask_1>, gap-sentence convention)"


class BartAdapter(_TransformersAdapter):
    hf_name = "facebook/bart-large"
    mask_sentinel = "<mask>"
    model_string = "bart-large (mask -> <mask>, target-span scoring)"

    def target_log_prob(self, source: str, target: str) -> float:
        # BART reconstructs the full sequence; score only the target span's
        # tokens within the full reconstruction to keep protocol semantics.
        torch = self._torch
        full = source.replace(self.mask_sentinel, target)
        span_ids = self.tokenizer(
            text_target=" " + target, add_special_tokens=False, return_tensors="pt"
        ).input_ids[0].tolist()
        full_ids = self.tokenizer(text_target=full, return_tensors="pt").input_ids
        seq = full_ids[0].tolist()
        start = -1
        for i in range(len(seq) - len(span_ids) + 1):
            if seq[i: i + len(span_ids)] == span_ids:
                start = i
                break
        if start < 0:
            raise AdapterError("unencodable", "target span not found in reconstruction")
        enc = self.tokenizer(source, return_tensors="pt", truncation=True).to(self.device)
        labels = full_ids.to(self.device)
        with torch.no_grad():
            out = self.model(**enc, labels=labels)
            log_probs = torch.log_softmax(out.logits, dim=-1)
            picked = log_probs[0].gather(1, labels[0].unsqueeze(1)).squeeze(1)
        return float(picked[start: start + len(span_ids)].sum())


class T5Adapter(_TransformersAdapter):
    mask_sentinel = "<extra_id_0>"

    def __init__(self, size: str, device: str = "cpu"):
        self.hf_name = f"t5-{size}"
        self.model_string = f"t5-{size} (mask -> <extra_id_0>)"
        super().__init__(device)


def load_adapter(model: str, device: str = "cpu", seed: int = 0) -> ModelAdapter:
    if model == "stub":
        return StubAdapter(seed)
    if model == "pegasus-large":
        return PegasusAdapter(device)
    if model == "bart-large":
        return BartAdapter(device)
    if model.startswith("t5-") and model in SUPPORTED_MODELS:
        return T5Adapter(model[3:], device)
    raise AdapterError("bad_request", f"unsupported model: {model!r}")
