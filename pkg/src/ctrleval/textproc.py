"""Deterministic text processing: sentence segmentation, word tokenization
for frequency counting, and prefix stripping.

The sentence splitter is rule-based: it cuts after runs of ``. ! ?``
(plus closing quotes/brackets) that are followed by whitespace and an
upper-case letter, digit, or opening quote, unless the period belongs to a
known abbreviation or a single-letter initial.  The abbreviation list ships
with the package as a plain-text data file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .core import EvalInstance
from .errors import ValidationError

_BOUNDARY_RE = re.compile(r"[.!?]+[\"'”’)\]]*")
_OPENERS = "\"'“‘(["
_WORD_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*", re.UNICODE)
_TOKEN_RE = re.compile(r"\S+")
_INITIAL_RE = re.compile(r"^[A-Za-z]\.$")


def _load_abbreviations() -> frozenset[str]:
    text = resources.files("ctrleval.data").joinpath("abbreviations.txt").read_text("utf-8")
    entries = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            entries.add(line)
    return frozenset(entries)


ABBREVIATIONS = _load_abbreviations()


@dataclass(frozen=True)
class Sentence:
    text: str
    index: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("empty sentence")


def _is_abbreviation(text: str, period_end: int) -> bool:
    """True if the token ending at ``period_end`` is a known abbreviation
    or a single-letter initial (``J.``)."""
    m = re.search(r"\S+$", text[:period_end])
    if m is None:
        return False
    token = m.group()
    if _INITIAL_RE.match(token):
        return True
    low = token.lower()
    if low in ABBREVIATIONS:
        return True
    # two-token abbreviations such as "et al."
    m2 = re.search(r"\S+\s+\S+$", text[:period_end])
    if m2 is not None and m2.group().lower() in ABBREVIATIONS:
        return True
    return False


def _cut_points(text: str) -> list[int]:
    cuts = []
    for m in _BOUNDARY_RE.finditer(text):
        end = m.end()
        ws = re.match(r"\s+", text[end:])
        if ws is None:
            continue
        follow = text[end + ws.end(): end + ws.end() + 1]
        if not follow or not (follow.isupper() or follow.isdigit() or follow in _OPENERS):
            continue
        punct = m.group()
        if "." in punct and "!" not in punct and "?" not in punct:
            # pure-period run: respect abbreviations
            period_end = m.start() + len(punct.rstrip("\"'”’)]"))
            if _is_abbreviation(text, period_end):
                continue
        cuts.append(end)
    return cuts


def split_with_separators(text: str) -> tuple[list[str], list[str]]:
    """Split ``text`` into sentences plus the whitespace around them.

    Returns ``(sentences, separators)`` with ``len(separators) ==
    len(sentences) + 1`` such that ``separators[0] + sentences[0] +
    separators[1] + ...`` reproduces ``text`` byte-for-byte.
    """
    if not text.strip():
        raise ValidationError("empty text")
    bounds = [0] + _cut_points(text) + [len(text)]
    sentences: list[str] = []
    separators: list[str] = [""]
    for a, b in zip(bounds, bounds[1:]):
        chunk = text[a:b]
        stripped = chunk.strip()
        if not stripped:
            separators[-1] += chunk
            continue
        lead = len(chunk) - len(chunk.lstrip())
        trail = len(chunk) - len(chunk.rstrip())
        separators[-1] += chunk[:lead]
        sentences.append(chunk[lead: len(chunk) - trail])
        separators.append(chunk[len(chunk) - trail:])
    return sentences, separators


def segment_sentences(text: str) -> list[Sentence]:
    """Deterministic ordered sentence partition of ``text``."""
    sentences, _ = split_with_separators(text)
    return [Sentence(s, i) for i, s in enumerate(sentences)]


def tokenize_words(sentence: str) -> list[str]:
    """Lowercased alphanumeric tokens; internal apostrophes retained.

    May return an empty list for punctuation-only input.
    """
    if not sentence:
        raise ValidationError("empty sentence")
    return _WORD_RE.findall(sentence.lower())


def strip_prefix(instance_text: str, prefix: str) -> str:
    """Remove the literal content prefix, leaving the continuation.

    Matching normalizes runs of whitespace to single spaces but is
    case-sensitive.  The continuation keeps its original spacing.
    """
    prefix_tokens = prefix.split()
    if not prefix_tokens:
        raise ValidationError("prefix mismatch: empty prefix")
    text_tokens = list(_TOKEN_RE.finditer(instance_text))
    if len(text_tokens) < len(prefix_tokens):
        raise ValidationError("prefix mismatch")
    for want, have in zip(prefix_tokens, text_tokens):
        if want != have.group():
            raise ValidationError("prefix mismatch")
    if len(text_tokens) == len(prefix_tokens):
        raise ValidationError("empty continuation")
    return instance_text[text_tokens[len(prefix_tokens)].start():]


def trim_incomplete_last_sentence(text: str) -> str:
    """Drop a trailing sentence that lacks terminal punctuation.

    Applied only when at least one complete sentence remains; a
    single-sentence text is returned unchanged.
    """
    sentences, separators = split_with_separators(text)
    if len(sentences) < 2:
        return text
    last = sentences[-1].rstrip("\"'”’)]")
    if last and last[-1] in ".!?":
        return text
    kept = separators[0]
    for s, sep in zip(sentences[:-1], separators[1:-1]):
        kept += s + sep
    return kept.rstrip() if kept.strip() else text


def build_instance(prefix: str, label: str, generated_text: str) -> EvalInstance:
    """Construct a validated instance from the raw input triple."""
    sentences, separators = split_with_separators(generated_text)
    continuation = strip_prefix(generated_text, prefix)
    return EvalInstance(
        prefix=prefix,
        label=label,
        generated_text=generated_text,
        sentences=tuple(sentences),
        separators=tuple(separators),
        continuation=continuation,
    )
