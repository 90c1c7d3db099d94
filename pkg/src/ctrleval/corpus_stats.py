"""Inverse-word-frequency statistics over a general corpus.

A table records how many corpus sentences contain each word (set
semantics: a word counts once per sentence) plus the total sentence count.
From it we derive

  IWF(w)  = log(1 + |C|) / max(f_w, 1)
  ISF(s)  = max over words w in s of IWF(w)
  NISF    = the ISF values of a unit list, normalized to sum to one.

Unseen words use the f_w = 1 floor, i.e. the maximum IWF: they are
maximally specific, and the floor avoids division by zero.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from . import textproc
from .core import normalize_weights
from .errors import (
    MalformedHeaderError,
    TruncatedFileError,
    ValidationError,
    VersionMismatchError,
)

TABLE_MAGIC = b"IWF1"


@dataclass(frozen=True)
class IwfTable:
    corpus_sentence_count: int
    frequencies: dict[str, int] = field(default_factory=dict)
    version: str = "IWF1"

    def __post_init__(self):
        if self.corpus_sentence_count < 0:
            raise ValidationError("negative corpus size")
        for word, f in self.frequencies.items():
            if not (1 <= f <= self.corpus_sentence_count):
                raise ValidationError(
                    f"frequency of {word!r} out of range [1, |C|]: {f}"
                )

    @property
    def usable(self) -> bool:
        return self.corpus_sentence_count >= 1


def _sentences_from_stream(lines: Iterable[str], per_line_sentences: bool) -> Iterator[str]:
    for line in lines:
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if per_line_sentences:
            yield line
        else:
            for s in textproc.segment_sentences(line):
                yield s.text


def build_iwf_table(corpus_stream: Iterable[str], per_line_sentences: bool = True) -> IwfTable:
    """Single streaming pass over the corpus; memory bounded by vocabulary.

    ``per_line_sentences=True`` treats each input line as one sentence;
    otherwise lines are segmented first.
    """
    counts: dict[str, int] = {}
    n = 0
    for sentence in _sentences_from_stream(corpus_stream, per_line_sentences):
        n += 1
        for word in set(textproc.tokenize_words(sentence)):
            counts[word] = counts.get(word, 0) + 1
    if n == 0:
        raise ValidationError("empty corpus")
    return IwfTable(corpus_sentence_count=n, frequencies=counts)


def merge_tables(a: IwfTable, b: IwfTable) -> IwfTable:
    """Combine per-shard tables: sentence counts and frequencies add."""
    counts = dict(a.frequencies)
    for word, f in b.frequencies.items():
        counts[word] = counts.get(word, 0) + f
    return IwfTable(
        corpus_sentence_count=a.corpus_sentence_count + b.corpus_sentence_count,
        frequencies=counts,
    )


def iwf(table: IwfTable, word: str) -> float:
    """Inverse word frequency; strictly positive, floored at f_w = 1."""
    if not table.usable:
        raise ValidationError("unusable table: empty corpus")
    f = max(table.frequencies.get(word.lower(), 0), 1)
    return math.log(1 + table.corpus_sentence_count) / f


def isf(table: IwfTable, sentence: str) -> float:
    """Inverse sentence frequency: the maximum IWF over the sentence's words."""
    words = textproc.tokenize_words(sentence)
    if not words:
        raise ValidationError("untokenizable sentence")
    return max(iwf(table, w) for w in words)


def nisf_weights(table: IwfTable, units: Sequence[str]) -> list[float]:
    """Normalized ISF distribution over a list of text units."""
    if not units:
        raise ValidationError("no units")
    return normalize_weights([isf(table, u) for u in units])


# ---------------------------------------------------------------------------
# Persistence: little-endian binary format
#   magic "IWF1" | u64 |C| | u64 vocab size | repeated (varint len, word, u64)
# ---------------------------------------------------------------------------


def _write_varint(out: IO[bytes], value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.write(bytes([byte | 0x80]))
        else:
            out.write(bytes([byte]))
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise TruncatedFileError("truncated file: varint cut short")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def save_table(table: IwfTable, path: str | Path) -> None:
    with open(path, "wb") as out:
        out.write(TABLE_MAGIC)
        out.write(struct.pack("<QQ", table.corpus_sentence_count, len(table.frequencies)))
        for word, count in table.frequencies.items():
            encoded = word.encode("utf-8")
            _write_varint(out, len(encoded))
            out.write(encoded)
            out.write(struct.pack("<Q", count))


def load_table(path: str | Path) -> IwfTable:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise MalformedHeaderError("malformed header: file too short")
    magic = data[:4]
    if magic != TABLE_MAGIC:
        if magic[:3] == TABLE_MAGIC[:3]:
            raise VersionMismatchError(
                f"version mismatch: found {magic.decode('ascii', 'replace')!r}"
            )
        raise MalformedHeaderError("malformed header: bad magic")
    if len(data) < 20:
        raise MalformedHeaderError("malformed header: missing counts")
    corpus_size, vocab_size = struct.unpack_from("<QQ", data, 4)
    pos = 20
    counts: dict[str, int] = {}
    for _ in range(vocab_size):
        length, pos = _read_varint(data, pos)
        if pos + length + 8 > len(data):
            raise TruncatedFileError("truncated file: entry cut short")
        word = data[pos: pos + length].decode("utf-8")
        pos += length
        (count,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        counts[word] = count
    try:
        return IwfTable(corpus_sentence_count=corpus_size, frequencies=counts)
    except ValidationError as exc:
        raise MalformedHeaderError(f"malformed header: {exc}") from exc


def export_json(table: IwfTable, path: str | Path) -> None:
    """Human-readable debug export; not the canonical persistence format."""
    payload = {"corpus_size": table.corpus_sentence_count, "counts": table.frequencies}
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True), "utf-8")
