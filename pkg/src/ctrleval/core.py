"""Domain types shared by all modules and the weighted-ensemble combinator.

Every aspect score is a weighted sum of per-evaluator scores, where the
weights form a probability distribution over the evaluators of that aspect.
The combinator here is the single place where the weight-distribution
invariant is enforced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence, Union

from .errors import DegenerateWeightsError, ValidationError

#: Literal placeholder used in every input pattern.  Backends render it to
#: their model's native mask/sentinel convention.
MASK = "«MASK»"  # «MASK»

WEIGHT_SUM_TOL = 1e-9


class Aspect(str, Enum):
    COHERENCE = "coherence"
    CONSISTENCY = "consistency"
    ATTRIBUTE_RELEVANCE = "attribute_relevance"


@dataclass(frozen=True)
class EvalInstance:
    """One input triple: a content prefix, an attribute label, and the
    generated text, together with its sentence segmentation.

    ``separators`` holds the whitespace around and between sentences so the
    original text can be reconstructed byte-for-byte:
    ``separators[0] + sentences[0] + separators[1] + ... + separators[-1]``.
    ``continuation`` is the generated text with the literal prefix removed.
    """

    prefix: str
    label: str
    generated_text: str
    sentences: tuple[str, ...]
    separators: tuple[str, ...]
    continuation: str

    def __post_init__(self):
        if len(self.sentences) < 1:
            raise ValidationError("instance must contain at least one sentence")
        if len(self.separators) != len(self.sentences) + 1:
            raise ValidationError("separator list must bracket every sentence")
        for s in self.sentences:
            if not s.strip():
                raise ValidationError("empty sentence in instance")
        rebuilt = self.separators[0] + "".join(
            s + sep for s, sep in zip(self.sentences, self.separators[1:])
        )
        if rebuilt != self.generated_text:
            raise ValidationError("sentences do not partition the generated text")
        if not self.continuation.strip():
            raise ValidationError("empty continuation")

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class AttributeSet:
    """The ordered set of attribute labels a task distinguishes."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValidationError("attribute set needs at least two labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("attribute labels must be unique")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown attribute label: {label!r}") from None


#: Output side of a pattern evaluator: either a literal target span, or a
#: label -> verbalized-word map for attribute relevance.
OutputTarget = Union[str, Mapping[str, str]]


@dataclass(frozen=True)
class PatternEvaluator:
    """A rendered (input pattern, output target) pair.

    The input pattern contains the :data:`MASK` placeholder exactly once;
    the output target is the span (or label-word map) the backend should
    produce in the mask slot.
    """

    id: str
    input_pattern: str
    output_target: OutputTarget

    def __post_init__(self):
        if self.input_pattern.count(MASK) != 1:
            raise ValidationError(
                f"evaluator {self.id!r}: input pattern must contain {MASK} exactly once"
            )
        if not self.output_target:
            raise ValidationError(f"evaluator {self.id!r}: empty output target")


@dataclass(frozen=True)
class WeightedScore:
    evaluator_id: str
    raw_score: float
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValidationError(f"evaluator {self.evaluator_id!r}: negative weight")


@dataclass(frozen=True)
class AspectScore:
    aspect: Aspect
    value: float
    parts: tuple[WeightedScore, ...] = field(default_factory=tuple)


def normalize_weights(raw: Sequence[float]) -> list[float]:
    """Scale nonnegative raw weights into a distribution summing to one.

    Raises :class:`DegenerateWeightsError` when every entry is zero.
    """
    if not raw:
        raise ValidationError("no weights to normalize")
    if any(w < 0 for w in raw):
        raise ValidationError("negative raw weight")
    total = sum(raw)
    if total <= 0:
        raise DegenerateWeightsError("degenerate weights")
    return [w / total for w in raw]


def ensemble(parts: Sequence[WeightedScore]) -> float:
    """Weighted sum of evaluator scores under a valid weight distribution."""
    if not parts:
        raise ValidationError("no evaluators")
    total = sum(p.weight for p in parts)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValidationError(f"unnormalized weights (sum={total!r})")
    return sum(p.weight * p.raw_score for p in parts)
