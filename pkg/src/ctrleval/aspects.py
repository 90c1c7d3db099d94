"""Pattern evaluators and aspect scoring.

Coherence masks each sentence of the generated text in turn and scores its
reconstruction, weighted by the sentence's normalized inverse sentence
frequency.  Consistency uses two symmetric prefix/continuation evaluators.
Attribute relevance renders a catalog of prompt templates, asks the backend
for the generation probability of every verbalized label word in the mask
slot, and weights each evaluator by its total label-word probability mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import corpus_stats
from .core import (
    MASK,
    Aspect,
    AspectScore,
    AttributeSet,
    EvalInstance,
    PatternEvaluator,
    WeightedScore,
    ensemble,
    normalize_weights,
)
from .corpus_stats import IwfTable
from .errors import CatalogError, CtrlEvalError, ScoringError, ValidationError
from .scorer import (
    InfillRequest,
    LabelWordsRequest,
    ScorerBackend,
    score_infill,
    score_label_words,
)

TEXT_SLOT = "{TEXT}"
MASK_SLOT = "{MASK}"

PLACEMENTS = ("text_first", "prompt_first")

BUILTIN_TASKS = ("sentiment", "topic")


@dataclass(frozen=True)
class Verbalizer:
    """Maps every attribute label to a single natural-language word."""

    id: str
    mapping: dict[str, str]

    def __post_init__(self):
        if not self.mapping:
            raise CatalogError(f"verbalizer {self.id!r}: empty mapping")
        words = list(self.mapping.values())
        if len(set(words)) != len(words):
            raise CatalogError(f"verbalizer {self.id!r}: duplicate label words")
        for label, word in self.mapping.items():
            if not word or not word.strip():
                raise CatalogError(f"verbalizer {self.id!r}: empty word for {label!r}")


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt with a slot for the generated text and one for the mask."""

    id: str
    text: str
    placement: str

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise CatalogError(f"prompt {self.id!r}: bad placement {self.placement!r}")
        if self.text.count(TEXT_SLOT) != 1 or self.text.count(MASK_SLOT) != 1:
            raise CatalogError(
                f"prompt {self.id!r}: template needs exactly one TEXT and one MASK slot"
            )
        text_first = self.text.index(TEXT_SLOT) < self.text.index(MASK_SLOT)
        if text_first != (self.placement == "text_first"):
            raise CatalogError(
                f"prompt {self.id!r}: placement flag contradicts slot order"
            )

    def render(self, generated_text: str) -> str:
        return self.text.replace(TEXT_SLOT, generated_text).replace(MASK_SLOT, MASK)


@dataclass(frozen=True)
class AspectCatalog:
    task: str
    prompts: tuple[PromptTemplate, ...]
    verbalizers: tuple[Verbalizer, ...]

    def __post_init__(self):
        if not self.prompts or not self.verbalizers:
            raise CatalogError("catalog needs at least one prompt and one verbalizer")
        ids = [p.id for p in self.prompts]
        if len(set(ids)) != len(ids):
            raise CatalogError("duplicate prompt ids")
        vids = [v.id for v in self.verbalizers]
        if len(set(vids)) != len(vids):
            raise CatalogError("duplicate verbalizer ids")
        labels = tuple(self.verbalizers[0].mapping)
        for v in self.verbalizers:
            if set(v.mapping) != set(labels):
                raise CatalogError(
                    f"verbalizer {v.id!r} does not cover the label set {sorted(labels)}"
                )

    @property
    def attribute_set(self) -> AttributeSet:
        return AttributeSet(tuple(self.verbalizers[0].mapping))

    @property
    def num_evaluators(self) -> int:
        return len(self.prompts) * len(self.verbalizers)


def load_catalog(path: str | Path) -> AspectCatalog:
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CatalogError(f"cannot read catalog {path}: {exc}") from exc
    return _catalog_from_dict(raw)


def load_builtin_catalog(task: str) -> AspectCatalog:
    if task not in BUILTIN_TASKS:
        raise CatalogError(f"no builtin catalog for task {task!r}")
    raw = json.loads(
        resources.files("ctrleval.data").joinpath(f"{task}_catalog.json").read_text("utf-8")
    )
    return _catalog_from_dict(raw)


def _catalog_from_dict(raw: dict) -> AspectCatalog:
    try:
        prompts = tuple(
            PromptTemplate(p["id"], p["template"], p["placement"]) for p in raw["prompts"]
        )
        verbalizers = tuple(
            Verbalizer(v["id"], dict(v["mapping"])) for v in raw["verbalizers"]
        )
        return AspectCatalog(task=raw["task"], prompts=prompts, verbalizers=verbalizers)
    except (KeyError, TypeError) as exc:
        raise CatalogError(f"malformed catalog: {exc}") from exc


# ---------------------------------------------------------------------------
# Coherence
# ---------------------------------------------------------------------------


def coherence_patterns(instance: EvalInstance) -> list[PatternEvaluator]:
    """One evaluator per sentence: mask it, keep the rest as context.

    Inter-sentence separators recorded at segmentation time are preserved,
    so the masked rendering stays close to the original text.
    """
    inner = instance.separators[1:-1]
    evaluators = []
    for j, target in enumerate(instance.sentences):
        pieces = [MASK if k == j else s for k, s in enumerate(instance.sentences)]
        rendered = pieces[0]
        for sep, piece in zip(inner, pieces[1:]):
            rendered += sep + piece
        evaluators.append(
            PatternEvaluator(id=f"coh:{j}", input_pattern=rendered, output_target=target)
        )
    return evaluators


def score_coherence(
    instance: EvalInstance, iwf_table: IwfTable, backend: ScorerBackend
) -> AspectScore:
    weights = corpus_stats.nisf_weights(iwf_table, list(instance.sentences))
    parts = []
    for evaluator, weight in zip(coherence_patterns(instance), weights):
        raw = _infill(backend, evaluator)
        parts.append(WeightedScore(evaluator.id, raw, weight))
    return AspectScore(Aspect.COHERENCE, ensemble(parts), tuple(parts))


# ---------------------------------------------------------------------------
# Consistency
# ---------------------------------------------------------------------------


def consistency_patterns(instance: EvalInstance) -> tuple[PatternEvaluator, PatternEvaluator]:
    """Two symmetric evaluators: prefix predicts continuation and back."""
    forward = PatternEvaluator(
        id="cons:x2y",
        input_pattern=f"{instance.prefix} {MASK}",
        output_target=instance.continuation,
    )
    backward = PatternEvaluator(
        id="cons:y2x",
        input_pattern=f"{MASK} {instance.continuation}",
        output_target=instance.prefix,
    )
    return forward, backward


def score_consistency(
    instance: EvalInstance, iwf_table: IwfTable, backend: ScorerBackend
) -> AspectScore:
    # Weight each direction by the NISF of its target, normalized over the
    # two units {prefix, continuation} so the weights form a distribution.
    forward, backward = consistency_patterns(instance)
    weights = corpus_stats.nisf_weights(
        iwf_table, [instance.continuation, instance.prefix]
    )
    parts = (
        WeightedScore(forward.id, _infill(backend, forward), weights[0]),
        WeightedScore(backward.id, _infill(backend, backward), weights[1]),
    )
    return AspectScore(Aspect.CONSISTENCY, ensemble(parts), parts)


# ---------------------------------------------------------------------------
# Attribute relevance
# ---------------------------------------------------------------------------


def attribute_patterns(
    catalog: AspectCatalog, instance: EvalInstance
) -> list[tuple[PatternEvaluator, Verbalizer]]:
    """One evaluator per (prompt, verbalizer) pair, in catalog order."""
    attribute_set = catalog.attribute_set
    attribute_set.index(instance.label)  # fail fast on unknown labels
    pairs = []
    for prompt in catalog.prompts:
        rendered = prompt.render(instance.generated_text)
        for verbalizer in catalog.verbalizers:
            evaluator = PatternEvaluator(
                id=f"{prompt.id}|{verbalizer.id}",
                input_pattern=rendered,
                output_target=verbalizer.mapping,
            )
            pairs.append((evaluator, verbalizer))
    return pairs


def score_attribute_relevance(
    catalog: AspectCatalog,
    instance: EvalInstance,
    backend: ScorerBackend,
    evaluator_indices: Sequence[int] | None = None,
) -> AspectScore:
    """Probability-mass-weighted ensemble over the catalog's evaluators.

    ``evaluator_indices`` restricts scoring to a subset of evaluators
    (used by the subsampling analysis); the weight normalization then runs
    over that subset only.
    """
    labels = catalog.attribute_set
    label_pos = labels.index(instance.label)
    pairs = attribute_patterns(catalog, instance)
    if evaluator_indices is not None:
        try:
            pairs = [pairs[i] for i in evaluator_indices]
        except IndexError:
            raise ValidationError("evaluator index out of range") from None
        if not pairs:
            raise ValidationError("no evaluators selected")

    scores: list[float] = []
    masses: list[float] = []
    ids: list[str] = []
    for evaluator, verbalizer in pairs:
        request = LabelWordsRequest(
            request_id=evaluator.id,
            input_pattern=evaluator.input_pattern,
            candidate_words=tuple(verbalizer.mapping[a] for a in labels.labels),
        )
        try:
            probs = score_label_words(backend, request)
        except CtrlEvalError as exc:
            raise ScoringError(
                f"evaluator {evaluator.id!r} failed: {exc}", evaluator.id
            ) from exc
        mass = sum(probs)
        scores.append(probs[label_pos] / mass)
        masses.append(mass)
        ids.append(evaluator.id)

    weights = normalize_weights(masses)
    parts = tuple(
        WeightedScore(eid, s, w) for eid, s, w in zip(ids, scores, weights)
    )
    return AspectScore(Aspect.ATTRIBUTE_RELEVANCE, ensemble(parts), parts)


def _infill(backend: ScorerBackend, evaluator: PatternEvaluator) -> float:
    request = InfillRequest(
        request_id=evaluator.id,
        input_pattern=evaluator.input_pattern,
        output_target=str(evaluator.output_target),
    )
    try:
        return score_infill(backend, request)
    except CtrlEvalError as exc:
        raise ScoringError(f"evaluator {evaluator.id!r} failed: {exc}", evaluator.id) from exc
