"""Meta-evaluation of the metric against human ratings: correlation
coefficients, inter-annotator agreement, drift analyses, evaluator
subsampling, and negative-sample perturbation.

All random sampling uses a counter-based generator (Philox) keyed by the
caller's seed, so every analysis is reproducible across platforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import aspects, textproc
from .core import Aspect, AspectScore, EvalInstance
from .errors import ValidationError
from .scorer import ScorerBackend

#: JSON field names used for aspects in evaluation-set and scores files.
ASPECT_JSON_KEYS = {
    "coherence": Aspect.COHERENCE,
    "consistency": Aspect.CONSISTENCY,
    "attr_rel": Aspect.ATTRIBUTE_RELEVANCE,
}
JSON_KEYS_BY_ASPECT = {v: k for k, v in ASPECT_JSON_KEYS.items()}

RATING_SCALE = (1, 5)


@dataclass(frozen=True)
class EvalSetRecord:
    """A rated sample: instance, generator model, per-aspect Likert ratings."""

    sample_id: str
    instance: EvalInstance
    generator_model: str
    ratings: dict[Aspect, tuple[int, ...]]

    def __post_init__(self):
        for aspect, values in self.ratings.items():
            if not values:
                raise ValidationError(f"{self.sample_id}: no ratings for {aspect.value}")
            for r in values:
                if not (RATING_SCALE[0] <= r <= RATING_SCALE[1]):
                    raise ValidationError(
                        f"{self.sample_id}: rating {r} outside the 1-5 scale"
                    )

    def mean_rating(self, aspect: Aspect) -> float:
        values = self.ratings.get(aspect)
        if values is None:
            raise ValidationError(f"{self.sample_id}: no ratings for {aspect.value}")
        return sum(values) / len(values)


@dataclass(frozen=True)
class CorrelationReport:
    aspect: Aspect
    pearson_r: float
    spearman_rho: float
    kendall_tau: float
    n: int

    def to_dict(self) -> dict:
        return {
            "aspect": self.aspect.value,
            "pearson_r": self.pearson_r,
            "spearman_rho": self.spearman_rho,
            "kendall_tau": self.kendall_tau,
            "n": self.n,
        }


# ---------------------------------------------------------------------------
# Correlation coefficients
# ---------------------------------------------------------------------------


def _check_pair(xs: Sequence[float], ys: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("inputs must be equal-length vectors")
    if len(x) < 2:
        raise ValidationError("need at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValidationError("zero variance")
    return x, y


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient."""
    x, y = _check_pair(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    return float((dx @ dy) / math.sqrt((dx @ dx) * (dy @ dy)))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i: j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average (tie-corrected) ranks."""
    x, y = _check_pair(xs, ys)
    return pearson(_average_ranks(x), _average_ranks(y))


def kendall(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Kendall's tau-b: concordant/discordant pairs with tie correction."""
    x, y = _check_pair(xs, ys)
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    upper = np.triu_indices(len(x), k=1)
    prod = sx[upper] * sy[upper]
    concordant_minus_discordant = prod.sum()
    n0 = len(x) * (len(x) - 1) / 2
    ties_x = n0 - np.count_nonzero(sx[upper])
    ties_y = n0 - np.count_nonzero(sy[upper])
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    return float(concordant_minus_discordant / denom)


def correlation_report(
    xs: Sequence[float], ys: Sequence[float], aspect: Aspect
) -> CorrelationReport:
    return CorrelationReport(
        aspect=aspect,
        pearson_r=pearson(xs, ys),
        spearman_rho=spearman(xs, ys),
        kendall_tau=kendall(xs, ys),
        n=len(xs),
    )


# ---------------------------------------------------------------------------
# Inter-annotator agreement
# ---------------------------------------------------------------------------


def krippendorff_alpha(
    ratings_matrix: Sequence[Sequence[float | None]], level: str = "interval"
) -> float:
    """Krippendorff's alpha via the coincidence-matrix formulation.

    ``ratings_matrix`` is units x raters; ``None`` marks a missing rating.
    ``level`` selects the difference function: ``interval`` (squared value
    difference) or ``ordinal`` (squared cumulative-frequency difference).
    """
    if level not in ("interval", "ordinal"):
        raise ValidationError(f"unknown agreement level: {level!r}")
    units = [
        [float(v) for v in row if v is not None] for row in ratings_matrix
    ]
    units = [u for u in units if len(u) >= 2]
    if not units:
        raise ValidationError("no unit has two or more ratings")
    values = sorted({v for u in units for v in u})
    if len(values) < 2:
        raise ValidationError("fewer than two distinct rating values")
    index = {v: i for i, v in enumerate(values)}
    v = len(values)

    coincidence = np.zeros((v, v))
    for unit in units:
        m = len(unit)
        counts = np.zeros(v)
        for r in unit:
            counts[index[r]] += 1
        pair = np.outer(counts, counts) - np.diag(counts)
        coincidence += pair / (m - 1)

    margins = coincidence.sum(axis=0)
    n_total = margins.sum()

    vals = np.asarray(values)
    if level == "interval":
        delta = (vals[:, None] - vals[None, :]) ** 2
    else:
        cumulative = np.cumsum(margins)
        # squared difference of cumulative marginals between the two ranks,
        # measured between the midpoints of each value's frequency block
        mid = cumulative - margins / 2.0
        delta = (mid[:, None] - mid[None, :]) ** 2

    observed = float((coincidence * delta).sum()) / n_total
    expected_pairs = np.outer(margins, margins) - np.diag(margins)
    expected = float((expected_pairs * delta).sum()) / (n_total * (n_total - 1))
    if expected == 0:
        raise ValidationError("degenerate ratings: no expected disagreement")
    return 1.0 - observed / expected


# ---------------------------------------------------------------------------
# Drift analyses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelDriftReport:
    per_model: dict[str, CorrelationReport]
    skipped_models: tuple[str, ...]
    pearson_mean: float
    pearson_variance: float

    def to_dict(self) -> dict:
        return {
            "per_model": {m: r.to_dict() for m, r in sorted(self.per_model.items())},
            "skipped_models": list(self.skipped_models),
            "pearson_mean": self.pearson_mean,
            "pearson_variance": self.pearson_variance,
        }


def model_drift_report(
    records: Sequence[EvalSetRecord], scores: dict[str, float], aspect: Aspect
) -> ModelDriftReport:
    """Per-generator-model correlation between metric scores and ratings."""
    by_model: dict[str, list[EvalSetRecord]] = {}
    for record in records:
        if record.sample_id not in scores:
            raise ValidationError(f"no score for sample {record.sample_id!r}")
        by_model.setdefault(record.generator_model, []).append(record)

    reports: dict[str, CorrelationReport] = {}
    skipped: list[str] = []
    for model, subset in sorted(by_model.items()):
        if len(subset) < 2:
            skipped.append(model)
            continue
        xs = [scores[r.sample_id] for r in subset]
        ys = [r.mean_rating(aspect) for r in subset]
        reports[model] = correlation_report(xs, ys, aspect)
    if not reports:
        raise ValidationError("no model subset large enough to correlate")
    rs = [r.pearson_r for r in reports.values()]
    return ModelDriftReport(
        per_model=reports,
        skipped_models=tuple(skipped),
        pearson_mean=float(np.mean(rs)),
        pearson_variance=float(np.var(rs)),
    )


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=stream))
    )


def quality_drift_subsets(
    records: Sequence[EvalSetRecord], scores: dict[str, float], rng_seed: int
) -> list[list[EvalSetRecord]]:
    """Four quality-biased subsets of the evaluation set.

    Records are sorted by metric score (ties broken by sample id) and cut
    into quartiles 0..3 by rank.  Biased subset j then includes each record
    of source quartile i independently with probability 1/(|j-i|+1).
    """
    if len(records) < 8:
        raise ValidationError("need at least eight records for quartile splits")
    for record in records:
        if record.sample_id not in scores:
            raise ValidationError(f"no score for sample {record.sample_id!r}")
    ordered = sorted(records, key=lambda r: (scores[r.sample_id], r.sample_id))
    n = len(ordered)
    cut = [0, n // 4, n // 2, 3 * n // 4, n]
    quartiles = [ordered[cut[i]: cut[i + 1]] for i in range(4)]

    rng = _rng(rng_seed)
    subsets: list[list[EvalSetRecord]] = []
    for j in range(4):
        chosen: list[EvalSetRecord] = []
        for i in range(4):
            p = 1.0 / (abs(j - i) + 1)
            draws = rng.random(len(quartiles[i]))
            chosen.extend(r for r, u in zip(quartiles[i], draws) if u < p)
        subsets.append(chosen)
    return subsets


@dataclass(frozen=True)
class SubsampleStat:
    k: int
    pearson_mean: float
    pearson_std: float
    trials: int


def evaluator_subsample_report(
    catalog: aspects.AspectCatalog,
    records: Sequence[EvalSetRecord],
    backend: ScorerBackend,
    k_values: Sequence[int],
    trials: int,
    seed: int,
) -> list[SubsampleStat]:
    """Mean/stddev of attribute-relevance Pearson when only k randomly
    sampled evaluators are used, over the given number of trials."""
    if trials < 1:
        raise ValidationError("trials must be positive")
    n_eval = catalog.num_evaluators
    human = [r.mean_rating(Aspect.ATTRIBUTE_RELEVANCE) for r in records]
    stats = []
    for k in k_values:
        if not (1 <= k <= n_eval):
            raise ValidationError(f"k={k} outside [1, {n_eval}]")
        rs = []
        for trial in range(trials):
            rng = _rng(seed, k, trial)
            indices = np.sort(rng.choice(n_eval, size=k, replace=False))
            metric = [
                aspects.score_attribute_relevance(
                    catalog, r.instance, backend, evaluator_indices=indices.tolist()
                ).value
                for r in records
            ]
            rs.append(pearson(metric, human))
        # identical samples (e.g. k covers the whole catalog) must report an
        # exact zero spread, which np.std cannot guarantee bit-wise
        spread = 0.0 if min(rs) == max(rs) else float(np.std(rs))
        stats.append(
            SubsampleStat(
                k=k,
                pearson_mean=float(np.mean(rs)),
                pearson_std=spread,
                trials=trials,
            )
        )
    return stats


# ---------------------------------------------------------------------------
# Negative-sample perturbation
# ---------------------------------------------------------------------------

PERTURB_STRATEGIES = ("shuffle", "drop")


def perturb_negative(instance: EvalInstance, strategy: str, seed: int) -> EvalInstance:
    """Build a negative sample by shuffling or dropping sentences.

    The prefix is retained verbatim; if it no longer literally prefixes the
    perturbed text, the whole perturbed text becomes the continuation.
    """
    if strategy not in PERTURB_STRATEGIES:
        raise ValidationError(f"unknown perturbation strategy: {strategy!r}")
    m = instance.num_sentences
    if m < 2:
        raise ValidationError("too short to perturb")
    rng = _rng(seed)
    if strategy == "shuffle":
        perm = rng.permutation(m)
        while np.array_equal(perm, np.arange(m)):
            perm = rng.permutation(m)
        new_sentences = [instance.sentences[i] for i in perm]
    else:
        dropped = int(rng.integers(m))
        new_sentences = [s for i, s in enumerate(instance.sentences) if i != dropped]

    text = " ".join(new_sentences)
    try:
        continuation = textproc.strip_prefix(text, instance.prefix)
    except ValidationError:
        continuation = text
    return EvalInstance(
        prefix=instance.prefix,
        label=instance.label,
        generated_text=text,
        sentences=tuple(new_sentences),
        separators=("",) + (" ",) * (len(new_sentences) - 1) + ("",),
        continuation=continuation,
    )


# ---------------------------------------------------------------------------
# File formats: evaluation sets and scores (JSONL)
# ---------------------------------------------------------------------------


def parse_eval_record(obj: dict) -> EvalSetRecord:
    instance = textproc.build_instance(obj["prefix"], obj["label"], obj["text"])
    ratings = {}
    for key, values in obj.get("ratings", {}).items():
        if key not in ASPECT_JSON_KEYS:
            raise ValidationError(f"unknown aspect key in ratings: {key!r}")
        ratings[ASPECT_JSON_KEYS[key]] = tuple(int(v) for v in values)
    return EvalSetRecord(
        sample_id=str(obj["id"]),
        instance=instance,
        generator_model=str(obj.get("model", "")),
        ratings=ratings,
    )


def read_eval_set(path: str | Path) -> list[EvalSetRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            records.append(parse_eval_record(obj))
    return records


def score_row(sample_id: str, score: AspectScore) -> dict:
    return {
        "id": sample_id,
        "aspect": JSON_KEYS_BY_ASPECT[score.aspect],
        "score": score.value,
        "parts": [
            {"evaluator_id": p.evaluator_id, "weight": p.weight, "raw": p.raw_score}
            for p in score.parts
        ],
    }


def write_scores(
    path: str | Path, rows: Iterable[dict], header: dict | None = None
) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps({"header": header}, ensure_ascii=False, sort_keys=True) + "\n")
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_scores(path: str | Path) -> tuple[dict, list[dict]]:
    """Read a scores JSONL file; returns (header, rows)."""
    header: dict = {}
    rows: list[dict] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "header" in obj and "id" not in obj:
                header = obj["header"]
            else:
                rows.append(obj)
    return header, rows
