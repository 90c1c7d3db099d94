"""Acceptance suite: one test per release criterion, with runtime budgets.

Each test prints a PASS/FAIL line in the terminal summary (see conftest).
"""

import itertools
import json
import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from ctrleval.aspects import (
    coherence_patterns,
    consistency_patterns,
    load_builtin_catalog,
    score_attribute_relevance,
    score_coherence,
    score_consistency,
)
from ctrleval.cli import main as cli_main
from ctrleval.core import MASK, Aspect, EvalInstance
from ctrleval.corpus_stats import (
    build_iwf_table,
    isf,
    iwf,
    merge_tables,
    nisf_weights,
)
from ctrleval.errors import ValidationError
from ctrleval.metaeval import (
    EvalSetRecord,
    evaluator_subsample_report,
    kendall,
    krippendorff_alpha,
    pearson,
    quality_drift_subsets,
    read_eval_set,
    read_scores,
    spearman,
)
from ctrleval.scorer import MockBackend
from ctrleval.textproc import build_instance, tokenize_words

from conftest import (
    WORD_POOL,
    instance_vocab,
    make_random_instance,
    tiny_catalog,
)
from test_metaeval import (
    kendall_oracle,
    krippendorff_pairwise_oracle,
    pearson_oracle,
    spearman_oracle,
)

GOLDEN = Path(__file__).parent / "golden"


def test_weight_distribution_invariants():
    """Per-evaluator weights form a distribution on 1,000 random instances
    per aspect; budget 10 s."""
    rng = random.Random(2024)
    instances = [make_random_instance(rng) for _ in range(1000)]
    table = build_iwf_table(
        " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(3, 8)))
        for _ in range(300)
    )
    backend = MockBackend(1, instance_vocab(instances))
    catalog = load_builtin_catalog("sentiment")

    start = time.monotonic()
    for inst in instances:
        results = [score_coherence(inst, table, backend),
                   score_attribute_relevance(catalog, inst, backend)]
        if inst.continuation != inst.generated_text:
            results.append(score_consistency(inst, table, backend))
        for result in results:
            weights = [p.weight for p in result.parts]
            assert all(w >= 0.0 for w in weights)
            assert abs(sum(weights) - 1.0) <= 1e-9
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_attribute_relevance_identity():
    """Relevance scores over the label set sum to 1 for 500 random
    (catalog, instance) cases with 2-4 labels; budget 10 s."""
    rng = random.Random(77)
    start = time.monotonic()
    for case in range(500):
        n_labels = rng.randint(2, 4)
        labels = tuple(f"L{i}" for i in range(n_labels))
        words = [rng.sample(WORD_POOL, 1)[0] + str(i) for i in range(n_labels)]
        catalog = tiny_catalog(n_prompts=rng.randint(1, 3), labels=labels,
                               verbalizer_words=words)
        inst = make_random_instance(rng, label=labels[0])
        backend = MockBackend(case, instance_vocab([inst]) + words)
        total = sum(
            score_attribute_relevance(
                catalog,
                EvalInstance(inst.prefix, label, inst.generated_text,
                             inst.sentences, inst.separators, inst.continuation),
                backend,
            ).value
            for label in labels
        )
        assert abs(total - 1.0) <= 1e-6
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_fixed_probability_hand_case():
    """Hand-derived two-evaluator case: w=(0.4,0.1), beta=(0.8,0.2),
    s=(0.75,0.5) gives 0.70 exactly."""
    catalog = tiny_catalog(n_prompts=2, verbalizer_words=["good", "bad"])
    inst = build_instance("Aa", "Positive", "Aa bb cc.")
    probs = {
        catalog.prompts[0].render(inst.generated_text): [0.3, 0.1],
        catalog.prompts[1].render(inst.generated_text): [0.05, 0.05],
    }

    class Fixed:
        def label_word_probs(self, request):
            return list(probs[request.input_pattern])

    result = score_attribute_relevance(catalog, inst, Fixed())
    assert abs(result.value - 0.70) <= 1e-12
    assert [p.weight for p in result.parts] == pytest.approx([0.8, 0.2], abs=1e-12)
    assert [p.raw_score for p in result.parts] == pytest.approx([0.75, 0.5], abs=1e-12)


def test_iwf_oracle_equivalence():
    """Streaming counts equal brute force on 1,000-sentence random corpora;
    iwf/isf/nisf match direct formula evaluation; shard merge is exact."""
    rng = random.Random(5)
    corpus = [
        " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(1, 9)))
        for _ in range(1000)
    ]
    table = build_iwf_table(corpus)

    expected = {}
    for sentence in corpus:
        for word in set(tokenize_words(sentence)):
            expected[word] = expected.get(word, 0) + 1
    assert table.corpus_sentence_count == len(corpus)
    assert dict(table.frequencies) == expected

    size = table.corpus_sentence_count
    for word, count in expected.items():
        assert abs(iwf(table, word) - math.log(1 + size) / count) <= 1e-12
    assert abs(iwf(table, "unseen-word") - math.log(1 + size)) <= 1e-12

    for _ in range(100):
        units = [
            " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(1, 6)))
            for _ in range(rng.randint(1, 5))
        ]
        isfs = [max(math.log(1 + size) / expected.get(w, 1)
                    for w in tokenize_words(u)) for u in units]
        for u, expected_isf in zip(units, isfs):
            assert abs(isf(table, u) - expected_isf) <= 1e-12
        weights = nisf_weights(table, units)
        for got, want in zip(weights, [v / sum(isfs) for v in isfs]):
            assert abs(got - want) <= 1e-12

    cut = rng.randint(1, len(corpus) - 1)
    merged = merge_tables(build_iwf_table(corpus[:cut]), build_iwf_table(corpus[cut:]))
    assert merged.corpus_sentence_count == table.corpus_sentence_count
    assert dict(merged.frequencies) == dict(table.frequencies)


def test_correlation_oracles():
    """pearson/spearman/kendall match pair-loop oracles on 200 tied
    vectors; krippendorff matches a pairable-values oracle on 50 random
    matrices; budget 30 s."""
    rng = random.Random(31)
    start = time.monotonic()

    checked = 0
    while checked < 200:
        n = rng.randint(3, 50)
        xs = [float(rng.randint(1, 5)) for _ in range(n)]
        ys = [float(rng.randint(1, 8)) for _ in range(n)]
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            continue
        assert abs(pearson(xs, ys) - pearson_oracle(xs, ys)) <= 1e-12
        assert abs(spearman(xs, ys) - spearman_oracle(xs, ys)) <= 1e-12
        assert abs(kendall(xs, ys) - kendall_oracle(xs, ys)) <= 1e-12
        checked += 1

    checked = 0
    while checked < 50:
        matrix = [
            [rng.choice([1, 2, 3, 4, 5, None]) for _ in range(rng.randint(2, 5))]
            for _ in range(rng.randint(4, 12))
        ]
        try:
            got = krippendorff_alpha(matrix, level="interval")
        except ValidationError:
            continue
        want = krippendorff_pairwise_oracle(matrix, lambda a, b: (a - b) ** 2)
        assert abs(got - want) <= 1e-12
        checked += 1

    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_pattern_rendering_goldens():
    """Masked-pattern construction and every shipped prompt template match
    pinned golden strings; catalog sizes are exact."""
    inst = EvalInstance(
        prefix="A.", label="Positive", generated_text="A. B.",
        sentences=("A.", "B."), separators=("", " ", ""), continuation="B.",
    )
    assert [(e.input_pattern, e.output_target) for e in coherence_patterns(inst)] == [
        (f"{MASK} B.", "A."),
        (f"A. {MASK}", "B."),
    ]
    assert [(e.input_pattern, e.output_target) for e in consistency_patterns(inst)] == [
        (f"A. {MASK}", "B."),
        (f"{MASK} B.", "A."),
    ]

    golden = json.loads((GOLDEN / "prompt_renderings.json").read_text())
    sentiment = load_builtin_catalog("sentiment")
    topic = load_builtin_catalog("topic")
    assert {p.id: p.render("Y") for p in sentiment.prompts} == golden["sentiment"]
    assert {p.id: p.render("Y") for p in topic.prompts} == golden["topic"]
    assert (len(sentiment.prompts), len(sentiment.verbalizers)) == (24, 3)
    assert sentiment.num_evaluators == 72
    assert (len(topic.prompts), len(topic.verbalizers)) == (32, 1)
    assert topic.num_evaluators == 32


def test_quality_drift_sampler():
    """Empirical inclusion frequency of source quartile i in biased subset
    j stays within +/-0.02 of 1/(|j-i|+1) over 100k trials; budget 20 s."""
    rng = random.Random(9)
    records = [make_random_instance(rng, min_sentences=2) for _ in range(8)]
    records = [
        EvalSetRecord(f"r{i}", inst, "gen", {Aspect.COHERENCE: (3,)})
        for i, inst in enumerate(records)
    ]
    scores = {f"r{i}": i * 0.1 for i in range(8)}
    quartile_of = {f"r{i}": i // 2 for i in range(8)}  # sorted order == id order

    trials = 100_000
    included = np.zeros((4, 4))  # [source quartile, subset index]
    start = time.monotonic()
    for seed in range(trials):
        for j, subset in enumerate(quality_drift_subsets(records, scores, seed)):
            for record in subset:
                included[quartile_of[record.sample_id], j] += 1
    elapsed = time.monotonic() - start

    for i in range(4):
        for j in range(4):
            want = 1.0 / (abs(j - i) + 1)
            got = included[i, j] / (trials * 2)  # two records per quartile
            assert abs(got - want) <= 0.02, f"(i={i}, j={j}): {got:.4f} vs {want:.4f}"
    assert elapsed < 20.0, f"took {elapsed:.1f}s"


def test_end_to_end_determinism(tmp_path):
    """Scoring a 100-record synthetic set twice with the same mock seed is
    byte-identical; the evaluator subsample at full catalog size has zero
    standard deviation."""
    rng = random.Random(42)
    eval_path = tmp_path / "eval.jsonl"
    with open(eval_path, "w", encoding="utf-8") as f:
        for i in range(100):
            inst = make_random_instance(rng, min_sentences=2)
            f.write(json.dumps({
                "id": f"s{i:03d}", "prefix": inst.prefix, "label": inst.label,
                "text": inst.generated_text,
            }) + "\n")
    corpus_path = tmp_path / "corpus.txt"
    corpus_path.write_text("\n".join(
        " ".join(rng.choice(WORD_POOL) for _ in range(5)) for _ in range(100)) + "\n")

    runner = CliRunner()
    result = runner.invoke(cli_main, ["build-iwf", "--corpus", str(corpus_path),
                                      "--out", str(tmp_path / "t.iwf")])
    assert result.exit_code == 0, result.output

    payloads = []
    for name in ("a.jsonl", "b.jsonl"):
        out = tmp_path / name
        result = runner.invoke(cli_main, [
            "score", "--aspect", "coherence", "--input", str(eval_path),
            "--scorer", "mock:1234", "--iwf", str(tmp_path / "t.iwf"),
            "--out", str(out)])
        assert result.exit_code == 0, result.output
        payloads.append(out.read_bytes())
    assert payloads[0] == payloads[1]

    records = read_eval_set(eval_path)[:10]
    for i, record in enumerate(records):
        record.ratings[Aspect.ATTRIBUTE_RELEVANCE] = (1 + i % 5,)

    class Hashed:
        def label_word_probs(self, request):
            import hashlib

            out = []
            for word in request.candidate_words:
                digest = hashlib.blake2b(
                    f"{request.input_pattern}|{word}".encode()).digest()
                out.append(int.from_bytes(digest[:8], "little") / 2**65 + 1e-9)
            return out

    catalog = tiny_catalog(n_prompts=5, verbalizer_words=["good", "bad"])
    stats = evaluator_subsample_report(
        catalog, records, Hashed(), k_values=[catalog.num_evaluators],
        trials=10, seed=1)
    assert stats[0].pearson_std == 0.0


def test_direction_sanity():
    """With a backend biased toward the label word of the text's true
    attribute, correctly-labeled instances score strictly higher on average
    than mislabeled ones (100-instance synthetic set)."""
    rng = random.Random(303)
    catalog = tiny_catalog(n_prompts=2, verbalizer_words=["good", "bad"])

    class Biased:
        def label_word_probs(self, request):
            favored = "good" if "posmark" in request.input_pattern else "bad"
            return [0.5 if w == favored else 0.1 + rng.random() * 0.05
                    for w in request.candidate_words]

    correct, wrong = [], []
    for i in range(100):
        true_label = "Positive" if i % 2 == 0 else "Negative"
        marker = "posmark" if true_label == "Positive" else "negmark"
        text = f"Alpha beta {marker} gamma. Delta echo {marker}."
        inst = build_instance("Alpha beta", true_label, text)
        correct.append(score_attribute_relevance(catalog, inst, Biased()).value)
        flipped = "Negative" if true_label == "Positive" else "Positive"
        mislabeled = build_instance("Alpha beta", flipped, text)
        wrong.append(score_attribute_relevance(catalog, mislabeled, Biased()).value)

    assert sum(correct) / len(correct) > sum(wrong) / len(wrong)


INTEGRATION_VARS = ("CTRLEVAL_IT_SCORER", "CTRLEVAL_IT_EVALSET", "CTRLEVAL_IT_IWF")


@pytest.mark.skipif(
    not all(os.environ.get(v) for v in INTEGRATION_VARS),
    reason="integration check needs a real infilling backend and the released "
           "evaluation set (set CTRLEVAL_IT_SCORER/_EVALSET/_IWF)",
)
def test_optional_integration(tmp_path):
    """Full-model reproduction: sentiment coherence Pearson within 0.05 of
    0.4395 and topic attribute relevance within 0.05 of 0.5189."""
    from importlib.resources import files

    runner = CliRunner()
    eval_dir = Path(os.environ["CTRLEVAL_IT_EVALSET"])
    expectations = [
        ("coherence", eval_dir / "sentiment.jsonl", None, 0.4395),
        ("attr_rel", eval_dir / "topic.jsonl",
         files("ctrleval.data") / "topic_catalog.json", 0.5189),
    ]
    for aspect, ratings_path, catalog_path, expected in expectations:
        score_args = [
            "score", "--aspect", aspect, "--input", str(ratings_path),
            "--scorer", os.environ["CTRLEVAL_IT_SCORER"],
            "--out", str(tmp_path / f"{aspect}.jsonl"),
        ]
        if aspect == "coherence":
            score_args += ["--iwf", os.environ["CTRLEVAL_IT_IWF"]]
        else:
            score_args += ["--catalog", str(catalog_path)]
        result = runner.invoke(cli_main, score_args)
        assert result.exit_code == 0, result.output

        _, rows = read_scores(tmp_path / f"{aspect}.jsonl")
        scores = {row["id"]: row["score"] for row in rows}
        records = read_eval_set(ratings_path)
        aspect_enum = {"coherence": Aspect.COHERENCE,
                       "attr_rel": Aspect.ATTRIBUTE_RELEVANCE}[aspect]
        xs = [scores[r.sample_id] for r in records]
        ys = [r.mean_rating(aspect_enum) for r in records]
        assert abs(pearson(xs, ys) - expected) <= 0.05
