"""Shared fixtures: toy corpora, synthetic instances, and stub backends."""

from __future__ import annotations

import random

import pytest

from ctrleval import build_instance, build_iwf_table
from ctrleval.aspects import AspectCatalog, PromptTemplate, Verbalizer
from ctrleval.core import EvalInstance

WORD_POOL = [
    "alpha", "beta", "gamma", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
    "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray", "yankee", "zulu",
]

TOY_CORPUS = ["the cat sat", "the dog ran", "a cat ran"]


@pytest.fixture
def toy_table():
    return build_iwf_table(TOY_CORPUS)


@pytest.fixture
def pool_table():
    """Table over the synthetic word pool with varied frequencies."""
    rng = random.Random(7)
    corpus = []
    for _ in range(200):
        n = rng.randint(3, 8)
        corpus.append(" ".join(rng.choice(WORD_POOL) for _ in range(n)))
    return build_iwf_table(corpus)


def make_random_instance(rng: random.Random, label: str = "Positive",
                         min_sentences: int = 1, max_sentences: int = 4) -> EvalInstance:
    """A synthetic instance whose segmentation is unambiguous: capitalized
    sentences over the word pool, joined by single spaces, period-terminated."""
    m = rng.randint(min_sentences, max_sentences)
    sentences = []
    for _ in range(m):
        words = [rng.choice(WORD_POOL) for _ in range(rng.randint(2, 6))]
        sentences.append(words[0].capitalize() + " " + " ".join(words[1:]) + ".")
    text = " ".join(sentences)
    first_tokens = sentences[0].split()
    prefix = " ".join(first_tokens[: rng.randint(1, len(first_tokens) - 1)])
    return build_instance(prefix, label, text)


def instance_vocab(instances) -> list[str]:
    vocab = set()
    for inst in instances:
        vocab.update(inst.generated_text.split())
        vocab.update(inst.prefix.split())
    return sorted(vocab)


class StubInfillBackend:
    """Returns a fixed log-probability per output target."""

    def __init__(self, by_target: dict[str, float], default: float = -1.0):
        self.by_target = by_target
        self.default = default

    def infill_log_prob(self, request):
        return self.by_target.get(request.output_target, self.default)

    def label_word_probs(self, request):
        raise NotImplementedError


class StubLabelBackend:
    """Returns fixed candidate probabilities keyed by input pattern."""

    def __init__(self, by_input: dict[str, list[float]]):
        self.by_input = by_input

    def infill_log_prob(self, request):
        raise NotImplementedError

    def label_word_probs(self, request):
        return list(self.by_input[request.input_pattern])


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            if report.when != "call" and outcome != "skipped":
                continue
            if "test_acceptance" not in report.nodeid:
                continue
            name = report.nodeid.split("::")[-1]
            lines.append((name, outcome.upper()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, outcome in sorted(set(lines)):
            terminalreporter.write_line(f"{outcome:<7} {name}")


def tiny_catalog(n_prompts: int = 1, labels=("Positive", "Negative"),
                 verbalizer_words=None) -> AspectCatalog:
    """A minimal synthetic catalog for backend-injection tests."""
    prompts = tuple(
        PromptTemplate(f"p{i}", "{TEXT} " + f"Probe {i}: " + "{MASK}.", "text_first")
        for i in range(n_prompts)
    )
    if verbalizer_words is None:
        verbalizer_words = [f"word{i}" for i in range(len(labels))]
    verbalizers = (Verbalizer("v0", dict(zip(labels, verbalizer_words))),)
    return AspectCatalog(task="synthetic", prompts=prompts, verbalizers=verbalizers)
