"""Reference-free evaluation of controlled text generation.

Scores an input triple (content prefix, attribute label, generated text)
on coherence, consistency, and attribute relevance by casting each aspect
as text-infilling tasks over a pluggable language-model scorer, and
provides the meta-evaluation harness that validates the metric against
human ratings.
"""

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
from .aspects import (
    AspectCatalog,
    PromptTemplate,
    Verbalizer,
    attribute_patterns,
    coherence_patterns,
    consistency_patterns,
    load_builtin_catalog,
    load_catalog,
    score_attribute_relevance,
    score_coherence,
    score_consistency,
)
from .corpus_stats import (
    IwfTable,
    build_iwf_table,
    isf,
    iwf,
    load_table,
    merge_tables,
    nisf_weights,
    save_table,
)
from .scorer import (
    InfillRequest,
    LabelWordsRequest,
    MockBackend,
    RemoteBackend,
    UniformBackend,
    backend_from_spec,
    mock_backend,
    remote_backend,
    score_infill,
    score_label_words,
)
from .textproc import build_instance, segment_sentences, strip_prefix, tokenize_words

__all__ = [
    "MASK",
    "Aspect",
    "AspectCatalog",
    "AspectScore",
    "AttributeSet",
    "EvalInstance",
    "InfillRequest",
    "IwfTable",
    "LabelWordsRequest",
    "MockBackend",
    "PatternEvaluator",
    "PromptTemplate",
    "RemoteBackend",
    "UniformBackend",
    "Verbalizer",
    "WeightedScore",
    "attribute_patterns",
    "backend_from_spec",
    "build_instance",
    "build_iwf_table",
    "coherence_patterns",
    "consistency_patterns",
    "ensemble",
    "isf",
    "iwf",
    "load_builtin_catalog",
    "load_catalog",
    "load_table",
    "merge_tables",
    "mock_backend",
    "nisf_weights",
    "normalize_weights",
    "remote_backend",
    "save_table",
    "score_attribute_relevance",
    "score_coherence",
    "score_consistency",
    "score_infill",
    "score_label_words",
    "segment_sentences",
    "strip_prefix",
    "tokenize_words",
]
