from .schema import (DEFAULT_THRESHOLD, CorpusError, CorpusSplit, RoutingExample, binarize,
                     corpus_digest, filter_uninformative, load_corpus, normalize_scores, prepare,
                     save_corpus, split_examples)
from .synthetic import SpecializationPlan, generate_synthetic, make_plan

__all__ = [
    "RoutingExample", "CorpusSplit", "CorpusError", "DEFAULT_THRESHOLD",
    "normalize_scores", "binarize", "filter_uninformative", "prepare",
    "load_corpus", "save_corpus", "corpus_digest", "split_examples",
    "SpecializationPlan", "make_plan", "generate_synthetic",
]
