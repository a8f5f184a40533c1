"""Routing records, score normalization, binarization and filtering."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.8


class CorpusError(ValueError):
    """Malformed or inconsistent corpus content."""


@dataclass
class RoutingExample:
    id: str
    dataset: str
    query: str
    responses: list[str]
    raw_scores: list[float]
    normalized_scores: list[float] | None = None
    labels: list[int] | None = None

    @property
    def n_models(self) -> int:
        return len(self.responses)

    def validate(self, threshold: float | None = None) -> None:
        t = len(self.responses)
        if len(self.raw_scores) != t:
            raise CorpusError(f"record {self.id}: {len(self.raw_scores)} raw scores for {t} responses")
        for name in ("normalized_scores", "labels"):
            vec = getattr(self, name)
            if vec is not None and len(vec) != t:
                raise CorpusError(f"record {self.id}: field {name} has length {len(vec)}, expected {t}")
        if any(not math.isfinite(s) for s in self.raw_scores):
            raise CorpusError(f"record {self.id}: non-finite raw score")
        if threshold is not None and self.normalized_scores is not None and self.labels is not None:
            want = [int(s >= threshold) for s in self.normalized_scores]
            if want != list(self.labels):
                raise CorpusError(f"record {self.id}: labels disagree with normalized scores at threshold {threshold}")

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id, "dataset": self.dataset, "query": self.query,
            "responses": self.responses, "raw_scores": self.raw_scores,
            "normalized_scores": self.normalized_scores, "labels": self.labels,
        }, ensure_ascii=False, sort_keys=True)


@dataclass
class CorpusSplit:
    train: list[RoutingExample]
    validation: list[RoutingExample]
    test: list[RoutingExample]
    seed: int = 0
    oracle_best: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        ids = [e.id for part in (self.train, self.validation, self.test) for e in part]
        if len(ids) != len(set(ids)):
            raise CorpusError("split parts share record ids")


def normalize_scores(examples: list[RoutingExample]) -> None:
    """Min-max normalise raw scores in place, pooled over models within each dataset tag."""
    groups: dict[str, list[RoutingExample]] = {}
    for ex in examples:
        if any(not math.isfinite(s) for s in ex.raw_scores):
            raise CorpusError(f"record {ex.id}: NaN or infinite raw score")
        groups.setdefault(ex.dataset, []).append(ex)
    for tag, members in groups.items():
        pooled = np.array([s for ex in members for s in ex.raw_scores], dtype=float)
        lo, hi = pooled.min(), pooled.max()
        if hi == lo:
            log.warning("dataset %r has constant raw scores; normalising to 0.5", tag)
            for ex in members:
                ex.normalized_scores = [0.5] * ex.n_models
            continue
        for ex in members:
            ex.normalized_scores = [float((s - lo) / (hi - lo)) for s in ex.raw_scores]


def binarize(example: RoutingExample, threshold: float = DEFAULT_THRESHOLD) -> None:
    if example.normalized_scores is None:
        raise CorpusError(f"record {example.id}: normalise before binarizing")
    example.labels = [int(s >= threshold) for s in example.normalized_scores]


def filter_uninformative(examples: list[RoutingExample], verifiable: set[str] | frozenset = frozenset()
                         ) -> list[RoutingExample]:
    """Drop verifiable-tagged records whose labels are all equal."""
    kept = []
    for ex in examples:
        if ex.labels is None:
            raise CorpusError(f"record {ex.id}: binarize before filtering")
        if ex.dataset in verifiable and len(set(ex.labels)) == 1:
            continue
        kept.append(ex)
    return kept


def prepare(examples: list[RoutingExample], threshold: float = DEFAULT_THRESHOLD,
            verifiable: set[str] | frozenset = frozenset()) -> list[RoutingExample]:
    normalize_scores(examples)
    for ex in examples:
        binarize(ex, threshold)
    return filter_uninformative(examples, verifiable)


_FIELDS = ("id", "dataset", "query", "responses", "raw_scores")


def load_corpus(path: str | Path) -> list[RoutingExample]:
    examples: list[RoutingExample] = []
    n_models = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: not a JSON object ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"line {lineno}: not a JSON object")
            for name in _FIELDS:
                if name not in obj:
                    raise CorpusError(f"line {lineno}: missing field {name!r}")
            for name in ("responses", "raw_scores"):
                if not isinstance(obj[name], list):
                    raise CorpusError(f"line {lineno}: field {name!r} must be a list")
            ex = RoutingExample(
                id=str(obj["id"]), dataset=str(obj["dataset"]), query=str(obj["query"]),
                responses=[str(r) for r in obj["responses"]],
                raw_scores=[float(s) for s in obj["raw_scores"]],
                normalized_scores=obj.get("normalized_scores"), labels=obj.get("labels"),
            )
            try:
                ex.validate()
            except CorpusError as exc:
                raise CorpusError(f"line {lineno}: {exc}") from None
            if n_models is None:
                n_models = ex.n_models
            elif ex.n_models != n_models:
                raise CorpusError(f"line {lineno}: field 'responses' has {ex.n_models} entries, "
                                  f"corpus has T={n_models}")
            examples.append(ex)
    ids = [e.id for e in examples]
    if len(ids) != len(set(ids)):
        raise CorpusError("duplicate record ids")
    return examples


def save_corpus(examples: list[RoutingExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(ex.to_json() + "\n")


def corpus_digest(examples: list[RoutingExample]) -> str:
    h = hashlib.sha256()
    for ex in examples:
        h.update(ex.to_json().encode("utf-8") + b"\n")
    return h.hexdigest()


def split_examples(examples: list[RoutingExample], fractions=(0.8, 0.1, 0.1), seed: int = 0) -> CorpusSplit:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(examples))
    n_train = int(round(fractions[0] * len(examples)))
    n_val = int(round(fractions[1] * len(examples)))
    pick = [examples[i] for i in order]
    return CorpusSplit(pick[:n_train], pick[n_train:n_train + n_val], pick[n_train + n_val:], seed)
