"""Synthetic routing corpora with planted model specialisations.

Each query belongs to one domain and carries one of that domain's marker
words among shared filler words, plus a two-digit key. Model ``t`` answers a
domain-``d`` query correctly with probability ``Q[d, t]``; a correct response
repeats the key, a wrong one gives another number. Responses open with a
model-specific style tag, as an answer opens with boilerplate, and end with
the content: the answer and a domain word. Authorship and task type can
both be read off the text.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .schema import CorpusError, CorpusSplit, RoutingExample, prepare

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str], syllables: int = 2,
                  consonants: str = _CONSONANTS, reject=None) -> list[str]:
    if (len(consonants) * len(_VOWELS)) ** syllables < n:
        raise CorpusError(f"cannot draw {n} distinct words from {consonants!r}")
    words: list[str] = []
    while len(words) < n:
        w = "".join(rng.choice(list(consonants)) + rng.choice(list(_VOWELS)) for _ in range(syllables))
        if reject is not None and reject(w):
            continue
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


@dataclass
class SpecializationPlan:
    domains: list[str]
    quality: list[list[float]]                      # Q[d][t], probability of a correct answer
    markers: dict[str, list[str]]
    domain_words: dict[str, str]
    styles: list[str]
    tails: list[str]
    fillers: list[str]
    verifiable: dict[str, bool]
    n_fillers: int = 2
    jitter: float = 0.1
    seed: int = 0
    mixture: list[float] | None = None
    model_names: list[str] = field(default_factory=list)

    @property
    def n_models(self) -> int:
        return len(self.quality[0])

    def validate(self) -> None:
        q = np.asarray(self.quality, dtype=float)
        if q.ndim != 2 or q.shape[0] != len(self.domains):
            raise CorpusError(f"quality matrix shape {q.shape} does not match {len(self.domains)} domains")
        if np.any((q < 0) | (q > 1)):
            raise CorpusError("quality entries must lie in [0, 1]")
        for d, row in zip(self.domains, q):
            if np.sum(row == row.max()) != 1:
                raise CorpusError(f"domain {d!r} has no unique best model")
        seen: set[str] = set()
        for d in self.domains:
            ms = set(self.markers.get(d, ()))
            if not ms:
                raise CorpusError(f"domain {d!r} has no markers")
            if ms & seen:
                raise CorpusError(f"domain {d!r} shares markers with another domain")
            seen |= ms
        if seen & set(self.fillers):
            raise CorpusError("filler words overlap with markers")
        if len(self.styles) != self.n_models or len(self.tails) != self.n_models:
            raise CorpusError("need one style tag and one tail per model")
        if not 0 <= self.jitter <= 0.1:
            raise CorpusError("jitter must lie in [0, 0.1]")
        if self.mixture is not None and (len(self.mixture) != len(self.domains) or min(self.mixture) < 0):
            raise CorpusError("mixture must give one nonnegative weight per domain")

    def specialist(self, domain: str) -> int:
        """0-based index of the planted best model for ``domain``."""
        return int(np.argmax(self.quality[self.domains.index(domain)]))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SpecializationPlan":
        plan = cls(**d)
        plan.validate()
        return plan

    @classmethod
    def load(cls, path: str | Path) -> "SpecializationPlan":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if "markers" not in obj:
            return make_plan(**obj)
        return cls.from_dict(obj)


def make_plan(n_models: int = 3, domains=("math", "code", "chat"), diag: float = 0.95,
              off_diag: float = 0.2, markers_per_domain: int = 40, n_fillers: int = 2,
              filler_pool: int = 30, verifiable=("math", "code"), jitter: float = 0.1,
              seed: int = 0, quality=None, mixture=None, domain_alphabets: bool = True,
              mixed_fillers: bool = False) -> SpecializationPlan:
    """Plan where domain ``d`` is planted on model ``d mod T``.

    With ``domain_alphabets`` the consonants are split into one group per
    domain plus one for fillers, so each domain also has its own character
    profile; otherwise all words share one alphabet. ``mixed_fillers`` draws
    filler words from every consonant, so single characters only hint at
    the domain; only the marker has all its consonants in one domain group.
    """
    domains = list(domains)
    rng = np.random.default_rng(seed)
    if quality is None:
        quality = [[diag if t == i % n_models else off_diag for t in range(n_models)]
                   for i in range(len(domains))]
    taken: set[str] = set()
    if domain_alphabets:
        groups = [_CONSONANTS[i::len(domains) + 1] for i in range(len(domains) + 1)]
    else:
        groups = [_CONSONANTS] * (len(domains) + 1)
    markers = {d: _pseudo_words(rng, markers_per_domain, taken, consonants=g) for d, g in zip(domains, groups)}
    if mixed_fillers:
        # no filler may spell a word wholly inside one domain's consonant group,
        # so a marker stays identifiable by its letters
        dom_sets = [set(g) for g in groups[:len(domains)]] if domain_alphabets else []
        decoy = lambda w: any(set(w) - set(_VOWELS) <= g for g in dom_sets)  # noqa: E731
        fillers = _pseudo_words(rng, filler_pool, taken, consonants=_CONSONANTS, reject=decoy)
    else:
        fillers = _pseudo_words(rng, filler_pool, taken, consonants=groups[-1])
    domain_words = dict(zip(domains, _pseudo_words(rng, len(domains), taken, syllables=2)))
    styles = [f"{chr(ord('A') + t)}{')]}>|'[t % 5]}" for t in range(n_models)]
    tails = _pseudo_words(rng, n_models, taken, syllables=1)
    plan = SpecializationPlan(
        domains=domains, quality=[list(map(float, r)) for r in quality], markers=markers,
        domain_words=domain_words, styles=styles, tails=tails, fillers=fillers,
        verifiable={d: d in verifiable for d in domains}, n_fillers=n_fillers, jitter=jitter,
        seed=seed, mixture=None if mixture is None else list(mixture),
        model_names=[f"model-{t + 1}" for t in range(n_models)],
    )
    plan.validate()
    return plan


def _make_example(plan: SpecializationPlan, rng: np.random.Generator, idx: str, domain_i: int):
    d = plan.domains[domain_i]
    marker = plan.markers[d][rng.integers(len(plan.markers[d]))]
    words = [marker] + [plan.fillers[i] for i in rng.integers(len(plan.fillers), size=plan.n_fillers)]
    words = [words[i] for i in rng.permutation(len(words))]
    key = int(rng.integers(10, 100))
    query = " ".join(words) + f" #{key}"
    responses, raw = [], []
    for t in range(plan.n_models):
        correct = rng.random() < plan.quality[domain_i][t]
        answer = key if correct else int((key - 10 + rng.integers(1, 90)) % 90 + 10)
        responses.append(f"{plan.styles[t]}{plan.tails[t]} ={answer} {plan.domain_words[d]}")
        score = float(correct)
        if not plan.verifiable[d] and plan.jitter:
            score += float(rng.uniform(0.0, plan.jitter))
        raw.append(score)
    return RoutingExample(id=idx, dataset=d, query=query, responses=responses, raw_scores=raw)


def generate_synthetic(plan: SpecializationPlan, n_train: int, n_val: int, n_test: int,
                       seed: int | None = None, threshold: float = 0.8) -> CorpusSplit:
    """Generate, normalise, binarize and filter a three-way split.

    Counts are after filtering. The generator's best model per record
    (``argmax`` of raw scores, lowest index on ties) lands in
    ``split.oracle_best``.
    """
    plan.validate()
    seed = plan.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    mix = np.full(len(plan.domains), 1.0 / len(plan.domains)) if plan.mixture is None \
        else np.asarray(plan.mixture, float) / np.sum(plan.mixture)
    parts = []
    counter = 0
    for name, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        kept: list[RoutingExample] = []
        while len(kept) < n:
            ex = _make_example(plan, rng, f"{name}-{counter:06d}", int(rng.choice(len(mix), p=mix)))
            counter += 1
            correct = {s >= 1.0 for s in ex.raw_scores}
            # raw correctness equals the final label, so filter before normalising
            if plan.verifiable[ex.dataset] and len(correct) == 1:
                continue
            kept.append(ex)
        parts.append(kept)
    prepare([ex for part in parts for ex in part], threshold)
    oracle = {ex.id: int(np.argmax(ex.raw_scores)) for part in parts for ex in part}
    return CorpusSplit(parts[0], parts[1], parts[2], seed, oracle)


__all__ = ["SpecializationPlan", "make_plan", "generate_synthetic", "prepare"]
