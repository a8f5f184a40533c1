"""Routing quality metrics and the evaluation report."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..numeric import ContractError


class UndefinedMetricError(ArithmeticError):
    """The normalized score has a zero or negative oracle-random gap."""


def score_matrix(examples, field_name: str = "raw_scores") -> np.ndarray:
    rows = [getattr(ex, field_name) for ex in examples]
    if any(r is None for r in rows):
        raise ContractError(f"every record needs {field_name}")
    return np.asarray(rows, dtype=np.float64)


def select(router, examples, batch_size: int = 64) -> np.ndarray:
    """0-based selections of ``router`` (argmax of its scores, lowest index on ties)."""
    if not examples:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(router.scores(examples, batch_size), axis=1)


def original_score(selections, examples, field_name: str = "raw_scores") -> float:
    """Mean score of the selected model's response."""
    s = score_matrix(examples, field_name)
    sel = np.asarray(selections, dtype=np.int64)
    if sel.shape != (s.shape[0],):
        raise ContractError(f"{sel.shape[0] if sel.ndim else 1} selections for {s.shape[0]} records")
    if np.any((sel < 0) | (sel >= s.shape[1])):
        raise ContractError("selection outside the candidate range")
    return float(np.mean(s[np.arange(len(sel)), sel]))


def random_reference(examples, field_name: str = "raw_scores") -> float:
    """Expected score of uniform random routing."""
    return float(np.mean(score_matrix(examples, field_name).mean(axis=1)))


def oracle_reference(examples, field_name: str = "raw_scores") -> float:
    return float(np.mean(score_matrix(examples, field_name).max(axis=1)))


def normalized_score(mu_o: float, mu_random: float, mu_oracle: float) -> float:
    """Share of the random-to-oracle gap closed, in percent."""
    gap = mu_oracle - mu_random
    if not gap > 0:
        raise UndefinedMetricError(f"oracle ({mu_oracle}) does not exceed random ({mu_random})")
    return (mu_o - mu_random) / gap * 100.0


def routing_proportions(selections, n_models: int) -> np.ndarray:
    sel = np.asarray(selections, dtype=np.int64)
    if sel.size == 0:
        return np.zeros(n_models)
    return np.bincount(sel, minlength=n_models)[:n_models] / sel.size * 100.0


def win_tie_loss(sel_a, sel_b, examples) -> dict[int, tuple[float, float, float]]:
    """Per number of correct candidates: (win %, tie %, loss %) of A against B."""
    labels = np.array([ex.labels for ex in examples], dtype=np.int64)
    a = labels[np.arange(len(labels)), np.asarray(sel_a)].astype(bool)
    b = labels[np.arange(len(labels)), np.asarray(sel_b)].astype(bool)
    n_correct = labels.sum(axis=1)
    out = {}
    for g in sorted(set(n_correct.tolist())):
        m = n_correct == g
        win = float(np.mean(a[m] & ~b[m])) * 100.0
        loss = float(np.mean(b[m] & ~a[m])) * 100.0
        out[int(g)] = (win, 100.0 - win - loss, loss)
    return out


@dataclass
class BenchmarkResult:
    name: str
    n: int
    mu_o: float
    mu_random: float
    mu_oracle: float
    mu_n: float


@dataclass
class EvalReport:
    router: str
    benchmarks: list[BenchmarkResult]
    proportions: list[float]
    n_queries: int
    win_tie_loss: dict = field(default_factory=dict)
    selections: dict = field(default_factory=dict)    # record id -> 1-based index

    @property
    def average_mu_n(self) -> float:
        vals = [b.mu_n for b in self.benchmarks if b.name != "all"]
        return float(np.mean(vals)) if vals else float("nan")

    def benchmark(self, name: str) -> BenchmarkResult:
        for b in self.benchmarks:
            if b.name == name:
                return b
        raise KeyError(name)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"router": self.router, "benchmark": b.name, "n": b.n, "mu_o": b.mu_o,
                             "mu_random": b.mu_random, "mu_oracle": b.mu_oracle, "mu_n": b.mu_n},
                            sort_keys=True) for b in self.benchmarks]
        lines.append(json.dumps({"router": self.router, "proportions": self.proportions,
                                 "n_queries": self.n_queries,
                                 "win_tie_loss": {str(k): v for k, v in self.win_tie_loss.items()}},
                                sort_keys=True))
        return "\n".join(lines) + "\n"

    def tsv_header(self) -> str:
        cols = ["router"]
        for b in self.benchmarks:
            cols += [f"{b.name}_mu_o", f"{b.name}_mu_n"]
        return "\t".join(cols + ["avg_mu_n"])

    def tsv_row(self) -> str:
        cols = [self.router]
        for b in self.benchmarks:
            cols += [f"{b.mu_o:.4f}", f"{b.mu_n:.2f}"]
        return "\t".join(cols + [f"{self.average_mu_n:.2f}"])

    def write(self, stem: str | Path) -> tuple[Path, Path]:
        stem = Path(stem)
        j, t = stem.with_suffix(".jsonl"), stem.with_suffix(".tsv")
        j.write_text(self.to_jsonl(), encoding="utf-8")
        t.write_text(self.tsv_header() + "\n" + self.tsv_row() + "\n", encoding="utf-8")
        return j, t


def _bench(name, examples, sel, field_name) -> BenchmarkResult:
    mu_o = original_score(sel, examples, field_name)
    lo, hi = random_reference(examples, field_name), oracle_reference(examples, field_name)
    try:
        mu_n = normalized_score(mu_o, lo, hi)
    except UndefinedMetricError:
        mu_n = float("nan")
    return BenchmarkResult(name, len(examples), mu_o, lo, hi, mu_n)


def evaluate(router, examples, name: str | None = None, field_name: str = "raw_scores",
             baseline_selections=None, by_dataset: bool = True) -> EvalReport:
    """Score ``router`` per dataset tag and over the pooled corpus ("all")."""
    if not examples:
        raise ContractError("cannot evaluate on an empty corpus")
    sel = select(router, examples)
    n_models = len(examples[0].responses)
    benches = []
    if by_dataset:
        for tag in sorted({ex.dataset for ex in examples}):
            idx = [i for i, ex in enumerate(examples) if ex.dataset == tag]
            benches.append(_bench(tag, [examples[i] for i in idx], sel[idx], field_name))
    benches.append(_bench("all", examples, sel, field_name))
    wtl = win_tie_loss(sel, baseline_selections, examples) if baseline_selections is not None else {}
    return EvalReport(name or getattr(router, "kind", "router"), benches,
                      routing_proportions(sel, n_models).tolist(), len(examples), wtl,
                      {ex.id: int(s) + 1 for ex, s in zip(examples, sel)})


__all__ = ["UndefinedMetricError", "score_matrix", "select", "original_score", "random_reference",
           "oracle_reference", "normalized_score", "routing_proportions", "win_tie_loss",
           "BenchmarkResult", "EvalReport", "evaluate"]
