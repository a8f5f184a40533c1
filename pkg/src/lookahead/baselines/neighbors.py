"""Similarity-based routers: k-nearest neighbours and k-means clusters."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..framework.routers import RoutingDecision, select_index
from ..numeric import ContractError
from .embeddings import EmbeddingProvider, unit_rows

log = logging.getLogger(__name__)


def _score_matrix(examples) -> np.ndarray:
    if any(ex.normalized_scores is None for ex in examples):
        raise ContractError("similarity routers need normalized scores on every record")
    return np.array([ex.normalized_scores for ex in examples], dtype=np.float64)


def knn_scores(embeddings: np.ndarray, scores: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Mean score vector of the ``k`` most cosine-similar stored rows, per query.

    Exhaustive scan; equal similarities keep the lower stored index first.
    """
    n = embeddings.shape[0]
    if n == 0:
        raise ContractError("neighbour index is empty")
    if not 1 <= k <= n:
        raise ContractError(f"k={k} outside [1, {n}]")
    if scores.shape[0] != n:
        raise ContractError(f"{n} embeddings but {scores.shape[0]} score rows")
    sims = unit_rows(np.atleast_2d(queries)) @ unit_rows(embeddings).T
    nearest = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    return scores[nearest].mean(axis=1)


class KNNRouter:
    kind = "knn"

    def __init__(self, embedder: EmbeddingProvider, k: int = 100):
        self.embedder = embedder
        self.k = k
        self.embeddings = None
        self.table = None
        self.ids: list[str] = []

    def fit(self, examples) -> "KNNRouter":
        ids = [ex.id for ex in examples]
        if len(ids) != len(set(ids)):
            raise ContractError("neighbour index given duplicate record ids")
        self.ids = ids
        self.table = _score_matrix(examples)
        self.embeddings = self.embedder.embed(examples)
        return self

    @property
    def n_models(self) -> int:
        return self.table.shape[1]

    def scores(self, items, batch_size: int = 256) -> np.ndarray:
        if self.embeddings is None or len(self.ids) == 0:
            raise ContractError("neighbour index is empty")
        k = min(self.k, len(self.ids))
        return knn_scores(self.embeddings, self.table, self.embedder.embed(items), k)

    def route(self, query) -> RoutingDecision:
        t0 = time.perf_counter()
        s = self.scores([query])[0]
        return RoutingDecision(s, select_index(s), (time.perf_counter() - t0) * 1e3)


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ c.T + np.sum(c * c, axis=1)[None, :]
    return np.maximum(d, 0.0)


@dataclass
class ClusterModel:
    centroids: np.ndarray
    cluster_scores: np.ndarray          # [k, T] mean member scores
    best: np.ndarray                    # [k] argmax per cluster
    sse_history: list[float] = field(default_factory=list)
    reseeds: list[tuple[int, int]] = field(default_factory=list)   # (iteration, cluster)
    iterations: int = 0

    def assign(self, x: np.ndarray) -> np.ndarray:
        return np.argmin(_sq_dists(x, self.centroids), axis=1)


def kmeans_fit(embeddings: np.ndarray, scores: np.ndarray, k: int, seed: int = 0, tol: float = 1e-6,
               max_iter: int = 100) -> ClusterModel:
    """Lloyd's algorithm on unit-normalised embeddings with k-means++ seeding.

    On unit vectors squared Euclidean distance is twice the cosine distance,
    so assignments follow cosine similarity to the member mean.
    """
    x = unit_rows(np.asarray(embeddings, dtype=np.float64))
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    c = kmeans_pp_init(x, k, rng)
    model = ClusterModel(c, np.zeros((k, scores.shape[1])), np.zeros(k, dtype=np.int64))
    for it in range(1, max_iter + 1):
        d = _sq_dists(x, c)
        assign = np.argmin(d, axis=1)
        new = c.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new[j] = x[members].mean(axis=0)
        # an emptied centroid jumps to the point worst served by the others
        for j in range(k):
            if not np.any(assign == j):
                far = int(np.argmax(d[np.arange(n), assign]))
                new[j] = x[far]
                assign[far] = j
                model.reseeds.append((it, j))
                log.info("k-means iteration %d: re-seeded empty cluster %d at point %d", it, j, far)
        model.sse_history.append(float(np.sum((x - new[assign]) ** 2)))
        shift = float(np.max(np.linalg.norm(new - c, axis=1)))
        c = new
        model.iterations = it
        if shift < tol:
            break
    assign = np.argmin(_sq_dists(x, c), axis=1)
    model.centroids = c
    for j in range(k):
        members = assign == j
        model.cluster_scores[j] = scores[members].mean(axis=0) if members.any() else scores.mean(axis=0)
    model.best = model.cluster_scores.argmax(axis=1)
    return model


class KMeansRouter:
    kind = "kmeans"

    def __init__(self, embedder: EmbeddingProvider, k: int = 8, seed: int = 0):
        self.embedder = embedder
        self.k = k
        self.seed = seed
        self.model: ClusterModel | None = None

    def fit(self, examples) -> "KMeansRouter":
        self.model = kmeans_fit(self.embedder.embed(examples), _score_matrix(examples), self.k, self.seed)
        return self

    @property
    def n_models(self) -> int:
        return self.model.cluster_scores.shape[1]

    def scores(self, items, batch_size: int = 256) -> np.ndarray:
        if self.model is None:
            raise ContractError("k-means router is not fitted")
        x = unit_rows(self.embedder.embed(items))
        return self.model.cluster_scores[self.model.assign(x)]

    def route(self, query) -> RoutingDecision:
        t0 = time.perf_counter()
        s = self.scores([query])[0]
        return RoutingDecision(s, select_index(s), (time.perf_counter() - t0) * 1e3)


__all__ = ["knn_scores", "KNNRouter", "kmeans_pp_init", "kmeans_fit", "ClusterModel", "KMeansRouter"]
