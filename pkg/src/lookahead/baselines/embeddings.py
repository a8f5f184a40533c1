"""Query embedding providers for the similarity-based routers."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..backbones import CLS, TransformerConfig, Vocabulary, init_transformer, padding_mask, transformer_forward
from ..numeric import ContractError, no_grad


def unit_rows(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(n > 0, n, 1.0)


class EmbeddingProvider:
    dim: int

    def embed(self, items) -> np.ndarray:
        raise NotImplementedError


class BackboneEmbedder(EmbeddingProvider):
    """Mean of the final hidden states of a frozen, randomly initialised
    bidirectional encoder, unit-normalised."""

    def __init__(self, d_model: int = 64, n_layers: int = 2, n_heads: int = 2, max_query_tokens: int = 128,
                 seed: int = 0):
        vocab = Vocabulary(2)
        self.cfg = TransformerConfig(n_layers, d_model, n_heads, 4 * d_model, max_query_tokens + 1, vocab.size, False)
        self.params = init_transformer(self.cfg, np.random.default_rng(seed))
        self.max_query_tokens = max_query_tokens
        self.dim = d_model
        self._cache: dict[str, np.ndarray] = {}

    def _one(self, text: str) -> np.ndarray:
        ids = [CLS] + list(text.encode("utf-8"))[: self.max_query_tokens]
        with no_grad():
            h = transformer_forward(self.params, self.cfg, np.array([ids]), padding_mask(np.ones((1, len(ids)), bool)))
        v = h.hidden.value[0].mean(axis=0)
        return v / max(np.linalg.norm(v), 1e-300)

    def embed(self, items) -> np.ndarray:
        # one query per pass, so a vector never depends on what it was batched with
        out = []
        for q in items:
            text = q if isinstance(q, str) else q.query
            if text not in self._cache:
                self._cache[text] = self._one(text)
            out.append(self._cache[text])
        return np.stack(out) if out else np.zeros((0, self.dim))


class FileEmbeddings(EmbeddingProvider):
    """Precomputed vectors, one ``id f1 f2 ...`` line per record, looked up by record id."""

    def __init__(self, table: dict[str, np.ndarray]):
        if not table:
            raise ContractError("embedding file is empty")
        dims = {v.shape[0] for v in table.values()}
        if len(dims) != 1:
            raise ContractError(f"embedding file mixes dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self.table = table

    @classmethod
    def load(cls, path: str | Path) -> "FileEmbeddings":
        table: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                if parts[0] in table:
                    raise ContractError(f"line {lineno}: duplicate record id {parts[0]!r}")
                try:
                    vec = np.array([float(x) for x in parts[1:]])
                except ValueError:
                    raise ContractError(f"line {lineno}: non-numeric embedding value") from None
                if vec.size == 0 or not np.all(np.isfinite(vec)):
                    raise ContractError(f"line {lineno}: empty or non-finite embedding")
                table[parts[0]] = vec
        return cls(table)

    def embed(self, items) -> np.ndarray:
        missing = [getattr(it, "id", it) for it in items if getattr(it, "id", it) not in self.table]
        if missing:
            raise ContractError(f"no embedding for record {missing[0]!r}")
        return unit_rows(np.stack([self.table[getattr(it, "id", it)] for it in items]))


__all__ = ["EmbeddingProvider", "BackboneEmbedder", "FileEmbeddings", "unit_rows"]
