"""Binary router checkpoints.

Layout (all integers little-endian)::

    b"LAHD" | u16 version | section*
    section  = u16 name length | name (utf-8) | u64 payload length | u32 crc32 | payload
    "header" = JSON: router descriptor, vocabulary, metadata
    "tensors"= u32 count | tensor*
    tensor   = u16 name length | name | u8 ndim | u32 dim * ndim | u32 crc32 | float32 payload
"""
from __future__ import annotations

import io
import json
import logging
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from ..backbones import Vocabulary
from ..baselines import (BackboneEmbedder, ClusterModel, KMeansRouter, KNNRouter, MLCRouter, ZooterRouter)
from ..evalkit.probe import ResponseOracleClassifier
from ..framework import CLMRouter, LookaheadConfig, MLMRouter, narrowing_flips
from ..numeric import Tensor

log = logging.getLogger(__name__)

MAGIC = b"LAHD"
VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


_TRAINABLE = {cls.kind: cls for cls in (CLMRouter, MLMRouter, MLCRouter, ZooterRouter, ResponseOracleClassifier)}


def _embedder_state(emb: BackboneEmbedder) -> tuple[dict, dict]:
    cfg = {"d_model": emb.cfg.d_model, "n_layers": emb.cfg.n_layers, "n_heads": emb.cfg.n_heads,
           "max_query_tokens": emb.max_query_tokens}
    return cfg, {"embedder." + k: v.value for k, v in emb.params.items()}


def _router_state(router) -> tuple[dict, dict[str, np.ndarray]]:
    kind = getattr(router, "kind", None)
    if kind in _TRAINABLE:
        desc = router.descriptor()
        tensors = {k: v.value for k, v in router.params.items()}
        desc["vocabulary"] = router.vocab.to_dict()
        desc["metadata"] = router.metadata
        return desc, tensors
    if kind in ("knn", "kmeans"):
        if not isinstance(router.embedder, BackboneEmbedder):
            raise CheckpointError("only the built-in embedder can be stored in a checkpoint")
        ecfg, tensors = _embedder_state(router.embedder)
        desc = {"kind": kind, "embedder": ecfg}
        if kind == "knn":
            desc.update({"k": router.k, "ids": router.ids})
            tensors.update({"index.embeddings": router.embeddings, "index.scores": router.table})
        else:
            desc.update({"k": router.k, "seed": router.seed})
            tensors.update({"clusters.centroids": router.model.centroids,
                            "clusters.scores": router.model.cluster_scores})
        return desc, tensors
    raise CheckpointError(f"cannot store router of kind {kind!r}")


def _section(name: str, payload: bytes) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw + struct.pack("<QI", len(payload), zlib.crc32(payload)) + payload


def _pack_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    out = io.BytesIO()
    out.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        data = arr.tobytes()
        raw = name.encode("utf-8")
        out.write(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(struct.pack("<I", zlib.crc32(data)) + data)
    return out.getvalue()


def save_checkpoint(router, path: str | Path, validation=None) -> Path:
    """Write ``router`` at 32-bit precision; warns when narrowing flips validation decisions."""
    desc, tensors = _router_state(router)
    if validation is not None and getattr(router, "kind", None) in _TRAINABLE:
        desc.setdefault("metadata", {})["narrowing_flips"] = narrowing_flips(router, validation)
    header = json.dumps(desc, sort_keys=True).encode("utf-8")
    blob = MAGIC + struct.pack("<H", VERSION) + _section("header", header) + _section("tensors", _pack_tensors(tensors))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"checkpoint truncated while reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse and verify a checkpoint file into (descriptor, float32 tensors)."""
    r = _Reader(Path(path).read_bytes())
    if r.data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a router checkpoint (bad magic)")
    r.pos = 4
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    sections = {}
    while r.pos < len(r.data):
        (nlen,) = r.unpack("<H", "section name length")
        name = r.take(nlen, "section name").decode("utf-8", "replace")
        plen, crc = r.unpack("<QI", f"section {name} length")
        sections[name] = r.take(plen, f"section {name}")
        if zlib.crc32(sections[name]) != crc:
            raise ChecksumError(f"{path}: checksum mismatch in section {name!r}")
    for need in ("header", "tensors"):
        if need not in sections:
            raise TruncatedError(f"{path}: missing section {need!r}")
    try:
        desc = json.loads(sections["header"].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"{path}: header section is corrupt ({exc})") from None
    t = _Reader(sections["tensors"])
    (count,) = t.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (nlen,) = t.unpack("<H", "tensor name length")
        name = t.take(nlen, "tensor name").decode("utf-8", "replace")
        (ndim,) = t.unpack("<B", f"rank of {name}")
        shape = t.unpack(f"<{ndim}I", f"shape of {name}")
        (crc,) = t.unpack("<I", f"checksum of {name}")
        data = t.take(4 * int(np.prod(shape, dtype=np.int64)), f"payload of {name}")
        if zlib.crc32(data) != crc:
            raise ChecksumError(f"{path}: checksum mismatch in tensor {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f4").reshape(shape)
    if t.pos != len(t.data):
        raise ChecksumError(f"{path}: trailing bytes in tensor section")
    return desc, tensors


def _assign(params: dict[str, Tensor], tensors: dict[str, np.ndarray], path) -> None:
    missing = set(params) - set(tensors)
    extra = set(tensors) - set(params)
    if missing or extra:
        raise ShapeMismatchError(f"{path}: tensor names differ from the model "
                                 f"(missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]})")
    for name, p in params.items():
        if tensors[name].shape != p.value.shape:
            raise ShapeMismatchError(f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                                     f"model expects {p.value.shape}")
        p.value = tensors[name].astype(np.float64)


def load_checkpoint(path: str | Path):
    desc, tensors = read_checkpoint(path)
    kind = desc.get("kind")
    if kind in _TRAINABLE:
        cfg = LookaheadConfig(**desc["config"])
        if Vocabulary.from_dict(desc["vocabulary"]) != Vocabulary(cfg.n_models):
            raise ShapeMismatchError(f"{path}: vocabulary does not match T={cfg.n_models}")
        cls = _TRAINABLE[kind]
        router = cls(cfg, seed=0, tau=desc.get("tau", 1.0)) if cls is ZooterRouter else cls(cfg, seed=0)
        _assign(router.params, tensors, path)
        router.metadata = desc.get("metadata", {})
        return router
    if kind in ("knn", "kmeans"):
        emb = BackboneEmbedder(**desc["embedder"])
        _assign(emb.params, {k[len("embedder."):]: v for k, v in tensors.items() if k.startswith("embedder.")}, path)
        if kind == "knn":
            router = KNNRouter(emb, desc["k"])
            router.ids = list(desc["ids"])
            router.embeddings = tensors["index.embeddings"].astype(np.float64)
            router.table = tensors["index.scores"].astype(np.float64)
            if router.embeddings.shape[0] != len(router.ids) or router.table.shape[0] != len(router.ids):
                raise ShapeMismatchError(f"{path}: neighbour index rows disagree with stored ids")
        else:
            router = KMeansRouter(emb, desc["k"], desc["seed"])
            sc = tensors["clusters.scores"].astype(np.float64)
            router.model = ClusterModel(tensors["clusters.centroids"].astype(np.float64), sc, sc.argmax(axis=1))
        return router
    raise CheckpointError(f"{path}: unknown router kind {kind!r}")


__all__ = ["MAGIC", "VERSION", "CheckpointError", "BadMagicError", "VersionError", "TruncatedError",
           "ChecksumError", "ShapeMismatchError", "save_checkpoint", "load_checkpoint", "read_checkpoint"]
