"""Byte-level vocabulary with PAD/EOS/CLS and per-model MID tokens."""
from __future__ import annotations

from dataclasses import dataclass

from ..numeric import ContractError

N_BYTES = 256
PAD, EOS, CLS = 256, 257, 258
MID_BASE = 259


@dataclass(frozen=True)
class Vocabulary:
    n_models: int

    def __post_init__(self):
        if self.n_models < 1:
            raise ContractError("vocabulary needs at least one model identifier")

    @property
    def size(self) -> int:
        return MID_BASE + self.n_models

    pad = PAD
    eos = EOS
    cls = CLS

    def mid(self, t: int) -> int:
        """Id of MID_t, with ``t`` counted from 1."""
        if not 1 <= t <= self.n_models:
            raise ContractError(f"MID_{t} outside 1..{self.n_models}")
        return MID_BASE + t - 1

    def special(self, name: str) -> int:
        if name in ("PAD", "EOS", "CLS"):
            return {"PAD": PAD, "EOS": EOS, "CLS": CLS}[name]
        if name.startswith("MID_") and name[4:].isdigit():
            return self.mid(int(name[4:]))
        raise ContractError(f"unknown special token {name!r}")

    def is_mid(self, token: int) -> bool:
        return MID_BASE <= token < MID_BASE + self.n_models

    def encode(self, text: bytes | str, prefix: tuple[str, ...] = (), suffix: tuple[str, ...] = (),
               max_len: int | None = None) -> list[int]:
        """Bytes plus special tokens. With ``max_len`` the text is cut from
        the tail so that the specials always survive."""
        if isinstance(text, str):
            text = text.encode("utf-8")
        pre = [self.special(s) for s in prefix]
        suf = [self.special(s) for s in suffix]
        body = list(text)
        if max_len is not None:
            room = max_len - len(pre) - len(suf)
            if room < 0:
                raise ContractError(f"{len(pre) + len(suf)} special tokens exceed max length {max_len}")
            body = body[:room]
        return pre + body + suf

    def decode(self, ids) -> bytes:
        """Bytes of the non-special ids, in order."""
        return bytes(int(i) for i in ids if 0 <= int(i) < N_BYTES)

    def to_dict(self) -> dict:
        return {"n_models": self.n_models, "pad": PAD, "eos": EOS, "cls": CLS, "mid_base": MID_BASE}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        if (d.get("pad"), d.get("eos"), d.get("cls"), d.get("mid_base")) != (PAD, EOS, CLS, MID_BASE):
            raise ContractError("vocabulary layout does not match this build")
        return cls(int(d["n_models"]))
