"""Gateway configuration file."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

LISTEN_ENV = "LOOKAHEAD_LISTEN"
MODES = ("route-only", "route-and-proxy")


class ConfigError(ValueError):
    pass


@dataclass
class Backend:
    index: int
    name: str
    url: str
    timeout_ms: int = 10000


@dataclass
class GatewayConfig:
    checkpoint: str
    backends: list[Backend] = field(default_factory=list)
    listen: str = "127.0.0.1:8080"
    mode: str = "route-only"

    def __post_init__(self):
        self.backends = [b if isinstance(b, Backend) else Backend(**b) for b in self.backends]
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        idx = sorted(b.index for b in self.backends)
        if idx != list(range(1, len(self.backends) + 1)):
            raise ConfigError(f"backend indices must be 1..{len(self.backends)} each once, got {idx}")
        if any(b.timeout_ms <= 0 for b in self.backends):
            raise ConfigError("backend timeouts must be positive")
        self.host_port()

    def host_port(self) -> tuple[str, int]:
        listen = os.environ.get(LISTEN_ENV) or self.listen
        host, sep, port = listen.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigError(f"listen address {listen!r} is not host:port")
        return host or "127.0.0.1", int(port)

    def backend(self, index: int) -> Backend:
        return next(b for b in self.backends if b.index == index)

    def check_models(self, n_models: int) -> None:
        if len(self.backends) != n_models:
            raise ConfigError(f"checkpoint routes among {n_models} models but {len(self.backends)} backends are configured")

    @classmethod
    def load(cls, path: str | Path) -> "GatewayConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(obj, dict) or "checkpoint" not in obj:
            raise ConfigError(f"{path}: missing field 'checkpoint'")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


__all__ = ["Backend", "GatewayConfig", "ConfigError", "LISTEN_ENV", "MODES"]
