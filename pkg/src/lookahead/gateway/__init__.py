from .checkpoint import (MAGIC, VERSION, BadMagicError, CheckpointError, ChecksumError, ShapeMismatchError,
                         TruncatedError, VersionError, load_checkpoint, read_checkpoint, save_checkpoint)
from .config import LISTEN_ENV, MODES, Backend, ConfigError, GatewayConfig

__all__ = [
    "MAGIC", "VERSION", "CheckpointError", "BadMagicError", "VersionError", "TruncatedError",
    "ChecksumError", "ShapeMismatchError", "save_checkpoint", "load_checkpoint", "read_checkpoint",
    "Backend", "GatewayConfig", "ConfigError", "LISTEN_ENV", "MODES",
]
