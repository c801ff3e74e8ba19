"""
Run configuration
=================
RunSpec layers, lowest precedence first: built-in defaults, a key=value
config file (``--config`` or ``GENSTREAM_CONFIG``), command-line flags.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, Mapping, Optional, Tuple

from dotenv import dotenv_values

from .analysis import DEFAULT_TOL, RS_DEFAULT_LENGTH, SchemeParams
from .codec import Scheme
from .errors import ConfigError, GenstreamError
from .simulator import DEFAULT_TRIALS

logger = logging.getLogger(__name__)

COMMANDS = ("predict", "simulate", "compare", "send", "recv")
DEFAULT_SCHEMES = (Scheme.RL, Scheme.RLS, Scheme.RS, Scheme.PC)
DEFAULT_GEN_SIZES = tuple(2 ** k for k in range(10))
NOMINAL_RATE_KB = 1000


def _split(value: Any) -> Tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(part.strip() for part in str(value).split(",") if part.strip())


def _bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _address(value: Any) -> Tuple[str, int]:
    if isinstance(value, tuple):
        return value
    host, _, port = str(value).rpartition(":")
    try:
        return (host or "127.0.0.1", int(port))
    except ValueError:
        raise ConfigError(f"address must look like host:port, got {value!r}") from None


def _optional(convert: Callable[[Any], Any]) -> Callable[[Any], Any]:
    return lambda value: None if value in (None, "") else convert(value)


_CONVERTERS: Dict[str, Callable[[Any], Any]] = {
    "schemes": lambda v: tuple(Scheme.from_name(s) for s in _split(v)),
    "gen_sizes": lambda v: tuple(int(s) for s in _split(v)),
    "epsilon": float,
    "measured_epsilon": _optional(float),
    "field_bits": int,
    "blocks": int,
    "block_bytes": int,
    "trials": int,
    "seed": int,
    "rate_bps": _optional(float),
    "binary_units": _bool,
    "rx_power_w": float,
    "out": _optional(Path),
    "paired": _bool,
    "rs_length": int,
    "tol": float,
    "bind": _address,
    "dest": _optional(_address),
    "file": _optional(Path),
    "file_bytes": _optional(int),
    "drop": float,
    "timeout_s": _optional(float),
    "transport_csv": lambda v: tuple(Path(s) for s in _split(v)),
}

# config-file spellings that differ from the RunSpec field name
_ALIASES = {"scheme": "schemes", "gen_size": "gen_sizes", "generation_sizes": "gen_sizes"}


@dataclass(frozen=True)
class RunSpec:
    command: str
    schemes: Tuple[Scheme, ...] = DEFAULT_SCHEMES
    gen_sizes: Tuple[int, ...] = DEFAULT_GEN_SIZES
    epsilon: float = 0.15
    measured_epsilon: Optional[float] = None
    field_bits: int = 1
    blocks: int = 512
    block_bytes: int = 1400
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    rate_bps: Optional[float] = None
    binary_units: bool = False
    rx_power_w: float = 1.0
    out: Optional[Path] = None
    paired: bool = False
    rs_length: int = RS_DEFAULT_LENGTH
    tol: float = DEFAULT_TOL
    bind: Tuple[str, int] = ("127.0.0.1", 0)
    dest: Optional[Tuple[str, int]] = None
    file: Optional[Path] = None
    file_bytes: Optional[int] = None
    drop: float = 0.0
    timeout_s: Optional[float] = None
    transport_csv: Tuple[Path, ...] = ()

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.rate_bps is None:
            unit = 1024 if self.binary_units else 1000
            object.__setattr__(self, "rate_bps", float(NOMINAL_RATE_KB * unit))
        if not self.schemes:
            raise ConfigError("no schemes selected")
        if not self.gen_sizes:
            raise ConfigError("generation size list is empty")
        bad = [g for g in self.gen_sizes if not 1 <= g <= self.blocks]
        if bad:
            raise ConfigError(f"generation sizes {bad} must lie in [1, N={self.blocks}]")
        for name in ("epsilon", "measured_epsilon", "drop"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")
        if self.trials < 1 or self.blocks < 1 or self.block_bytes < 1:
            raise ConfigError("trials, blocks and block_bytes must be positive")
        if self.rate_bps <= 0 or self.rx_power_w <= 0:
            raise ConfigError("rate and receive power must be positive")
        if not 1 <= self.rs_length <= 255:
            raise ConfigError(f"RS code length must lie in [1, 255], got {self.rs_length}")
        if not list(self.points()):
            raise ConfigError("no (scheme, g) pair is valid for this configuration")

    def params(self, scheme: Scheme, g: int, epsilon: Optional[float] = None) -> SchemeParams:
        return SchemeParams(scheme, g, self.blocks, self.epsilon if epsilon is None else epsilon,
                            field_bits=self.field_bits, K=self.rs_length if scheme is Scheme.RS else None)

    def points(self) -> Iterator[Tuple[Scheme, int]]:
        """(scheme, g) pairs in sweep order, skipping codes that cannot exist."""
        for scheme in self.schemes:
            for g in self.gen_sizes:
                try:
                    self.params(scheme, g)
                except GenstreamError as exc:
                    logger.warning("skipping %s g=%d: %s", scheme.label, g, exc)
                    continue
                yield scheme, g

    @classmethod
    def from_mapping(cls, command: str, values: Mapping[str, Any]) -> "RunSpec":
        known = {f.name for f in fields(cls)} - {"command"}
        kwargs = {}
        for raw_key, value in values.items():
            key = raw_key.strip().lower().replace("-", "_")
            key = _ALIASES.get(key, key)
            if key not in known:
                raise ConfigError(f"unknown configuration key {raw_key!r}")
            try:
                kwargs[key] = _CONVERTERS[key](value)
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for {raw_key}: {value!r} ({exc})") from None
        return cls(command=command, **kwargs)


def read_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """key=value pairs from path, or from GENSTREAM_CONFIG when path is None."""
    path = path or os.getenv("GENSTREAM_CONFIG")
    if not path:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


def load_run_spec(command: str, flags: Mapping[str, Any], config_path: Optional[Path] = None) -> RunSpec:
    merged = dict(read_config_file(config_path))
    merged.update({k: v for k, v in flags.items() if v is not None})
    return RunSpec.from_mapping(command, merged)
