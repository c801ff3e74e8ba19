"""
Errors
======
Exception hierarchy shared by every genstream module.
"""

from typing import Iterable, Optional


class GenstreamError(Exception):
    """Base class for everything genstream raises on purpose."""


# Field arithmetic

class ZeroInverse(GenstreamError, ZeroDivisionError):
    """Zero has no multiplicative inverse."""


class LengthMismatch(GenstreamError, ValueError):
    pass


class NotIrreducible(GenstreamError, ValueError):
    pass


# Codec

class BadBlockSize(GenstreamError, ValueError):
    pass


class SpecMismatch(GenstreamError, ValueError):
    pass


class GenerationMismatch(GenstreamError, ValueError):
    pass


class NotFullyDecoded(GenstreamError, RuntimeError):
    def __init__(self, missing: Iterable[int]):
        self.missing = sorted(missing)
        preview = ", ".join(str(i) for i in self.missing[:16])
        if len(self.missing) > 16:
            preview += ", ..."
        super().__init__(f"{len(self.missing)} generation(s) not decoded: [{preview}]")


# Analysis

class BadSpec(GenstreamError, ValueError):
    pass


class NoConvergence(GenstreamError, RuntimeError):
    pass


# Simulator

class TrialTimeout(GenstreamError, RuntimeError):
    def __init__(self, seed: int, transmissions: int):
        self.seed = seed
        self.transmissions = transmissions
        super().__init__(f"trial with seed {seed} did not finish within {transmissions} transmissions")


# Wire format

class WireError(GenstreamError, ValueError):
    pass


class BadMagic(WireError):
    pass


class BadVersion(WireError):
    pass


class BadScheme(WireError):
    pass


class Truncated(WireError):
    pass


class BadLength(WireError):
    pass


class Oversize(WireError):
    pass


# Transport

class SocketError(GenstreamError, OSError):
    pass


class NoCompletion(GenstreamError, RuntimeError):
    def __init__(self, message: str, packets_sent: Optional[int] = None):
        self.packets_sent = packets_sent
        super().__init__(message)


# Configuration

class ConfigError(GenstreamError, ValueError):
    pass
