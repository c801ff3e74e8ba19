"""
Field arithmetic
================
GF(2) and GF(2^l) for l in {1, 2, 4, 8}.

Multiplication in the extension fields goes through log/antilog tables
built once per FieldSpec. GF(2) vectors are packed 64 symbols to a word so
that a row combination is a word-wide XOR.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field as dataclass_field
from typing import Iterable, Optional

import numpy as np

from .errors import LengthMismatch, NotIrreducible, ZeroInverse

SUPPORTED_BITS = (1, 2, 4, 8)

# x+1, x^2+x+1, x^4+x+1, x^8+x^4+x^3+x^2+1
DEFAULT_MODULI = {1: 0x3, 2: 0x7, 4: 0x13, 8: 0x11D}

WORD_BITS = 64
_WORD = np.dtype(">u8")


def _poly_degree(p: int) -> int:
    return p.bit_length() - 1


def _poly_mod(a: int, b: int) -> int:
    db = _poly_degree(b)
    while a and _poly_degree(a) >= db:
        a ^= b << (_poly_degree(a) - db)
    return a


def is_irreducible(modulus: int) -> bool:
    """Trial division by every polynomial of degree 1..deg/2."""
    degree = _poly_degree(modulus)
    if degree < 1:
        return False
    for divisor in range(2, 1 << (degree // 2 + 1)):
        if _poly_mod(modulus, divisor) == 0:
            return False
    return True


def clmul_reduce(a: int, b: int, l: int, modulus: int) -> int:
    """Carry-less multiply then reduce. Table-free reference path."""
    product = 0
    while b:
        if b & 1:
            product ^= a
        a <<= 1
        b >>= 1
    return _poly_mod(product, modulus) if product >> l else product


@dataclass(frozen=True)
class FieldSpec:
    l: int
    modulus: Optional[int] = None
    exp: np.ndarray = dataclass_field(init=False, repr=False, compare=False)
    log: np.ndarray = dataclass_field(init=False, repr=False, compare=False)
    mul_table: np.ndarray = dataclass_field(init=False, repr=False, compare=False)
    inv_table: np.ndarray = dataclass_field(init=False, repr=False, compare=False)
    generator: int = dataclass_field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.l not in SUPPORTED_BITS:
            raise NotIrreducible(f"unsupported extension degree l={self.l}; expected one of {SUPPORTED_BITS}")
        modulus = DEFAULT_MODULI[self.l] if self.modulus is None else self.modulus
        if _poly_degree(modulus) != self.l or not is_irreducible(modulus):
            raise NotIrreducible(f"modulus {modulus:#x} is not an irreducible polynomial of degree {self.l}")
        object.__setattr__(self, "modulus", modulus)
        self._build_tables()

    @property
    def q(self) -> int:
        return 1 << self.l

    def _build_tables(self):
        q, order = self.q, self.q - 1
        generator = next(a for a in range(1, q) if self._order(a) == order)
        exp = np.zeros(2 * order, dtype=np.int64)
        log = np.zeros(q, dtype=np.int64)
        value = 1
        for i in range(order):
            exp[i] = value
            log[value] = i
            value = clmul_reduce(value, generator, self.l, self.modulus)
        exp[order:] = exp[:order]

        logs = log[1:]
        mul = np.zeros((q, q), dtype=np.uint8)
        mul[1:, 1:] = exp[logs[:, None] + logs[None, :]]
        inv = np.zeros(q, dtype=np.uint8)
        inv[1:] = exp[(order - logs) % order]

        for name, table in (("exp", exp), ("log", log), ("mul_table", mul), ("inv_table", inv)):
            table.setflags(write=False)
            object.__setattr__(self, name, table)
        object.__setattr__(self, "generator", generator)

    def _order(self, a: int) -> int:
        value, k = a, 1
        while value != 1:
            value = clmul_reduce(value, a, self.l, self.modulus)
            k += 1
        return k

    def alpha_power(self, k: int) -> int:
        """generator**k, the RS evaluation point order."""
        return int(self.exp[k % (self.q - 1)])

    def __str__(self):
        return f"GF({self.q})"


@functools.lru_cache(maxsize=None)
def gf(l: int) -> FieldSpec:
    """Shared FieldSpec with the default modulus."""
    return FieldSpec(l)


GF2 = gf(1)
GF256 = gf(8)


def gf_add(a: int, b: int, f: FieldSpec) -> int:
    return a ^ b


def gf_mul(a: int, b: int, f: FieldSpec) -> int:
    return int(f.mul_table[a, b])


def gf_inv(a: int, f: FieldSpec) -> int:
    if a == 0:
        raise ZeroInverse(f"0 has no inverse in {f}")
    return int(f.inv_table[a])


def gf_pow(a: int, k: int, f: FieldSpec) -> int:
    result = 1
    while k:
        if k & 1:
            result = clmul_reduce(result, a, f.l, f.modulus)
        a = clmul_reduce(a, a, f.l, f.modulus)
        k >>= 1
    return result


class SymbolVector:
    """Fixed-length vector of field symbols.

    GF(2) vectors keep their bits in big-endian 64-bit words; larger fields
    keep one symbol per uint8.
    """

    __slots__ = ("field", "length", "data")

    def __init__(self, field: FieldSpec, length: int, data: np.ndarray):
        self.field = field
        self.length = length
        self.data = data

    # construction

    @classmethod
    def zeros(cls, field: FieldSpec, length: int) -> "SymbolVector":
        if field.l == 1:
            return cls(field, length, np.zeros(-(-length // WORD_BITS), dtype=_WORD))
        return cls(field, length, np.zeros(length, dtype=np.uint8))

    @classmethod
    def from_symbols(cls, field: FieldSpec, symbols: Iterable[int]) -> "SymbolVector":
        values = np.asarray(list(symbols) if not isinstance(symbols, np.ndarray) else symbols, dtype=np.int64)
        if values.size and (values.min() < 0 or values.max() >= field.q):
            raise ValueError(f"symbol out of range for {field}")
        length = int(values.size)
        if field.l == 1:
            return cls(field, length, _pack_bits(values.astype(np.uint8), length))
        return cls(field, length, values.astype(np.uint8))

    @classmethod
    def from_bytes(cls, field: FieldSpec, raw: bytes) -> "SymbolVector":
        buf = np.frombuffer(bytes(raw), dtype=np.uint8)
        length = buf.size * 8 // field.l
        if field.l == 1:
            padded = np.zeros(-(-buf.size // 8) * 8, dtype=np.uint8)
            padded[:buf.size] = buf
            return cls(field, length, padded.view(_WORD).copy())
        if field.l == 8:
            return cls(field, length, buf.copy())
        per_byte = 8 // field.l
        shifts = field.l * np.arange(per_byte - 1, -1, -1, dtype=np.uint8)
        symbols = (buf[:, None] >> shifts[None, :]) & (field.q - 1)
        return cls(field, length, symbols.astype(np.uint8).ravel())

    @classmethod
    def random(cls, field: FieldSpec, length: int, rng: np.random.Generator) -> "SymbolVector":
        return cls.from_symbols(field, rng.integers(0, field.q, size=length))

    # views

    def symbols(self) -> np.ndarray:
        if self.field.l == 1:
            return np.unpackbits(self.data.view(np.uint8))[:self.length]
        return self.data

    def to_bytes(self) -> bytes:
        if self.field.l == 1:
            return self.data.tobytes()[:-(-self.length // 8)]
        if self.field.l == 8:
            return self.data.tobytes()
        return pack_symbols(self.data, self.field.l)

    def __len__(self):
        return self.length

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        if self.field.l == 1:
            word = int(self.data[i // WORD_BITS])
            return (word >> (WORD_BITS - 1 - i % WORD_BITS)) & 1
        return int(self.data[i])

    def first_nonzero(self, start: int = 0) -> int:
        """Index of the first nonzero symbol at or after start, or -1."""
        if self.field.l == 1:
            for w in range(start // WORD_BITS, self.data.size):
                word = int(self.data[w])
                if w == start // WORD_BITS:
                    word &= (1 << (WORD_BITS - start % WORD_BITS)) - 1
                if word:
                    return w * WORD_BITS + WORD_BITS - word.bit_length()
            return -1
        hits = np.flatnonzero(self.data[start:])
        return start + int(hits[0]) if hits.size else -1

    def is_zero(self) -> bool:
        return not self.data.any()

    def copy(self) -> "SymbolVector":
        return SymbolVector(self.field, self.length, self.data.copy())

    def __eq__(self, other):
        if not isinstance(other, SymbolVector):
            return NotImplemented
        return (self.field == other.field and self.length == other.length
                and np.array_equal(self.data, other.data))

    def __repr__(self):
        shown = "".join(map(str, self.symbols()[:32])) if self.field.l == 1 else list(self.symbols()[:8])
        return f"SymbolVector({self.field}, len={self.length}, {shown})"

    # arithmetic

    def scale_(self, coeff: int) -> "SymbolVector":
        """In-place multiply by a scalar."""
        if coeff == 1:
            return self
        if coeff == 0:
            self.data[:] = 0
        elif self.field.l > 1:
            self.data = self.field.mul_table[coeff][self.data]
        return self

    def axpy_(self, coeff: int, src: "SymbolVector") -> "SymbolVector":
        """In-place self += coeff * src."""
        if src.length != self.length or src.field != self.field:
            raise LengthMismatch(f"axpy on vectors of length {self.length} and {src.length}")
        if coeff == 0:
            return self
        if coeff == 1:
            self.data ^= src.data
        else:
            self.data ^= self.field.mul_table[coeff][src.data]
        return self


def _pack_bits(bits: np.ndarray, length: int) -> np.ndarray:
    packed = np.packbits(bits)
    padded = np.zeros(-(-length // WORD_BITS) * 8, dtype=np.uint8)
    padded[:packed.size] = packed
    return padded.view(_WORD).copy()


def pack_symbols(symbols: np.ndarray, l: int) -> bytes:
    """Pack l-bit symbols MSB-first into bytes, zero-filling the last byte."""
    symbols = np.asarray(symbols, dtype=np.uint8)
    if l == 8:
        return symbols.tobytes()
    if l == 1:
        return np.packbits(symbols).tobytes()
    per_byte = 8 // l
    padded = np.zeros(-(-symbols.size // per_byte) * per_byte, dtype=np.uint8)
    padded[:symbols.size] = symbols
    shifts = l * np.arange(per_byte - 1, -1, -1, dtype=np.uint8)
    grouped = padded.reshape(-1, per_byte) << shifts[None, :]
    return np.bitwise_or.reduce(grouped, axis=1).astype(np.uint8).tobytes()


def unpack_symbols(raw: bytes, l: int, count: int) -> np.ndarray:
    buf = np.frombuffer(bytes(raw), dtype=np.uint8)
    if l == 8:
        return buf[:count].copy()
    if l == 1:
        return np.unpackbits(buf)[:count]
    per_byte = 8 // l
    shifts = l * np.arange(per_byte - 1, -1, -1, dtype=np.uint8)
    return (((buf[:, None] >> shifts[None, :]) & ((1 << l) - 1)).ravel()[:count]).astype(np.uint8)


def axpy(dst: SymbolVector, coeff: int, src: SymbolVector, f: FieldSpec) -> SymbolVector:
    """dst + coeff*src as a new vector."""
    if dst.field != f:
        raise LengthMismatch(f"vector over {dst.field} used with {f}")
    return dst.copy().axpy_(coeff, src)
