"""
Codec
=====
Generation-based coding: segment a file into disjoint generations, produce
coded packets with one of three per-generation encoders, decode each
generation on its own and reassemble the file.

    RL   every packet is a uniformly random combination c·G_j over GF(q)
    RLS  the g original blocks first, then RL packets forever
    MDS  a fixed codebook of K packets, repeated in a round-robin
         (Reed-Solomon over GF(256), parity check, or repetition)
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (BadBlockSize, GenerationMismatch, NotFullyDecoded,
                     SpecMismatch)
from .field import GF2, GF256, FieldSpec, SymbolVector, gf_inv

logger = logging.getLogger(__name__)


class Scheme(enum.IntEnum):
    """Coding schemes. Values double as the wire scheme byte."""
    RL = 0
    RLS = 1
    RS = 2
    PC = 3
    REP = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def is_mds(self) -> bool:
        return self in (Scheme.RS, Scheme.PC, Scheme.REP)

    @classmethod
    def from_name(cls, name: Union[str, "Scheme"]) -> "Scheme":
        if isinstance(name, Scheme):
            return name
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown scheme {name!r}; expected one of rl, rls, rs, pc, rep") from None


class MdsKind(enum.Enum):
    REED_SOLOMON = "reed_solomon"
    PARITY_CHECK = "parity_check"
    REPETITION = "repetition"


@dataclass(frozen=True)
class MdsCodeSpec:
    kind: MdsKind
    K: int
    g: int
    field: FieldSpec

    def __post_init__(self):
        if self.g < 1 or self.g > self.K:
            raise SpecMismatch(f"{self.kind.value}: need 1 <= g <= K, got g={self.g}, K={self.K}")
        if self.kind is MdsKind.REED_SOLOMON:
            if self.field.q != 256 or self.K > 255:
                raise SpecMismatch(f"reed_solomon needs GF(256) and K <= 255, got {self.field}, K={self.K}")
        elif self.kind is MdsKind.PARITY_CHECK:
            if self.K != self.g + 1 or self.field.l != 1:
                raise SpecMismatch(f"parity_check needs K = g+1 over GF(2), got K={self.K}, g={self.g}")
        elif self.K != self.g:
            raise SpecMismatch(f"repetition needs K = g, got K={self.K}, g={self.g}")

    @property
    def rate(self) -> float:
        return self.g / self.K

    @classmethod
    def reed_solomon(cls, g: int, K: int = 255) -> "MdsCodeSpec":
        return cls(MdsKind.REED_SOLOMON, K, g, GF256)

    @classmethod
    def parity_check(cls, g: int) -> "MdsCodeSpec":
        return cls(MdsKind.PARITY_CHECK, g + 1, g, GF2)

    @classmethod
    def repetition(cls, g: int, field: FieldSpec = GF2) -> "MdsCodeSpec":
        return cls(MdsKind.REPETITION, g, g, field)


@dataclass(frozen=True)
class FileLayout:
    N: int
    n: int
    g: int
    block_bytes: int
    pad_blocks: int
    data_bytes: int

    @classmethod
    def for_size(cls, data_bytes: int, block_bytes: int, g: int) -> "FileLayout":
        if data_bytes <= 0:
            raise BadBlockSize("cannot segment an empty file")
        if block_bytes <= 0 or g <= 0:
            raise BadBlockSize(f"block_bytes and g must be positive, got {block_bytes}, {g}")
        N = -(-data_bytes // block_bytes)
        n = -(-N // g)
        return cls(N=N, n=n, g=g, block_bytes=block_bytes, pad_blocks=n * g - N, data_bytes=data_bytes)

    @classmethod
    def for_blocks(cls, N: int, block_bytes: int, g: int) -> "FileLayout":
        return cls.for_size(N * block_bytes, block_bytes, g)


class Generation:
    """g file blocks coded together; row s is block index*g + s."""

    def __init__(self, index: int, matrix: np.ndarray, field: FieldSpec, block_bytes: int):
        self.index = index
        self.matrix = matrix
        self.field = field
        self.block_bytes = block_bytes
        self.symbols_per_block = block_bytes * 8 // field.l

    @property
    def g(self) -> int:
        return self.matrix.shape[0]

    def row(self, s: int) -> SymbolVector:
        return SymbolVector(self.field, self.symbols_per_block, self.matrix[s].copy())

    @property
    def rows(self) -> List[SymbolVector]:
        return [self.row(s) for s in range(self.g)]

    def combine(self, coeffs: np.ndarray) -> SymbolVector:
        """c·G_j for a coefficient array of length g."""
        coeffs = np.asarray(coeffs, dtype=np.uint8)
        if self.field.l == 1:
            picked = self.matrix[coeffs.astype(bool)]
        else:
            picked = self.field.mul_table[coeffs[:, None], self.matrix]
        if picked.shape[0] == 0:
            return SymbolVector.zeros(self.field, self.symbols_per_block)
        return SymbolVector(self.field, self.symbols_per_block, np.bitwise_xor.reduce(picked, axis=0))


class DescriptorKind(enum.Enum):
    SYSTEMATIC = "systematic"
    RANDOM_VECTOR = "random_vector"
    MDS_SYMBOL = "mds_symbol"


@dataclass(frozen=True)
class CodingDescriptor:
    kind: DescriptorKind
    index: int = 0
    vector: Optional[SymbolVector] = None

    @classmethod
    def systematic(cls, block_index: int) -> "CodingDescriptor":
        return cls(DescriptorKind.SYSTEMATIC, block_index)

    @classmethod
    def random_vector(cls, vector: SymbolVector) -> "CodingDescriptor":
        return cls(DescriptorKind.RANDOM_VECTOR, 0, vector)

    @classmethod
    def mds_symbol(cls, symbol_index: int) -> "CodingDescriptor":
        return cls(DescriptorKind.MDS_SYMBOL, symbol_index)


@dataclass
class CodedPacket:
    generation_index: int
    descriptor: CodingDescriptor
    payload: SymbolVector


def segment_file(data: bytes, block_bytes: int, g: int, field: FieldSpec) -> Tuple[FileLayout, List[Generation]]:
    """Split data into N zero-padded blocks grouped into n generations of g rows."""
    if block_bytes <= 0 or (block_bytes * 8) % field.l:
        raise BadBlockSize(f"{block_bytes}-byte blocks do not hold a whole number of {field} symbols")
    layout = FileLayout.for_size(len(data), block_bytes, g)

    padded = np.zeros(layout.n * g * block_bytes, dtype=np.uint8)
    padded[:len(data)] = np.frombuffer(bytes(data), dtype=np.uint8)
    blocks = padded.reshape(layout.n, g, block_bytes)

    generations = []
    for j in range(layout.n):
        if field.l == 1:
            words = -(-block_bytes // 8)
            wide = np.zeros((g, words * 8), dtype=np.uint8)
            wide[:, :block_bytes] = blocks[j]
            matrix = wide.view(">u8").copy()
        else:
            matrix = np.stack([SymbolVector.from_bytes(field, blocks[j, s].tobytes()).data for s in range(g)])
        generations.append(Generation(j, matrix, field, block_bytes))
    logger.debug("segmented %d bytes into N=%d, n=%d, pad=%d", len(data), layout.N, layout.n, layout.pad_blocks)
    return layout, generations


def rl_encode(gen: Generation, rng: np.random.Generator, field: FieldSpec) -> CodedPacket:
    # the zero vector is a legal draw
    coeffs = rng.integers(0, field.q, size=gen.g).astype(np.uint8)
    return CodedPacket(gen.index,
                       CodingDescriptor.random_vector(SymbolVector.from_symbols(field, coeffs)),
                       gen.combine(coeffs))


def rls_next(gen: Generation, m: int, rng: np.random.Generator, field: FieldSpec) -> CodedPacket:
    if m < gen.g:
        return CodedPacket(gen.index, CodingDescriptor.systematic(m), gen.row(m))
    return rl_encode(gen, rng, field)


def mds_coefficients(spec: MdsCodeSpec) -> np.ndarray:
    """K x g generator matrix; row i is what coded symbol i combines."""
    K, g = spec.K, spec.g
    if spec.kind is MdsKind.REED_SOLOMON:
        order = spec.field.q - 1
        powers = (np.arange(K)[:, None] * np.arange(g)[None, :]) % order
        return spec.field.exp[powers].astype(np.uint8)
    matrix = np.zeros((K, g), dtype=np.uint8)
    matrix[np.arange(g), np.arange(g)] = 1
    if spec.kind is MdsKind.PARITY_CHECK:
        matrix[g, :] = 1
    return matrix


class MdsCodebook:
    """The K coded packets of one generation, encoded on first use."""

    def __init__(self, gen: Generation, spec: MdsCodeSpec):
        self.generation = gen
        self.spec = spec
        self.coefficients = mds_coefficients(spec)
        self._cache: Dict[int, CodedPacket] = {}

    def __len__(self):
        return self.spec.K

    def __getitem__(self, i: int) -> CodedPacket:
        if not 0 <= i < self.spec.K:
            raise IndexError(i)
        if i not in self._cache:
            payload = self.generation.combine(self.coefficients[i])
            self._cache[i] = CodedPacket(self.generation.index, CodingDescriptor.mds_symbol(i), payload)
        return self._cache[i]

    def __iter__(self):
        return (self[i] for i in range(self.spec.K))


def mds_build(gen: Generation, spec: MdsCodeSpec) -> MdsCodebook:
    if spec.g != gen.g:
        raise SpecMismatch(f"code dimension {spec.g} does not match generation size {gen.g}")
    if spec.field != gen.field:
        raise SpecMismatch(f"code over {spec.field} applied to a generation over {gen.field}")
    return MdsCodebook(gen, spec)


def mds_next(codebook: MdsCodebook, t: int) -> CodedPacket:
    return codebook[t % len(codebook)]


class DecoderState:
    """Per-generation receiver state.

    Elimination mode keeps each stored row normalised with a leading 1 at its
    pivot column and zeros before it; back-substitution runs once rank = g.
    MDS mode keeps the distinct symbol indices seen so far.
    """

    def __init__(self, generation_index: int, g: int, field: FieldSpec,
                 mds_spec: Optional[MdsCodeSpec] = None):
        self.generation_index = generation_index
        self.g = g
        self.field = field
        self.mds_spec = mds_spec
        self.decoded = False
        self.received = 0
        self.superfluous = 0
        self._pivots: List[Optional[Tuple[SymbolVector, SymbolVector]]] = [None] * g
        self._rank = 0
        self._symbols: Dict[int, SymbolVector] = {}
        self._rows: Optional[List[SymbolVector]] = None

    @property
    def mode(self) -> str:
        return "mds" if self.mds_spec is not None else "elimination"

    @property
    def rank(self) -> int:
        if self.mds_spec is not None:
            return self.g if self.decoded else len(self._symbols)
        return self._rank

    @property
    def rows(self) -> List[SymbolVector]:
        if self._rows is None:
            raise NotFullyDecoded([self.generation_index])
        return self._rows

    def ingest(self, pkt: CodedPacket) -> bool:
        """Feed one received packet; True when it completes the generation."""
        if pkt.generation_index != self.generation_index:
            raise GenerationMismatch(
                f"packet for generation {pkt.generation_index} fed to decoder {self.generation_index}")
        self.received += 1
        if self.decoded:
            self.superfluous += 1
            return False
        if self.mds_spec is not None:
            return self._ingest_symbol(pkt)
        return self._ingest_vector(pkt)

    # elimination

    def _coefficients(self, descriptor: CodingDescriptor) -> SymbolVector:
        if descriptor.kind is DescriptorKind.SYSTEMATIC:
            unit = np.zeros(self.g, dtype=np.uint8)
            unit[descriptor.index] = 1
            return SymbolVector.from_symbols(self.field, unit)
        if descriptor.kind is DescriptorKind.RANDOM_VECTOR and descriptor.vector is not None:
            if descriptor.vector.length != self.g:
                raise SpecMismatch(f"coding vector of length {descriptor.vector.length}, expected {self.g}")
            return descriptor.vector.copy()
        raise SpecMismatch(f"{descriptor.kind.value} packet fed to an elimination decoder")

    def _ingest_vector(self, pkt: CodedPacket) -> bool:
        coeffs = self._coefficients(pkt.descriptor)
        return self.add_row(coeffs, pkt.payload.copy())

    def add_row(self, coeffs: SymbolVector, payload: SymbolVector) -> bool:
        p = coeffs.first_nonzero()
        while p != -1:
            pivot = self._pivots[p]
            if pivot is None:
                inv = gf_inv(coeffs[p], self.field)
                self._pivots[p] = (coeffs.scale_(inv), payload.scale_(inv))
                self._rank += 1
                if self._rank == self.g:
                    self._back_substitute()
                    return True
                return False
            c = coeffs[p]
            coeffs.axpy_(c, pivot[0])
            payload.axpy_(c, pivot[1])
            p = coeffs.first_nonzero(p + 1)
        self.superfluous += 1
        return False

    def _back_substitute(self):
        for p in range(self.g - 1, -1, -1):
            coeffs, payload = self._pivots[p]
            c = coeffs.first_nonzero(p + 1)
            while c != -1:
                payload.axpy_(coeffs[c], self._pivots[c][1])
                c = coeffs.first_nonzero(c + 1)
        self._rows = [pivot[1] for pivot in self._pivots]
        self._pivots = [None] * self.g
        self.decoded = True

    # mds

    def _ingest_symbol(self, pkt: CodedPacket) -> bool:
        if pkt.descriptor.kind is not DescriptorKind.MDS_SYMBOL:
            raise SpecMismatch(f"{pkt.descriptor.kind.value} packet fed to an MDS decoder")
        index = pkt.descriptor.index
        if not 0 <= index < self.mds_spec.K:
            raise SpecMismatch(f"symbol index {index} outside [0, {self.mds_spec.K})")
        if index in self._symbols:
            self.superfluous += 1
            return False
        self._symbols[index] = pkt.payload
        if len(self._symbols) < self.g:
            return False
        self._rows = self._solve_mds()
        self._symbols = {}
        self.decoded = True
        return True

    def _solve_mds(self) -> List[SymbolVector]:
        g, symbols = self.g, self._symbols
        kind = self.mds_spec.kind
        if kind is MdsKind.REPETITION:
            return [symbols[s] for s in range(g)]
        if kind is MdsKind.PARITY_CHECK:
            rows = [symbols.get(s) for s in range(g)]
            missing = [s for s, row in enumerate(rows) if row is None]
            if missing:
                recovered = symbols[g].copy()
                for row in rows:
                    if row is not None:
                        recovered.axpy_(1, row)
                rows[missing[0]] = recovered
            return rows
        # Vandermonde solve on any g of the received points
        coefficients = mds_coefficients(self.mds_spec)
        solver = DecoderState(self.generation_index, g, self.field)
        for index in sorted(symbols)[:g]:
            solver.add_row(SymbolVector.from_symbols(self.field, coefficients[index]), symbols[index].copy())
        if not solver.decoded:
            raise SpecMismatch("Vandermonde system is singular; evaluation points are not distinct")
        return solver.rows


def decoder_ingest(state: DecoderState, pkt: CodedPacket, field: FieldSpec) -> Tuple[DecoderState, bool]:
    if field != state.field:
        raise SpecMismatch(f"decoder over {state.field} used with {field}")
    return state, state.ingest(pkt)


def reassemble(layout: FileLayout, decoded: Sequence[DecoderState]) -> bytes:
    by_index = {state.generation_index: state for state in decoded}
    missing = [j for j in range(layout.n) if j not in by_index or not by_index[j].decoded]
    if missing:
        raise NotFullyDecoded(missing)
    chunks = []
    for j in range(layout.n):
        for row in by_index[j].rows:
            chunks.append(row.to_bytes()[:layout.block_bytes])
    return b"".join(chunks)[:layout.data_bytes]


# Round-robin streaming

class PacketSource:
    """Emits the coded packets of one generation in transmission order."""

    def __init__(self, scheme: Scheme, gen: Generation, rng: np.random.Generator,
                 mds_spec: Optional[MdsCodeSpec] = None):
        self.scheme = scheme
        self.generation = gen
        self.rng = rng
        self.sent = 0
        self.codebook = mds_build(gen, mds_spec) if scheme.is_mds else None

    def next_packet(self) -> CodedPacket:
        m = self.sent
        self.sent += 1
        if self.codebook is not None:
            return mds_next(self.codebook, m)
        if self.scheme is Scheme.RLS:
            return rls_next(self.generation, m, self.rng, self.generation.field)
        return rl_encode(self.generation, self.rng, self.generation.field)


class RoundRobinScheduler:
    """Transmission t (1-based) comes from generation (t-1) mod n."""

    def __init__(self, sources: Sequence[PacketSource]):
        self.sources = list(sources)
        self.t = 0

    def next_packet(self) -> CodedPacket:
        source = self.sources[self.t % len(self.sources)]
        self.t += 1
        return source.next_packet()


def build_scheduler(scheme: Scheme, generations: Sequence[Generation], rng: np.random.Generator,
                    mds_spec: Optional[MdsCodeSpec] = None) -> RoundRobinScheduler:
    return RoundRobinScheduler([PacketSource(scheme, gen, rng, mds_spec) for gen in generations])


def build_decoders(layout: FileLayout, field: FieldSpec, mds_spec: Optional[MdsCodeSpec] = None) -> List[DecoderState]:
    return [DecoderState(j, layout.g, field, mds_spec) for j in range(layout.n)]
