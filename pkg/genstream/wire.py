"""
Wire format
===========
One coded packet per UDP datagram, all integers big-endian:

    magic      2  0x47 0x43
    version    1  0x01
    scheme     1  0=RL 1=RLS 2=RS 3=PC 4=REP
    flags      1  bit0 systematic, bit1 completion, others 0
    generation 2
    descriptor    systematic block / MDS symbol index (2 bytes), or
                  coding-vector byte length (2) + packed vector
    length     2  payload bytes
    payload

A completion datagram has no descriptor and an empty payload (9 bytes).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from .codec import CodedPacket, CodingDescriptor, DescriptorKind, Scheme
from .errors import (BadLength, BadMagic, BadScheme, BadVersion, Oversize,
                     Truncated, WireError)
from .field import FieldSpec, SymbolVector, pack_symbols, unpack_symbols

MAGIC = b"\x47\x43"
VERSION = 0x01
FLAG_SYSTEMATIC = 0x01
FLAG_COMPLETION = 0x02
MAX_DATAGRAM = 1472
MAX_VECTOR_BITS = 1024

_HEADER = struct.Struct(">2sBBBH")
_U16 = struct.Struct(">H")


@dataclass(frozen=True)
class WirePacket:
    scheme: Scheme
    flags: int
    generation_index: int
    descriptor_kind: Optional[DescriptorKind]
    descriptor_index: int = 0
    vector: bytes = b""
    payload: bytes = b""

    @property
    def systematic(self) -> bool:
        return bool(self.flags & FLAG_SYSTEMATIC)

    @property
    def completion(self) -> bool:
        return bool(self.flags & FLAG_COMPLETION)

    def to_coded(self, field: FieldSpec, g: int, block_bytes: Optional[int] = None) -> CodedPacket:
        """Rebuild the CodedPacket; g and the field come from the session."""
        if self.completion:
            raise WireError("completion datagrams carry no coded packet")
        if block_bytes is not None and len(self.payload) != block_bytes:
            raise BadLength(f"payload of {len(self.payload)} bytes, session blocks are {block_bytes}")
        if self.descriptor_kind is DescriptorKind.RANDOM_VECTOR:
            if len(self.vector) != -(-g * field.l // 8):
                raise BadLength(f"coding vector of {len(self.vector)} bytes does not fit g={g} over {field}")
            descriptor = CodingDescriptor.random_vector(
                SymbolVector.from_symbols(field, unpack_symbols(self.vector, field.l, g)))
        elif self.descriptor_kind is DescriptorKind.SYSTEMATIC:
            descriptor = CodingDescriptor.systematic(self.descriptor_index)
        else:
            descriptor = CodingDescriptor.mds_symbol(self.descriptor_index)
        return CodedPacket(self.generation_index, descriptor, SymbolVector.from_bytes(field, self.payload))


def _descriptor_kind(scheme: Scheme, flags: int) -> DescriptorKind:
    if scheme.is_mds:
        return DescriptorKind.MDS_SYMBOL
    if flags & FLAG_SYSTEMATIC:
        return DescriptorKind.SYSTEMATIC
    return DescriptorKind.RANDOM_VECTOR


def encode_wire(pkt: Optional[CodedPacket], scheme: Scheme, completion: bool = False) -> bytes:
    scheme = Scheme(scheme)
    if completion:
        return _HEADER.pack(MAGIC, VERSION, scheme, FLAG_COMPLETION, 0) + _U16.pack(0)

    kind = pkt.descriptor.kind
    expected = {DescriptorKind.MDS_SYMBOL} if scheme.is_mds else (
        {DescriptorKind.SYSTEMATIC, DescriptorKind.RANDOM_VECTOR} if scheme is Scheme.RLS
        else {DescriptorKind.RANDOM_VECTOR})
    if kind not in expected:
        raise BadScheme(f"{kind.value} packet cannot travel as {scheme.label}")
    if not 0 <= pkt.generation_index <= 0xFFFF:
        raise Oversize(f"generation index {pkt.generation_index} does not fit 16 bits")

    flags = FLAG_SYSTEMATIC if kind is DescriptorKind.SYSTEMATIC else 0
    parts = [_HEADER.pack(MAGIC, VERSION, scheme, flags, pkt.generation_index)]
    if kind is DescriptorKind.RANDOM_VECTOR:
        vector = pkt.descriptor.vector
        if vector.length * vector.field.l > MAX_VECTOR_BITS:
            raise Oversize(f"coding vector of {vector.length * vector.field.l} bits exceeds {MAX_VECTOR_BITS}")
        packed = pack_symbols(vector.symbols(), vector.field.l)
        parts += [_U16.pack(len(packed)), packed]
    else:
        if not 0 <= pkt.descriptor.index <= 0xFFFF:
            raise Oversize(f"descriptor index {pkt.descriptor.index} does not fit 16 bits")
        parts.append(_U16.pack(pkt.descriptor.index))
    payload = pkt.payload.to_bytes()
    parts += [_U16.pack(len(payload)), payload]

    datagram = b"".join(parts)
    if len(datagram) > MAX_DATAGRAM:
        raise Oversize(f"datagram of {len(datagram)} bytes exceeds {MAX_DATAGRAM}")
    return datagram


def completion_datagram(scheme: Scheme) -> bytes:
    return encode_wire(None, scheme, completion=True)


def _u16(data: bytes, offset: int, what: str) -> int:
    if len(data) < offset + 2:
        raise Truncated(f"datagram ends before {what} at byte {offset}")
    return _U16.unpack_from(data, offset)[0]


def parse_wire(data: bytes) -> WirePacket:
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise Truncated(f"{len(data)} bytes is shorter than the {_HEADER.size}-byte header")
    magic, version, scheme_byte, flags, generation = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic.hex()}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    try:
        scheme = Scheme(scheme_byte)
    except ValueError:
        raise BadScheme(f"unknown scheme byte {scheme_byte}") from None
    if flags & ~(FLAG_SYSTEMATIC | FLAG_COMPLETION):
        raise WireError(f"reserved flag bits set: {flags:#04x}")

    offset = _HEADER.size
    if flags & FLAG_COMPLETION:
        if _u16(data, offset, "payload length") != 0 or len(data) != offset + 2:
            raise BadLength("completion datagram with a payload")
        return WirePacket(scheme, flags, generation, None)

    kind = _descriptor_kind(scheme, flags)
    if flags & FLAG_SYSTEMATIC and scheme is not Scheme.RLS:
        raise WireError(f"systematic flag on a {scheme.label} packet")
    index, vector = 0, b""
    if kind is DescriptorKind.RANDOM_VECTOR:
        size = _u16(data, offset, "vector length")
        offset += 2
        if len(data) < offset + size:
            raise Truncated("datagram ends inside the coding vector")
        vector = data[offset:offset + size]
        offset += size
    else:
        index = _u16(data, offset, "descriptor")
        offset += 2

    length = _u16(data, offset, "payload length")
    offset += 2
    if len(data) < offset + length:
        raise Truncated(f"payload length {length} but only {len(data) - offset} bytes follow")
    if len(data) != offset + length:
        raise BadLength(f"{len(data) - offset - length} trailing bytes after payload")
    return WirePacket(scheme, flags, generation, kind, index, vector, data[offset:])
