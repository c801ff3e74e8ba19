import itertools

import numpy as np
import pytest

from genstream.codec import (CodedPacket, CodingDescriptor, DecoderState, DescriptorKind, FileLayout,
                             MdsCodeSpec, Scheme, build_decoders, build_scheduler, decoder_ingest, mds_build,
                             mds_coefficients, mds_next, reassemble, rl_encode, rls_next, segment_file)
from genstream.errors import (BadBlockSize, GenerationMismatch, NotFullyDecoded, SpecMismatch)
from genstream.field import GF2, GF256, SymbolVector, gf, gf_add, gf_mul


def _generation(field, g, block_bytes=8, seed=0):
    rng = np.random.default_rng(seed)
    _, gens = segment_file(rng.bytes(g * block_bytes), block_bytes, g, field)
    return gens[0]


def _mds_spec(scheme, g):
    return {Scheme.RS: lambda: MdsCodeSpec.reed_solomon(g),
            Scheme.PC: lambda: MdsCodeSpec.parity_check(g),
            Scheme.REP: lambda: MdsCodeSpec.repetition(g)}.get(scheme, lambda: None)()


def _payload_field(scheme):
    return GF256 if scheme is Scheme.RS else GF2


def test_layout_examples():
    assert FileLayout.for_size(716800, 1400, 16) == FileLayout(512, 32, 16, 1400, 0, 716800)
    assert FileLayout.for_size(100, 100, 1) == FileLayout(1, 1, 1, 100, 0, 100)
    layout = FileLayout.for_size(300, 100, 4)
    assert (layout.N, layout.n, layout.pad_blocks) == (3, 1, 1)
    assert FileLayout.for_blocks(512, 1400, 48).pad_blocks == 16


def test_segment_rejects_bad_input():
    with pytest.raises(BadBlockSize):
        segment_file(b"", 100, 4, GF2)
    with pytest.raises(BadBlockSize):
        segment_file(b"abc", 0, 4, GF2)


def test_rl_payload_is_the_combination():
    gen = _generation(GF2, 2)
    both = gen.combine(np.array([1, 1]))
    assert both.to_bytes() == bytes(a ^ b for a, b in zip(gen.row(0).to_bytes(), gen.row(1).to_bytes()))
    assert gen.combine(np.array([0, 0])).is_zero()


def test_rl_encode_over_gf256_matches_scalar_arithmetic():
    gen = _generation(GF256, 3)
    pkt = rl_encode(gen, np.random.default_rng(5), GF256)
    coeffs = pkt.descriptor.vector.symbols()
    rows = [gen.row(s).symbols() for s in range(3)]
    for k in range(gen.symbols_per_block):
        value = 0
        for s in range(3):
            value = gf_add(value, gf_mul(int(coeffs[s]), int(rows[s][k]), GF256), GF256)
        assert pkt.payload[k] == value


def test_rl_single_block_is_zero_half_the_time():
    gen = _generation(GF2, 1)
    rng = np.random.default_rng(11)
    zeros = sum(rl_encode(gen, rng, GF2).payload.is_zero() for _ in range(10_000))
    # 4.5 standard errors of a fair coin over 10^4 draws
    assert abs(zeros - 5000) < 4.5 * 50


def test_rls_sends_rows_first():
    gen = _generation(GF2, 4)
    rng = np.random.default_rng(0)
    for m in range(4):
        pkt = rls_next(gen, m, rng, GF2)
        assert pkt.descriptor == CodingDescriptor.systematic(m)
        assert pkt.payload == gen.row(m)
    assert rls_next(gen, 4, rng, GF2).descriptor.kind is DescriptorKind.RANDOM_VECTOR


def test_mds_codebooks():
    gen = _generation(GF256, 1)
    for pkt in mds_build(gen, MdsCodeSpec.reed_solomon(1)):
        assert pkt.payload == gen.row(0)

    gen = _generation(GF2, 2)
    pc = [pkt.payload for pkt in mds_build(gen, MdsCodeSpec.parity_check(2))]
    assert pc[0] == gen.row(0) and pc[1] == gen.row(1)
    assert pc[2] == gen.row(0).copy().axpy_(1, gen.row(1))

    gen = _generation(GF256, 2)
    book = mds_build(gen, MdsCodeSpec.reed_solomon(2))
    alpha = GF256.alpha_power(1)
    assert book[1].payload == gen.row(0).copy().axpy_(alpha, gen.row(1))


def test_mds_round_robin_wraps():
    book = mds_build(_generation(GF2, 3), MdsCodeSpec.parity_check(3))
    assert mds_next(book, 0).descriptor.index == 0
    assert mds_next(book, 4).descriptor.index == 0
    assert mds_next(book, 6).descriptor.index == 2


def test_mds_spec_validation():
    with pytest.raises(SpecMismatch):
        MdsCodeSpec.reed_solomon(256, 300)
    with pytest.raises(SpecMismatch):
        MdsCodeSpec.reed_solomon(8, 4)
    with pytest.raises(SpecMismatch):
        MdsCodeSpec(MdsCodeSpec.parity_check(4).kind, 6, 4, GF2)
    with pytest.raises(SpecMismatch):
        mds_build(_generation(GF2, 4), MdsCodeSpec.reed_solomon(4))
    assert MdsCodeSpec.reed_solomon(16).rate == pytest.approx(16 / 255)


def test_two_by_two_elimination_by_hand():
    gen = _generation(GF2, 2)
    state = DecoderState(0, 2, GF2)
    for coeffs, done in (([1, 0], False), ([1, 1], True)):
        pkt = CodedPacket(0, CodingDescriptor.random_vector(SymbolVector.from_symbols(GF2, coeffs)),
                          gen.combine(np.array(coeffs)))
        state, newly = decoder_ingest(state, pkt, GF2)
        assert newly is done
    assert state.rows == gen.rows


def test_dependent_and_duplicate_packets_are_superfluous():
    gen = _generation(GF2, 3)
    state = DecoderState(0, 3, GF2)
    state.ingest(rls_next(gen, 0, None, GF2))
    state.ingest(rls_next(gen, 0, None, GF2))
    assert (state.rank, state.superfluous, state.received) == (1, 1, 2)

    book = mds_build(_generation(GF256, 3), MdsCodeSpec.reed_solomon(3, 8))
    state = DecoderState(0, 3, GF256, book.spec)
    state.ingest(book[5])
    state.ingest(book[5])
    assert (state.rank, state.superfluous) == (1, 1)
    state.ingest(book[0])
    assert state.ingest(book[7])
    assert state.rows == book.generation.rows


def test_decoder_rejects_foreign_generation():
    gen = _generation(GF2, 2)
    with pytest.raises(GenerationMismatch):
        DecoderState(1, 2, GF2).ingest(rls_next(gen, 0, None, GF2))


def test_parity_recovers_a_missing_row():
    gen = _generation(GF2, 4)
    book = mds_build(gen, MdsCodeSpec.parity_check(4))
    state = DecoderState(0, 4, GF2, book.spec)
    for i in (0, 1, 3, 4):
        state.ingest(book[i])
    assert state.decoded
    assert state.rows == gen.rows


def test_elimination_success_matches_exhaustive_binary_rank():
    # every 3x3 binary matrix; 168 of 512 are invertible
    decoded = 0
    for bits in itertools.product([0, 1], repeat=9):
        rows = np.array(bits).reshape(3, 3)
        state = DecoderState(0, 3, GF2)
        for row in rows:
            state.add_row(SymbolVector.from_symbols(GF2, row), SymbolVector.zeros(GF2, 8))
        decoded += state.decoded
        assert state.decoded == (round(np.linalg.det(rows)) % 2 == 1)
    assert decoded == 168


@pytest.mark.parametrize("g", [2, 4, 8, 16])
def test_reed_solomon_decodes_from_any_g_symbols(g):
    gen = _generation(GF256, g, seed=g)
    book = mds_build(gen, MdsCodeSpec.reed_solomon(g))
    rng = np.random.default_rng(g)
    for _ in range(200):
        state = DecoderState(0, g, GF256, book.spec)
        for index in rng.choice(255, size=g, replace=False):
            state.ingest(book[int(index)])
        assert state.decoded
        assert state.rows == gen.rows


def test_rs_generator_rows_are_vandermonde():
    coeffs = mds_coefficients(MdsCodeSpec.reed_solomon(3, 5))
    for i in range(5):
        x = GF256.alpha_power(i)
        assert list(coeffs[i]) == [1, x, gf_mul(x, x, GF256)]


@pytest.mark.parametrize("scheme", list(Scheme))
@pytest.mark.parametrize("g,N", [(1, 16), (4, 64), (16, 512)])
def test_lossless_round_trip(scheme, g, N):
    field = _payload_field(scheme)
    data = np.random.default_rng(N).bytes(N * 8 - 3)
    layout, gens = segment_file(data, 8, g, field)
    spec = _mds_spec(scheme, g)
    scheduler = build_scheduler(scheme, gens, np.random.default_rng(1), spec)
    decoders = build_decoders(layout, field, spec)
    while not all(d.decoded for d in decoders):
        pkt = scheduler.next_packet()
        decoders[pkt.generation_index].ingest(pkt)
    if scheme is not Scheme.RL:
        # no redundancy is needed without losses
        assert scheduler.t == layout.n * g
    assert reassemble(layout, decoders) == data


def test_padded_round_trip():
    data = bytes(range(256)) + bytes(44)
    layout, gens = segment_file(data, 100, 4, GF2)
    decoders = build_decoders(layout, GF2)
    for m in range(4):
        decoders[0].ingest(rls_next(gens[0], m, None, GF2))
    assert layout.pad_blocks == 1
    assert reassemble(layout, decoders) == data


def test_reassemble_names_missing_generations():
    layout, gens = segment_file(bytes(64), 8, 2, GF2)
    decoders = build_decoders(layout, GF2)
    for j in (0, 2):
        for m in range(2):
            decoders[j].ingest(rls_next(gens[j], m, None, GF2))
    with pytest.raises(NotFullyDecoded) as info:
        reassemble(layout, decoders)
    assert info.value.missing == [1, 3]


def test_round_robin_order():
    layout, gens = segment_file(bytes(6 * 8), 8, 2, GF2)
    scheduler = build_scheduler(Scheme.RLS, gens, np.random.default_rng(0))
    order = [scheduler.next_packet().generation_index for _ in range(7)]
    assert order == [0, 1, 2, 0, 1, 2, 0]
    assert [s.sent for s in scheduler.sources] == [3, 2, 2]


def test_nibble_field_round_trip():
    field = gf(4)
    data = np.random.default_rng(2).bytes(40)
    layout, gens = segment_file(data, 8, 5, field)
    scheduler = build_scheduler(Scheme.RL, gens, np.random.default_rng(3))
    decoders = build_decoders(layout, field)
    while not all(d.decoded for d in decoders):
        pkt = scheduler.next_packet()
        decoders[pkt.generation_index].ingest(pkt)
    assert reassemble(layout, decoders) == data
