import asyncio
import math
import time

import numpy as np
import pytest

from genstream.analysis import SchemeParams, expected_T
from genstream.codec import Scheme
from genstream.config import RunSpec
from genstream.errors import BadBlockSize, ConfigError, NoCompletion
from genstream.report import cmd_compare, transport_row, write_csv
from genstream.transport import (HEADER_ALLOWANCE, SessionConfig, TokenBucket, default_timeout_s,
                                 recv_file_async, run_loopback_session, send_file_async)

RATE = 5_000_000


def _source(tmp_path, blocks=512, block_bytes=1400, seed=0):
    path = tmp_path / "source.bin"
    path.write_bytes(np.random.default_rng(seed).bytes(blocks * block_bytes))
    return path


@pytest.mark.slow
def test_loopback_session_recovers_the_file(tmp_path):
    source = _source(tmp_path)
    output = tmp_path / "received.bin"
    params = SchemeParams(Scheme.RLS, 16, 512, 0.15)
    sent, received = asyncio.run(run_loopback_session(params, source, output, nominal_rate=RATE, drop=0.15,
                                                      seed=1, timeout_s=60))
    assert output.read_bytes() == source.read_bytes()
    assert sent.completed
    assert sent.packets_sent >= 512
    assert received.packets_received <= sent.packets_sent - sent.packets_dropped
    assert received.packets_received - received.superfluous >= 512
    assert received.malformed == 0
    assert sum(received.per_generation_received) == received.packets_received
    assert 0.05 < sent.loss_rate < 0.25


@pytest.mark.slow
def test_lossless_mds_session(tmp_path):
    source = _source(tmp_path, blocks=40, block_bytes=200)
    output = tmp_path / "received.bin"
    params = SchemeParams(Scheme.RS, 8, 40, 0.0)
    sent, received = asyncio.run(run_loopback_session(params, source, output, block_bytes=200,
                                                      nominal_rate=RATE, timeout_s=30))
    assert output.read_bytes() == source.read_bytes()
    assert received.packets_received == 40
    assert received.superfluous == 0
    assert 0.0 <= received.elapsed_s <= sent.elapsed_s + 1.0


@pytest.mark.slow
def test_sent_count_matches_prediction(tmp_path):
    source = _source(tmp_path)
    params = SchemeParams(Scheme.RLS, 16, 512, 0.15)
    spec = RunSpec("compare", schemes=(Scheme.RLS,), gen_sizes=(16,), transport_csv=(tmp_path / "sessions.csv",))
    sent_counts, rows = [], []
    for seed in range(20):
        output = tmp_path / f"received_{seed}.bin"
        sent, _ = asyncio.run(run_loopback_session(params, source, output, nominal_rate=1_000_000, drop=0.15,
                                                   seed=1000 + seed, timeout_s=60))
        sent_counts.append(sent.packets_sent)
        rows.append(transport_row(spec, params.with_epsilon(sent.loss_rate), sent.packets_sent, 1000 + seed))

    normalized = np.array(sent_counts) / 512
    se = np.std(normalized, ddof=1) / math.sqrt(len(normalized))
    assert abs(normalized.mean() - expected_T(params)[0] / 512) <= 3 * se

    # the same sessions replayed through compare at their measured loss
    write_csv(rows, tmp_path / "sessions.csv")
    result = cmd_compare(spec)
    analytic, measured = result.rows
    assert measured.source == "transport" and measured.trials == 20
    assert analytic.epsilon == pytest.approx(np.mean([r.epsilon for r in rows]))
    assert result.passed, result.message


@pytest.mark.slow
def test_malformed_datagrams_are_counted(tmp_path):
    source = _source(tmp_path, blocks=32, block_bytes=100)
    output = tmp_path / "received.bin"
    params = SchemeParams(Scheme.RLS, 4, 32, 0.1)

    async def session():
        loop = asyncio.get_running_loop()
        ready = loop.create_future()
        receiver = SessionConfig(params, 100, RATE, file_path=output, file_bytes=3200, timeout_s=30)
        receiving = asyncio.create_task(recv_file_async(receiver, ready))
        address = await ready
        junk, _ = await loop.create_datagram_endpoint(asyncio.DatagramProtocol, remote_addr=address)
        for datagram in (b"", b"GC", b"\x47\x43\x01\x07\x00\x00\x00\x00\x00", b"\x00" * 40):
            junk.sendto(datagram)
        junk.close()
        await asyncio.sleep(0.05)
        sender = SessionConfig(params, 100, RATE, dest=address, file_path=source, drop=0.1, drop_seed=3,
                               timeout_s=30)
        await send_file_async(sender)
        return await receiving

    report = asyncio.run(session())
    assert report.malformed == 4
    assert output.read_bytes() == source.read_bytes()


@pytest.mark.slow
def test_unreachable_receiver_runs_into_the_cap(tmp_path):
    source = _source(tmp_path, blocks=8, block_bytes=100)
    params = SchemeParams(Scheme.RL, 4, 8, 0.0)
    cfg = SessionConfig(params, 100, RATE, dest=("127.0.0.1", 9), file_path=source, timeout_s=0.3)
    with pytest.raises(NoCompletion) as info:
        asyncio.run(send_file_async(cfg))
    assert info.value.packets_sent > 0


def test_receiver_refuses_an_empty_file(tmp_path):
    params = SchemeParams(Scheme.RLS, 4, 16, 0.1)
    cfg = SessionConfig(params, 100, RATE, file_path=tmp_path / "out.bin", file_bytes=0, timeout_s=1)
    with pytest.raises(BadBlockSize):
        asyncio.run(recv_file_async(cfg))
    assert not (tmp_path / "out.bin").exists()


def test_default_timeout_follows_the_half_loss_prediction():
    params = SchemeParams(Scheme.RLS, 16, 512, 0.15)
    mean = expected_T(params.with_epsilon(0.5), tol=1e-9)[0]
    assert default_timeout_s(params, 1400, 1_000_000) == pytest.approx(10 * mean * (1400 + HEADER_ALLOWANCE) / 1e6)


def test_session_config_validation():
    params = SchemeParams(Scheme.RLS, 4, 16, 0.1)
    with pytest.raises(ConfigError):
        SessionConfig(params, nominal_rate=0)
    with pytest.raises(ConfigError):
        SessionConfig(params, drop=1.0)
    with pytest.raises(ConfigError):
        asyncio.run(send_file_async(SessionConfig(params)))


def test_token_bucket_paces_bytes():
    async def drain():
        bucket = TokenBucket(rate=100_000, capacity=1000)
        start = time.monotonic()
        for _ in range(21):
            await bucket.consume(1000)
        return time.monotonic() - start

    # the first kilobyte rides the initial burst
    assert asyncio.run(drain()) >= 0.9 * 20 * 1000 / 100_000
