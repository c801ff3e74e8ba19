"""
Transport
=========
Stream a file over UDP with the round-robin coded schemes. The receiver
sends nothing back until the whole file decodes; then it sends a completion
datagram (three times) and the sender stops.

Loss for controlled runs comes from a seeded drop shim on the sender side.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .analysis import SchemeParams, expected_T
from .codec import (FileLayout, build_decoders, build_scheduler, reassemble,
                    segment_file)
from .errors import ConfigError, GenstreamError, NoCompletion, SocketError, WireError
from .wire import MAX_DATAGRAM, completion_datagram, encode_wire, parse_wire

logger = logging.getLogger(__name__)

Address = Tuple[str, int]

DEFAULT_RATE = 1_000_000
HEADER_ALLOWANCE = 72


@dataclass
class SessionConfig:
    params: SchemeParams
    block_bytes: int = 1400
    nominal_rate: float = DEFAULT_RATE
    bind: Address = ("127.0.0.1", 0)
    dest: Optional[Address] = None
    file_path: Optional[Path] = None
    file_bytes: Optional[int] = None
    drop: float = 0.0
    drop_seed: int = 0
    coding_seed: int = 0
    timeout_s: Optional[float] = None
    completion_repeats: int = 3
    burst_datagrams: int = 8

    def __post_init__(self):
        if self.nominal_rate <= 0:
            raise ConfigError(f"nominal rate must be positive, got {self.nominal_rate}")
        if not 0.0 <= self.drop < 1.0:
            raise ConfigError(f"drop probability must lie in [0, 1), got {self.drop}")
        if self.file_path is not None:
            self.file_path = Path(self.file_path)


def default_timeout_s(params: SchemeParams, block_bytes: int, nominal_rate: float) -> float:
    """Ten times the delivery time predicted at 50% loss."""
    mean, _, _ = expected_T(params.with_epsilon(0.5), tol=1e-9)
    return 10.0 * mean * (block_bytes + HEADER_ALLOWANCE) / nominal_rate


class TokenBucket:
    """Byte-rate pacing with a small burst allowance."""

    def __init__(self, rate: float, capacity: float):
        self.rate = rate
        self.capacity = capacity
        self.tokens = capacity
        self.last = time.monotonic()

    def _refill(self):
        now = time.monotonic()
        self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
        self.last = now

    async def consume(self, amount: int):
        self._refill()
        while self.tokens < amount:
            await asyncio.sleep((amount - self.tokens) / self.rate)
            self._refill()
        self.tokens -= amount


@dataclass
class SenderReport:
    packets_sent: int
    packets_dropped: int
    bytes_sent: int
    elapsed_s: float
    completed: bool

    @property
    def loss_rate(self) -> float:
        return self.packets_dropped / self.packets_sent if self.packets_sent else 0.0

    def as_lines(self) -> List[str]:
        return [f"packets_sent={self.packets_sent}", f"packets_dropped={self.packets_dropped}",
                f"bytes_sent={self.bytes_sent}", f"elapsed_s={self.elapsed_s:.6f}",
                f"loss_rate={self.loss_rate:.6f}", f"completed={int(self.completed)}"]


@dataclass
class ReceiverReport:
    packets_received: int
    malformed: int
    superfluous: int
    elapsed_s: float
    bytes_written: int
    generations: int
    per_generation_received: List[int] = field(default_factory=list)

    @property
    def t_proxy(self) -> int:
        """Packets received before completion; a lower bound on T."""
        return self.packets_received

    def as_lines(self) -> List[str]:
        return [f"packets_received={self.packets_received}", f"t_proxy={self.t_proxy}",
                f"malformed={self.malformed}", f"superfluous={self.superfluous}",
                f"elapsed_s={self.elapsed_s:.6f}", f"bytes_written={self.bytes_written}",
                f"generations={self.generations}"]


class _SenderProtocol(asyncio.DatagramProtocol):
    def __init__(self):
        self.completed = asyncio.Event()

    def datagram_received(self, data, addr):
        try:
            if parse_wire(data).completion:
                self.completed.set()
        except WireError as exc:
            logger.debug("sender ignored datagram from %s: %s", addr, exc)

    def error_received(self, exc):
        logger.debug("sender socket error: %s", exc)


class _ReceiverProtocol(asyncio.DatagramProtocol):
    def __init__(self):
        self.queue: asyncio.Queue = asyncio.Queue()

    def datagram_received(self, data, addr):
        self.queue.put_nowait((data, addr))

    def error_received(self, exc):
        logger.debug("receiver socket error: %s", exc)


async def _endpoint(factory, **kwargs):
    loop = asyncio.get_running_loop()
    try:
        return await loop.create_datagram_endpoint(factory, **kwargs)
    except OSError as exc:
        raise SocketError(f"cannot open UDP endpoint {kwargs}: {exc}") from exc


async def send_file_async(cfg: SessionConfig) -> SenderReport:
    if cfg.file_path is None or cfg.dest is None:
        raise ConfigError("sender needs a file path and a destination")
    params = cfg.params
    data = cfg.file_path.read_bytes()
    layout, generations = segment_file(data, cfg.block_bytes, params.g, params.payload_field)
    if layout.n != params.n:
        raise ConfigError(f"file holds {layout.N} blocks but params expect N={params.N}")
    scheduler = build_scheduler(params.scheme, generations, np.random.default_rng(cfg.coding_seed),
                                params.mds_spec())
    drop_rng = np.random.default_rng(cfg.drop_seed)
    timeout = cfg.timeout_s or default_timeout_s(params, cfg.block_bytes, cfg.nominal_rate)
    bucket = TokenBucket(cfg.nominal_rate, cfg.burst_datagrams * MAX_DATAGRAM)

    transport, protocol = await _endpoint(_SenderProtocol, local_addr=cfg.bind, remote_addr=cfg.dest)
    logger.info("sending %s (%d bytes, N=%d, n=%d) to %s as %s", cfg.file_path, len(data), layout.N,
                layout.n, cfg.dest, params.scheme.label)
    start = time.monotonic()
    sent = dropped = sent_bytes = 0
    try:
        while not protocol.completed.is_set():
            if time.monotonic() - start > timeout:
                raise NoCompletion(f"no completion after {timeout:.1f}s and {sent} packets", packets_sent=sent)
            datagram = encode_wire(scheduler.next_packet(), params.scheme)
            await bucket.consume(len(datagram))
            sent += 1
            sent_bytes += len(datagram)
            if drop_rng.random() < cfg.drop:
                dropped += 1
            else:
                transport.sendto(datagram)
            await asyncio.sleep(0)
    finally:
        transport.close()
    elapsed = time.monotonic() - start
    logger.info("completion after %d packets (%d dropped) in %.3fs", sent, dropped, elapsed)
    return SenderReport(sent, dropped, sent_bytes, elapsed, True)


async def recv_file_async(cfg: SessionConfig, ready: Optional[asyncio.Future] = None) -> ReceiverReport:
    """Receive until every generation decodes; ready gets the bound address."""
    if cfg.file_bytes is None or cfg.file_path is None:
        raise ConfigError("receiver needs the file size and an output path")
    params = cfg.params
    field_spec = params.payload_field
    layout = FileLayout.for_size(cfg.file_bytes, cfg.block_bytes, params.g)
    mds_spec = params.mds_spec()
    decoders = build_decoders(layout, field_spec, mds_spec)
    per_generation = [0] * layout.n
    timeout = cfg.timeout_s or default_timeout_s(params, cfg.block_bytes, cfg.nominal_rate)

    try:
        transport, protocol = await _endpoint(_ReceiverProtocol, local_addr=cfg.bind)
    except SocketError as exc:
        if ready is not None:
            ready.set_exception(exc)
        raise
    if ready is not None:
        ready.set_result(transport.get_extra_info("sockname"))
    deadline = time.monotonic() + timeout
    first_packet = None
    elapsed = 0.0
    received = malformed = 0
    remaining = layout.n
    sender = None
    try:
        while remaining:
            try:
                data, addr = await asyncio.wait_for(protocol.queue.get(), deadline - time.monotonic())
            except asyncio.TimeoutError:
                raise NoCompletion(f"{remaining} generation(s) undecoded after {timeout:.1f}s") from None
            if first_packet is None:
                first_packet = time.monotonic()
            try:
                wp = parse_wire(data)
                if wp.completion:
                    continue
                if wp.scheme != params.scheme:
                    raise WireError(f"{wp.scheme.label} packet in a {params.scheme.label} session")
                if not 0 <= wp.generation_index < layout.n:
                    raise WireError(f"generation {wp.generation_index} outside [0, {layout.n})")
                pkt = wp.to_coded(field_spec, params.g, cfg.block_bytes)
                received += 1
                per_generation[pkt.generation_index] += 1
                if decoders[pkt.generation_index].ingest(pkt):
                    remaining -= 1
            except (GenstreamError, ValueError) as exc:
                malformed += 1
                logger.debug("dropped datagram from %s: %s", addr, exc)
                continue
            sender = addr

        if first_packet is not None:
            elapsed = time.monotonic() - first_packet
        output = reassemble(layout, decoders)
        cfg.file_path.write_bytes(output)
        done = completion_datagram(params.scheme)
        for _ in range(cfg.completion_repeats if sender is not None else 0):
            transport.sendto(done, sender)
        # let the completion datagrams leave before closing
        await asyncio.sleep(0)
    finally:
        transport.close()
    logger.info("decoded %d generations from %d packets in %.3fs", layout.n, received, elapsed)
    return ReceiverReport(
        packets_received=received,
        malformed=malformed,
        superfluous=sum(d.superfluous for d in decoders),
        elapsed_s=elapsed,
        bytes_written=len(output),
        generations=layout.n,
        per_generation_received=per_generation,
    )


def send_file(cfg: SessionConfig) -> SenderReport:
    return asyncio.run(send_file_async(cfg))


def recv_file(cfg: SessionConfig) -> ReceiverReport:
    return asyncio.run(recv_file_async(cfg))


async def run_loopback_session(params: SchemeParams, source: Path, output: Path, *, block_bytes: int = 1400,
                               nominal_rate: float = DEFAULT_RATE, drop: float = 0.0, seed: int = 0,
                               timeout_s: Optional[float] = None) -> Tuple[SenderReport, ReceiverReport]:
    """Receiver and sender on 127.0.0.1 inside one event loop."""
    source, output = Path(source), Path(output)
    ready = asyncio.get_running_loop().create_future()
    receiver_cfg = SessionConfig(params, block_bytes, nominal_rate, file_path=output,
                                 file_bytes=source.stat().st_size, timeout_s=timeout_s)
    receiving = asyncio.create_task(recv_file_async(receiver_cfg, ready))
    address = await ready
    sender_cfg = SessionConfig(params, block_bytes, nominal_rate, dest=(address[0], address[1]),
                               file_path=source, drop=drop, drop_seed=seed, coding_seed=seed + 1,
                               timeout_s=timeout_s)
    try:
        sent = await send_file_async(sender_cfg)
    except BaseException:
        receiving.cancel()
        raise
    return sent, await receiving
