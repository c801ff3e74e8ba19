"""
Simulator
=========
Monte Carlo engine: a round-robin sender over a memoryless erasure channel
feeding the real codec decoders.

Every trial splits its seed into independent streams for the channel, the
coding vectors and the synthetic file, so switching schemes under the same
seed replays the same loss pattern.
"""

from __future__ import annotations

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .analysis import DeliveryDistribution, SchemeParams
from .codec import (FileLayout, Generation, build_decoders, build_scheduler,
                    reassemble, segment_file)
from .errors import BadSpec, TrialTimeout

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 10_000
SIM_BLOCK_BYTES = 8
MAX_TRANSMISSIONS = 10 ** 8


class ErasureChannel:
    """i.i.d. Bernoulli(epsilon) erasures drawn in batches from one stream."""

    def __init__(self, epsilon: float, rng: np.random.Generator, batch: int = 4096):
        self.epsilon = epsilon
        self.rng = rng
        self.batch = batch
        self._draws = np.empty(0, dtype=bool)
        self._pos = 0
        self.sent = 0
        self.lost = 0

    def erased(self) -> bool:
        if self._pos == self._draws.size:
            self._draws = self.rng.random(self.batch) < self.epsilon
            self._pos = 0
        lost = bool(self._draws[self._pos])
        self._pos += 1
        self.sent += 1
        self.lost += lost
        return lost

    @property
    def loss_rate(self) -> float:
        return self.lost / self.sent if self.sent else 0.0


def trial_streams(seed: int, count: int = 3) -> List[np.random.Generator]:
    """Independent generators for channel, coding and data, in that order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


@dataclass
class TrialRecord:
    T: int
    received_count: int
    superfluous_count: int
    per_generation_M: Tuple[int, ...]
    seed: int
    loss_rate: float = 0.0
    intact: bool = True


def run_trial(params: SchemeParams, layout: FileLayout, seed: int,
              generations: Optional[Sequence[Generation]] = None,
              source: Optional[bytes] = None,
              max_transmissions: int = MAX_TRANSMISSIONS) -> TrialRecord:
    """Stream one file until every generation decodes; T is the transmission count."""
    if layout.g != params.g or layout.n != params.n:
        raise BadSpec(f"layout (g={layout.g}, n={layout.n}) does not match params (g={params.g}, n={params.n})")
    channel_rng, coding_rng, data_rng = trial_streams(seed)
    field_spec = params.payload_field
    if generations is None:
        if source is None:
            source = data_rng.bytes(layout.data_bytes)
        _, generations = segment_file(source, layout.block_bytes, layout.g, field_spec)

    mds_spec = params.mds_spec()
    scheduler = build_scheduler(params.scheme, generations, coding_rng, mds_spec)
    decoders = build_decoders(layout, field_spec, mds_spec)
    channel = ErasureChannel(params.epsilon, channel_rng)
    needed = [0] * layout.n
    remaining = layout.n
    received = 0

    while remaining:
        if scheduler.t >= max_transmissions:
            raise TrialTimeout(seed, max_transmissions)
        pkt = scheduler.next_packet()
        if channel.erased():
            continue
        received += 1
        if decoders[pkt.generation_index].ingest(pkt):
            needed[pkt.generation_index] = scheduler.sources[pkt.generation_index].sent
            remaining -= 1

    intact = True
    if source is not None:
        intact = reassemble(layout, decoders) == bytes(source)
    return TrialRecord(
        T=scheduler.t,
        received_count=received,
        superfluous_count=sum(d.superfluous for d in decoders),
        per_generation_M=tuple(needed),
        seed=seed,
        loss_rate=channel.loss_rate,
        intact=intact,
    )


@dataclass
class BatchStats:
    trials: int
    mean_T: float
    std_T: float
    ci95_halfwidth: float
    mean_loss_rate: float
    T_values: np.ndarray = field(repr=False)
    records: List[TrialRecord] = field(default_factory=list, repr=False)

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord]) -> "BatchStats":
        frame = pd.DataFrame({"T": [r.T for r in records], "loss": [r.loss_rate for r in records]})
        trials = len(frame)
        std = float(frame["T"].std(ddof=1)) if trials > 1 else 0.0
        return cls(
            trials=trials,
            mean_T=float(frame["T"].mean()),
            std_T=std,
            ci95_halfwidth=1.96 * std / math.sqrt(trials),
            mean_loss_rate=float(frame["loss"].mean()),
            T_values=np.sort(frame["T"].to_numpy()),
            records=list(records),
        )

    def empirical_cdf(self, t) -> np.ndarray:
        """Fraction of trials with T <= t."""
        return np.searchsorted(self.T_values, np.asarray(t), side="right") / self.trials

    @property
    def all_intact(self) -> bool:
        return all(r.intact for r in self.records)


def _check_batch_args(trials: int):
    if trials < 1:
        raise BadSpec(f"trials must be >= 1, got {trials}")


def run_batch(params: SchemeParams, layout: FileLayout, trials: int, base_seed: int,
              concurrency: int = 1) -> BatchStats:
    """Run trials with seeds base_seed + i and aggregate them."""
    _check_batch_args(trials)
    if concurrency > 1:
        return asyncio.run(run_batch_async(params, layout, trials, base_seed, concurrency))
    records = [run_trial(params, layout, base_seed + i) for i in range(trials)]
    stats = BatchStats.from_records(records)
    logger.info("%s g=%d eps=%.3f: mean_T=%.2f over %d trials", params.scheme.label, params.g,
                params.epsilon, stats.mean_T, trials)
    return stats


async def run_batch_async(params: SchemeParams, layout: FileLayout, trials: int, base_seed: int,
                          concurrency: int = 4) -> BatchStats:
    _check_batch_args(trials)
    chunks = [range(start, trials, concurrency) for start in range(min(concurrency, trials))]

    def run_chunk(indices) -> List[TrialRecord]:
        return [run_trial(params, layout, base_seed + i) for i in indices]

    results = await asyncio.gather(*(asyncio.to_thread(run_chunk, c) for c in chunks))
    records = sorted((r for chunk in results for r in chunk), key=lambda r: r.seed)
    return BatchStats.from_records(records)


def simulation_layout(params: SchemeParams, block_bytes: int = SIM_BLOCK_BYTES) -> FileLayout:
    return FileLayout.for_blocks(params.N, block_bytes, params.g)


def dkw_threshold(trials: int, alpha: float = 0.01) -> float:
    """sup-norm deviation of an empirical CDF that is exceeded with probability <= alpha."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * trials))


def empirical_cdf_compare(batch: BatchStats, params: SchemeParams) -> float:
    """sup_t |empirical P(T <= t) - analytic p_t|."""
    if batch.trials < 1:
        raise BadSpec("empty batch")
    dist = DeliveryDistribution(params)
    ts = np.arange(0, int(batch.T_values[-1]) + 1)
    return float(np.max(np.abs(batch.empirical_cdf(ts) - dist.cdf_array(ts))))


@dataclass
class GenerationEstimate:
    """Empirical P(M <= m), m = 0..m_max, for a single generation."""
    cdf: np.ndarray
    trials: int

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.cdf * (1.0 - self.cdf) / self.trials)


def estimate_generation_cdf(params: SchemeParams, m_max: int, trials: int, seed: int,
                            block_bytes: int = SIM_BLOCK_BYTES) -> GenerationEstimate:
    """Send packets of one generation over the channel until it decodes, trials times."""
    _check_batch_args(trials)
    single = SchemeParams(params.scheme, params.g, params.g, params.epsilon, params.field_bits, params.K)
    layout = FileLayout.for_blocks(params.g, block_bytes, params.g)
    needed = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        record = run_trial(single, layout, seed + i)
        needed[i] = record.per_generation_M[0]
    counts = np.bincount(np.minimum(needed, m_max + 1), minlength=m_max + 2)[:m_max + 1]
    return GenerationEstimate(cdf=np.cumsum(counts) / trials, trials=trials)
