"""
Reports
=======
The predict / simulate / compare commands and their CSV rows.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import pandas as pd

from .analysis import DeliveryDistribution, SchemeParams, expected_T, performance_measures
from .codec import Scheme
from .config import RunSpec
from .errors import ConfigError
from .grader import grade_comparison
from .simulator import run_batch, simulation_layout

logger = logging.getLogger(__name__)

ENERGY_NOTE = "energy_J is modelled as rx_power_w * delivery_time_s, not measured on a device"
# keeps unpaired schemes on distinct channel streams
_UNPAIRED_SEED_STRIDE = 1_000_003


@dataclass(frozen=True)
class CsvRow:
    scheme: str
    g: int
    n: int
    q: int
    K: int
    epsilon: float
    source: str
    mean_T: float
    norm_T: float
    ci95: float
    delivery_time_s: float
    net_rate_Bps: float
    energy_J: float
    trials: int
    seed: int


CSV_COLUMNS = [f.name for f in fields(CsvRow)]


def make_row(spec: RunSpec, params: SchemeParams, source: str, mean_T: float, ci95: float = 0.0,
             trials: int = 0, seed: int = 0) -> CsvRow:
    perf = performance_measures(mean_T, params, spec.block_bytes, spec.rate_bps, spec.rx_power_w)
    return CsvRow(
        scheme=params.scheme.label,
        g=params.g,
        n=params.n,
        q=params.q,
        K=params.K or 0,
        epsilon=params.epsilon,
        source=source,
        mean_T=mean_T,
        norm_T=mean_T / params.N,
        ci95=ci95,
        delivery_time_s=perf.delivery_time_s,
        net_rate_Bps=perf.net_rate_Bps,
        energy_J=perf.energy_J,
        trials=trials,
        seed=seed,
    )


def rows_to_frame(rows: Sequence[CsvRow]) -> pd.DataFrame:
    return pd.DataFrame([astuple(r) for r in rows], columns=CSV_COLUMNS)


def write_csv(rows: Sequence[CsvRow], out: Union[Path, str, TextIO, None] = None) -> str:
    """Write rows with a header; returns the CSV text."""
    text = rows_to_frame(rows).to_csv(index=False, lineterminator="\n")
    if isinstance(out, (str, Path)):
        Path(out).write_text(text)
    elif out is not None:
        out.write(text)
    return text


def read_csv(path: Union[Path, str, TextIO]) -> List[CsvRow]:
    frame = pd.read_csv(path)
    if list(frame.columns) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {list(frame.columns)}")
    types = [f.type for f in fields(CsvRow)]
    return [CsvRow(*(_cast(t, v) for t, v in zip(types, record))) for record in frame.itertuples(index=False)]


def _cast(type_name: Any, value: Any) -> Any:
    return {"int": int, "float": float, "str": str}[str(type_name)](value)


def cmd_predict(spec: RunSpec) -> List[CsvRow]:
    rows = []
    for scheme, g in spec.points():
        params = spec.params(scheme, g, spec.measured_epsilon)
        mean, _, _ = expected_T(params, spec.tol)
        rows.append(make_row(spec, params, "analytic", mean))
    return rows


def _simulation_seed(spec: RunSpec, scheme: Scheme) -> int:
    return spec.seed if spec.paired else spec.seed + _UNPAIRED_SEED_STRIDE * int(scheme)


def cmd_simulate(spec: RunSpec) -> List[CsvRow]:
    rows = []
    for scheme, g in spec.points():
        params = spec.params(scheme, g)
        seed = _simulation_seed(spec, scheme)
        batch = run_batch(params, simulation_layout(params), spec.trials, seed)
        if not batch.all_intact:
            logger.error("%s g=%d: a decoded file differed from its source", scheme.label, g)
        rows.append(make_row(spec, params, "simulated", batch.mean_T, batch.ci95_halfwidth, batch.trials, seed))
    return rows


@dataclass
class Comparison:
    rows: List[CsvRow]
    passed: bool
    message: str
    metrics: Dict[str, Any]

    @property
    def flagged(self) -> List[Dict[str, Any]]:
        return self.metrics["flagged"]


def _simulated_pairs(spec: RunSpec) -> List[Tuple[CsvRow, CsvRow]]:
    pairs = []
    for scheme, g in spec.points():
        # one channel for both rows: the measured loss rate when one is given
        params = spec.params(scheme, g, spec.measured_epsilon)
        mean, _, _ = expected_T(params, spec.tol)
        analytic = make_row(spec, params, "analytic", mean)
        seed = _simulation_seed(spec, scheme)
        batch = run_batch(params, simulation_layout(params), spec.trials, seed)
        simulated = make_row(spec, params, "simulated", batch.mean_T, batch.ci95_halfwidth, batch.trials, seed)
        pairs.append((analytic, simulated))
    return pairs


def read_transport_rows(paths: Sequence[Union[Path, str]]) -> pd.DataFrame:
    """Transport rows from CSVs written by `send --out`, with the file size N recovered per row."""
    rows = []
    for path in paths:
        try:
            rows += [r for r in read_csv(path) if r.source == "transport"]
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read transport rows from {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"no transport rows in {', '.join(str(p) for p in paths)}")
    frame = rows_to_frame(rows)
    frame["N"] = (frame["mean_T"] / frame["norm_T"]).round().astype(int)
    return frame


def _transport_params(spec: RunSpec, scheme: str, g: int, N: int, epsilon: float, q: int, K: int) -> SchemeParams:
    kind = Scheme.from_name(scheme)
    field_bits = spec.field_bits if kind.is_mds else int(q).bit_length() - 1
    return SchemeParams(kind, g, N, epsilon, field_bits=field_bits, K=K if kind is Scheme.RS else None)


def _transport_pairs(spec: RunSpec) -> List[Tuple[CsvRow, CsvRow]]:
    """Each (scheme, g, N) group of sessions against a prediction at its mean measured loss."""
    frame = read_transport_rows(spec.transport_csv)
    pairs = []
    for (scheme, g, N), group in frame.groupby(["scheme", "g", "N"], sort=False):
        sessions = len(group)
        params = _transport_params(spec, scheme, int(g), int(N), float(group["epsilon"].mean()),
                                   int(group["q"].iloc[0]), int(group["K"].iloc[0]))
        dist = DeliveryDistribution(params, spec.tol)
        # spread of a k-session mean under the model
        predicted_ci = 1.96 * math.sqrt(dist.variance / sessions)
        analytic = make_row(spec, params, "analytic", dist.expectation, ci95=predicted_ci)
        measured_ci = 1.96 * float(group["mean_T"].std(ddof=1)) / math.sqrt(sessions) if sessions > 1 else 0.0
        measured = make_row(spec, params, "transport", float(group["mean_T"].mean()), measured_ci,
                            trials=sessions, seed=int(group["seed"].iloc[0]))
        pairs.append((analytic, measured))
    return pairs


def cmd_compare(spec: RunSpec) -> Comparison:
    """Predictions paired with transport measurements when transport CSVs are given, else with simulations."""
    pairs = _transport_pairs(spec) if spec.transport_csv else _simulated_pairs(spec)
    passed, message, metrics = grade_comparison(pairs)
    rows = [row for pair in pairs for row in pair]
    return Comparison(rows, passed, message, metrics)


def format_summary(spec: RunSpec, rows: Sequence[CsvRow], comparison: Optional[Comparison] = None) -> str:
    out = io.StringIO()
    out.write("\n" + "=" * 50 + "\n")
    out.write(f"{spec.command.upper()} N={spec.blocks} block={spec.block_bytes}B eps={spec.epsilon}")
    if spec.measured_epsilon is not None:
        out.write(f" (run at measured eps={spec.measured_epsilon})")
    out.write("\n" + "=" * 50 + "\n")
    flagged = {(f["scheme"], f["g"]) for f in comparison.flagged} if comparison else set()
    for row in rows:
        pad = row.n * row.g - round(row.mean_T / row.norm_T)
        mark = " ⚠️" if (row.scheme, row.g) in flagged and row.source != "analytic" else ""
        ci = f" ±{row.ci95:.3f}" if row.trials else ""
        out.write(f"{row.source:>9} {row.scheme:>3} g={row.g:<4} n={row.n:<4} pad={pad:<3} "
                  f"T={row.mean_T:10.3f}{ci} T/N={row.norm_T:.4f} t={row.delivery_time_s:.4f}s{mark}\n")
    if comparison is not None:
        status = "✅ PASSED" if comparison.passed else f"❌ FAILED: {comparison.message}"
        out.write(f"\n📊 {comparison.metrics['points']} point(s): {status}\n")
        for f in comparison.flagged:
            out.write(f"- {f['scheme']} g={f['g']}: {f['reason']}\n")
    out.write(f"\nnote: {ENERGY_NOTE}\n")
    return out.getvalue()


def transport_row(spec: RunSpec, params: SchemeParams, packets_sent: int, seed: int = 0) -> CsvRow:
    return make_row(spec, params, "transport", float(packets_sent), trials=1, seed=seed)
