import argparse
import logging
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from genstream.analysis import ProbabilityClampWarning
from genstream.config import COMMANDS, RunSpec, load_run_spec
from genstream.errors import ConfigError, GenstreamError
from genstream.report import (cmd_compare, cmd_predict, cmd_simulate,
                              format_summary, transport_row, write_csv)
from genstream.transport import SessionConfig, recv_file, send_file

# Load environment variables
load_dotenv()

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_pipeline.py",
        description="Delivery-count predictions, simulations and UDP sessions for generation-based coded streaming.")
    sub = parser.add_subparsers(dest="command", required=True)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=Path, help="key=value file merged under the flags")
    shared.add_argument("--scheme", dest="schemes", action="append", choices=["rl", "rls", "rs", "pc", "rep"])
    shared.add_argument("--gen-size", dest="gen_sizes", action="append", type=int)
    shared.add_argument("--epsilon", type=float)
    shared.add_argument("--measured-epsilon", type=float, help="loss rate to predict with in compare")
    shared.add_argument("--field-bits", type=int, choices=[1, 2, 4, 8])
    shared.add_argument("--blocks", type=int, help="N, the number of source blocks")
    shared.add_argument("--block-bytes", type=int)
    shared.add_argument("--trials", type=int)
    shared.add_argument("--seed", type=int)
    shared.add_argument("--rate-bps", type=float)
    shared.add_argument("--binary-units", action="store_true", default=None,
                        help="default rate of 1000 KiB/s instead of 1000 kB/s")
    shared.add_argument("--rx-power-w", type=float)
    shared.add_argument("--rs-length", type=int, help="RS code length K (default 255)")
    shared.add_argument("--tol", type=float)
    shared.add_argument("--out", type=Path, help="CSV output file")
    shared.add_argument("--paired", action="store_true", default=None)
    shared.add_argument("--bind", help="host:port to bind")
    shared.add_argument("--dest", help="host:port of the receiver")
    shared.add_argument("--file", type=Path, help="file to send, or where to write the received file")
    shared.add_argument("--file-bytes", type=int, help="size of the file the receiver expects")
    shared.add_argument("--drop", type=float, help="sender-side drop probability")
    shared.add_argument("--timeout-s", type=float)
    shared.add_argument("--transport-csv", dest="transport_csv", action="append", type=Path,
                        help="CSV written by send --out; compare grades it against the prediction")

    for command in COMMANDS:
        sub.add_parser(command, parents=[shared])
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}


def _emit_rows(spec: RunSpec, rows) -> None:
    if spec.out is not None:
        write_csv(rows, spec.out)
        print(f"💾 CSV written to {spec.out}")
    else:
        write_csv(rows, sys.stdout)


def _session_spec(spec: RunSpec, size: Optional[int]) -> RunSpec:
    if size is None:
        raise ConfigError(f"{spec.command} needs the file size")
    if len(spec.schemes) != 1 or len(spec.gen_sizes) != 1:
        raise ConfigError(f"{spec.command} takes exactly one --scheme and one --gen-size")
    blocks = max(1, math.ceil(size / spec.block_bytes))
    return replace(spec, blocks=blocks)


def run_send(spec: RunSpec) -> int:
    if spec.file is None or not spec.file.is_file():
        raise ConfigError(f"file to send not found: {spec.file}")
    spec = _session_spec(spec, spec.file.stat().st_size)
    params = spec.params(spec.schemes[0], spec.gen_sizes[0])
    cfg = SessionConfig(params, spec.block_bytes, spec.rate_bps, bind=spec.bind, dest=spec.dest,
                        file_path=spec.file, drop=spec.drop, drop_seed=spec.seed, coding_seed=spec.seed + 1,
                        timeout_s=spec.timeout_s)
    report = send_file(cfg)
    print("\n".join(report.as_lines()))
    if spec.out is not None:
        write_csv([transport_row(spec, params.with_epsilon(report.loss_rate), report.packets_sent, spec.seed)],
                  spec.out)
    print(f"📊 measured loss {report.loss_rate:.4f}; replay with compare --measured-epsilon {report.loss_rate:.4f}")
    return 0


def run_recv(spec: RunSpec) -> int:
    if spec.file is None:
        raise ConfigError("recv needs --file for the output")
    spec = _session_spec(spec, spec.file_bytes)
    params = spec.params(spec.schemes[0], spec.gen_sizes[0])
    cfg = SessionConfig(params, spec.block_bytes, spec.rate_bps, bind=spec.bind, file_path=spec.file,
                        file_bytes=spec.file_bytes, timeout_s=spec.timeout_s)
    report = recv_file(cfg)
    print("\n".join(report.as_lines()))
    if spec.out is not None:
        write_csv([transport_row(spec, params, report.t_proxy)], spec.out)
    print(f"✅ wrote {report.bytes_written} bytes to {spec.file}")
    return 0


def run(spec: RunSpec) -> int:
    if spec.command == "send":
        return run_send(spec)
    if spec.command == "recv":
        return run_recv(spec)

    # keep stdout pure CSV when no output file is given
    stream = sys.stdout if spec.out is not None else sys.stderr
    comparison = None
    if spec.command == "predict":
        rows = cmd_predict(spec)
    elif spec.command == "simulate":
        print(f"\n🚀 Running {spec.trials} trials per point...\n", file=stream)
        rows = cmd_simulate(spec)
    else:
        against = "transport sessions" if spec.transport_csv else f"{spec.trials} trials per point"
        print(f"\n🚀 Comparing predictions against {against}...\n", file=stream)
        comparison = cmd_compare(spec)
        rows = comparison.rows
    _emit_rows(spec, rows)
    print(format_summary(spec, rows, comparison), file=stream)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.getenv("GENSTREAM_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("always", ProbabilityClampWarning)
    args = build_parser().parse_args(argv)
    try:
        spec = load_run_spec(args.command, _flags(args), args.config)
        return run(spec)
    except GenstreamError as e:
        print(f"❌ {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
