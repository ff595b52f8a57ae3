"""Command-line entry point: ``cfidd simulate | estimate-nmse | ldpc-bench``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import ConfigurationError


def _config(args) -> dict:
    if args.config:
        return harness.load_config(args.config, args.override)
    return harness.resolve_config({}, args.override)


def _simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg["output_path"])
    result = harness.run_sweep(cfg, workers=args.workers,
                               progress=lambda snr: print(f"snr {snr} dB done", file=sys.stderr))
    csv_path, _ = harness.emit_results(result, out)
    print(f"wrote {csv_path} ({result.wall_time:.1f} s)")
    return 0


def _write_rows(rows: list[dict], path: Path | None) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _estimate_nmse(args) -> int:
    cfg = _config(args)
    rows = harness.run_nmse(cfg, rank=args.rank)
    path = None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        path = Path(args.out) / "nmse.csv"
        (Path(args.out) / "nmse.json").write_text(json.dumps({"config": cfg, "rank": args.rank}, indent=2))
    _write_rows(rows, path)
    return 0


def _ldpc_bench(args) -> int:
    rows = harness.ldpc_bench(args.ebn0, frames=args.frames, n=args.n, k=args.k,
                              code_seed=args.code_seed, max_iters=args.iters, seed=args.seed)
    path = None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        path = Path(args.out) / "ldpc_bench.csv"
    _write_rows(rows, path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfidd", description="Cell-free uplink IDD link simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="JSON experiment config (defaults used when omitted)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted key override, value parsed as JSON, e.g. network.M=2")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="BER/FER sweep over SNR, receivers and IDD iterations")
    add_config(p)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default ${harness.WORKERS_ENV} or 1)")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("estimate-nmse", help="channel / interference estimation NMSE vs SNR")
    add_config(p)
    p.add_argument("--rank", type=int, default=1, help="interference estimate rank")
    p.set_defaults(func=_estimate_nmse)

    p = sub.add_parser("ldpc-bench", help="decoder-only BPSK/AWGN waterfall")
    p.add_argument("--ebn0", type=float, nargs="+", default=[1.0, 2.0, 3.0, 4.0])
    p.add_argument("--frames", type=int, default=10000)
    p.add_argument("-n", type=int, default=512)
    p.add_argument("-k", type=int, default=256)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--code-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_ldpc_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"cfidd: configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"cfidd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
