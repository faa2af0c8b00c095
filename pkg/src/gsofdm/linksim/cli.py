"""Command-line entry point: ``gsofdm {table1,sweep,papr,adaptive,frame}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from ..equalize import EqualizerError
from ..estimate import matrix_to_text
from ..modem import SampleFrame
from .config import ConfigError, LinkConfig, load_config, parse_value
from . import harness

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("gsofdm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file ([section.]key = value per line)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--out", default="out", help="output directory for CSV and metadata")
    g = p.add_argument_group("LinkConfig fields")
    for f in fields(LinkConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest=f"cfg_{f.name}", default=None, metavar="V",
                       help=f"[{f.metadata['section']}] {f.metadata['help']}".rstrip())


def _resolve_config(args) -> LinkConfig:
    overrides = {}
    for f in fields(LinkConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            overrides[f.name] = parse_value(f.name, v)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = parse_value(k.strip(), v)
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsofdm", description="GS-OFDM three-gear link simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("table1", help="coherent-symbol table with gear colors")
    p.add_argument("--out", default=None, help="also write table1.csv and its metadata here")

    p = sub.add_parser("sweep", help="throughput vs velocity for every gear")
    _add_config_flags(p)
    p.add_argument("--velocities", type=_float_list, default=[30.0, 120.0, 350.0, 500.0, 800.0])
    p.add_argument("--no-adaptive", action="store_true")

    p = sub.add_parser("papr", help="PAPR CCDF of Gear 1/2 and Gear 3 at each PDR")
    _add_config_flags(p)
    p.add_argument("--pdr", type=_float_list, default=[20.0, 25.0])
    p.add_argument("--papr-symbols", type=int, default=100_000, help="OFDM symbols per CCDF curve")
    p.add_argument("--oversample", type=int, default=4)

    p = sub.add_parser("adaptive", help="closed-loop gear switching over a mobility trace")
    _add_config_flags(p)
    p.add_argument("--trace", type=_float_list, required=True, help="velocity (km/h) per block")

    p = sub.add_parser("frame", help="single-frame debug dump")
    _add_config_flags(p)
    p.add_argument("--index", type=int, default=0, help="frame index (seed derived from base_seed)")
    return parser


def _cmd_table1(args) -> int:
    text, csv_text = harness.table1_report()
    sys.stdout.write(text)
    if args.out:
        cfg = LinkConfig()
        harness.write_outputs(args.out, "table1", csv_text, harness.metadata(cfg, "table1"))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    csv_text, _ = harness.sweep_velocity(cfg, args.velocities, adaptive=not args.no_adaptive)
    paths = harness.write_outputs(args.out, "sweep", csv_text,
                                  harness.metadata(cfg, "sweep", velocities_kmh=args.velocities))
    sys.stdout.write(csv_text)
    log.info("wrote %s", ", ".join(paths))
    return EXIT_OK


def _cmd_papr(args) -> int:
    cfg = _resolve_config(args)
    try:
        csv_text, _ = harness.papr_experiment(cfg, args.pdr, args.papr_symbols, args.oversample)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    harness.write_outputs(args.out, "papr", csv_text,
                          harness.metadata(cfg, "papr", pdr_db=args.pdr, n_symbols=args.papr_symbols,
                                           oversample=args.oversample))
    sys.stdout.write(csv_text)
    return EXIT_OK


def _cmd_adaptive(args) -> int:
    cfg = _resolve_config(args)
    if not args.trace:
        raise ConfigError("mobility trace is empty")
    res = harness.run_adaptive(cfg, args.trace)
    rows = [[b, float(v), g, float(m.throughput), r.bit_errors, float(r.spread_hz)]
            for b, (v, g, m, r) in enumerate(zip(args.trace, res.gears, res.per_block, res.records))]
    csv_text = harness._csv(["block", "velocity_kmh", "gear", "throughput", "bit_errors", "spread_hz"], rows)
    harness.write_outputs(args.out, "adaptive", csv_text, harness.metadata(cfg, "adaptive", trace_kmh=args.trace))
    with open(os.path.join(args.out, "decisions.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(res.decision_log)
    sys.stdout.write(csv_text)
    return EXIT_OK


def _cmd_frame(args) -> int:
    cfg = _resolve_config(args)
    seed = harness.frame_seed(cfg, args.index)
    dump = harness.dump_frame(cfg, seed)
    os.makedirs(args.out, exist_ok=True)
    base = os.path.join(args.out, f"frame{args.index}")
    with open(base + ".paths.txt", "w", encoding="utf-8") as fh:
        fh.write(dump.true_paths.to_text())
    if dump.est_paths is not None:
        with open(base + ".est_paths.txt", "w", encoding="utf-8") as fh:
            fh.write(dump.est_paths.to_text())
    with open(base + ".ctf_true.txt", "w", encoding="utf-8") as fh:
        fh.write(matrix_to_text(dump.ctf_true))
    with open(base + ".ctf_est.txt", "w", encoding="utf-8") as fh:
        fh.write(matrix_to_text(dump.ctf_est))
    with open(base + ".tx.bin", "wb") as fh:
        fh.write(SampleFrame(dump.tx_samples, dump.sample_rate).to_bytes())
    record = harness.record_dict(dump.record)
    with open(base + ".record.json", "w", encoding="utf-8") as fh:
        json.dump({"record": record, "config": cfg.to_dict()}, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    print(json.dumps(record, sort_keys=True, default=str))
    return EXIT_OK


COMMANDS = {"table1": _cmd_table1, "sweep": _cmd_sweep, "papr": _cmd_papr, "adaptive": _cmd_adaptive,
            "frame": _cmd_frame}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (harness.FrameError, EqualizerError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
