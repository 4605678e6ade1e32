"""Command line: run, compare, validate and trace-info."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import FORMATS, ConfigError, RunConfig, WorkloadSource, load_config, validate
from .flash import GeometryError
from .ftl import OutOfSpace
from .interconnect import Arch, parse_arch
from .metrics import CSV_FIELDS, EmptyRunError, RunReport, emit_report
from .ssd import InvariantViolation, IoRequest, simulate
from .workload import TraceParseError, parse_trace, trace_stats

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="YAML run configuration (or a name in $VENICE_CONFIG_DIR)")
    p.add_argument("--trace", metavar="PATH", help="replay this MSR-format trace instead of the configured workload")
    p.add_argument("--seed", type=int, metavar="N", help="override the simulation seed")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    p.add_argument("--format", choices=FORMATS, help="report format")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="venice", description="Trace-driven SSD interconnect simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one architecture")
    _common(run)
    run.add_argument("--arch", metavar="NAME", help="architecture (e.g. baseline-bus, venice-mesh)")

    cmp_ = sub.add_parser("compare", help="run several architectures on one workload")
    _common(cmp_)
    cmp_.add_argument("--arch", metavar="NAMES", default=",".join(a.value for a in Arch),
                      help="comma-separated architectures (default: all six)")

    val = sub.add_parser("validate", help="check a configuration file")
    val.add_argument("--config", metavar="PATH")
    val.add_argument("--arch", metavar="NAME")

    info = sub.add_parser("trace-info", help="summary statistics of a trace or the configured workload")
    info.add_argument("--config", metavar="PATH")
    info.add_argument("--trace", metavar="PATH")
    return ap


def _configure(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    trace = getattr(args, "trace", None)
    if trace:
        cfg.workload = WorkloadSource(trace=str(Path(trace).resolve()))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "format", None):
        cfg.output_format = args.format
    if getattr(args, "out", None):
        cfg.output_path = args.out
    return cfg


def _arch(name: str) -> Arch:
    try:
        return parse_arch(name)
    except ValueError:
        raise ConfigError(f"unknown architecture {name!r} ({', '.join(a.value for a in Arch)})", None,
                          "--arch") from None


def _write(data: bytes, path: Optional[str]) -> None:
    if path:
        Path(path).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def run_one(cfg: RunConfig, requests: Sequence[IoRequest], arch: Optional[Arch] = None):
    return simulate(cfg.sim_config(arch), requests)


def compare_reports(cfg: RunConfig, archs: Sequence[Arch],
                    requests: Optional[Sequence[IoRequest]] = None) -> list[tuple[RunReport, float]]:
    """Run each architecture on the same requests; returns (report, speedup over Baseline)."""
    reqs = cfg.requests() if requests is None else requests
    reports = [run_one(cfg, reqs, a)[0] for a in archs]
    base = next((r for r in reports if r.architecture == Arch.BASELINE.value), None)
    if base is None:
        base, _ = run_one(cfg, reqs, Arch.BASELINE)
    return [(r, base.total_execution_time / r.total_execution_time) for r in reports]


def emit_comparison(rows: Sequence[tuple[RunReport, float]], fmt: str) -> bytes:
    if fmt == "json":
        doc = [dict(r.to_dict(), speedup=s) for r, s in rows]
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    if fmt != "csv":
        raise ConfigError(f"compare supports csv and json output, not {fmt!r}", None, "--format")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS + ("speedup",))
    for r, s in rows:
        w.writerow([r.architecture, r.total_execution_time, repr(r.iops), r.p99_latency,
                    repr(r.conflict_fraction), repr(r.energy), repr(s)])
    return buf.getvalue().encode()


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _configure(args)
    if args.arch:
        cfg.architecture = _arch(args.arch)
        validate(cfg, "--arch")
    report, sim = run_one(cfg, cfg.requests())
    records = sim.metrics.records
    _write(emit_report(report, cfg.output_format, records), cfg.output_path)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _configure(args)
    archs = [_arch(a) for a in args.arch.split(",") if a.strip()]
    if len(archs) < 2:
        raise ConfigError("compare needs at least two architectures", None, "--arch")
    for a in archs:
        validate(replace(cfg, architecture=a), "--arch")
    rows = compare_reports(cfg, archs)
    _write(emit_comparison(rows, cfg.output_format), cfg.output_path)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.arch:
        cfg.architecture = _arch(args.arch)
        validate(cfg, "--arch")
    print(f"ok: {cfg.architecture.value}, {cfg.geometry.rows}x{cfg.geometry.chips_per_row} "
          f"{cfg.preset}, workload {cfg.workload.kind()}")
    return EXIT_OK


def cmd_trace_info(args: argparse.Namespace) -> int:
    if args.trace:
        trace = parse_trace(args.trace)
        records = trace.records
        skipped = trace.malformed
    else:
        cfg = load_config(args.config)
        records = cfg.workload.records(cfg.base_dir)
        skipped = 0
    st = trace_stats(records)
    print(f"requests: {st.count}")
    print(f"read %: {100 * st.read_fraction:.2f}")
    print(f"mean request size (bytes): {st.mean_size_bytes:.1f}")
    print(f"mean inter-arrival (us): {st.mean_inter_arrival_ns / 1000:.3f}")
    print(f"malformed lines skipped: {skipped}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "validate": cmd_validate, "trace-info": cmd_trace_info}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        for v in e.violations[:20]:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, GeometryError, TraceParseError, OutOfSpace, EmptyRunError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
