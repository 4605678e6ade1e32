"""Block I/O traces: MSR-Cambridge CSV ingestion, synthetic generation, stream mixing."""

from __future__ import annotations

import csv
import heapq
import random
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Iterator, Optional, Sequence

FILETIME_TICK_NS = 100


class TraceParseError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int  # ns since trace start
    op: str  # "read" | "write"
    offset: int  # bytes
    size: int  # bytes
    stream: str = ""

    @property
    def is_read(self) -> bool:
        return self.op == "read"


@dataclass
class Trace:
    records: list[TraceRecord]
    malformed: int = 0
    total_lines: int = 0

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


_OPS = {"read": "read", "r": "read", "write": "write", "w": "write"}


def _parse_line(row: list[str]) -> Optional[tuple[int, str, int, int]]:
    if len(row) < 6:
        return None
    try:
        ts = int(row[0])
        op = _OPS.get(row[3].strip().lower())
        offset = int(row[4])
        size = int(row[5])
    except ValueError:
        return None
    if op is None or offset < 0 or size < 1:
        return None
    return ts, op, offset, size


def parse_trace(
    path: str | PathLike,
    max_malformed_fraction: float = 0.01,
    stream: str = "",
) -> Trace:
    """Read an MSR-Cambridge style CSV.

    Columns: timestamp (Windows filetime ticks), hostname, disk, type, offset,
    size, response time.  Timestamps are rebased to the earliest record.
    """
    raw: list[tuple[int, str, int, int]] = []
    malformed = 0
    lines = 0
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not "".join(row).strip():
                continue
            lines += 1
            parsed = _parse_line(row)
            if parsed is None:
                malformed += 1
                continue
            raw.append(parsed)
    if lines and malformed / lines > max_malformed_fraction:
        raise TraceParseError(
            f"{path}: {malformed} of {lines} lines malformed "
            f"(limit {max_malformed_fraction:.1%})"
        )
    if not raw:
        return Trace([], malformed, lines)
    t0 = min(r[0] for r in raw)
    records = [
        TraceRecord((ts - t0) * FILETIME_TICK_NS, op, off, size, stream) for ts, op, off, size in raw
    ]
    records.sort(key=lambda r: r.timestamp)
    return Trace(records, malformed, lines)


@dataclass(frozen=True)
class SyntheticSpec:
    count: int = 10_000
    read_fraction: float = 1.0
    size_dist: str = "fixed"  # fixed | geometric
    size_bytes: int = 4096  # fixed size, or mean for geometric
    size_unit: int = 4096
    align_bytes: int = 0  # offset granularity; 0 means size_unit
    inter_arrival: str = "poisson"  # poisson | fixed
    inter_arrival_ns: int = 13_000
    address_dist: str = "uniform"  # uniform | hotspot
    address_space_bytes: int = 16 << 30
    hot_fraction: float = 0.0  # share of requests sent to the hot region
    hot_span: float = 0.01  # hot region as a share of the address space
    seed: int = 1
    stream: str = "synthetic"

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must lie in [0, 1]")
        if self.size_dist not in ("fixed", "geometric"):
            raise ValueError(f"unknown size distribution {self.size_dist!r}")
        if self.inter_arrival not in ("poisson", "fixed"):
            raise ValueError(f"unknown inter-arrival process {self.inter_arrival!r}")
        if self.address_dist not in ("uniform", "hotspot"):
            raise ValueError(f"unknown address distribution {self.address_dist!r}")
        if self.size_bytes < 1 or self.inter_arrival_ns < 0 or self.size_unit < 1 or self.align_bytes < 0:
            raise ValueError("sizes must be positive and inter-arrival non-negative")
        if not 0.0 <= self.hot_fraction <= 1.0 or not 0.0 < self.hot_span <= 1.0:
            raise ValueError("hot_fraction must lie in [0, 1] and hot_span in (0, 1]")


def generate_synthetic(spec: SyntheticSpec) -> list[TraceRecord]:
    rng = random.Random(spec.seed)
    unit = spec.size_unit
    align = spec.align_bytes or unit
    n_units = max(1, spec.address_space_bytes // align)
    hot_units = max(1, int(n_units * spec.hot_span))
    mean_units = max(1.0, spec.size_bytes / unit)
    out = []
    t = 0
    for i in range(spec.count):
        if i:
            if spec.inter_arrival == "fixed":
                t += spec.inter_arrival_ns
            else:
                t += int(round(rng.expovariate(1.0 / spec.inter_arrival_ns))) if spec.inter_arrival_ns else 0
        op = "read" if rng.random() < spec.read_fraction else "write"
        if spec.size_dist == "fixed":
            size = spec.size_bytes
        else:
            # geometric on {1, 2, ...} with the requested mean
            p = 1.0 / mean_units
            k = 1
            while rng.random() >= p:
                k += 1
            size = k * unit
        if spec.address_dist == "hotspot" and rng.random() < spec.hot_fraction:
            slot = rng.randrange(hot_units)
        else:
            slot = rng.randrange(n_units)
        out.append(TraceRecord(t, op, slot * align, size, spec.stream))
    return out


def mix_streams(streams: Sequence[Iterable[TraceRecord]]) -> list[TraceRecord]:
    """Stable merge by timestamp; ties keep the order of ``streams``."""
    return list(heapq.merge(*streams, key=lambda r: r.timestamp))


@dataclass
class TraceStats:
    count: int
    read_fraction: float
    mean_size_bytes: float
    mean_inter_arrival_ns: float
    streams: dict[str, int] = field(default_factory=dict)


def trace_stats(records: Sequence[TraceRecord]) -> TraceStats:
    n = len(records)
    if n == 0:
        return TraceStats(0, 0.0, 0.0, 0.0)
    reads = sum(r.is_read for r in records)
    gaps = (records[-1].timestamp - records[0].timestamp) / (n - 1) if n > 1 else 0.0
    streams: dict[str, int] = {}
    for r in records:
        streams[r.stream] = streams.get(r.stream, 0) + 1
    return TraceStats(n, reads / n, sum(r.size for r in records) / n, gaps, streams)


def logical_span(offset: int, size: int, page_size: int) -> tuple[int, int]:
    """First logical page and number of pages touched by a byte range."""
    start = offset // page_size
    count = -(-((offset % page_size) + size) // page_size)
    return start, count
