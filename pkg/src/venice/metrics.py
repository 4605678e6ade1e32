"""Per-request accounting, latency percentiles, power/energy and report output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence


class EmptyRunError(ValueError):
    pass


class UnsupportedFormat(ValueError):
    pass


@dataclass(frozen=True)
class PowerModel:
    router_power: float = 0.241  # mW, always on
    buffered_router_power: float = 0.482  # mW, placeholder for the buffered (NoSSD) router
    link_transfer_power: float = 1.08  # mW per link while it carries a transfer
    bus_transfer_power: float = 10.8  # mW per bus while it carries a transfer
    flash_read_power: float = 25.0  # mW per active die, placeholder
    flash_program_power: float = 50.0  # placeholder
    flash_erase_power: float = 35.0  # placeholder

    def __post_init__(self) -> None:
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"{k} must be >= 0")


def percentile(samples: Sequence[int], p: float, presorted: bool = False) -> int:
    """Nearest-rank percentile."""
    if not samples:
        raise EmptyRunError("no samples")
    if not 0 < p < 100:
        raise ValueError("p must lie in (0, 100)")
    data = samples if presorted else sorted(samples)
    rank = math.ceil(p / 100 * len(data))
    return data[max(rank, 1) - 1]


@dataclass
class EnergyLedger:
    """Busy-time integrals (ns, or resource-ns) per power component."""

    routers: int = 0
    router_power: float = 0.0
    link_ns: int = 0
    bus_ns: int = 0
    read_ns: int = 0
    program_ns: int = 0
    erase_ns: int = 0

    def components_pj(self, total_ns: int, pm: PowerModel) -> dict[str, float]:
        # mW * ns = pJ
        return {
            "router": self.routers * self.router_power * total_ns,
            "link": pm.link_transfer_power * self.link_ns,
            "bus": pm.bus_transfer_power * self.bus_ns,
            "flash_read": pm.flash_read_power * self.read_ns,
            "flash_program": pm.flash_program_power * self.program_ns,
            "flash_erase": pm.flash_erase_power * self.erase_ns,
        }


def compute_energy(ledger: EnergyLedger, total_ns: int, pm: PowerModel) -> tuple[float, float]:
    """Return ``(average power in mW, energy in mJ)`` for a run of ``total_ns``."""
    if total_ns <= 0:
        return 0.0, 0.0
    pj = sum(ledger.components_pj(total_ns, pm).values())
    return pj / total_ns, pj * 1e-9


@dataclass
class RunReport:
    architecture: str
    request_count: int
    total_execution_time: int
    iops: float
    mean_latency: float
    p50_latency: int
    p99_latency: int
    p999_latency: int
    conflict_fraction: float
    first_try_success_fraction: Optional[float]
    avg_power: float
    energy: float
    energy_breakdown: dict[str, float] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatencyRecord:
    arrival: int
    completion: int
    kind: str
    conflict: bool


class MetricsCollector:
    def __init__(self, architecture: str, track_first_try: bool = False) -> None:
        self.architecture = architecture
        self.track_first_try = track_first_try
        self.records: list[LatencyRecord] = []
        self.conflicts = 0
        self.first_try_ok = 0
        self.first_arrival: Optional[int] = None
        self.last_completion = 0
        self.ledger = EnergyLedger()

    def record_completion(self, arrival: int, completion: int, kind: str,
                          conflict: bool, first_try: bool = True) -> None:
        if completion < arrival:
            raise ValueError("completion precedes arrival")
        self.records.append(LatencyRecord(arrival, completion, kind, conflict))
        self.conflicts += conflict
        self.first_try_ok += first_try
        if self.first_arrival is None or arrival < self.first_arrival:
            self.first_arrival = arrival
        self.last_completion = max(self.last_completion, completion)

    def latencies(self) -> list[int]:
        return [r.completion - r.arrival for r in self.records]

    def report(self, pm: PowerModel, extra: Optional[dict] = None) -> RunReport:
        n = len(self.records)
        if n == 0:
            raise EmptyRunError("no completed requests to report")
        lat = sorted(self.latencies())
        total = self.last_completion - (self.first_arrival or 0)
        avg_power, energy = compute_energy(self.ledger, total, pm)
        breakdown = {k: v * 1e-9 for k, v in self.ledger.components_pj(total, pm).items()}
        return RunReport(
            architecture=self.architecture,
            request_count=n,
            total_execution_time=total,
            iops=n / (total * 1e-9) if total > 0 else 0.0,
            mean_latency=sum(lat) / n,
            p50_latency=percentile(lat, 50, presorted=True),
            p99_latency=percentile(lat, 99, presorted=True),
            p999_latency=percentile(lat, 99.9, presorted=True),
            conflict_fraction=self.conflicts / n,
            first_try_success_fraction=self.first_try_ok / n if self.track_first_try else None,
            avg_power=avg_power,
            energy=energy,
            energy_breakdown=breakdown,
            extra=dict(extra or {}),
        )


CSV_FIELDS = ("arch", "exec_ns", "iops", "p99_ns", "conflict_frac", "energy_mJ")


def latency_cdf(latencies: Iterable[int]) -> list[tuple[int, float]]:
    data = sorted(latencies)
    n = len(data)
    if n == 0:
        raise EmptyRunError("no samples")
    out: list[tuple[int, float]] = []
    for i, v in enumerate(data, 1):
        if out and out[-1][0] == v:
            out[-1] = (v, i / n)
        else:
            out.append((v, i / n))
    return out


def emit_report(report: RunReport, fmt: str, records: Sequence[LatencyRecord] = ()) -> bytes:
    if fmt == "csv":
        return emit_csv([report])
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode()
    if fmt == "latency-log":
        buf = io.StringIO()
        for r in records:
            buf.write(f"{r.arrival},{r.completion},{r.kind},{int(r.conflict)}\n")
        return buf.getvalue().encode()
    if fmt == "cdf":
        buf = io.StringIO()
        for v, frac in latency_cdf([r.completion - r.arrival for r in records]):
            buf.write(f"{v},{frac!r}\n")
        return buf.getvalue().encode()
    raise UnsupportedFormat(f"unsupported report format {fmt!r}")


def emit_csv(reports: Sequence[RunReport]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in reports:
        w.writerow([r.architecture, r.total_execution_time, repr(r.iops), r.p99_latency,
                    repr(r.conflict_fraction), repr(r.energy)])
    return buf.getvalue().encode()


def report_from_json(data: bytes | str) -> RunReport:
    return RunReport(**json.loads(data))
