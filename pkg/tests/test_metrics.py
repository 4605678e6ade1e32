from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from venice.metrics import (
    CSV_FIELDS,
    EmptyRunError,
    EnergyLedger,
    MetricsCollector,
    PowerModel,
    UnsupportedFormat,
    compute_energy,
    emit_csv,
    emit_report,
    latency_cdf,
    percentile,
    report_from_json,
)


def _collector(latencies, conflicts=()):
    m = MetricsCollector("baseline-bus")
    for i, lat in enumerate(latencies):
        m.record_completion(0, lat, "read", i in conflicts)
    return m


def test_record_latency_sample():
    m = _collector([7_010])
    assert m.latencies() == [7_010]


def test_conflict_counter():
    m = MetricsCollector("x")
    m.record_completion(0, 5, "read", True)
    m.record_completion(0, 5, "read", False)
    assert m.conflicts == 1
    assert m.report(PowerModel()).conflict_fraction == 0.5


def test_empty_run_report_errors():
    with pytest.raises(EmptyRunError):
        MetricsCollector("x").report(PowerModel())


def test_completion_before_arrival_rejected():
    with pytest.raises(ValueError):
        MetricsCollector("x").record_completion(10, 5, "read", False)


def test_percentile_nearest_rank():
    assert percentile(list(range(1, 101)), 99) == 99
    assert percentile([42], 1) == percentile([42], 99.9) == 42
    assert percentile([1, 1, 1, 1000], 50) == 1


def test_percentile_errors():
    with pytest.raises(EmptyRunError):
        percentile([], 50)
    with pytest.raises(ValueError):
        percentile([1], 100)


@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=300))
def test_percentiles_ordered(samples):
    p50, p99, p999 = (percentile(samples, p) for p in (50, 99, 99.9))
    assert min(samples) <= p50 <= p99 <= p999 <= max(samples)


def test_idle_router_energy():
    led = EnergyLedger(routers=64, router_power=0.241)
    power, energy = compute_energy(led, 1_000_000, PowerModel())
    assert power == pytest.approx(64 * 0.241)
    assert energy == pytest.approx(15.424e-3)  # 15.424 uJ in mJ


def test_single_link_transfer_energy():
    led = EnergyLedger(link_ns=4_100)
    _, energy = compute_energy(led, 4_100, PowerModel())
    assert energy == pytest.approx(4.428e-6)  # 4.43 nJ in mJ


def test_bus_is_ten_times_link_power():
    pm = PowerModel()
    assert pm.bus_transfer_power == pytest.approx(10 * pm.link_transfer_power)


def test_power_model_rejects_negative():
    with pytest.raises(ValueError):
        PowerModel(router_power=-1)


@given(st.integers(0, 64), st.integers(0, 10**7), st.integers(0, 10**7), st.integers(0, 10**7),
       st.integers(1, 10**8))
def test_energy_is_additive_and_power_times_time(routers, link, bus, rd, total):
    pm = PowerModel()
    led = EnergyLedger(routers=routers, router_power=pm.router_power, link_ns=link, bus_ns=bus, read_ns=rd)
    power, energy = compute_energy(led, total, pm)
    parts = led.components_pj(total, pm)
    assert energy == pytest.approx(sum(parts.values()) * 1e-9)
    assert energy == pytest.approx(power * total * 1e-9)


def test_report_invariants():
    m = _collector([100, 200, 300, 5000], conflicts={3})
    m.ledger.routers, m.ledger.router_power = 64, 0.241
    r = m.report(PowerModel())
    assert r.request_count == 4 and r.total_execution_time == 5000
    assert r.p50_latency <= r.p99_latency <= r.p999_latency
    assert r.iops * r.total_execution_time * 1e-9 == pytest.approx(4)
    assert r.energy == pytest.approx(r.avg_power * r.total_execution_time * 1e-9)
    assert sum(r.energy_breakdown.values()) == pytest.approx(r.energy)
    assert r.first_try_success_fraction is None


def test_first_try_only_when_tracked():
    m = MetricsCollector("venice-mesh", track_first_try=True)
    m.record_completion(0, 10, "read", True, first_try=False)
    m.record_completion(0, 10, "read", False, first_try=True)
    assert m.report(PowerModel()).first_try_success_fraction == 0.5


def test_csv_schema():
    r = _collector([10, 20]).report(PowerModel())
    lines = emit_csv([r]).decode().splitlines()
    assert lines[0] == "arch,exec_ns,iops,p99_ns,conflict_frac,energy_mJ"
    assert lines[0].split(",") == list(CSV_FIELDS)
    assert lines[1].startswith("baseline-bus,20,")


def test_json_round_trip():
    r = _collector([10, 20, 30], conflicts={0}).report(PowerModel(), {"events": 7.0})
    assert report_from_json(emit_report(r, "json")) == r


def test_cdf_export():
    assert latency_cdf([3, 1, 2, 2]) == [(1, 0.25), (2, 0.75), (3, 1.0)]
    m = _collector([5, 5, 9])
    text = emit_report(m.report(PowerModel()), "cdf", m.records).decode()
    assert text.splitlines() == ["5,0.6666666666666666", "9,1.0"]


def test_latency_log():
    m = MetricsCollector("x")
    m.record_completion(100, 7_110, "read", True)
    assert emit_report(m.report(PowerModel()), "latency-log", m.records) == b"100,7110,read,1\n"


def test_unknown_format():
    with pytest.raises(UnsupportedFormat):
        emit_report(_collector([1]).report(PowerModel()), "xml")


def test_identical_inputs_identical_bytes():
    a = _collector([10, 20, 30], conflicts={1}).report(PowerModel())
    b = _collector([10, 20, 30], conflicts={1}).report(PowerModel())
    for fmt in ("csv", "json"):
        assert emit_report(a, fmt) == emit_report(b, fmt)
    assert json.loads(emit_report(a, "json"))["architecture"] == "baseline-bus"
