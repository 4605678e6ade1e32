from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from venice.flash import (
    COST_TIMING,
    PERFORMANCE_GEOMETRY,
    PERFORMANCE_TIMING,
    PRESETS,
    DieBusyError,
    FlashChipState,
    FlashGeometry,
    FlashOp,
    FlashTimingConfig,
    GeometryError,
    PhysicalPageAddress,
    bus_page_transfer_time,
    can_pair_multiplane,
    page_count_for_request,
    start_flash_op,
)

ADDR = PhysicalPageAddress(0, 0, 0, 0, 0)


def test_perf_read_completes_after_tr():
    chip = FlashChipState.create(0, PERFORMANCE_GEOMETRY)
    assert start_flash_op(chip, FlashOp.READ, ADDR, PERFORMANCE_TIMING, 0) == 3_000


def test_cost_erase_completes_after_tbers():
    chip = FlashChipState.create(0, PRESETS["cost-optimized"][0])
    assert start_flash_op(chip, FlashOp.ERASE, ADDR, COST_TIMING, 0) == 3_500_000


def test_busy_die_rejects_second_op():
    chip = FlashChipState.create(0, PERFORMANCE_GEOMETRY)
    start_flash_op(chip, FlashOp.READ, ADDR, PERFORMANCE_TIMING, 0)
    with pytest.raises(DieBusyError):
        start_flash_op(chip, FlashOp.READ, ADDR, PERFORMANCE_TIMING, 1_500)


def test_die_is_free_again_at_completion():
    chip = FlashChipState.create(0, PERFORMANCE_GEOMETRY)
    done = start_flash_op(chip, FlashOp.PROGRAM, ADDR, PERFORMANCE_TIMING, 0)
    assert chip.is_idle(0, done)
    assert start_flash_op(chip, FlashOp.READ, ADDR, PERFORMANCE_TIMING, done) == done + 3_000


def test_dies_are_independent():
    g = FlashGeometry(dies_per_chip=2)
    chip = FlashChipState.create(0, g)
    start_flash_op(chip, FlashOp.READ, ADDR, PERFORMANCE_TIMING, 0)
    other = PhysicalPageAddress(0, 1, 0, 0, 0)
    assert start_flash_op(chip, FlashOp.READ, other, PERFORMANCE_TIMING, 0) == 3_000


@pytest.mark.parametrize("op", list(FlashOp))
@given(now=st.integers(0, 10**9))
def test_latency_conservation(op, now):
    chip = FlashChipState.create(0, PERFORMANCE_GEOMETRY)
    assert start_flash_op(chip, op, ADDR, PERFORMANCE_TIMING, now) - now == PERFORMANCE_TIMING.latency(op)


def test_preset_values():
    g, t = PRESETS["performance-optimized"]
    assert (g.rows, g.chips_per_row, g.page_size, g.blocks_per_plane, g.pages_per_block) == (8, 8, 4096, 1024, 768)
    assert (t.t_read, t.t_program, t.t_erase, t.cmd_transfer_time, t.page_transfer_time_bus) == (
        3_000, 100_000, 1_000_000, 10, 4_000)
    g, t = PRESETS["cost-optimized"]
    assert (g.page_size, g.blocks_per_plane * g.planes_per_die) == (16384, 1024)
    assert (t.t_read, t.t_program, t.t_erase) == (45_000, 650_000, 3_500_000)
    for _, t in PRESETS.values():
        assert t.t_erase > t.t_program > t.t_read


def test_bus_transfer_time_pins_4k_to_4us():
    assert bus_page_transfer_time(4096) == 4_000
    # overhead = 4000 - ceil(4096 / 1.2) = 586; 16 KiB: ceil(16384 / 1.2) + 586
    assert bus_page_transfer_time(16384) == 13_654 + 586


def test_multiplane_same_offset_pairs():
    a = PhysicalPageAddress(0, 0, 0, 5, 9)
    assert can_pair_multiplane(a, PhysicalPageAddress(0, 0, 1, 5, 9))


def test_multiplane_offset_mismatch():
    assert not can_pair_multiplane(PhysicalPageAddress(0, 0, 0, 5, 9), PhysicalPageAddress(0, 0, 1, 5, 10))


def test_multiplane_same_plane_never_pairs():
    a = PhysicalPageAddress(0, 0, 0, 5, 9)
    assert not can_pair_multiplane(a, a)


def test_multiplane_needs_same_die():
    assert not can_pair_multiplane(PhysicalPageAddress(0, 0, 0, 5, 9), PhysicalPageAddress(0, 1, 1, 5, 9))


@pytest.mark.parametrize("size, page, pages", [(8_800, 4096, 3), (4_096, 4096, 1), (65_700, 16384, 5), (1, 4096, 1)])
def test_page_count(size, page, pages):
    assert page_count_for_request(size, page) == pages


def test_page_count_rejects_empty():
    with pytest.raises(ValueError):
        page_count_for_request(0, 4096)


@given(st.integers(1, 10**7), st.sampled_from([512, 4096, 16384]))
def test_page_count_is_ceiling(size, page):
    n = page_count_for_request(size, page)
    assert (n - 1) * page < size <= n * page


def test_geometry_rejects_zero_counts():
    with pytest.raises(GeometryError):
        FlashGeometry(rows=0)


def test_timing_rejects_nonpositive():
    with pytest.raises(GeometryError):
        FlashTimingConfig(t_read=0)


def test_address_bounds_check():
    g = PERFORMANCE_GEOMETRY
    PhysicalPageAddress(63, 0, 1, 1023, 767).check(g)
    with pytest.raises(GeometryError):
        PhysicalPageAddress(64, 0, 0, 0, 0).check(g)
    with pytest.raises(GeometryError):
        PhysicalPageAddress(0, 0, 0, 0, 768).check(g)


def test_chip_position_row_major():
    assert PERFORMANCE_GEOMETRY.chip_position(19) == (2, 3)
    assert PERFORMANCE_GEOMETRY.n_chips == 64
