"""NAND flash geometry, timing presets and the per-die busy state machine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class FlashOp(str, Enum):
    READ = "read"
    PROGRAM = "program"
    ERASE = "erase"


class DieBusyError(RuntimeError):
    """An operation was issued to a die that has not finished its previous one."""


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class FlashGeometry:
    rows: int = 8  # channels on bus designs, mesh rows otherwise
    chips_per_row: int = 8
    dies_per_chip: int = 1
    planes_per_die: int = 2
    blocks_per_plane: int = 1024
    pages_per_block: int = 768
    page_size: int = 4096

    def __post_init__(self) -> None:
        for name in ("rows", "chips_per_row", "dies_per_chip", "planes_per_die",
                     "blocks_per_plane", "pages_per_block", "page_size"):
            if getattr(self, name) < 1:
                raise GeometryError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def n_chips(self) -> int:
        return self.rows * self.chips_per_row

    @property
    def pages_per_plane(self) -> int:
        return self.blocks_per_plane * self.pages_per_block

    @property
    def total_pages(self) -> int:
        return self.n_chips * self.dies_per_chip * self.planes_per_die * self.pages_per_plane

    def chip_position(self, chip: int) -> tuple[int, int]:
        """(row, column) of a chip; chips are numbered row-major."""
        return divmod(chip, self.chips_per_row)


@dataclass(frozen=True)
class FlashTimingConfig:
    t_read: int = 3_000
    t_program: int = 100_000
    t_erase: int = 1_000_000
    cmd_transfer_time: int = 10
    page_transfer_time_bus: int = 4_000

    def __post_init__(self) -> None:
        for name in ("t_read", "t_program", "t_erase", "cmd_transfer_time", "page_transfer_time_bus"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be > 0")

    def latency(self, op: FlashOp) -> int:
        if op is FlashOp.READ:
            return self.t_read
        if op is FlashOp.PROGRAM:
            return self.t_program
        return self.t_erase


CHANNEL_RATE_BYTES_PER_NS = 1.2  # 1.2 GB/s flash channel I/O rate
_BUS_OVERHEAD_NS = 4_000 - math.ceil(4096 / CHANNEL_RATE_BYTES_PER_NS)


def bus_page_transfer_time(page_size: int, channel_rate: float = CHANNEL_RATE_BYTES_PER_NS) -> int:
    """Bus time for one page: raw channel time plus a fixed overhead pinned so 4 KiB -> 4 us."""
    return math.ceil(page_size / channel_rate) + _BUS_OVERHEAD_NS


PERFORMANCE_GEOMETRY = FlashGeometry(8, 8, 1, 2, 1024, 768, 4096)
PERFORMANCE_TIMING = FlashTimingConfig(3_000, 100_000, 1_000_000, 10, 4_000)

# 1024 blocks per die split across two planes.
COST_GEOMETRY = FlashGeometry(8, 8, 1, 2, 512, 768, 16384)
COST_TIMING = FlashTimingConfig(45_000, 650_000, 3_500_000, 10, bus_page_transfer_time(16384))

PRESETS = {
    "performance-optimized": (PERFORMANCE_GEOMETRY, PERFORMANCE_TIMING),
    "cost-optimized": (COST_GEOMETRY, COST_TIMING),
}


@dataclass(frozen=True, order=True)
class PhysicalPageAddress:
    chip: int
    die: int
    plane: int
    block: int
    page: int

    def check(self, geometry: FlashGeometry) -> None:
        bounds = (
            ("chip", self.chip, geometry.n_chips),
            ("die", self.die, geometry.dies_per_chip),
            ("plane", self.plane, geometry.planes_per_die),
            ("block", self.block, geometry.blocks_per_plane),
            ("page", self.page, geometry.pages_per_block),
        )
        for name, value, bound in bounds:
            if not 0 <= value < bound:
                raise GeometryError(f"{name} index {value} outside [0, {bound})")


def can_pair_multiplane(a: PhysicalPageAddress, b: PhysicalPageAddress) -> bool:
    return (
        a.chip == b.chip
        and a.die == b.die
        and a.plane != b.plane
        and a.block == b.block
        and a.page == b.page
    )


def page_count_for_request(size_bytes: int, page_size: int) -> int:
    if size_bytes < 1:
        raise ValueError("request size must be >= 1 byte")
    return -(-size_bytes // page_size)


@dataclass
class DieState:
    busy_until: int = 0
    current_op: FlashOp | None = None


@dataclass
class FlashChipState:
    chip: int
    dies: list[DieState] = field(default_factory=list)

    @classmethod
    def create(cls, chip: int, geometry: FlashGeometry) -> "FlashChipState":
        return cls(chip, [DieState() for _ in range(geometry.dies_per_chip)])

    def is_idle(self, die: int, now: int) -> bool:
        return self.dies[die].busy_until <= now


def start_flash_op(
    chip_state: FlashChipState,
    op: FlashOp,
    addr: PhysicalPageAddress,
    timing: FlashTimingConfig,
    now: int,
) -> int:
    """Start ``op`` on the addressed die and return its completion time."""
    die = chip_state.dies[addr.die]
    if die.busy_until > now:
        raise DieBusyError(
            f"chip {addr.chip} die {addr.die} busy until {die.busy_until}, op issued at {now}"
        )
    done = now + timing.latency(op)
    die.busy_until = done
    die.current_op = op
    return done
