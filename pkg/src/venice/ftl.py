"""Page-mapped flash translation layer with out-of-place writes and greedy GC."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .flash import FlashGeometry, PhysicalPageAddress


class OutOfSpace(RuntimeError):
    pass


@dataclass(frozen=True)
class GcConfig:
    enabled: bool = False
    free_block_threshold: float = 0.05
    victim_policy: str = "greedy-min-valid"

    def __post_init__(self) -> None:
        if not 0.0 < self.free_block_threshold < 1.0:
            raise ValueError("free_block_threshold must lie in (0, 1)")
        if self.victim_policy != "greedy-min-valid":
            raise ValueError(f"unknown victim policy {self.victim_policy!r}")


PlaneKey = tuple[int, int, int]  # (chip, die, plane)


@dataclass
class PlaneState:
    blocks: int
    pages_per_block: int
    free_blocks: deque = field(default_factory=deque)
    active: Optional[int] = None
    next_page: int = 0
    valid: dict[int, set[int]] = field(default_factory=dict)  # block -> valid page offsets
    full: set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        if not self.free_blocks:
            self.free_blocks.extend(range(self.blocks))

    @property
    def free_fraction(self) -> float:
        return len(self.free_blocks) / self.blocks

    def valid_count(self, block: int) -> int:
        return len(self.valid.get(block, ()))

    def has_room(self) -> bool:
        return (self.active is not None and self.next_page < self.pages_per_block) or bool(self.free_blocks)

    def take_page(self) -> tuple[int, int]:
        if self.active is None or self.next_page >= self.pages_per_block:
            if self.active is not None:
                self.full.add(self.active)
            if not self.free_blocks:
                self.active = None
                raise OutOfSpace("no free page left in plane")
            self.active = self.free_blocks.popleft()
            self.next_page = 0
        page = self.next_page
        self.next_page += 1
        return self.active, page


@dataclass
class GcResult:
    plane: PlaneKey
    victim: int
    moves: list[tuple[int, PhysicalPageAddress, PhysicalPageAddress]]
    freed_blocks: int = 1

    @property
    def copies(self) -> int:
        return len(self.moves)


class Ftl:
    """Logical pages are striped channel-first over chips, then dies, then planes."""

    def __init__(self, geometry: FlashGeometry, gc: GcConfig | None = None, overprovision: float = 0.07):
        if not 0.0 <= overprovision < 1.0:
            raise ValueError("overprovision must lie in [0, 1)")
        self.geometry = geometry
        self.gc = gc or GcConfig()
        self.logical_pages = max(1, int(geometry.total_pages * (1.0 - overprovision)))
        self.mapping: dict[int, PhysicalPageAddress] = {}
        self.reverse: dict[PhysicalPageAddress, int] = {}
        self.planes: dict[PlaneKey, PlaneState] = {}
        self.erases = 0

    def plane(self, key: PlaneKey) -> PlaneState:
        st = self.planes.get(key)
        if st is None:
            st = PlaneState(self.geometry.blocks_per_plane, self.geometry.pages_per_block)
            self.planes[key] = st
        return st

    def stripe(self, lpn: int) -> PlaneKey:
        g = self.geometry
        channel = lpn % g.rows
        way = (lpn // g.rows) % g.chips_per_row
        chip = channel * g.chips_per_row + way
        idx = lpn // g.n_chips
        return chip, idx % g.dies_per_chip, (idx // g.dies_per_chip) % g.planes_per_die

    def wrap(self, lpn: int) -> int:
        return lpn % self.logical_pages

    def lookup(self, lpn: int) -> Optional[PhysicalPageAddress]:
        return self.mapping.get(lpn)

    def _allocate(self, key: PlaneKey) -> PhysicalPageAddress:
        block, page = self.plane(key).take_page()
        return PhysicalPageAddress(key[0], key[1], key[2], block, page)

    def _bind(self, lpn: int, ppa: PhysicalPageAddress) -> None:
        self.mapping[lpn] = ppa
        self.reverse[ppa] = lpn
        self.plane((ppa.chip, ppa.die, ppa.plane)).valid.setdefault(ppa.block, set()).add(ppa.page)

    def _invalidate(self, ppa: PhysicalPageAddress) -> None:
        self.reverse.pop(ppa, None)
        self.plane((ppa.chip, ppa.die, ppa.plane)).valid.get(ppa.block, set()).discard(ppa.page)

    def is_valid(self, ppa: PhysicalPageAddress) -> bool:
        st = self.planes.get((ppa.chip, ppa.die, ppa.plane))
        return st is not None and ppa.page in st.valid.get(ppa.block, ())

    def read(self, lpn: int) -> PhysicalPageAddress:
        ppa = self.mapping.get(lpn)
        if ppa is None:  # cold read: map on first touch
            ppa = self._allocate(self.stripe(lpn))
            self._bind(lpn, ppa)
        return ppa

    def write(self, lpn: int) -> PhysicalPageAddress:
        old = self.mapping.get(lpn)
        key = self.stripe(lpn) if old is None else (old.chip, old.die, old.plane)
        new = self._allocate(key)
        if old is not None:
            self._invalidate(old)
        self._bind(lpn, new)
        return new

    def translate_or_allocate(self, lpn: int, is_write: bool) -> PhysicalPageAddress:
        return self.write(lpn) if is_write else self.read(lpn)

    def needs_gc(self, key: PlaneKey) -> bool:
        return self.gc.enabled and self.plane(key).free_fraction < self.gc.free_block_threshold

    def select_victim(self, key: PlaneKey) -> Optional[int]:
        st = self.plane(key)
        # a block with no invalid page gains nothing and would make GC spin
        candidates = [b for b in st.full if st.valid_count(b) < st.pages_per_block]
        return min(candidates, key=lambda b: (st.valid_count(b), b)) if candidates else None

    def run_gc(self, key: PlaneKey) -> Optional[GcResult]:
        """Relocate the victim's valid pages inside the plane and erase it."""
        st = self.plane(key)
        victim = self.select_victim(key)
        if victim is None:
            return None
        moves = []
        for page in sorted(st.valid.get(victim, set())):
            old = PhysicalPageAddress(key[0], key[1], key[2], victim, page)
            lpn = self.reverse[old]
            new = self._allocate(key)
            self._invalidate(old)
            self._bind(lpn, new)
            moves.append((lpn, old, new))
        st.full.discard(victim)
        st.valid.pop(victim, None)
        st.free_blocks.append(victim)
        self.erases += 1
        return GcResult(key, victim, moves)

    def total_valid(self) -> int:
        return sum(len(v) for st in self.planes.values() for v in st.valid.values())

    def iter_mapped(self) -> Iterator[tuple[int, PhysicalPageAddress]]:
        return iter(self.mapping.items())

    def check_injective(self) -> bool:
        seen = set(self.mapping.values())
        return len(seen) == len(self.mapping) and all(self.is_valid(p) for p in seen)
