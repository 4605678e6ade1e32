"""Topologies for the six SSD designs: shared buses, bus grid, meshes, direct channels.

Mesh orientation: ``UP`` moves to the next row index, ``DOWN`` to the previous
one, ``RIGHT`` to the next column and ``LEFT`` to the previous one.  Flash
controller ``i`` attaches to the router in row ``i``, column 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

from .flash import FlashGeometry, FlashTimingConfig, GeometryError
from .kernel import Lfsr2


class Arch(str, Enum):
    BASELINE = "baseline-bus"
    PSSD = "pssd-bus"
    PNSSD = "pnssd-grid"
    NOSSD = "nossd-mesh"
    VENICE = "venice-mesh"
    IDEAL = "ideal-direct"

    @property
    def is_mesh(self) -> bool:
        return self in (Arch.NOSSD, Arch.VENICE)


ARCH_ALIASES = {
    "baseline": Arch.BASELINE,
    "pssd": Arch.PSSD,
    "pnssd": Arch.PNSSD,
    "nossd": Arch.NOSSD,
    "venice": Arch.VENICE,
    "ideal": Arch.IDEAL,
}


def parse_arch(name: str) -> Arch:
    name = name.strip().lower()
    if name in ARCH_ALIASES:
        return ARCH_ALIASES[name]
    return Arch(name)


class Port(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    INJECTION = 4
    EJECTION = 5

    @property
    def is_mesh(self) -> bool:
        return self <= Port.RIGHT

    @property
    def bits(self) -> int:
        """2-bit encoding used by the reservation table (mesh ports only)."""
        if not self.is_mesh:
            raise ValueError(f"{self.name} has no 2-bit table encoding")
        return int(self)


MESH_PORTS = (Port.UP, Port.DOWN, Port.LEFT, Port.RIGHT)
OPPOSITE = {Port.UP: Port.DOWN, Port.DOWN: Port.UP, Port.LEFT: Port.RIGHT, Port.RIGHT: Port.LEFT}
DELTA = {Port.UP: (1, 0), Port.DOWN: (-1, 0), Port.LEFT: (0, -1), Port.RIGHT: (0, 1)}


class LinkKind(str, Enum):
    MESH = "mesh"
    INJECTION = "injection"
    EJECTION = "ejection"


@dataclass(eq=False)
class Link:
    id: int
    kind: LinkKind
    a: tuple  # (node, port) endpoint
    b: tuple
    holder: Optional[int] = None

    @property
    def free(self) -> bool:
        return self.holder is None

    def __repr__(self) -> str:
        return f"Link({self.id}, {self.a}<->{self.b}, holder={self.holder})"


def reserve(link: Link, circuit_id: int) -> bool:
    """Claim ``link`` for ``circuit_id``; ``False`` if it is already held (by anyone)."""
    if link.holder is not None:
        return False
    link.holder = circuit_id
    return True


def release(link: Link, circuit_id: int) -> None:
    if link.holder != circuit_id:
        raise RuntimeError(f"{link!r} is not held by circuit {circuit_id}")
    link.holder = None


class TableConflict(RuntimeError):
    """An insert would reuse a port already bound by a valid entry."""


class EntryNotFound(KeyError):
    pass


@dataclass
class ReservationEntry:
    packet_id: int
    entry_port: Port
    exit_port: Port
    valid: bool = True


@dataclass(eq=False)
class Router:
    id: int
    row: int
    col: int
    capacity: int
    lfsr: Lfsr2
    ports: dict[Port, Link] = field(default_factory=dict)
    table: list[ReservationEntry] = field(default_factory=list)

    def valid_entries(self) -> list[ReservationEntry]:
        return [e for e in self.table if e.valid]


def table_insert(router: Router, entry: ReservationEntry) -> None:
    if not 0 <= entry.packet_id < router.capacity:
        raise ValueError(f"packet id {entry.packet_id} outside [0, {router.capacity})")
    if entry.entry_port == entry.exit_port:
        raise TableConflict(f"router {router.id}: entry and exit port are both {entry.exit_port.name}")
    live = router.valid_entries()
    for e in live:
        used = (e.entry_port, e.exit_port)
        if entry.entry_port in used or entry.exit_port in used:
            raise TableConflict(
                f"router {router.id}: ports {entry.entry_port.name}->{entry.exit_port.name} "
                f"overlap packet {e.packet_id} ({e.entry_port.name}->{e.exit_port.name})"
            )
    if len(live) >= router.capacity:
        raise TableConflict(f"router {router.id}: reservation table full")
    # reuse an invalid row if there is one, like a hardware table would
    for i, e in enumerate(router.table):
        if not e.valid:
            router.table[i] = ReservationEntry(entry.packet_id, entry.entry_port, entry.exit_port)
            return
    router.table.append(ReservationEntry(entry.packet_id, entry.entry_port, entry.exit_port))


def table_remove(router: Router, packet_id: int, exit_port: Optional[Port] = None) -> ReservationEntry:
    """Invalidate the entry of ``packet_id`` (optionally the one leaving through ``exit_port``)."""
    for e in router.table:
        if e.valid and e.packet_id == packet_id and (exit_port is None or e.exit_port == exit_port):
            e.valid = False
            return e
    raise EntryNotFound(f"router {router.id} has no entry for packet {packet_id}")


@dataclass
class Mesh:
    rows: int
    cols: int
    n_controllers: int
    routers: list[Router]
    mesh_links: list[Link]
    injection: list[Link]  # one per flash controller
    ejection: list[Link]  # one per router, into its flash chip

    def router_id(self, row: int, col: int) -> int:
        return row * self.cols + col

    def router_of_chip(self, chip: int) -> Router:
        return self.routers[chip]

    def router_of_fc(self, fc: int) -> Router:
        return self.routers[self.router_id(fc, 0)]

    def neighbor(self, router_id: int, port: Port) -> Optional[int]:
        r = self.routers[router_id]
        dr, dc = DELTA[port]
        row, col = r.row + dr, r.col + dc
        if 0 <= row < self.rows and 0 <= col < self.cols:
            return self.router_id(row, col)
        return None

    def hop_distance(self, a: int, b: int) -> int:
        ra, rb = self.routers[a], self.routers[b]
        return abs(ra.row - rb.row) + abs(ra.col - rb.col)

    def all_links(self) -> list[Link]:
        return self.mesh_links + self.injection + self.ejection


def build_mesh(rows: int, cols: int, seed: int = 0) -> Mesh:
    n_fc = rows
    routers = [
        Router(id=r * cols + c, row=r, col=c, capacity=n_fc, lfsr=Lfsr2.seeded(seed, r * cols + c))
        for r in range(rows)
        for c in range(cols)
    ]
    links: list[Link] = []
    mesh = Mesh(rows, cols, n_fc, routers, links, [], [])
    for r in routers:
        for port in (Port.UP, Port.RIGHT):
            nb = mesh.neighbor(r.id, port)
            if nb is None:
                continue
            link = Link(len(links), LinkKind.MESH, (r.id, port), (nb, OPPOSITE[port]))
            links.append(link)
            r.ports[port] = link
            routers[nb].ports[OPPOSITE[port]] = link
    next_id = len(links)
    for fc in range(n_fc):
        r = mesh.router_of_fc(fc)
        link = Link(next_id, LinkKind.INJECTION, (("fc", fc), None), (r.id, Port.INJECTION))
        next_id += 1
        mesh.injection.append(link)
        r.ports[Port.INJECTION] = link
    for r in routers:
        link = Link(next_id, LinkKind.EJECTION, (r.id, Port.EJECTION), (("chip", r.id), None))
        next_id += 1
        mesh.ejection.append(link)
        r.ports[Port.EJECTION] = link
    return mesh


@dataclass(eq=False)
class BusChannel:
    """A shared channel with FIFO booking: each acquisition is granted after all earlier ones."""

    id: int
    chips: tuple[int, ...]
    page_time: int
    cmd_time: int
    next_free: int = 0
    busy_ns: int = 0
    transactions: int = 0

    def is_free(self, now: int) -> bool:
        return self.next_free <= now


def bus_acquire(channel: BusChannel, duration: int, now: int) -> int:
    if duration <= 0:
        raise ValueError("transaction duration must be positive")
    grant = max(now, channel.next_free)
    channel.next_free = grant + duration
    channel.busy_ns += duration
    channel.transactions += 1
    return grant


@dataclass
class Topology:
    kind: Arch
    rows: int
    cols: int
    link_width: int = 1
    link_cycle: int = 1
    channel_rate: float = 1.2
    channels: list[BusChannel] = field(default_factory=list)
    # chip -> indices into ``channels`` through which it can be reached
    chip_channels: dict[int, tuple[int, ...]] = field(default_factory=dict)
    mesh: Optional[Mesh] = None

    @property
    def n_chips(self) -> int:
        return self.rows * self.cols

    @property
    def n_controllers(self) -> int:
        return self.rows


def build_topology(
    kind: Arch,
    geometry: FlashGeometry,
    timing: FlashTimingConfig,
    seed: int = 0,
    link_width: int = 1,
    link_cycle: int = 1,
) -> Topology:
    rows, cols = geometry.rows, geometry.chips_per_row
    topo = Topology(kind, rows, cols, link_width, link_cycle)
    page_t, cmd_t = timing.page_transfer_time_bus, timing.cmd_transfer_time

    if kind in (Arch.BASELINE, Arch.PSSD):
        if kind is Arch.PSSD:
            # packetized channel: twice the bandwidth for commands and data
            page_t, cmd_t = -(-page_t // 2), -(-cmd_t // 2)
        for r in range(rows):
            chips = tuple(r * cols + c for c in range(cols))
            topo.channels.append(BusChannel(r, chips, page_t, cmd_t))
            for chip in chips:
                topo.chip_channels[chip] = (r,)
    elif kind is Arch.PNSSD:
        if rows != cols:
            raise GeometryError(
                f"pnssd-grid requires a square flash array (N x N), got {rows} x {cols}"
            )
        for r in range(rows):
            topo.channels.append(BusChannel(r, tuple(r * cols + c for c in range(cols)), page_t, cmd_t))
        for c in range(cols):
            topo.channels.append(
                BusChannel(rows + c, tuple(r * cols + c for r in range(rows)), page_t, cmd_t)
            )
        for chip in range(rows * cols):
            r, c = divmod(chip, cols)
            topo.chip_channels[chip] = (r, rows + c)
    elif kind is Arch.IDEAL:
        for chip in range(rows * cols):
            topo.channels.append(BusChannel(chip, (chip,), page_t, cmd_t))
            topo.chip_channels[chip] = (chip,)
    elif kind.is_mesh:
        topo.mesh = build_mesh(rows, cols, seed)
    else:  # pragma: no cover
        raise GeometryError(f"unknown topology {kind}")
    return topo


def mesh_link_count(rows: int, cols: int) -> int:
    return rows * (cols - 1) + cols * (rows - 1)
