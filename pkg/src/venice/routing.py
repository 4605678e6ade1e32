"""Scout-packet path reservation over the flash-node mesh.

A scout walks from its flash controller towards the destination router,
reserving one link per hop and recording an (entry, exit) port pair in each
router's reservation table.  Minimal directions are preferred; when none is
free the scout misroutes through any other free port, and when nothing is
free it backtracks in cancel mode, undoing the last reservation.  Each
router output port is reserved at most once per attempt, which bounds the
walk.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .interconnect import (
    OPPOSITE,
    Link,
    Mesh,
    Port,
    ReservationEntry,
    TableConflict,
    release,
    reserve,
    table_insert,
    table_remove,
)
from .kernel import Lfsr2, lfsr_pick

VISIT_LIMIT = 4  # first visit plus three revisits
DEFAULT_HOP_NS = 3  # two 8-bit flits on a 1 GHz link + one decision cycle


class FlitKind(str, Enum):
    HEADER = "header"
    TAIL = "tail"


class ScoutMode(str, Enum):
    RESERVE = "reserve"
    CANCEL = "cancel"


class RoutingMode(str, Enum):
    NONMINIMAL = "venice-nonminimal"
    MINIMAL_ONLY = "venice-minimal-only"
    DOR = "dor"


def encode_flit(kind: FlitKind, mode: ScoutMode, value: int) -> int:
    """Pack a scout flit: ``[header bit | reserve bit | 6-bit payload]``."""
    if kind is FlitKind.HEADER:
        if not 0 <= value < 64:
            raise ValueError(f"destination chip id {value} does not fit in 6 bits")
        payload = value
    else:
        if not 0 <= value < 8:
            raise ValueError(f"source controller id {value} does not fit in 3 bits")
        payload = value << 3
    return (int(kind is FlitKind.HEADER) << 7) | (int(mode is ScoutMode.RESERVE) << 6) | payload


def decode_flit(flit: int) -> tuple[FlitKind, ScoutMode, int]:
    if not 0 <= flit < 256:
        raise ValueError("flit must be an 8-bit value")
    kind = FlitKind.HEADER if flit >> 7 else FlitKind.TAIL
    mode = ScoutMode.RESERVE if (flit >> 6) & 1 else ScoutMode.CANCEL
    payload = flit & 0x3F
    return kind, mode, payload if kind is FlitKind.HEADER else payload >> 3


def scout_hop_delay(hops: int, hop_ns: int = DEFAULT_HOP_NS) -> int:
    return hops * hop_ns


@dataclass
class RoutingQuery:
    packet_id: int
    current: int
    dest: int
    input_port: Port
    port_free: dict[Port, bool]
    rows: int
    cols: int

    def free(self, port: Port) -> bool:
        return self.port_free.get(port, False)


_MINIMAL_PORTS = {
    # (sign dx, sign dy) -> candidate order, as in the nine-case switch
    (1, 1): (Port.RIGHT, Port.UP),
    (1, -1): (Port.RIGHT, Port.DOWN),
    (1, 0): (Port.RIGHT,),
    (-1, 1): (Port.LEFT, Port.UP),
    (-1, -1): (Port.LEFT, Port.DOWN),
    (-1, 0): (Port.LEFT,),
    (0, 1): (Port.UP,),
    (0, -1): (Port.DOWN,),
    (0, 0): (Port.EJECTION,),
}
_NONMINIMAL_ORDER = (Port.UP, Port.DOWN, Port.RIGHT, Port.LEFT)


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def minimal_candidates(q: RoutingQuery) -> list[Port]:
    diff_x = q.dest % q.cols - q.current % q.cols
    diff_y = q.dest // q.cols - q.current // q.cols
    return [p for p in _MINIMAL_PORTS[(_sign(diff_x), _sign(diff_y))] if q.free(p)]


def find_output_port(q: RoutingQuery, lfsr: Lfsr2, minimal_only: bool = False) -> Optional[Port]:
    """Choose the scout's next output port, or ``None`` to backtrack upstream."""
    out = minimal_candidates(q)
    if len(out) == 2:
        return out[lfsr_pick(lfsr, 2)]
    if len(out) == 1:
        return out[0]
    if minimal_only:
        return None
    detour = [p for p in _NONMINIMAL_ORDER if q.free(p) and p != q.input_port]
    if not detour:
        return None
    if len(detour) == 1:
        return detour[0]
    return detour[lfsr_pick(lfsr, len(detour))]


class ReservationFailed(RuntimeError):
    def __init__(self, source_fc: int, dest_chip: int, hops: int) -> None:
        super().__init__(f"scout from FC{source_fc} to chip {dest_chip} failed after {hops} hops")
        self.source_fc = source_fc
        self.dest_chip = dest_chip
        self.hops = hops


@dataclass
class PathHop:
    router: int
    entry_port: Port
    exit_port: Port
    link: Link


@dataclass
class Circuit:
    circuit_id: int
    source_fc: int
    dest_chip: int
    injection: Link
    path: list[PathHop]
    established_at: int = 0

    @property
    def links(self) -> list[Link]:
        return [self.injection] + [h.link for h in self.path]

    @property
    def distance(self) -> int:
        """Links between controller and chip as counted for transfer latency (ejection included)."""
        return len(self.path)

    @property
    def mesh_hops(self) -> int:
        return len(self.path) - 1

    def routers(self) -> list[int]:
        return [h.router for h in self.path]


class ScoutState(str, Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


class Scout:
    """One reservation attempt.  Each :meth:`step` is one hop event."""

    def __init__(
        self,
        mesh: Mesh,
        source_fc: int,
        dest_chip: int,
        minimal_only: bool = False,
        visit_limit: int = VISIT_LIMIT,
        dor_only: bool = False,
    ) -> None:
        if not 0 <= dest_chip < len(mesh.routers):
            raise ValueError(f"destination chip {dest_chip} outside the mesh")
        self.mesh = mesh
        self.packet_id = source_fc
        self.source_fc = source_fc
        self.dest_chip = dest_chip
        self.dest_router = mesh.router_of_chip(dest_chip).id
        self.minimal_only = minimal_only
        self.dor_only = dor_only
        self.visit_limit = visit_limit
        self.mode = ScoutMode.RESERVE
        self.state = ScoutState.RUNNING
        self.stack: list[PathHop] = []
        self.used: dict[int, set[Port]] = {}
        self.visits: Counter[int] = Counter()
        self.hops = 0
        self.max_visits = 0
        self.injection = mesh.injection[source_fc]
        if not reserve(self.injection, self.packet_id):
            raise RuntimeError(f"injection link of FC{source_fc} already held")
        self.current = mesh.router_of_fc(source_fc).id
        self.input_port = Port.INJECTION
        self._arrive(self.current)

    @property
    def header_flit(self) -> int:
        return encode_flit(FlitKind.HEADER, self.mode, self.dest_chip)

    @property
    def tail_flit(self) -> int:
        return encode_flit(FlitKind.TAIL, self.mode, self.source_fc)

    @property
    def done(self) -> bool:
        return self.state is not ScoutState.RUNNING

    def _arrive(self, router_id: int) -> None:
        self.visits[router_id] += 1
        self.max_visits = max(self.max_visits, self.visits[router_id])

    def _port_free(self, router_id: int, port: Port) -> bool:
        link = self.mesh.routers[router_id].ports.get(port)
        return link is not None and link.free and port not in self.used.get(router_id, ())

    def query(self) -> RoutingQuery:
        r = self.current
        status = {p: self._port_free(r, p) for p in (Port.UP, Port.DOWN, Port.LEFT, Port.RIGHT, Port.EJECTION)}
        return RoutingQuery(self.packet_id, r, self.dest_router, self.input_port, status,
                            self.mesh.rows, self.mesh.cols)

    def step(self) -> ScoutState:
        if self.done:
            return self.state
        router = self.mesh.routers[self.current]
        out: Optional[Port] = None
        if self.visits[self.current] <= self.visit_limit:
            if self.dor_only:
                want = dor_route(self.current, self.dest_router, self.mesh.cols)
                out = want if self._port_free(self.current, want) else None
            else:
                out = find_output_port(self.query(), router.lfsr, self.minimal_only)
        self.hops += 1
        if out is None:
            self._backtrack()
        else:
            self._advance(router.id, out)
        return self.state

    def _advance(self, router_id: int, out: Port) -> None:
        self.mode = ScoutMode.RESERVE
        router = self.mesh.routers[router_id]
        link = router.ports[out]
        table_insert(router, ReservationEntry(self.packet_id, self.input_port, out))
        if not reserve(link, self.packet_id):  # pragma: no cover - port status said free
            table_remove(router, self.packet_id, out)
            raise TableConflict(f"link {link.id} vanished under scout {self.packet_id}")
        self.used.setdefault(router_id, set()).add(out)
        self.stack.append(PathHop(router_id, self.input_port, out, link))
        if out is Port.EJECTION:
            self.state = ScoutState.SUCCESS
            return
        nxt = self.mesh.neighbor(router_id, out)
        assert nxt is not None
        self.current = nxt
        self.input_port = OPPOSITE[out]
        self._arrive(nxt)

    def _backtrack(self) -> None:
        self.mode = ScoutMode.CANCEL
        if not self.stack:
            release(self.injection, self.packet_id)
            self.state = ScoutState.FAILED
            return
        hop = self.stack.pop()
        table_remove(self.mesh.routers[hop.router], self.packet_id, hop.exit_port)
        release(hop.link, self.packet_id)
        self.current = hop.router
        self.input_port = hop.entry_port

    def partial_circuit(self) -> Circuit:
        """The links this scout currently holds, as a (possibly incomplete) circuit."""
        return Circuit(self.packet_id, self.source_fc, self.dest_chip, self.injection, list(self.stack))

    def circuit(self, established_at: int = 0) -> Circuit:
        if self.state is not ScoutState.SUCCESS:
            raise RuntimeError("scout has not reserved a path")
        return Circuit(self.packet_id, self.source_fc, self.dest_chip, self.injection,
                       list(self.stack), established_at)

    @property
    def return_hops(self) -> int:
        """Hops of the trip back to the controller once the destination is reached."""
        return len(self.stack)


def reserve_path(
    mesh: Mesh,
    source_fc: int,
    dest_chip: int,
    minimal_only: bool = False,
    max_hops: Optional[int] = None,
) -> Circuit:
    """Run one scout to completion; raises :class:`ReservationFailed` on failure."""
    scout = Scout(mesh, source_fc, dest_chip, minimal_only)
    limit = max_hops if max_hops is not None else 8 * len(mesh.routers) + 8
    while not scout.done:
        scout.step()
        if scout.hops > limit:
            raise RuntimeError(f"scout exceeded {limit} hop events")
    if scout.state is ScoutState.FAILED:
        raise ReservationFailed(source_fc, dest_chip, scout.hops)
    return scout.circuit()


def release_circuit(mesh: Mesh, circuit: Circuit) -> None:
    for hop in circuit.path:
        table_remove(mesh.routers[hop.router], circuit.circuit_id, hop.exit_port)
        release(hop.link, circuit.circuit_id)
    release(circuit.injection, circuit.circuit_id)


def dor_route(current: int, dest: int, cols: int) -> Port:
    """X-first dimension-order routing between router ids."""
    cr, cc = divmod(current, cols)
    dr, dc = divmod(dest, cols)
    if cc != dc:
        return Port.RIGHT if dc > cc else Port.LEFT
    if cr != dr:
        return Port.UP if dr > cr else Port.DOWN
    return Port.EJECTION


@dataclass
class InvariantReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_mesh_invariants(mesh: Mesh, circuits: Iterable[Circuit]) -> InvariantReport:
    """Circuit link-disjointness and reservation-table port uniqueness."""
    rep = InvariantReport()
    owner: dict[int, int] = {}
    for c in circuits:
        for link in c.links:
            if link.id in owner:
                rep.violations.append(
                    f"link {link.id} shared by circuits {owner[link.id]} and {c.circuit_id}"
                )
            owner[link.id] = c.circuit_id
            if link.holder != c.circuit_id:
                rep.violations.append(f"link {link.id} of circuit {c.circuit_id} held by {link.holder}")
    for r in mesh.routers:
        live = [e for e in r.table if e.valid]
        if not live:
            continue
        if len(live) > r.capacity:
            rep.violations.append(f"router {r.id} has {len(live)} valid entries")
        used = [e.entry_port for e in live] + [e.exit_port for e in live]
        if len(set(used)) != len(used):
            rep.violations.append(f"router {r.id} reuses a port across entries: {live}")
        for e in live:
            for p in (e.entry_port, e.exit_port):
                link = r.ports.get(p)
                if link is None or link.holder != e.packet_id:
                    rep.violations.append(
                        f"router {r.id} entry {e} port {p.name} not backed by a link held by {e.packet_id}"
                    )
    return rep
