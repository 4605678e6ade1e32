"""SSD controller: request admission, FTL, flash controllers and per-design service pipelines.

Every request is split into page transactions.  A transaction first waits for
its die (one outstanding operation per die), then the interconnect backend
runs CMD -> flash op -> data and hands the die back.  Backends:

* bus designs (baseline, pSSD, pnSSD, ideal) book shared channels FIFO;
* ``venice-mesh`` assigns a flash controller, reserves a circuit with a
  scout and holds it for the whole transaction;
* ``nossd-mesh`` moves page-sized packets through buffered routers with X-first
  routing and 16 KB per-port buffers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

from .flash import (
    FlashChipState,
    FlashGeometry,
    FlashOp,
    FlashTimingConfig,
    PERFORMANCE_GEOMETRY,
    PERFORMANCE_TIMING,
    PhysicalPageAddress,
    start_flash_op,
)
from .ftl import Ftl, GcConfig
from .interconnect import Arch, BusChannel, Mesh, Port, Topology, build_topology, bus_acquire
from .kernel import EventKind, EventQueue
from .metrics import MetricsCollector, PowerModel, RunReport
from .routing import (
    DEFAULT_HOP_NS,
    VISIT_LIMIT,
    Circuit,
    RoutingMode,
    Scout,
    ScoutState,
    check_mesh_invariants,
    dor_route,
    release_circuit,
)
from .workload import TraceRecord, logical_span

CMD_BYTES = 12


class InvariantViolation(RuntimeError):
    def __init__(self, violations: Sequence[str]) -> None:
        super().__init__("; ".join(violations[:5]))
        self.violations = list(violations)


def compute_transfer_latency(distance: int, transfer_size: int, link_width: int = 1, link_lat: int = 1) -> int:
    """Circuit transfer time: (hops + ceil(size / width)) link cycles."""
    if distance < 1 or transfer_size < 1 or link_width < 1 or link_lat < 1:
        raise ValueError("distance, size, width and latency must all be >= 1")
    return (distance + -(-transfer_size // link_width)) * link_lat


@dataclass(eq=False)
class IoRequest:
    id: int
    arrival_time: int
    kind: str  # "read" | "write"
    logical_page_start: int
    page_count: int
    source_stream: str = ""
    completion_time: Optional[int] = None
    conflict_flag: bool = False
    first_try_reserved: bool = True
    pages_left: int = 0

    def __post_init__(self) -> None:
        if self.page_count < 1:
            raise ValueError("page_count must be >= 1")
        if self.kind not in ("read", "write"):
            raise ValueError(f"unknown request kind {self.kind!r}")
        self.pages_left = self.page_count

    @property
    def latency(self) -> int:
        if self.completion_time is None:
            raise RuntimeError(f"request {self.id} has not completed")
        return self.completion_time - self.arrival_time


def requests_from_records(records: Iterable[TraceRecord], page_size: int) -> list[IoRequest]:
    out = []
    for i, r in enumerate(records):
        start, count = logical_span(r.offset, r.size, page_size)
        out.append(IoRequest(i, r.timestamp, r.op, start, count, r.stream))
    return out


class FcStatus(str, Enum):
    IDLE = "idle"
    BUSY = "busy"


@dataclass(eq=False)
class FlashControllerState:
    id: int
    attach_row: int
    status: FcStatus = FcStatus.IDLE
    current: Optional["PageTxn"] = None
    failures: int = 0  # consecutive failed scouts for the current transaction
    scout: Optional[Scout] = None

    @property
    def idle(self) -> bool:
        return self.status is FcStatus.IDLE


def select_flash_controller(
    dest_chip: int, controllers: Sequence[FlashControllerState], mesh: Mesh
) -> Optional[FlashControllerState]:
    """Nearest idle controller to ``dest_chip`` (ties to the lowest index), or ``None``."""
    target = mesh.router_of_chip(dest_chip).id
    best = None
    best_key = None
    for fc in controllers:
        if not fc.idle:
            continue
        key = (mesh.hop_distance(mesh.router_of_fc(fc.id).id, target), fc.id)
        if best_key is None or key < best_key:
            best, best_key = fc, key
    return best


@dataclass(eq=False)
class PageTxn:
    op: FlashOp
    ppa: PhysicalPageAddress
    request: Optional[IoRequest] = None
    then: Optional[Callable[[], None]] = None  # continuation for GC chains
    ready: int = 0
    first_attempt: bool = True

    @property
    def chip(self) -> int:
        return self.ppa.chip


@dataclass
class SimConfig:
    arch: Arch = Arch.BASELINE
    geometry: FlashGeometry = PERFORMANCE_GEOMETRY
    timing: FlashTimingConfig = PERFORMANCE_TIMING
    routing: RoutingMode = RoutingMode.NONMINIMAL
    seed: int = 0
    gc: GcConfig = field(default_factory=GcConfig)
    overprovision: float = 0.07
    power: PowerModel = field(default_factory=PowerModel)
    hop_ns: int = DEFAULT_HOP_NS
    link_width: int = 1
    link_lat: int = 1
    cmd_bytes: int = CMD_BYTES
    retry_limit: int = 8
    visit_limit: int = VISIT_LIMIT
    nossd_buffer_bytes: int = 16 * 1024
    nossd_switching: str = "cut-through"  # or "store-and-forward"
    check_invariants: bool = False

    def __post_init__(self) -> None:
        if self.hop_ns < 1 or self.retry_limit < 1 or self.nossd_buffer_bytes < 1:
            raise ValueError("hop_ns, retry_limit and nossd_buffer_bytes must be >= 1")
        if self.arch is Arch.NOSSD and self.nossd_buffer_bytes < self.geometry.page_size + self.cmd_bytes:
            raise ValueError("NoSSD port buffer must hold at least one page packet")
        if self.nossd_switching not in ("cut-through", "store-and-forward"):
            raise ValueError(f"unknown NoSSD switching mode {self.nossd_switching!r}")


class SsdSimulator:
    def __init__(self, config: SimConfig) -> None:
        self.cfg = config
        g = config.geometry
        self.topo: Topology = build_topology(
            config.arch, g, config.timing, config.seed, config.link_width, config.link_lat
        )
        self.events = EventQueue()
        self.ftl = Ftl(g, config.gc, config.overprovision)
        self.chips = [FlashChipState.create(i, g) for i in range(g.n_chips)]
        self.die_queue: dict[tuple[int, int], deque[PageTxn]] = {}
        self.die_owner: dict[tuple[int, int], PageTxn] = {}
        self.gc_active: dict[tuple[int, int, int], int] = {}
        self.metrics = MetricsCollector(config.arch.value, track_first_try=config.arch is Arch.VENICE)
        self.admitted = 0
        self.completed: list[IoRequest] = []
        self.violations: list[str] = []
        self.gc_copies = 0
        if config.arch is Arch.VENICE:
            self.backend: _Backend = VeniceBackend(self)
        elif config.arch is Arch.NOSSD:
            self.backend = NossdBackend(self)
        else:
            self.backend = BusBackend(self)

    @property
    def now(self) -> int:
        return self.events.now

    # admission -------------------------------------------------------------
    def submit(self, requests: Iterable[IoRequest]) -> None:
        for req in requests:
            self.admitted += 1
            self.events.at(req.arrival_time, EventKind.REQUEST_ARRIVAL, lambda r=req: self._arrive(r), req)

    def _arrive(self, req: IoRequest) -> None:
        is_write = req.kind == "write"
        for i in range(req.page_count):
            lpn = self.ftl.wrap(req.logical_page_start + i)
            ppa = self.ftl.translate_or_allocate(lpn, is_write)
            self._enqueue(PageTxn(FlashOp.PROGRAM if is_write else FlashOp.READ, ppa, req))
            if is_write:
                self._maybe_gc((ppa.chip, ppa.die, ppa.plane))

    # die arbitration ----------------------------------------------------------
    def _enqueue(self, txn: PageTxn) -> None:
        key = (txn.ppa.chip, txn.ppa.die)
        if key in self.die_owner:
            self.die_queue.setdefault(key, deque()).append(txn)
        else:
            self._start(key, txn)

    def _start(self, key: tuple[int, int], txn: PageTxn) -> None:
        self.die_owner[key] = txn
        txn.ready = self.now
        self.backend.begin(txn)

    def flash_op(self, txn: PageTxn, then: Callable[[], None]) -> None:
        done = start_flash_op(self.chips[txn.ppa.chip], txn.op, txn.ppa, self.cfg.timing, self.now)
        dur = done - self.now
        led = self.metrics.ledger
        if txn.op is FlashOp.READ:
            led.read_ns += dur
        elif txn.op is FlashOp.PROGRAM:
            led.program_ns += dur
        else:
            led.erase_ns += dur
        self.events.at(done, EventKind.FLASH_OP_COMPLETE, then, txn)

    def mark_conflict(self, txn: PageTxn) -> None:
        if txn.request is not None:
            txn.request.conflict_flag = True

    def finish(self, txn: PageTxn) -> None:
        key = (txn.ppa.chip, txn.ppa.die)
        assert self.die_owner.get(key) is txn
        del self.die_owner[key]
        q = self.die_queue.get(key)
        if q:
            self._start(key, q.popleft())
        req = txn.request
        if req is not None:
            req.pages_left -= 1
            if req.pages_left == 0:
                req.completion_time = self.now
                self.completed.append(req)
                self.metrics.record_completion(
                    req.arrival_time, self.now, req.kind, req.conflict_flag, req.first_try_reserved
                )
        if txn.then is not None:
            txn.then()

    # garbage collection -------------------------------------------------------
    def _maybe_gc(self, key: tuple[int, int, int]) -> None:
        if not self.ftl.needs_gc(key):
            return
        # one background pass at a time, unless the plane has run dry (foreground GC)
        if self.gc_active.get(key) and self.ftl.plane(key).free_blocks:
            return
        result = self.ftl.run_gc(key)
        if result is None:
            return
        self.gc_active[key] = self.gc_active.get(key, 0) + 1
        self.gc_copies += result.copies
        chip, die, plane = key
        steps: list[PageTxn] = []
        for _lpn, old, new in result.moves:
            steps.append(PageTxn(FlashOp.READ, old))
            steps.append(PageTxn(FlashOp.PROGRAM, new))
        steps.append(PageTxn(FlashOp.ERASE, PhysicalPageAddress(chip, die, plane, result.victim, 0)))

        def chain(i: int) -> None:
            if i == len(steps):
                self.gc_active[key] -= 1
                self._maybe_gc(key)
                return
            steps[i].then = lambda: chain(i + 1)
            self._enqueue(steps[i])

        chain(0)

    # invariant hook -----------------------------------------------------------
    def check_invariants(self) -> None:
        if isinstance(self.backend, VeniceBackend):
            problems = self.backend.invariant_problems()
            if problems:
                self.violations.extend(problems)

    # driver ------------------------------------------------------------------
    def run(self, requests: Iterable[IoRequest] = ()) -> RunReport:
        self.submit(requests)
        self.events.run()
        if len(self.completed) != self.admitted:
            raise InvariantViolation(
                [f"{self.admitted - len(self.completed)} of {self.admitted} requests never completed"]
            )
        if self.violations:
            raise InvariantViolation(self.violations)
        return self.report()

    def report(self) -> RunReport:
        self.backend.settle_energy()
        extra = {"events": float(self.events.processed), "gc_copies": float(self.gc_copies),
                 "gc_erases": float(self.ftl.erases)}
        extra.update(self.backend.extra())
        return self.metrics.report(self.cfg.power, extra)


class _Backend:
    def __init__(self, sim: SsdSimulator) -> None:
        self.sim = sim

    def begin(self, txn: PageTxn) -> None:  # pragma: no cover - interface
        raise NotImplementedError

    def settle_energy(self) -> None:
        pass

    def extra(self) -> dict[str, float]:
        return {}


class BusBackend(_Backend):
    """CMD, op and data over FIFO-booked channels (one or two candidates per chip)."""

    def __init__(self, sim: SsdSimulator) -> None:
        super().__init__(sim)
        self.channels = sim.topo.channels
        self.chip_channels = sim.topo.chip_channels

    def pick(self, chip: int) -> BusChannel:
        cands = [self.channels[i] for i in self.chip_channels[chip]]
        now = self.sim.now
        for ch in cands:  # horizontal first
            if ch.next_free <= now:
                return ch
        return min(cands, key=lambda ch: ch.next_free)  # earliest grant; ties keep horizontal

    def _book(self, txn: PageTxn, duration_of: Callable[[BusChannel], int]) -> int:
        ch = self.pick(txn.chip)
        now = self.sim.now
        dur = duration_of(ch)
        grant = bus_acquire(ch, dur, now)
        if grant > now:
            self.sim.mark_conflict(txn)
        return grant + dur

    def begin(self, txn: PageTxn) -> None:
        sim, ev = self.sim, self.sim.events
        if txn.op is FlashOp.PROGRAM:
            end = self._book(txn, lambda ch: ch.cmd_time + ch.page_time)
            ev.at(end, EventKind.TRANSFER_COMPLETE, lambda: sim.flash_op(txn, lambda: sim.finish(txn)), txn)
            return
        end = self._book(txn, lambda ch: ch.cmd_time)
        if txn.op is FlashOp.ERASE:
            ev.at(end, EventKind.TRANSFER_COMPLETE, lambda: sim.flash_op(txn, lambda: sim.finish(txn)), txn)
            return

        def data() -> None:
            done = self._book(txn, lambda ch: ch.page_time)
            ev.at(done, EventKind.TRANSFER_COMPLETE, lambda: sim.finish(txn), txn)

        ev.at(end, EventKind.TRANSFER_COMPLETE, lambda: sim.flash_op(txn, data), txn)

    def settle_energy(self) -> None:
        self.sim.metrics.ledger.bus_ns = sum(ch.busy_ns for ch in self.channels)


class VeniceBackend(_Backend):
    def __init__(self, sim: SsdSimulator) -> None:
        super().__init__(sim)
        mesh = sim.topo.mesh
        assert mesh is not None
        self.mesh = mesh
        self.fcs = [FlashControllerState(i, i) for i in range(mesh.n_controllers)]
        self.waiting: deque[PageTxn] = deque()
        self.parked: list[FlashControllerState] = []
        self.circuits: dict[int, Circuit] = {}
        self.scouts_sent = 0
        self.scouts_failed = 0
        self.scout_hops = 0
        led = sim.metrics.ledger
        led.routers = len(mesh.routers)
        led.router_power = sim.cfg.power.router_power

    # controller assignment --------------------------------------------------
    def begin(self, txn: PageTxn) -> None:
        self.waiting.append(txn)
        self._dispatch()

    def _dispatch(self) -> None:
        now = self.sim.now
        while self.waiting:
            txn = self.waiting[0]
            fc = select_flash_controller(txn.chip, self.fcs, self.mesh)
            if fc is None:
                return
            self.waiting.popleft()
            if now > txn.ready:
                self.sim.mark_conflict(txn)
            fc.status = FcStatus.BUSY
            fc.current = txn
            fc.failures = 0
            self._launch(fc)

    # path reservation ---------------------------------------------------------
    def _launch(self, fc: FlashControllerState) -> None:
        cfg = self.sim.cfg
        txn = fc.current
        assert txn is not None
        fc.scout = Scout(
            self.mesh,
            fc.id,
            txn.chip,
            minimal_only=cfg.routing is RoutingMode.MINIMAL_ONLY,
            visit_limit=cfg.visit_limit,
            dor_only=cfg.routing is RoutingMode.DOR,
        )
        self.scouts_sent += 1
        self.sim.events.after(cfg.hop_ns, EventKind.SCOUT_STEP, lambda s=fc.scout: self._step(fc, s), fc.id)

    def _step(self, fc: FlashControllerState, scout: Scout) -> None:
        sim, cfg = self.sim, self.sim.cfg
        state = scout.step()
        self.scout_hops += 1
        if cfg.check_invariants:
            sim.check_invariants()
        if state is ScoutState.RUNNING:
            sim.events.after(cfg.hop_ns, EventKind.SCOUT_STEP, lambda: self._step(fc, scout), fc.id)
            return
        txn = fc.current
        assert txn is not None
        first = txn.first_attempt
        txn.first_attempt = False
        if state is ScoutState.SUCCESS:
            back = scout.return_hops * cfg.hop_ns
            sim.events.after(back, EventKind.SCOUT_STEP, lambda: self._established(fc, scout), fc.id)
            return
        # the scout is back at its controller in cancel mode
        fc.scout = None
        self.scouts_failed += 1
        if first and txn.request is not None:
            txn.request.first_try_reserved = False
        sim.mark_conflict(txn)
        fc.failures += 1
        if fc.failures < cfg.retry_limit or not self._anything_holds_links():
            self._launch(fc)
        else:
            fc.failures = 0
            self.parked.append(fc)

    def _anything_holds_links(self) -> bool:
        return bool(self.circuits) or any(f.scout is not None for f in self.fcs)

    def _wake_parked(self) -> None:
        parked, self.parked = self.parked, []
        for fc in parked:
            self._launch(fc)

    # transaction over the circuit ----------------------------------------------
    def _established(self, fc: FlashControllerState, scout: Scout) -> None:
        sim, cfg = self.sim, self.sim.cfg
        circuit = scout.circuit(sim.now)
        fc.scout = None
        self.circuits[fc.id] = circuit
        if cfg.check_invariants:
            sim.check_invariants()
        txn = fc.current
        assert txn is not None
        page = sim.cfg.geometry.page_size
        ev = sim.events

        def xfer(size: int, then: Callable[[], None]) -> None:
            dur = compute_transfer_latency(circuit.distance, size, cfg.link_width, cfg.link_lat)
            sim.metrics.ledger.link_ns += dur * len(circuit.links)
            ev.after(dur, EventKind.TRANSFER_COMPLETE, then, txn)

        done = lambda: self._teardown(fc)  # noqa: E731
        if txn.op is FlashOp.READ:
            xfer(cfg.cmd_bytes, lambda: sim.flash_op(txn, lambda: xfer(page, done)))
        elif txn.op is FlashOp.PROGRAM:
            xfer(cfg.cmd_bytes, lambda: xfer(page, lambda: sim.flash_op(txn, done)))
        else:
            xfer(cfg.cmd_bytes, lambda: sim.flash_op(txn, done))

    def _teardown(self, fc: FlashControllerState) -> None:
        circuit = self.circuits.pop(fc.id)
        release_circuit(self.mesh, circuit)
        txn = fc.current
        assert txn is not None
        fc.current = None
        fc.status = FcStatus.IDLE
        if self.sim.cfg.check_invariants:
            self.sim.check_invariants()
        self._wake_parked()
        self.sim.finish(txn)
        self._dispatch()

    # checks / reporting -----------------------------------------------------------
    def invariant_problems(self) -> list[str]:
        active = list(self.circuits.values())
        # scouts still walking, or returning to their controller after reaching the chip
        active += [fc.scout.partial_circuit() for fc in self.fcs
                   if fc.scout is not None and fc.scout.state is not ScoutState.FAILED]
        problems = list(check_mesh_invariants(self.mesh, active).violations)
        held = len(self.mesh.all_links()) - [link.holder for link in self.mesh.all_links()].count(None)
        owned = sum(len(c.links) for c in active)
        if held != owned:
            problems.append(f"{held} links held but {owned} belong to live circuits or scouts")
        for fc in self.fcs:
            s = fc.scout
            if s is not None and s.max_visits > s.visit_limit + 1:
                problems.append(f"scout of FC{fc.id} visited a router {s.max_visits} times")
        return [f"t={self.sim.now}: {p}" for p in problems]

    def extra(self) -> dict[str, float]:
        return {
            "scouts_sent": float(self.scouts_sent),
            "scouts_failed": float(self.scouts_failed),
            "scout_hops": float(self.scout_hops),
        }


@dataclass(eq=False)
class _DLink:
    """One direction of a link with the input buffer at its downstream end."""

    name: str
    sink: bool  # delivers into a chip or a controller: no buffer limit
    capacity: int
    occupied: int = 0
    busy: bool = False
    queue: deque = field(default_factory=deque)


@dataclass(eq=False)
class _Packet:
    txn: PageTxn
    size: int
    route: list[_DLink]
    on_arrive: Callable[[], None]
    hop: int = 0
    held: Optional[_DLink] = None  # input buffer the packet occupies
    queued_at: int = 0


class NossdBackend(_Backend):
    """Packet switching through buffered routers with page-sized packets.

    Each router input port buffers whole packets (16 KB by default) and a
    packet may only start on a link once the buffer behind it has room.  In
    cut-through mode the head moves on one link cycle after it starts, so an
    idle path costs hops + serialization like a circuit; in
    store-and-forward mode every hop serializes the full packet.
    """

    def __init__(self, sim: SsdSimulator) -> None:
        super().__init__(sim)
        mesh = sim.topo.mesh
        assert mesh is not None
        self.mesh = mesh
        cap = sim.cfg.nossd_buffer_bytes
        self.out: dict[tuple[int, Port], _DLink] = {}
        for r in mesh.routers:
            for p in (Port.UP, Port.DOWN, Port.LEFT, Port.RIGHT):
                if mesh.neighbor(r.id, p) is not None:
                    self.out[(r.id, p)] = _DLink(f"r{r.id}.{p.name}", False, cap)
        self.fc_in = [_DLink(f"fc{i}->r", False, cap) for i in range(mesh.n_controllers)]
        self.fc_out = [_DLink(f"r->fc{i}", True, 0) for i in range(mesh.n_controllers)]
        self.chip_in = [_DLink(f"r->chip{i}", True, 0) for i in range(len(mesh.routers))]
        self.chip_out = [_DLink(f"chip{i}->r", False, cap) for i in range(len(mesh.routers))]
        self.fcs = [FlashControllerState(i, i) for i in range(mesh.n_controllers)]
        self.waiting: deque[PageTxn] = deque()
        self.packets = 0
        self.cut_through = sim.cfg.nossd_switching == "cut-through"
        led = sim.metrics.ledger
        led.routers = len(mesh.routers)
        led.router_power = sim.cfg.power.buffered_router_power

    def _mesh_route(self, src: int, dst: int) -> list[_DLink]:
        hops = []
        cur = src
        while True:
            p = dor_route(cur, dst, self.mesh.cols)
            if p is Port.EJECTION:
                return hops
            hops.append(self.out[(cur, p)])
            nxt = self.mesh.neighbor(cur, p)
            assert nxt is not None
            cur = nxt

    def route_down(self, fc: int, chip: int) -> list[_DLink]:
        start = self.mesh.router_of_fc(fc).id
        return [self.fc_in[fc]] + self._mesh_route(start, chip) + [self.chip_in[chip]]

    def route_up(self, chip: int, fc: int) -> list[_DLink]:
        end = self.mesh.router_of_fc(fc).id
        return [self.chip_out[chip]] + self._mesh_route(chip, end) + [self.fc_out[fc]]

    def begin(self, txn: PageTxn) -> None:
        self.waiting.append(txn)
        self._dispatch()

    def _dispatch(self) -> None:
        while self.waiting:
            txn = self.waiting[0]
            fc = select_flash_controller(txn.chip, self.fcs, self.mesh)
            if fc is None:
                return
            self.waiting.popleft()
            if self.sim.now > txn.ready:
                self.sim.mark_conflict(txn)
            fc.status = FcStatus.BUSY
            fc.current = txn
            self._serve(fc, txn)

    def _serve(self, fc: FlashControllerState, txn: PageTxn) -> None:
        sim, cfg = self.sim, self.sim.cfg
        page = cfg.geometry.page_size
        down = self.route_down(fc.id, txn.chip)
        finish = lambda: self._complete(fc)  # noqa: E731
        if txn.op is FlashOp.READ:
            def respond() -> None:
                self.send(_Packet(txn, page, self.route_up(txn.chip, fc.id), finish))

            self.send(_Packet(txn, cfg.cmd_bytes, down, lambda: sim.flash_op(txn, respond)))
        elif txn.op is FlashOp.PROGRAM:
            self.send(_Packet(txn, cfg.cmd_bytes + page, down, lambda: sim.flash_op(txn, finish)))
        else:
            self.send(_Packet(txn, cfg.cmd_bytes, down, lambda: sim.flash_op(txn, finish)))

    def _complete(self, fc: FlashControllerState) -> None:
        txn = fc.current
        assert txn is not None
        fc.current = None
        fc.status = FcStatus.IDLE
        self.sim.finish(txn)
        self._dispatch()

    def send(self, pkt: _Packet) -> None:
        self.packets += 1
        pkt.queued_at = self.sim.now
        link = pkt.route[0]
        link.queue.append(pkt)
        self._try(link)

    def _try(self, link: _DLink) -> None:
        if link.busy or not link.queue:
            return
        pkt = link.queue[0]
        if not link.sink and link.occupied + pkt.size > link.capacity:
            return  # backpressure: downstream buffer full
        link.queue.popleft()
        sim, cfg = self.sim, self.sim.cfg
        ev = sim.events
        if sim.now > pkt.queued_at:
            sim.mark_conflict(pkt.txn)
        link.busy = True
        if not link.sink:
            link.occupied += pkt.size
        ser = -(-pkt.size // cfg.link_width) * cfg.link_lat
        sim.metrics.ledger.link_ns += ser + cfg.link_lat
        held, pkt.held = pkt.held, (None if link.sink else link)
        if held is not None:  # the tail leaves the previous buffer once serialized out
            ev.after(ser, EventKind.TRANSFER_COMPLETE, lambda: self._drain(held, pkt.size), pkt.txn)
        ev.after(ser, EventKind.TRANSFER_COMPLETE, lambda: self._free(link), pkt.txn)
        head = cfg.link_lat if self.cut_through else ser + cfg.link_lat
        ev.after(head, EventKind.TRANSFER_COMPLETE, lambda: self._head(pkt, ser), pkt.txn)

    def _head(self, pkt: _Packet, ser: int) -> None:
        """The packet head reached the far end of its current link."""
        pkt.hop += 1
        if pkt.hop == len(pkt.route):
            tail = ser if self.cut_through else 0
            if tail:
                self.sim.events.after(tail, EventKind.TRANSFER_COMPLETE, pkt.on_arrive, pkt.txn)
            else:
                pkt.on_arrive()
            return
        nxt = pkt.route[pkt.hop]
        pkt.queued_at = self.sim.now
        nxt.queue.append(pkt)
        self._try(nxt)

    def _free(self, link: _DLink) -> None:
        link.busy = False
        self._try(link)

    def _drain(self, link: _DLink, size: int) -> None:
        link.occupied -= size
        # the link feeding this buffer may have been waiting for room
        self._try(link)

    def extra(self) -> dict[str, float]:
        return {"packets": float(self.packets)}


def simulate(config: SimConfig, requests: Sequence[IoRequest]) -> tuple[RunReport, SsdSimulator]:
    """Run a fresh simulator over copies of ``requests``."""
    sim = SsdSimulator(config)
    fresh = [
        IoRequest(r.id, r.arrival_time, r.kind, r.logical_page_start, r.page_count, r.source_stream)
        for r in requests
    ]
    report = sim.run(fresh)
    return report, sim


def ideal_page_read_time(timing: FlashTimingConfig) -> int:
    return timing.cmd_transfer_time + timing.t_read + timing.page_transfer_time_bus


def venice_read_time(distance: int, hops: int, timing: FlashTimingConfig, hop_ns: int = DEFAULT_HOP_NS,
                     page_size: int = 4096, cmd_bytes: int = CMD_BYTES) -> int:
    """Closed form for one uncontended Venice read over a path of ``distance`` links."""
    return (2 * hops * hop_ns + compute_transfer_latency(distance, cmd_bytes)
            + timing.t_read + compute_transfer_latency(distance, page_size))


__all__ = [
    "IoRequest", "FlashControllerState", "FcStatus", "PageTxn", "SimConfig", "SsdSimulator",
    "InvariantViolation", "compute_transfer_latency", "requests_from_records",
    "select_flash_controller", "simulate",
]
