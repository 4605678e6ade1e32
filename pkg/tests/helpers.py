"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import random
from typing import Iterable, Sequence

from venice.interconnect import OPPOSITE, Mesh, Port, ReservationEntry, build_mesh, reserve, table_insert
from venice.routing import Circuit, PathHop
from venice.ssd import IoRequest

FOREIGN = 99  # holder id for links blocked by "someone else" (no table entries)


def port_between(mesh: Mesh, a: int, b: int) -> Port:
    for p in (Port.UP, Port.DOWN, Port.LEFT, Port.RIGHT):
        if mesh.neighbor(a, p) == b:
            return p
    raise ValueError(f"routers {a} and {b} are not adjacent")


def hold_circuit(mesh: Mesh, fc: int, routers: Sequence[int]) -> Circuit:
    """Reserve a circuit along ``routers`` by hand, with table entries, as a scout would."""
    assert routers[0] == mesh.router_of_fc(fc).id
    inj = mesh.injection[fc]
    assert reserve(inj, fc)
    path = []
    entry = Port.INJECTION
    for i, r in enumerate(routers):
        out = Port.EJECTION if i == len(routers) - 1 else port_between(mesh, r, routers[i + 1])
        link = mesh.routers[r].ports[out]
        table_insert(mesh.routers[r], ReservationEntry(fc, entry, out))
        assert reserve(link, fc), f"link {link} already held"
        path.append(PathHop(r, entry, out, link))
        entry = OPPOSITE.get(out, out)
    return Circuit(fc, fc, routers[-1], inj, path)


def worked_example_mesh(seed: int = 0) -> Mesh:
    """4 rows x 5 columns with the three circuits of the worked example reserved."""
    mesh = build_mesh(4, 5, seed)
    hold_circuit(mesh, 0, [0, 1, 6])
    hold_circuit(mesh, 1, [5, 6, 7, 8])
    hold_circuit(mesh, 2, [10, 11, 12, 7])
    return mesh


def simple_paths(mesh: Mesh, src: int, dst: int) -> Iterable[list[int]]:
    """Every simple router path from src to dst over currently free mesh links."""
    stack = [(src, [src])]
    while stack:
        cur, path = stack.pop()
        if cur == dst:
            yield path
            continue
        for p in (Port.UP, Port.DOWN, Port.LEFT, Port.RIGHT):
            link = mesh.routers[cur].ports.get(p)
            nxt = mesh.neighbor(cur, p)
            if link is None or nxt is None or not link.free or nxt in path:
                continue
            stack.append((nxt, path + [nxt]))


def brute_force_feasible(mesh: Mesh, fc: int, dest_chip: int) -> bool:
    """Exhaustive oracle: is there any free controller-to-chip path at all?"""
    if not mesh.injection[fc].free or not mesh.ejection[dest_chip].free:
        return False
    src = mesh.router_of_fc(fc).id
    return any(True for _ in simple_paths(mesh, src, mesh.router_of_chip(dest_chip).id))


def residue(mesh: Mesh, pid: int) -> list[str]:
    """Anything in the mesh still referring to ``pid``."""
    out = [f"link {link.id}" for link in mesh.all_links() if link.holder == pid]
    for r in mesh.routers:
        out += [f"router {r.id} entry" for e in r.table if e.valid and e.packet_id == pid]
    return out


def block_random(mesh: Mesh, p: float, rng: random.Random, include_ejection: bool = True) -> int:
    links = list(mesh.mesh_links) + (list(mesh.ejection) if include_ejection else [])
    n = 0
    for link in links:
        if link.free and rng.random() < p:
            link.holder = FOREIGN
            n += 1
    return n


def lpn_for_chip(chip: int, rows: int = 8, cols: int = 8, nth: int = 0) -> int:
    """A logical page that the channel-first striping places on ``chip``."""
    channel, way = divmod(chip, cols)
    return nth * rows * cols + way * rows + channel


def read(req_id: int, t: int, lpn: int, pages: int = 1) -> IoRequest:
    return IoRequest(req_id, t, "read", lpn, pages)


def write(req_id: int, t: int, lpn: int, pages: int = 1) -> IoRequest:
    return IoRequest(req_id, t, "write", lpn, pages)



# one "criterion N: PASS|FAIL ..." line per acceptance check, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []
