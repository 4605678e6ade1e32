from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from venice.interconnect import Port, build_mesh
from venice.kernel import Lfsr2
from venice.routing import (
    FlitKind,
    ReservationFailed,
    RoutingQuery,
    Scout,
    ScoutMode,
    ScoutState,
    check_mesh_invariants,
    decode_flit,
    dor_route,
    encode_flit,
    find_output_port,
    release_circuit,
    reserve_path,
    scout_hop_delay,
)

from helpers import FOREIGN, block_random, brute_force_feasible, worked_example_mesh, hold_circuit, residue

ALL = (Port.UP, Port.DOWN, Port.LEFT, Port.RIGHT, Port.EJECTION)


def _query(cur, dest, free=ALL, input_port=Port.INJECTION, rows=8, cols=8):
    return RoutingQuery(0, cur, dest, input_port, {p: p in free for p in ALL}, rows, cols)


# flits ------------------------------------------------------------------------


def test_header_reserve_flit():
    assert encode_flit(FlitKind.HEADER, ScoutMode.RESERVE, 42) == 0b11_101010


def test_tail_reserve_flit():
    assert encode_flit(FlitKind.TAIL, ScoutMode.RESERVE, 5) == 0b01_101_000


def test_header_cancel_flit():
    assert encode_flit(FlitKind.HEADER, ScoutMode.CANCEL, 42) == 0b10_101010


@pytest.mark.parametrize("kind, value", [(FlitKind.HEADER, 64), (FlitKind.TAIL, 8), (FlitKind.HEADER, -1)])
def test_flit_payload_range(kind, value):
    with pytest.raises(ValueError):
        encode_flit(kind, ScoutMode.RESERVE, value)


@given(st.sampled_from(list(ScoutMode)), st.integers(0, 63), st.integers(0, 7))
def test_flit_round_trip(mode, dest, fc):
    for kind, v in ((FlitKind.HEADER, dest), (FlitKind.TAIL, fc)):
        flit = encode_flit(kind, mode, v)
        assert 0 <= flit < 256
        assert decode_flit(flit) == (kind, mode, v)


# output-port selection ------------------------------------------------------------


def test_case_one_picks_a_minimal_port():
    picks = {find_output_port(_query(0, 9), Lfsr2(s)) for s in (1, 2, 3)}
    assert picks == {Port.RIGHT, Port.UP}


def test_single_free_minimal_port_is_taken():
    assert find_output_port(_query(0, 9, free=(Port.UP, Port.LEFT, Port.DOWN)), Lfsr2(1)) is Port.UP


def test_corner_with_no_options_backtracks():
    # router 0: Down and Left do not exist, Right and Up are busy
    q = _query(0, 9, free=(Port.EJECTION,), input_port=Port.LEFT)
    assert find_output_port(q, Lfsr2(1)) is None


def test_misroute_excludes_input_port():
    # at router 9 heading for 11: Right busy, so detour through Up or Down but never back Left
    q = _query(9, 11, free=(Port.UP, Port.DOWN, Port.LEFT), input_port=Port.LEFT)
    for s in (1, 2, 3):
        assert find_output_port(q, Lfsr2(s)) in (Port.UP, Port.DOWN)


def test_minimal_only_does_not_misroute():
    q = _query(9, 11, free=(Port.UP, Port.DOWN), input_port=Port.LEFT)
    assert find_output_port(q, Lfsr2(1), minimal_only=True) is None


def test_at_destination_only_ejection():
    assert find_output_port(_query(9, 9), Lfsr2(1)) is Port.EJECTION


@pytest.mark.parametrize("cur", range(64))
def test_empty_mesh_choice_reduces_distance(cur):
    mesh = build_mesh(8, 8)
    for dest in range(64):
        if dest == cur:
            continue
        port = find_output_port(_query(cur, dest), Lfsr2(1 + (cur + dest) % 3))
        nxt = mesh.neighbor(cur, port)
        assert nxt is not None
        assert mesh.hop_distance(nxt, dest) == mesh.hop_distance(cur, dest) - 1


# reserve_path ------------------------------------------------------------------


def test_empty_mesh_straight_east():
    mesh = build_mesh(8, 8)
    c = reserve_path(mesh, 0, 7)
    assert c.mesh_hops == 7 and c.distance == 8
    assert c.routers() == list(range(8))
    assert c.links[0] is mesh.injection[0] and c.links[-1] is mesh.ejection[7]


def test_chip_on_injection_router():
    mesh = build_mesh(8, 8)
    c = reserve_path(mesh, 3, 24)
    assert c.routers() == [24] and c.distance == 1


def test_worked_example_nonminimal_succeeds():
    mesh = worked_example_mesh()
    c = reserve_path(mesh, 3, 2)
    assert c.routers()[0] == 15 and c.routers()[-1] == 2
    assert check_mesh_invariants(mesh, [c]).ok
    assert all(link.holder == 3 for link in c.links)


def test_worked_example_minimal_only_fails_cleanly():
    mesh = worked_example_mesh()
    with pytest.raises(ReservationFailed):
        reserve_path(mesh, 3, 2, minimal_only=True)
    assert residue(mesh, 3) == []


def test_worked_example_reference_path_is_disjoint():
    # the path drawn in the worked example can be reserved alongside the three circuits
    mesh = worked_example_mesh()
    hold_circuit(mesh, 3, [15, 16, 17, 18, 13, 8, 3, 2])


def test_saturated_injection_neighbourhood_fails_cleanly():
    mesh = build_mesh(8, 8)
    src = mesh.router_of_fc(4)
    for p in (Port.UP, Port.DOWN, Port.RIGHT):
        src.ports[p].holder = FOREIGN
    with pytest.raises(ReservationFailed):
        reserve_path(mesh, 4, 63)
    assert residue(mesh, 4) == []
    assert mesh.injection[4].free


def test_release_circuit_restores_mesh():
    mesh = build_mesh(8, 8)
    c = reserve_path(mesh, 2, 45)
    release_circuit(mesh, c)
    assert all(link.free for link in mesh.all_links())
    assert all(not r.valid_entries() for r in mesh.routers)


def test_backtrack_releases_last_hop():
    # 1 x 3 mesh, blocked chip at the end: scout walks east, dead-ends, unwinds
    mesh = build_mesh(1, 3)
    mesh.ejection[2].holder = FOREIGN
    s = Scout(mesh, 0, 2)
    s.step()
    s.step()
    assert [h.router for h in s.stack] == [0, 1] and s.current == 2
    s.step()  # no way forward at router 2
    assert s.mode is ScoutMode.CANCEL
    assert [h.router for h in s.stack] == [0] and s.current == 1
    assert mesh.routers[1].ports[Port.RIGHT].free
    assert not mesh.routers[1].valid_entries()
    while not s.done:
        s.step()
    assert s.state is ScoutState.FAILED
    assert residue(mesh, 0) == []


def test_busy_injection_cannot_launch():
    mesh = build_mesh(2, 2)
    mesh.injection[0].holder = FOREIGN
    with pytest.raises(RuntimeError):
        Scout(mesh, 0, 3)


def test_detour_circuit_is_well_formed():
    mesh = build_mesh(3, 3)
    mesh.routers[0].ports[Port.RIGHT].holder = FOREIGN
    c = reserve_path(mesh, 0, 2)
    links = c.links
    assert links[0] is mesh.injection[0] and links[-1] is mesh.ejection[2]
    for a, b in zip(c.path, c.path[1:]):
        assert mesh.neighbor(a.router, a.exit_port) == b.router
    assert c.mesh_hops > mesh.hop_distance(0, 2)


# dimension-order routing ---------------------------------------------------------


def test_dor_x_first():
    assert dor_route(2 * 8 + 1, 0 * 8 + 3, 8) is Port.RIGHT


def test_dor_then_y():
    # rows grow in the UP direction here, so moving from row 2 to row 0 is DOWN
    assert dor_route(2 * 8 + 3, 0 * 8 + 3, 8) is Port.DOWN
    assert dor_route(0 * 8 + 3, 2 * 8 + 3, 8) is Port.UP


def test_dor_arrived():
    assert dor_route(17, 17, 8) is Port.EJECTION


@given(st.integers(0, 63), st.integers(0, 63))
def test_dor_walk_is_minimal(src, dst):
    mesh = build_mesh(8, 8)
    cur, steps, turned = src, 0, False
    while (p := dor_route(cur, dst, 8)) is not Port.EJECTION:
        if p in (Port.UP, Port.DOWN):
            turned = True
        else:
            assert not turned  # never back to X after Y
        cur = mesh.neighbor(cur, p)
        steps += 1
    assert cur == dst and steps == mesh.hop_distance(src, dst)


# scout timing -----------------------------------------------------------------------


def test_hop_delay_round_trips():
    assert scout_hop_delay(7 + 7) == 42
    assert scout_hop_delay(1 + 1) == 6


@given(st.integers(0, 1000), st.integers(1, 10))
def test_hop_delay_linear(h, ns):
    assert scout_hop_delay(2 * h, ns) == 2 * scout_hop_delay(h, ns)


# properties ---------------------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 0.8), st.integers(2, 6), st.integers(2, 6))
def test_scout_terminates_bounded_and_agrees_with_oracle(seed, density, rows, cols):
    rng = random.Random(seed)
    mesh = build_mesh(rows, cols, seed)
    block_random(mesh, density, rng)
    fc = rng.randrange(rows)
    dest = rng.randrange(rows * cols)
    feasible = brute_force_feasible(mesh, fc, dest)
    s = Scout(mesh, fc, dest)
    while not s.done:
        s.step()
        assert s.hops <= 8 * rows * cols
    assert s.max_visits <= 4
    assert (s.state is ScoutState.SUCCESS) == feasible
    if s.state is ScoutState.SUCCESS:
        c = s.circuit()
        assert check_mesh_invariants(mesh, [c]).ok
        release_circuit(mesh, c)
    assert residue(mesh, fc) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_concurrent_circuits_stay_disjoint(seed):
    rng = random.Random(seed)
    mesh = build_mesh(8, 8, seed)
    live = {}
    for _ in range(40):
        fc = rng.randrange(8)
        if fc in live:
            release_circuit(mesh, live.pop(fc))
            continue
        try:
            live[fc] = reserve_path(mesh, fc, rng.randrange(64))
        except ReservationFailed:
            assert residue(mesh, fc) == []
        rep = check_mesh_invariants(mesh, live.values())
        assert rep.ok, rep.violations
        held = {link.id for link in mesh.all_links() if link.holder is not None}
        assert held == {link.id for c in live.values() for link in c.links}


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_reserve_once_per_attempt(seed):
    rng = random.Random(seed)
    mesh = build_mesh(6, 6, seed)
    block_random(mesh, 0.45, rng)
    s = Scout(mesh, rng.randrange(6), rng.randrange(36))
    taken = []
    while not s.done:
        before = len(s.stack)
        s.step()
        if len(s.stack) > before:
            h = s.stack[-1]
            taken.append((h.router, h.exit_port))
    assert len(taken) == len(set(taken))
