import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sefarnoc.network import Network, WatchdogAbort
from sefarnoc.router import (Flit, FlowControlError, Packet, RoundRobinArbiter, VirtualChannel,
                             switch_allocate, vc_allocate)
from sefarnoc.routing import route_walk
from sefarnoc.topology import MeshTopology, Port
from sefarnoc.trojan import TrojanInstance


def send(net, src, dst, length=4, cycle=None):
    p = net.new_packet(src, dst, length, cycle)
    return p


def test_vc_allocate_lowest_free():
    net = Network(MeshTopology(2, 2))
    vcs = net.routers[0].units[1].vcs
    assert vc_allocate(vcs) is vcs[0]
    vcs[0].owner = object()
    assert vc_allocate(vcs) is vcs[1]
    vcs[1].owner = object()
    assert vc_allocate(vcs) is None


def test_round_robin_arbiter():
    arb = RoundRobinArbiter(5)
    assert arb.grant([1, 2]) == 1 and arb.pointer == 2
    assert arb.grant([1, 2]) == 2
    assert arb.grant([1, 2]) == 1
    assert arb.grant([]) is None


def test_switch_allocate_examples():
    ins = {i: RoundRobinArbiter(2) for i in range(1, 6)}
    outs = {o: RoundRobinArbiter(6) for o in range(5)}
    outs[3].pointer = 1
    g = switch_allocate({(1, 0): 3, (2, 0): 3}, ins, outs)
    assert g == [(1, 0, 3)] and outs[3].pointer == 2
    g = switch_allocate({(1, 0): 3, (2, 0): 3}, ins, outs)
    assert g == [(2, 0, 3)]
    g = switch_allocate({(1, 0): 2, (2, 0): 3}, ins, outs)
    assert sorted(g) == [(1, 0, 2), (2, 0, 3)]
    # one grant per input: two VCs of input 1 want different outputs
    g = switch_allocate({(1, 0): 2, (1, 1): 3}, ins, outs)
    assert len(g) == 1


def test_vc_overflow_and_ownership_are_caught():
    net = Network(MeshTopology(2, 2), depth=2)
    vc = net.routers[0].units[1].vcs[0]
    p = Packet(0, 1, 0, 4, 0)
    vc.owner = p
    vc.write(Flit(p, 0), 0)
    with pytest.raises(FlowControlError):
        vc.write(Flit(p, 2), 1)  # out of order
    vc.write(Flit(p, 1), 1)
    with pytest.raises(FlowControlError):
        vc.write(Flit(p, 2), 2)  # full
    other = Packet(1, 1, 0, 4, 0)
    vc2 = net.routers[0].units[1].vcs[1]
    vc2.owner = p
    with pytest.raises(FlowControlError):
        vc2.write(Flit(other, 0), 0)


def test_packet_validation():
    with pytest.raises(ValueError):
        Packet(0, 0, 1, 0, 0)
    net = Network(MeshTopology(2, 2))
    with pytest.raises(ValueError):
        net.new_packet(1, 1, 4)
    with pytest.raises(ValueError):
        net.new_packet(0, 9, 4)


def test_flit_kinds():
    p = Packet(0, 0, 1, 3, 0)
    assert [Flit(p, i).kind for i in range(3)] == ["Head", "Body", "Tail"]
    assert Flit(Packet(1, 0, 1, 1, 0), 0).kind == "HeadTail"


@pytest.mark.parametrize("length", [1, 2, 4])
def test_zero_load_latency(length):
    rng = random.Random(length)
    topo = MeshTopology(8, 8)
    for _ in range(40):
        s, d = rng.sample(range(64), 2)
        net = Network(topo, check_interval=1)
        p = send(net, s, d, length, 0)
        net.run_until_idle()
        routers = topo.distance(s, d) + 1
        assert p.latency == 5 * routers + length - 1
        assert len(p.hops) == routers


def test_packets_longer_than_buffer_wait_for_credits():
    topo = MeshTopology(8, 8)
    net = Network(topo, check_interval=1)
    p = send(net, 0, 63, 7, 0)
    net.run_until_idle()
    assert p.latency >= 5 * 15 + 7 - 1


def test_intermediate_router_adds_five_cycles():
    topo = MeshTopology(4, 2)
    lat = []
    for dst in (1, 2):
        net = Network(topo)
        p = send(net, 0, dst, 1, 0)
        net.run_until_idle()
        lat.append(p.latency)
    assert lat[1] - lat[0] == 5


def test_credit_exhaustion_stalls_upstream():
    # a 1-VC, depth-1 line loaded by two long packets to the same sink
    topo = MeshTopology(3, 2)
    net = Network(topo, num_vcs=1, depth=1, check_interval=1)
    a = send(net, 0, 2, 6, 0)
    b = send(net, 1, 2, 6, 0)
    net.run_until_idle()
    net.check_conservation()
    assert a.latency > 5 * 3 + 5 and b.latency is not None


def test_drop_on_faulty_link_takes_whole_packet():
    topo = MeshTopology(4, 4)
    topo.inject_fault(9, Port.EAST)
    topo.inject_fault(6, Port.EAST)
    net = Network(topo, trojans=[TrojanInstance(9, 4, [(0, None)])], record_events=True)
    p = send(net, 8, 5, 4, 0)
    q = send(net, 8, 11, 4, 0)
    net.run_until_idle()
    net.check_conservation()
    assert p.dropped and p.dropped_flits == 4 and p.eject_cycle is None
    assert q.eject_cycle is not None
    assert [(d.packet_id, d.router, d.out_port) for d in net.drops] == [(p.id, 9, Port.EAST)]
    assert sum(1 for e in net.events if e[1] == "drop") == 1


def test_link_dies_mid_run():
    topo = MeshTopology(4, 2)
    topo.inject_fault(1, Port.EAST, 30)
    topo.inject_fault(1, Port.SOUTH, 30)
    topo.inject_fault(0, Port.SOUTH, 30)
    net = Network(topo)
    early = send(net, 0, 3, 4, 0)
    net.run_until_idle()
    late = send(net, 0, 3, 4, net.cycle)
    net.run_until_idle()
    net.check_conservation()
    assert early.eject_cycle is not None
    # with the only path gone the late packet has nowhere to go: it stalls at
    # router 1, and only a fallback onto the dead link can remove it
    assert late.dropped or late.eject_cycle is None


def test_watchdog_fires_on_stall():
    topo = MeshTopology(3, 2)
    for port in (Port.EAST, Port.WEST, Port.SOUTH):
        topo.inject_fault(1, port)
    net = Network(topo, watchdog=50)
    send(net, 1, 2, 4, 0)
    with pytest.raises(WatchdogAbort) as exc:
        net.run_until_idle()
    assert len(exc.value.stuck) == 1


def _wormhole_check(net):
    """Flits of a packet reach their destination in order and never interleave within a VC."""
    # VirtualChannel.write enforces owner and sequence per VC; the drain check
    # covers conservation. Here we replay the per-packet hop lists.
    for p in net.packets:
        assert p.ejected_flits + p.dropped_flits == p.length
        if p.eject_cycle is not None:
            assert p.hops[-1][3] is Port.LOCAL and p.hops[-1][0] == p.dst
            assert p.eject_cycle > p.inject_cycle


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6), st.integers(0, 4), st.sampled_from([1, 2, 4]),
       st.sampled_from([1, 2, 3]))
def test_random_loaded_runs_keep_flow_control_invariants(seed, nfaults, length, vcs):
    rng = random.Random(seed)
    topo = MeshTopology(4, 4)
    for node, port in rng.sample(sorted(topo.links), nfaults):
        topo.inject_fault(node, port)
    pairs = [(s, d) for s in range(16) for d in range(16)
             if s != d and route_walk(topo, s, d) is not None]
    net = Network(topo, num_vcs=vcs, depth=4, check_interval=1, watchdog=3000)
    recs = sorted((rng.randrange(200), *rng.choice(pairs), length) for _ in range(60))
    try:
        net.run(recs)
    except WatchdogAbort:
        return  # deadlock is reported, never silent
    net.check_conservation()
    net.check_credit_soundness()
    _wormhole_check(net)
    assert not net.drops
