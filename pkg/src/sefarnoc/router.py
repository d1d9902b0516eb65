"""
Five-stage virtual-channel wormhole router.

Stages: buffer write + route computation (RC), VC allocation (VA), switch
allocation (SA), switch traversal (ST) and link traversal (LT). Instead of
shifting pipeline registers every flit carries the cycle it was written into
its current VC, and each stage checks that stamp:

    arrival a:  RC (head only)
    a + 1:      VA (head only)
    >= a + 2:   SA
    s + 1:      ST
    s + 2:      LT
    s + 3:      written into the next router (or ejected)

so an uncontended flit spends exactly five cycles per router.

Credits live on the downstream VC object (``VirtualChannel.credits`` is the
upstream's view) because with buffer shuffling two input ports may share a
buffer; a VC is reserved by one packet at a time so only one upstream ever
spends a given VC's credits.
"""

from __future__ import annotations

from collections import deque
from typing import TYPE_CHECKING, Deque, Dict, List, Optional, Sequence, Tuple

from .routing import RouteRequest
from .sefar import NUM_BUFFERS, SefarUnit, au_check, home_buffer
from .topology import DIRECTIONS, LinkStatusRegister, Port, format_code
from .trojan import TrojanInstance, dec, ht_mux

if TYPE_CHECKING:  # pragma: no cover
    from .network import Network


class FlowControlError(AssertionError):
    pass


class Packet:
    __slots__ = ("id", "src", "dst", "length", "inject_cycle", "eject_cycle",
                 "dropped", "hops", "misroutes_left", "measured", "ejected_flits",
                 "dropped_flits", "done_cycle")

    def __init__(self, id: int, src: int, dst: int, length: int, inject_cycle: int,
                 misroutes_left: int = 8, measured: bool = True):
        if length < 1:
            raise ValueError("packet length must be >= 1")
        self.id = id
        self.src = src
        self.dst = dst
        self.length = length
        self.inject_cycle = inject_cycle
        self.eject_cycle: Optional[int] = None
        self.dropped = False
        self.hops: List[Tuple[int, Port, int, Port]] = []
        self.misroutes_left = misroutes_left
        self.measured = measured
        self.ejected_flits = 0
        self.dropped_flits = 0
        self.done_cycle: Optional[int] = None

    @property
    def latency(self) -> Optional[int]:
        if self.eject_cycle is None:
            return None
        return self.eject_cycle - self.inject_cycle

    def __repr__(self):
        state = ("dropped" if self.dropped else
                 f"ejected@{self.eject_cycle}" if self.eject_cycle is not None else "in-flight")
        return f"Packet({self.id}: {self.src}->{self.dst}, len={self.length}, {state})"


class Flit:
    __slots__ = ("packet", "seq", "is_head", "is_tail", "arrival")

    def __init__(self, packet: Packet, seq: int):
        self.packet = packet
        self.seq = seq
        self.is_head = seq == 0
        self.is_tail = seq == packet.length - 1
        self.arrival = 0

    @property
    def kind(self) -> str:
        if self.is_head and self.is_tail:
            return "HeadTail"
        return "Head" if self.is_head else "Tail" if self.is_tail else "Body"

    def __repr__(self):
        return f"Flit({self.packet.id}.{self.seq} {self.kind})"


# energy/activity counter slots in Network.counters
BUF_WRITE, ROUTE, XBAR, LINK, EJECT = range(5)

# VC states
IDLE, ROUTED, ACTIVE, BLOCKED = range(4)


class VirtualChannel:
    __slots__ = ("router", "buffer", "index", "depth", "fifo", "credits", "inflight",
                 "owner", "in_port", "next_seq", "state", "out_port", "out_vc",
                 "route_cycle", "va_cycle", "drop", "migrate_to")

    def __init__(self, router: "Router", buffer: int, index: int, depth: int):
        self.router = router
        self.buffer = buffer
        self.index = index
        self.depth = depth
        self.fifo: Deque[Flit] = deque()
        self.credits = depth
        self.inflight = 0
        self.owner: Optional[Packet] = None
        self.in_port: Optional[Port] = None
        self.next_seq = 0
        self.reset_route()
        self.migrate_to: Optional[VirtualChannel] = None

    def reset_route(self):
        self.state = IDLE
        self.out_port: Optional[Port] = None
        self.out_vc: Optional[VirtualChannel] = None
        self.route_cycle = -1
        self.va_cycle = -1
        self.drop = False

    @property
    def is_free(self) -> bool:
        return self.owner is None

    def write(self, flit: Flit, cycle: int):
        """Buffer write of a flit that was granted toward this VC."""
        if flit.packet is not self.owner:
            raise FlowControlError(
                f"{flit} written into VC {self.router.node}/{self.buffer}.{self.index} "
                f"reserved by {self.owner}")
        if flit.seq != self.next_seq:
            raise FlowControlError(f"{flit} out of order, expected seq {self.next_seq}")
        if len(self.fifo) >= self.depth:
            raise FlowControlError(f"VC overflow at router {self.router.node} buffer {self.buffer}")
        self.next_seq += 1
        flit.arrival = cycle
        self.fifo.append(flit)

    def __repr__(self):
        return (f"VC(r{self.router.node} IB{self.buffer}.{self.index} occ={len(self.fifo)} "
                f"cr={self.credits} owner={self.owner and self.owner.id})")


class InputUnit:
    """One input buffer (IB1..IB5) with its VCs and its routing unit's input arbiter."""

    __slots__ = ("buffer", "vcs", "arbiter")

    def __init__(self, router: "Router", buffer: int, num_vcs: int, depth: int):
        self.buffer = buffer
        self.vcs = [VirtualChannel(router, buffer, i, depth) for i in range(num_vcs)]
        self.arbiter = RoundRobinArbiter(num_vcs)


class RoundRobinArbiter:
    """Grants the first requester at or after the pointer, then moves the pointer past it."""

    __slots__ = ("n", "pointer")

    def __init__(self, n: int):
        self.n = n
        self.pointer = 0

    def grant(self, requests) -> Optional[int]:
        best = None
        best_key = self.n
        p = self.pointer
        n = self.n
        for r in requests:
            k = (r - p) % n
            if k < best_key:
                best, best_key = r, k
        if best is not None:
            self.pointer = (best + 1) % n
        return best


def vc_allocate(downstream: Sequence[VirtualChannel]) -> Optional[VirtualChannel]:
    """Lowest-index free downstream VC, or None to stall."""
    for vc in downstream:
        if vc.owner is None:
            return vc
    return None


def switch_allocate(requests: Dict[Tuple[int, int], int],
                    input_arbiters: Dict[int, RoundRobinArbiter],
                    output_arbiters: Dict[int, RoundRobinArbiter]) -> List[Tuple[int, int, int]]:
    """
    Separable input-first allocation.

    ``requests`` maps (input, vc) to the requested output. Each input first
    picks one of its VCs round-robin, then each output picks one input
    round-robin. Returns (input, vc, output) grants; the input arbiters
    advance only for inputs that won their output.
    """
    by_input: Dict[int, List[int]] = {}
    for (i, v) in sorted(requests):
        by_input.setdefault(i, []).append(v)
    chosen: Dict[int, int] = {}
    for i, vcs in by_input.items():
        arb = input_arbiters[i]
        saved = arb.pointer
        chosen[i] = arb.grant(vcs)
        arb.pointer = saved
    by_output: Dict[int, List[int]] = {}
    for i, v in chosen.items():
        by_output.setdefault(requests[(i, v)], []).append(i)
    grants = []
    for o in sorted(by_output):
        i = output_arbiters[o].grant(by_output[o])
        v = chosen[i]
        input_arbiters[i].grant([v])
        grants.append((i, v, o))
    return grants


class Router:
    def __init__(self, net: "Network", node: int, num_vcs: int, depth: int):
        self.net = net
        self.node = node
        self.units: List[Optional[InputUnit]] = [None] + [
            InputUnit(self, b, num_vcs, depth) for b in range(1, NUM_BUFFERS + 1)]
        self.out_arbiters = [RoundRobinArbiter(NUM_BUFFERS + 1) for _ in range(5)]
        self.neighbors: List[Optional["Router"]] = [None] * 5
        self.trojans: List[Optional[TrojanInstance]] = [None] * (NUM_BUFFERS + 1)
        self.sefar: Optional[SefarUnit] = None
        self.occupancy = 0
        self.va_offset = 0

    def buffer_for(self, port: Port) -> int:
        if self.sefar is None:
            return home_buffer(port)
        return self.sefar.buffer_for(port)

    def lsr(self, cycle: int) -> LinkStatusRegister:
        return LinkStatusRegister(self.net.topology, self.node, cycle)

    def downstream_credits(self) -> List[int]:
        credits = [0] * 5
        for p in DIRECTIONS:
            nb = self.neighbors[p]
            if nb is not None:
                unit = nb.units[nb.buffer_for(p.opposite)]
                credits[p] = sum(vc.credits for vc in unit.vcs if vc.owner is None)
        return credits

    # -- RC ---------------------------------------------------------------

    def _route(self, vc: VirtualChannel, flit: Flit, t: int):
        net = self.net
        pkt = flit.packet
        lsr = self.lsr(t)
        in_port = vc.in_port
        decision = net.routing(RouteRequest(self.node, pkt.dst, in_port, lsr,
                                            self.downstream_credits(), pkt.misroutes_left))
        net.counters[ROUTE] += 1
        if decision.stalled:
            net.stalls += 1
            return
        code = ru_code = decision.code
        trojan = self.trojans[vc.buffer]
        own = None
        if trojan is not None:
            own = lsr.own
            if any(own):
                code = ht_mux(code, dec(trojan.en(t), *own))
        if self.sefar is not None and code != 0:
            if own is None:
                own = lsr.own
            if au_check(own, code):
                vc.state = BLOCKED
                net.blocked_heads += 1
                if self.sefar.raise_flag(vc.buffer):
                    net.log(t, "au_flag", pkt.id, self.node,
                            f"buffer={vc.buffer} code={format_code(code)}")
                    net.flagged_routers.add(self)
                return
        out = Port(code)
        if code == ru_code and not decision.minimal:
            pkt.misroutes_left -= 1
        if code == ru_code and out != Port.LOCAL:
            topo = net.topology
            nxt = topo.neighbor(self.node, out)
            before = topo.distance(self.node, pkt.dst) + 2 * (pkt.misroutes_left + (not decision.minimal))
            after = topo.distance(nxt, pkt.dst) + 2 * pkt.misroutes_left
            if after >= before:
                raise AssertionError(f"routing potential did not decrease for {pkt}")
        vc.out_port = out
        vc.state = ROUTED
        vc.route_cycle = t

    # -- VA ---------------------------------------------------------------

    def _allocate_vc(self, vc: VirtualChannel, t: int) -> bool:
        out = vc.out_port
        pkt = vc.fifo[0].packet
        if out != Port.LOCAL and not self.net.topology.is_faulty(self.node, out, t):
            nb = self.neighbors[out]
            q = out.opposite
            ovc = vc_allocate(nb.units[nb.buffer_for(q)].vcs)
            if ovc is None:
                return False
            ovc.owner = pkt
            ovc.in_port = q
            ovc.next_seq = 0
            vc.out_vc = ovc
        elif out != Port.LOCAL:
            vc.drop = True
        vc.state = ACTIVE
        vc.va_cycle = t
        # the hop is committed once the head leaves route computation for good
        pkt.hops.append((self.node, vc.in_port, vc.buffer, out))
        if self.net.events is not None:
            self.net.log(t, "hop", pkt.id, self.node,
                         f"in={vc.in_port.letter} buf={vc.buffer} out={out.letter}")
        return True

    # -- buffer-shuffler migration out of a quarantined buffer -------------

    def _migrate(self, unit: InputUnit, t: int):
        net = self.net
        for vc in unit.vcs:
            if not vc.fifo:
                continue
            flit = vc.fifo[0]
            tvc = vc.migrate_to
            if tvc is None:
                tb = self.sefar.buffer_for(vc.in_port)
                if tb == unit.buffer or self.sefar.quarantined(tb):
                    continue
                tvc = vc_allocate(self.units[tb].vcs)
                if tvc is None:
                    continue
                tvc.owner = flit.packet
                tvc.in_port = vc.in_port
                tvc.next_seq = flit.seq
                if flit.is_head and vc.state != ACTIVE:
                    # routed (or blocked) by the infected unit: route again
                    tvc.reset_route()
                else:
                    tvc.state = vc.state
                    tvc.out_port = vc.out_port
                    tvc.out_vc = vc.out_vc
                    tvc.drop = vc.drop
                    tvc.va_cycle = vc.va_cycle
                    tvc.route_cycle = vc.route_cycle
                vc.reset_route()
                vc.migrate_to = tvc
                net.log(t, "migrate", flit.packet.id, self.node,
                        f"from={unit.buffer} to={tb}")
            if tvc.credits <= 0 or flit.arrival >= t:
                continue
            vc.fifo.popleft()
            self.occupancy -= 1
            tvc.credits -= 1
            tvc.inflight += 1
            net.schedule_arrival(t + 1, tvc, flit)
            net.returns.append(vc)
            net.moved = True
            if flit.is_tail:
                vc.migrate_to = None
                net.releases.append(vc)

    # -- one cycle ----------------------------------------------------------

    def step(self, t: int):
        net = self.net
        sefar = self.sefar
        requests: List[Tuple[int, VirtualChannel]] = []
        nunits = NUM_BUFFERS
        off = self.va_offset = (self.va_offset + 1) % nunits
        for k in range(nunits):
            b = (off + k) % nunits + 1
            unit = self.units[b]
            if sefar is not None and sefar.quarantined(b):
                self._migrate(unit, t)
                continue
            cand = None
            for vc in unit.vcs:
                fifo = vc.fifo
                if not fifo:
                    continue
                st = vc.state
                if st == IDLE:
                    flit = fifo[0]
                    if not flit.is_head:
                        raise FlowControlError(f"{flit} at VC front without a route")
                    self._route(vc, flit, t)
                    continue
                if st == ROUTED:
                    if vc.route_cycle < t:
                        self._allocate_vc(vc, t)
                    continue
                if st == ACTIVE and vc.va_cycle < t and fifo[0].arrival <= t - 2:
                    ovc = vc.out_vc
                    if ovc is None or ovc.credits > 0:
                        if cand is None:
                            cand = [vc.index]
                        else:
                            cand.append(vc.index)
            if cand is not None:
                arb = unit.arbiter
                if len(cand) == 1:
                    v = cand[0]
                else:
                    saved = arb.pointer
                    v = arb.grant(cand)
                    arb.pointer = saved
                requests.append((b, unit.vcs[v]))
        if not requests:
            return
        # output-side arbitration
        if len(requests) == 1:
            b, vc = requests[0]
            self._grant(b, vc, t)
            return
        by_out: Dict[Port, List[Tuple[int, VirtualChannel]]] = {}
        for b, vc in requests:
            by_out.setdefault(vc.out_port, []).append((b, vc))
        for out, reqs in by_out.items():
            if len(reqs) == 1:
                b, vc = reqs[0]
            else:
                win = self.out_arbiters[out].grant([r[0] for r in reqs])
                b, vc = next(r for r in reqs if r[0] == win)
            self._grant(b, vc, t)

    def _grant(self, b: int, vc: VirtualChannel, t: int):
        net = self.net
        unit = self.units[b]
        unit.arbiter.pointer = (vc.index + 1) % unit.arbiter.n
        self.out_arbiters[vc.out_port].pointer = (b + 1) % self.out_arbiters[vc.out_port].n
        flit = vc.fifo.popleft()
        self.occupancy -= 1
        net.returns.append(vc)
        net.moved = True
        net.counters[XBAR] += 1
        out = vc.out_port
        if out == Port.LOCAL:
            net.schedule_eject(t + 3, flit)
        else:
            if flit.is_head and not vc.drop and net.topology.is_faulty(self.node, out, t + 2):
                # link died after VC allocation
                if vc.out_vc is not None:
                    vc.out_vc.owner = None
                    vc.out_vc = None
                vc.drop = True
            if vc.drop:
                net.schedule_drop(t + 2, flit, self.node, out)
            else:
                ovc = vc.out_vc
                ovc.credits -= 1
                ovc.inflight += 1
                net.schedule_arrival(t + 3, ovc, flit)
                net.link_flits[self.node][out] += 1
                net.counters[LINK] += 1
        if flit.is_tail:
            vc.reset_route()
            net.releases.append(vc)
