"""
Whole-network simulation: routers, network interfaces and the cycle loop.

Each cycle runs in a fixed order:

1. flits scheduled for this cycle are written into their VCs, ejected or
   dropped;
2. network interfaces inject at most one flit each into the Local input;
3. routers are stepped in index order;
4. credit returns and VC releases are committed, and SeFaR control units
   of routers with a raised flag are clocked.

Everything a router reads from a neighbor during step 3 only changes in
step 4, so the result does not depend on router order except for VC
allocation races on a shared buffer, which the fixed order settles
deterministically.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from .router import (BUF_WRITE, EJECT, FlowControlError, Flit, Packet, Router,
                     vc_allocate)
from .routing import DEFAULT_MISROUTE_BUDGET, RoutingFunction, compute_route
from .sefar import SefarUnit
from .topology import DIRECTIONS, MeshTopology, Port
from .trojan import TrojanInstance

log = logging.getLogger(__name__)


class DropEvent(NamedTuple):
    cycle: int
    packet_id: int
    router: int
    out_port: Port


class WatchdogAbort(RuntimeError):
    def __init__(self, cycle: int, idle: int, stuck: List[Packet], detail: str = ""):
        self.cycle = cycle
        self.stuck = stuck
        msg = (f"no flit moved for {idle} cycles at cycle {cycle}; "
               f"{len(stuck)} packets in flight")
        if detail:
            msg += "\n" + detail
        super().__init__(msg)


EVENT_KINDS = ("inject", "hop", "drop", "eject", "au_flag", "cu_shift", "migrate")

_ARRIVE, _EJECT, _DROP = range(3)


class Network:
    """A mesh of :class:`Router` objects plus one network interface per node."""

    def __init__(self, topology: MeshTopology, num_vcs: int = 2, depth: int = 4,
                 routing: RoutingFunction = compute_route,
                 trojans: Sequence[TrojanInstance] = (), sefar: bool = False,
                 misroute_budget: int = DEFAULT_MISROUTE_BUDGET,
                 record_events: bool = False, watchdog: int = 10_000,
                 check_interval: int = 0):
        if num_vcs < 1 or depth < 1:
            raise ValueError("need at least one VC of depth >= 1")
        self.topology = topology
        self.num_vcs = num_vcs
        self.depth = depth
        self.routing = routing
        self.misroute_budget = misroute_budget
        self.watchdog = watchdog
        self.check_interval = check_interval
        n = topology.num_nodes
        self.routers = [Router(self, i, num_vcs, depth) for i in range(n)]
        for r in self.routers:
            for d in DIRECTIONS:
                nb = topology.neighbor(r.node, d) if topology.has_link(r.node, d) else None
                r.neighbors[d] = None if nb is None else self.routers[nb]
            if sefar:
                r.sefar = SefarUnit()
        self.sefar = sefar
        self.trojans = list(trojans)
        for tj in self.trojans:
            if not 0 <= tj.router < n:
                raise ValueError(f"trojan router {tj.router} outside mesh")
            if self.routers[tj.router].trojans[tj.buffer] is not None:
                raise ValueError(f"two trojans on router {tj.router} buffer {tj.buffer}")
            self.routers[tj.router].trojans[tj.buffer] = tj

        self.cycle = 0
        self.pending: Dict[int, list] = {}
        self.returns: list = []
        self.releases: list = []
        self.moved = False
        self.last_progress = 0
        self.ni_queues: List[Deque[Packet]] = [deque() for _ in range(n)]
        self.ni_current: List[Optional[list]] = [None] * n
        self.ni_active: set = set()
        self.flagged_routers: set = set()
        self.packets: List[Packet] = []
        self.drops: List[DropEvent] = []
        self.events: Optional[List[tuple]] = [] if record_events else None
        self.link_flits = [[0] * 5 for _ in range(n)]
        self.counters = [0] * 5
        self.flits_offered = 0
        self.flits_injected = 0
        self.flits_ejected = 0
        self.flits_dropped = 0
        self.stalls = 0
        self.blocked_heads = 0
        self.alarms: List[Tuple[int, int]] = []
        self._next_id = 0

    # -- bookkeeping -----------------------------------------------------------

    def log(self, cycle: int, event: str, packet_id, router, detail=""):
        if self.events is not None:
            self.events.append((cycle, event, packet_id, router, detail))

    def schedule_arrival(self, cycle: int, vc, flit: Flit):
        self.pending.setdefault(cycle, []).append((_ARRIVE, vc, flit))

    def schedule_eject(self, cycle: int, flit: Flit):
        self.pending.setdefault(cycle, []).append((_EJECT, flit, None))

    def schedule_drop(self, cycle: int, flit: Flit, node: int, port: Port):
        self.pending.setdefault(cycle, []).append((_DROP, flit, (node, port)))

    @property
    def flits_in_network(self) -> int:
        return self.flits_injected - self.flits_ejected - self.flits_dropped

    @property
    def idle(self) -> bool:
        return (not self.pending and not self.ni_active
                and self.flits_in_network == 0)

    # -- traffic entry -----------------------------------------------------------

    def new_packet(self, src: int, dst: int, length: int, cycle: Optional[int] = None,
                   measured: bool = True) -> Packet:
        """Create a packet and queue it at its source network interface."""
        n = self.topology.num_nodes
        if not (0 <= src < n and 0 <= dst < n):
            raise ValueError(f"packet endpoints {src}->{dst} outside mesh")
        if src == dst:
            raise ValueError("source and destination must differ")
        pkt = Packet(self._next_id, src, dst, length,
                     self.cycle if cycle is None else cycle,
                     self.misroute_budget, measured)
        self._next_id += 1
        self.packets.append(pkt)
        self.ni_queues[src].append(pkt)
        self.ni_active.add(src)
        self.flits_offered += length
        return pkt

    def _inject(self, t: int):
        for node in sorted(self.ni_active):
            cur = self.ni_current[node]
            router = self.routers[node]
            if cur is None:
                queue = self.ni_queues[node]
                pkt = queue[0]
                vc = vc_allocate(router.units[router.buffer_for(Port.LOCAL)].vcs)
                if vc is None:
                    continue
                queue.popleft()
                vc.owner = pkt
                vc.in_port = Port.LOCAL
                vc.next_seq = 0
                cur = self.ni_current[node] = [pkt, vc, 0]
            pkt, vc, seq = cur
            if vc.credits <= 0:
                continue
            vc.credits -= 1
            flit = Flit(pkt, seq)
            vc.write(flit, t)
            router.occupancy += 1
            self.counters[BUF_WRITE] += 1
            self.flits_injected += 1
            self.moved = True
            if seq == 0 and self.events is not None:
                self.log(t, "inject", pkt.id, node, f"dst={pkt.dst} len={pkt.length}")
            seq += 1
            if seq == pkt.length:
                self.ni_current[node] = None
                if not self.ni_queues[node]:
                    self.ni_active.discard(node)
            else:
                cur[2] = seq

    # -- the cycle -----------------------------------------------------------

    def step(self):
        t = self.cycle
        evs = self.pending.pop(t, None)
        if evs:
            self.moved = True
            counters = self.counters
            for kind, a, b in evs:
                if kind == _ARRIVE:
                    a.inflight -= 1
                    a.write(b, t)
                    a.router.occupancy += 1
                    counters[BUF_WRITE] += 1
                elif kind == _EJECT:
                    self._eject(a, t)
                else:
                    self._drop(a, t, *b)
        if self.ni_active:
            self._inject(t)
        for r in self.routers:
            if r.occupancy:
                r.step(t)
        self._commit(t)
        if self.flagged_routers:
            self._clock_control_units(t)
        if self.check_interval and t % self.check_interval == 0:
            self.check_credit_soundness()
        if self.moved:
            self.last_progress = t
            self.moved = False
        elif self.watchdog and t - self.last_progress > self.watchdog and \
                self.flits_offered > self.flits_ejected + self.flits_dropped:
            self._abort(t)
        self.cycle = t + 1

    def _eject(self, flit: Flit, t: int):
        pkt = flit.packet
        pkt.ejected_flits += 1
        self.flits_ejected += 1
        self.counters[EJECT] += 1
        if flit.is_tail:
            pkt.eject_cycle = t
            pkt.done_cycle = t
            if self.events is not None:
                self.log(t, "eject", pkt.id, pkt.dst, f"latency={t - pkt.inject_cycle}")

    def _drop(self, flit: Flit, t: int, node: int, port: Port):
        pkt = flit.packet
        self.flits_dropped += 1
        pkt.dropped_flits += 1
        if flit.is_head:
            pkt.dropped = True
            self.drops.append(DropEvent(t, pkt.id, node, port))
            self.log(t, "drop", pkt.id, node, f"out={port.letter}")
        if flit.is_tail:
            pkt.done_cycle = t

    def _commit(self, t: int):
        for vc in self.returns:
            vc.credits += 1
            if vc.credits > vc.depth:
                raise FlowControlError(f"credit overflow on {vc}")
        self.returns.clear()
        for vc in self.releases:
            vc.owner = None
        self.releases.clear()

    def _clock_control_units(self, t: int):
        for r in sorted(self.flagged_routers, key=lambda r: r.node):
            was_alarm = r.sefar.alarm
            for b, old, new in r.sefar.step():
                self.log(t, "cu_shift", "", r.node, f"cu={b} z={old:03b}->{new:03b}")
            if r.sefar.alarm and not was_alarm:
                self.alarms.append((t, r.node))
                log.warning("router %d: every buffer busy, displaced ports share a clean buffer", r.node)

    def _abort(self, t: int):
        stuck = [p for p in self.packets
                 if p.done_cycle is None and (p.ejected_flits + p.dropped_flits) < p.length]
        lines = []
        for r in self.routers:
            for unit in r.units[1:]:
                for vc in unit.vcs:
                    if vc.fifo or vc.owner is not None:
                        lines.append(f"  {vc} state={vc.state} out={vc.out_port}")
        raise WatchdogAbort(t, t - self.last_progress, stuck, "\n".join(lines[:50]))

    # -- checks --------------------------------------------------------------

    def check_credit_soundness(self):
        """in-flight + occupancy + credits == depth for every VC."""
        for r in self.routers:
            for unit in r.units[1:]:
                for vc in unit.vcs:
                    if vc.credits + len(vc.fifo) + vc.inflight != vc.depth:
                        raise FlowControlError(
                            f"credit accounting broken on {vc}: inflight={vc.inflight}")
                    if vc.credits < 0:
                        raise FlowControlError(f"negative credits on {vc}")

    def check_conservation(self):
        """After drain: every offered flit was ejected or dropped."""
        if self.flits_offered != self.flits_ejected + self.flits_dropped:
            raise FlowControlError(
                f"flit conservation violated: offered={self.flits_offered} "
                f"ejected={self.flits_ejected} dropped={self.flits_dropped}")
        for p in self.packets:
            if (p.eject_cycle is None) == (not p.dropped):
                raise FlowControlError(f"{p} neither ejected nor dropped (or both)")
            if p.ejected_flits + p.dropped_flits != p.length:
                raise FlowControlError(f"{p} lost flits")

    # -- driving -------------------------------------------------------------

    def run_until_idle(self, max_cycles: Optional[int] = None):
        """Step until every offered flit has left the network."""
        limit = None if max_cycles is None else self.cycle + max_cycles
        while self.flits_offered != self.flits_ejected + self.flits_dropped or self.pending:
            if limit is not None and self.cycle >= limit:
                break
            self.step()

    def run(self, records: Iterable[Tuple[int, int, int, int]], stop: Optional[int] = None,
            drain: bool = True, window: Tuple[int, int] = (0, None)):
        """
        Replay (cycle, src, dst, length) records, which must be sorted by
        cycle. Packets created in ``window`` are marked measured. Injection
        stops at ``stop`` (if given); with ``drain`` the loop then continues
        until the network is empty.

        Returns counter snapshots taken at the window start and end.
        """
        w0, w1 = window
        snap0 = snap1 = None
        it = iter(records)
        nxt = next(it, None)
        while True:
            t = self.cycle
            if snap0 is None and t >= w0:
                snap0 = self._snapshot()
            if snap1 is None and w1 is not None and t >= w1:
                snap1 = self._snapshot()
            if stop is not None and t >= stop:
                break
            if nxt is None and self.idle:
                break
            while nxt is not None and nxt[0] <= t:
                c, s, d, length = nxt
                measured = w0 <= c and (w1 is None or c < w1)
                self.new_packet(s, d, length, c, measured)
                nxt = next(it, None)
            if nxt is not None and self.idle and nxt[0] > t:
                # nothing in flight: jump to the next injection
                target = nxt[0] if stop is None else min(nxt[0], stop)
                for edge in (w0, w1):
                    if edge is not None and t < edge <= target:
                        target = edge
                if target > t:
                    self.cycle = target
                    self.last_progress = target
                    continue
            self.step()
        if drain:
            self.run_until_idle()
        if snap0 is None:
            snap0 = self._snapshot()
        if snap1 is None:
            snap1 = self._snapshot()
        return snap0, snap1

    def _snapshot(self):
        return self.cycle, list(self.counters), self.flits_ejected
