"""
Fault-aware adaptive XY routing with two-hop lookahead.

The routing unit only sees link health through the router's link-status
register. A minimal output is dropped when the register shows that every
minimal continuation from the next router is dead within two hops. Among
the remaining minimal outputs the X dimension wins, which makes the
fault-free behavior plain XY routing. When no minimal output survives, the
packet spends one unit of its misroute budget on a non-minimal hop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .topology import DIRECTIONS, LinkStatusRegister, MeshTopology, Port

DEFAULT_MISROUTE_BUDGET = 8


@dataclass(frozen=True)
class RouteRequest:
    current: int
    dst: int
    in_port: Port
    lsr: LinkStatusRegister
    credits: Optional[Sequence[int]] = None  # indexed by Port
    misroutes_left: int = DEFAULT_MISROUTE_BUDGET


@dataclass(frozen=True)
class RouteDecision:
    out_port: Optional[Port]  # None means stall
    minimal: bool = True

    @property
    def code(self) -> int:
        if self.out_port is None:
            raise ValueError("stall decision has no port code")
        return int(self.out_port)

    @property
    def stalled(self) -> bool:
        return self.out_port is None


STALL = RouteDecision(None, False)


def minimal_ports(topology: MeshTopology, current: int, dst: int) -> List[Port]:
    """Directional ports that reduce the Manhattan distance, X dimension first."""
    w = topology.width
    cx, cy = current % w, current // w
    dx, dy = dst % w, dst // w
    out = []
    if dx > cx:
        out.append(Port.EAST)
    elif dx < cx:
        out.append(Port.WEST)
    if dy > cy:
        out.append(Port.SOUTH)
    elif dy < cy:
        out.append(Port.NORTH)
    return out


def _has_live_minimal_exit(topology, lsr, node, dst) -> bool:
    for q in minimal_ports(topology, node, dst):
        if not lsr.is_faulty(node, q):
            return True
    return False


def _lookahead_ok(topology: MeshTopology, lsr: LinkStatusRegister, nxt: int, dst: int) -> bool:
    """True unless every minimal path from ``nxt`` dies within the register's reach."""
    if nxt == dst:
        return True
    for q in minimal_ports(topology, nxt, dst):
        if lsr.is_faulty(nxt, q):
            continue
        m = topology.neighbor(nxt, q)
        if m == dst or _has_live_minimal_exit(topology, lsr, m, dst):
            return True
    return False


def _decide(req: RouteRequest) -> Tuple[Optional[RouteDecision], List[Tuple[tuple, Port]]]:
    """
    Either a decision that does not depend on congestion, or the ranked
    non-minimal candidates as ``((uturn, dead), port)`` pairs.
    """
    lsr = req.lsr
    topo = lsr.topology
    cur, dst = req.current, req.dst
    if cur == dst:
        return RouteDecision(Port.LOCAL, True), []

    healthy_min = [p for p in minimal_ports(topo, cur, dst) if not lsr.is_faulty(cur, p)]
    # After a misroute the way back is minimal again; try it last or the
    # head ping-pongs across a fault it cannot see and burns its budget.
    healthy_min.sort(key=lambda p: p == req.in_port)
    for p in healthy_min:
        if _lookahead_ok(topo, lsr, topo.neighbor(cur, p), dst):
            return RouteDecision(p, True), []

    fallback = RouteDecision(healthy_min[0], True) if healthy_min else STALL
    if req.misroutes_left <= 0:
        # Out of budget: take a healthy minimal hop even if it looks doomed.
        return fallback, []

    minimal = set(minimal_ports(topo, cur, dst))
    candidates = []
    for p in DIRECTIONS:
        if p in minimal or not topo.has_link(cur, p) or lsr.is_faulty(cur, p):
            continue
        nxt = topo.neighbor(cur, p)
        dead = not _has_live_minimal_exit(topo, lsr, nxt, dst)
        candidates.append(((p == req.in_port, dead), p))
    if not candidates:
        return fallback, []
    return None, candidates


def compute_route(req: RouteRequest) -> RouteDecision:
    decision, candidates = _decide(req)
    if decision is not None:
        return decision
    credits = req.credits
    best = min(candidates, key=lambda kp: (kp[0], -(credits[kp[1]] if credits is not None else 0),
                                           int(kp[1])))
    return RouteDecision(best[1], False)


def route_options(req: RouteRequest) -> List[RouteDecision]:
    """Every decision ``compute_route`` can return for this request under some credit state."""
    decision, candidates = _decide(req)
    if decision is not None:
        return [decision]
    key = min(k for k, _ in candidates)
    return [RouteDecision(p, False) for k, p in candidates if k == key]


RoutingFunction = Callable[[RouteRequest], RouteDecision]

ROUTING_POLICIES: Dict[str, RoutingFunction] = {"ftxy-lookahead": compute_route}


def get_routing(name: str) -> RoutingFunction:
    try:
        return ROUTING_POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown routing policy {name!r}") from None


def validate_reachability(topology: MeshTopology,
                          pairs: Iterable[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Return the (src, dst) pairs with no healthy path; empty means ok."""
    cache: Dict[int, List[bool]] = {}
    bad = []
    for s, d in pairs:
        if s not in cache:
            cache[s] = topology.healthy_graph_reachable(s)
        if not cache[s][d]:
            bad.append((s, d))
    return bad


def route_walk(topology: MeshTopology, src: int, dst: int,
               routing: RoutingFunction = compute_route,
               budget: int = DEFAULT_MISROUTE_BUDGET,
               max_hops: Optional[int] = None) -> Optional[List[Tuple[int, Port, Port]]]:
    """
    Zero-load path of a packet under steady-state link status, as a list of
    (router, in_port, out_port) ending with the Local ejection. Returns None
    if the packet would stall or not arrive.
    """
    if max_hops is None:
        max_hops = 4 * topology.num_nodes
    path = []
    cur, in_port = src, Port.LOCAL
    lsrs: Dict[int, LinkStatusRegister] = {}
    for _ in range(max_hops):
        lsr = lsrs.get(cur)
        if lsr is None:
            lsr = lsrs[cur] = topology.lsr(cur)
        dec = routing(RouteRequest(cur, dst, in_port, lsr, None, budget))
        if dec.stalled:
            return None
        path.append((cur, in_port, dec.out_port))
        if dec.out_port == Port.LOCAL:
            return path
        if not dec.minimal:
            budget -= 1
        if topology.is_faulty(cur, dec.out_port):
            return None
        cur, in_port = topology.neighbor(cur, dec.out_port), dec.out_port.opposite
    return None


def strandable_sources(topology: MeshTopology, dst: int,
                       budget: int = DEFAULT_MISROUTE_BUDGET,
                       lsrs: Optional[Dict[int, LinkStatusRegister]] = None
                       ) -> Tuple[List[int], Set[int]]:
    """
    Sources whose packets to ``dst`` can end in a stall for some sequence of
    congestion-dependent choices, plus every router such a packet may visit.

    The state (router, in_port, budget left) strictly lowers the routing
    potential on each hop, so the reachable states form a DAG and one
    memoized search per destination covers all sources.
    """
    if lsrs is None:
        lsrs = {}
    memo: Dict[Tuple[int, Port, int], bool] = {}
    visited: Set[int] = set()

    def safe(node: int, in_port: Port, left: int) -> bool:
        key = (node, in_port, left)
        hit = memo.get(key)
        if hit is not None:
            return hit
        visited.add(node)
        lsr = lsrs.get(node)
        if lsr is None:
            lsr = lsrs[node] = topology.lsr(node)
        ok = True
        for d in route_options(RouteRequest(node, dst, in_port, lsr, None, left)):
            if d.stalled:
                ok = False
            elif d.out_port is not Port.LOCAL:
                nxt = topology.neighbor(node, d.out_port)
                ok = safe(nxt, d.out_port.opposite, left - (not d.minimal))
            if not ok:
                break
        memo[key] = ok
        return ok

    bad = [s for s in range(topology.num_nodes) if s != dst and not safe(s, Port.LOCAL, budget)]
    return bad, visited
