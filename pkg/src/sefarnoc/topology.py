"""
2D mesh topology, permanent link faults and per-router link-status registers.

Routers are numbered row-major (``index = y * width + x``) with ``y`` growing
downward, so North means ``y - 1``. Links are directed: a fault on 9->10 says
nothing about 10->9.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Tuple


class Port(IntEnum):
    """Router port. The integer value doubles as the 3-bit port code."""
    LOCAL = 0
    NORTH = 1
    EAST = 2
    SOUTH = 3
    WEST = 4

    @property
    def opposite(self) -> "Port":
        return _OPPOSITE[self]

    @property
    def letter(self) -> str:
        return "LNESW"[self]

    @classmethod
    def from_letter(cls, s: str) -> "Port":
        try:
            return cls("LNESW".index(s.strip().upper()[0]))
        except (ValueError, IndexError):
            raise ValueError(f"unknown port {s!r}") from None


DIRECTIONS = (Port.NORTH, Port.EAST, Port.SOUTH, Port.WEST)

_OPPOSITE = {
    Port.LOCAL: Port.LOCAL,
    Port.NORTH: Port.SOUTH,
    Port.SOUTH: Port.NORTH,
    Port.EAST: Port.WEST,
    Port.WEST: Port.EAST,
}

_DELTA = {
    Port.NORTH: (0, -1),
    Port.EAST: (1, 0),
    Port.SOUTH: (0, 1),
    Port.WEST: (-1, 0),
}


def port_code(port: Port) -> int:
    """3-bit code P2P1P0 of a port: N=001, E=010, S=011, W=100, Local=000."""
    return int(Port(port))


def code_port(code: int) -> Port:
    """Inverse of :func:`port_code`. Codes 101-111 are rejected."""
    if not 0 <= code <= 4:
        raise ValueError(f"invalid port code {code:03b}")
    return Port(code)


def format_code(code: int) -> str:
    return format(code, "03b")


class TopologyError(ValueError):
    pass


@dataclass
class DirectedLink:
    src: int
    dir: Port
    dst: int
    healthy: bool = True
    fault_time: Optional[int] = None


@dataclass
class MeshTopology:
    """
    A ``width x height`` mesh with directed inter-router links.

    Link health is global truth; routers only see it through their
    :class:`LinkStatusRegister`, which lags the truth by
    ``propagation_delay`` cycles for links owned by other routers.
    """
    width: int
    height: int
    propagation_delay: int = 0
    links: Dict[Tuple[int, Port], DirectedLink] = field(default_factory=dict)

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise TopologyError("mesh dimensions must be at least 2x2")
        if self.propagation_delay < 0:
            raise TopologyError("propagation delay must be non-negative")
        if not self.links:
            for node in range(self.num_nodes):
                for d in DIRECTIONS:
                    nb = self.neighbor(node, d)
                    if nb is not None:
                        self.links[(node, d)] = DirectedLink(node, d, nb)
        # Fault time per (node, dir); absent links and healthy links are None.
        self._fault_time: List[List[Optional[int]]] = [
            [None] * 5 for _ in range(self.num_nodes)]
        for (n, d), ln in self.links.items():
            if not ln.healthy:
                self._fault_time[n][d] = ln.fault_time

    @property
    def num_nodes(self) -> int:
        return self.width * self.height

    def coord(self, node: int) -> Tuple[int, int]:
        if not 0 <= node < self.num_nodes:
            raise TopologyError(f"node {node} outside mesh")
        return node % self.width, node // self.width

    def index(self, x: int, y: int) -> int:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise TopologyError(f"coordinate ({x}, {y}) outside mesh")
        return y * self.width + x

    def neighbor(self, node: int, port: Port) -> Optional[int]:
        """Adjacent router through ``port``, or None at the mesh boundary."""
        if port == Port.LOCAL:
            raise TopologyError("the local port has no neighbor")
        x, y = node % self.width, node // self.width
        dx, dy = _DELTA[port]
        x, y = x + dx, y + dy
        if 0 <= x < self.width and 0 <= y < self.height:
            return y * self.width + x
        return None

    def distance(self, a: int, b: int) -> int:
        w = self.width
        return abs(a % w - b % w) + abs(a // w - b // w)

    def iter_links(self) -> Iterator[DirectedLink]:
        return iter(self.links.values())

    def num_links(self) -> int:
        return len(self.links)

    # -- faults ---------------------------------------------------------

    def inject_fault(self, node: int, port: Port, cycle: int = 0) -> bool:
        """
        Mark the outbound link ``node -> port`` permanently faulty from
        ``cycle`` on. Returns False (and changes nothing) if the link was
        already faulty.
        """
        port = Port(port)
        ln = self.links.get((node, port))
        if ln is None:
            raise TopologyError(f"router {node} has no {port.name} link")
        if not ln.healthy:
            return False
        ln.healthy = False
        ln.fault_time = cycle
        self._fault_time[node][port] = cycle
        return True

    def is_faulty(self, node: int, port: Port, cycle: Optional[int] = None) -> bool:
        """Global truth: is the link faulty at ``cycle`` (None = ever)."""
        t = self._fault_time[node][port]
        if t is None:
            return False
        return cycle is None or t <= cycle

    def faulty_links(self) -> List[Tuple[int, Port]]:
        return sorted(k for k, ln in self.links.items() if not ln.healthy)

    def has_link(self, node: int, port: Port) -> bool:
        return (node, port) in self.links

    def healthy_graph_reachable(self, src: int) -> List[bool]:
        """BFS over links that are (or will become) healthy forever."""
        seen = [False] * self.num_nodes
        seen[src] = True
        todo = [src]
        while todo:
            n = todo.pop()
            for d in DIRECTIONS:
                ln = self.links.get((n, d))
                if ln is not None and ln.healthy and not seen[ln.dst]:
                    seen[ln.dst] = True
                    todo.append(ln.dst)
        return seen

    # -- link status registers -------------------------------------------

    def lsr(self, node: int, cycle: Optional[int] = None) -> "LinkStatusRegister":
        return LinkStatusRegister(self, node, cycle)

    def propagate_link_status(self, cycle: Optional[int] = None) -> List["LinkStatusRegister"]:
        """Snapshot every router's LSR at ``cycle`` (None = after all faults settle)."""
        return [self.lsr(n, cycle) for n in range(self.num_nodes)]


class LinkStatusRegister:
    """
    One router's view of link health: its own four outbound links plus
    every link whose source router lies within two hops.

    Own links are visible from the fault cycle; links of other routers
    become visible ``propagation_delay`` cycles later. ``cycle=None``
    means the fully propagated steady state.
    """

    __slots__ = ("topology", "node", "cycle")

    RADIUS = 2

    def __init__(self, topology: MeshTopology, node: int, cycle: Optional[int] = None):
        self.topology = topology
        self.node = node
        self.cycle = cycle

    @property
    def own(self) -> Tuple[bool, bool, bool, bool]:
        """(LN, LE, LS, LW); True means faulty."""
        t = self.topology
        return tuple(t.is_faulty(self.node, d, self.cycle) for d in DIRECTIONS)

    def own_bits(self) -> int:
        """Own status packed as a 4-bit integer LN LE LS LW (LN is the MSB)."""
        ln, le, ls, lw = self.own
        return (ln << 3) | (le << 2) | (ls << 1) | int(lw)

    def covers(self, node: int) -> bool:
        return self.topology.distance(self.node, node) <= self.RADIUS

    def is_faulty(self, node: int, port: Port) -> bool:
        """Health of link ``node -> port`` as known to this router."""
        t = self.topology
        if not self.covers(node):
            raise TopologyError(
                f"router {self.node} has no status for router {node} "
                f"(distance {t.distance(self.node, node)})")
        ft = t._fault_time[node][port]
        if ft is None:
            return False
        if self.cycle is None:
            return True
        if node != self.node:
            ft += t.propagation_delay
        return ft <= self.cycle

    @property
    def neighborhood(self) -> Dict[Tuple[int, Port], bool]:
        """Map (router, port) -> healthy, for all links sourced within two hops."""
        t = self.topology
        out = {}
        for (n, d) in t.links:
            if self.covers(n):
                out[(n, d)] = not self.is_faulty(n, d)
        return out
