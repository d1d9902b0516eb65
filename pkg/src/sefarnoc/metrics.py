"""
Run metrics, utilization profiles, an abstract energy model and the
attacker's placement planner.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .router import BUF_WRITE, EJECT, LINK, ROUTE, XBAR, Packet
from .sefar import home_buffer
from .topology import DIRECTIONS, MeshTopology, Port

CSV_FIELDS = ("config", "seed", "pir", "injected", "delivered", "dropped",
              "drop_ratio", "apl", "throughput", "energy", "plp")


@dataclass
class EnergyModel:
    """Energy per event in arbitrary units. Only orderings are meaningful."""
    e_buffer_write: float = 1.0
    e_route: float = 0.2
    e_xbar: float = 0.6
    e_link: float = 1.0
    p_static: float = 2.0

    def __post_init__(self):
        if min(asdict(self).values()) < 0:
            raise ValueError("energy coefficients must be non-negative")


def energy_accumulate(counts: Sequence[int], cycles: int, routers: int,
                      model: EnergyModel = EnergyModel(), apl: float = 0.0,
                      measure_cycles: Optional[int] = None) -> Tuple[float, float]:
    """
    ``counts`` holds event totals indexed like ``Network.counters``
    (buffer writes, route computations, crossbar and link traversals).
    Returns ``(energy, plp)`` with plp = energy per measured cycle x apl.
    """
    dynamic = (counts[BUF_WRITE] * model.e_buffer_write + counts[ROUTE] * model.e_route
               + counts[XBAR] * model.e_xbar + counts[LINK] * model.e_link)
    energy = dynamic + model.p_static * cycles * routers
    mc = cycles if measure_cycles is None else measure_cycles
    plp = energy / mc * apl if mc > 0 else 0.0
    return energy, plp


@dataclass
class MetricsReport:
    injected: int
    delivered: int
    dropped: int
    apl: float
    throughput: float
    energy: float
    plp: float
    per_link_util: Dict[Tuple[int, Port], float] = field(default_factory=dict, repr=False)
    per_router_injeject: List[float] = field(default_factory=list, repr=False)
    in_flight: int = 0

    @property
    def drop_ratio(self) -> float:
        return self.dropped / self.injected if self.injected else 0.0

    def csv_row(self, config: str, seed: int, pir: float) -> List[str]:
        return [config, str(seed), f"{pir:.4f}", str(self.injected), str(self.delivered),
                str(self.dropped), f"{self.drop_ratio:.6f}", f"{self.apl:.4f}",
                f"{self.throughput:.6f}", f"{self.energy:.2f}", f"{self.plp:.2f}"]


def link_utilization(packets: Iterable[Packet],
                     topology: Optional[MeshTopology] = None) -> Dict[Tuple[int, Port], float]:
    """
    Share (%) of all flit-hops carried by each directed link. A dropped
    packet's final hop onto the faulty link is not counted. With
    ``topology`` every existing link gets an entry, zero or not.
    """
    counts: Counter = Counter()
    for p in packets:
        hops = p.hops[:-1] if p.dropped else p.hops
        for node, _in, _buf, out in hops:
            if out != Port.LOCAL:
                counts[(node, out)] += p.length
    total = sum(counts.values())
    keys = list(topology.links) if topology is not None else list(counts)
    if not total:
        return {k: 0.0 for k in keys}
    return {k: 100.0 * counts.get(k, 0) / total for k in sorted(set(keys) | set(counts))}


def router_injection_ejection(packets: Iterable[Packet], num_nodes: int) -> List[float]:
    """Per-router share (%) of all packet injections plus ejections."""
    counts = [0] * num_nodes
    total = 0
    for p in packets:
        counts[p.src] += 1
        total += 1
        if p.eject_cycle is not None:
            counts[p.dst] += 1
            total += 1
    if not total:
        return [0.0] * num_nodes
    return [100.0 * c / total for c in counts]


def build_report(packets: Sequence[Packet], counts: Sequence[int], cycles: int,
                 ejected_flits: int, num_nodes: int, topology: Optional[MeshTopology] = None,
                 model: EnergyModel = EnergyModel(), in_flight: int = 0) -> MetricsReport:
    """Metrics over measured packets; ``counts``/``cycles`` cover the measurement window."""
    measured = [p for p in packets if p.measured]
    delivered = [p for p in measured if p.eject_cycle is not None]
    dropped = sum(1 for p in measured if p.dropped)
    apl = sum(p.latency for p in delivered) / len(delivered) if delivered else 0.0
    thr = ejected_flits / (cycles * num_nodes) if cycles > 0 else 0.0
    energy, plp = energy_accumulate(counts, cycles, num_nodes, model, apl)
    return MetricsReport(
        injected=len(measured), delivered=len(delivered), dropped=dropped,
        apl=apl, throughput=thr, energy=energy, plp=plp,
        per_link_util=link_utilization(packets, topology),
        per_router_injeject=router_injection_ejection(packets, num_nodes),
        in_flight=len(measured) - len(delivered) - dropped)


# -- attack planning ------------------------------------------------------------


@dataclass
class TrafficProfile:
    """
    What an adversary learns from a fault-free profiling run: link and
    router utilization plus, per (router, input port), how many packets
    entered there.
    """
    topology: MeshTopology
    link_util: Dict[Tuple[int, Port], float]
    router_injeject: List[float]
    port_packets: Dict[Tuple[int, Port], int]
    total_packets: int

    @classmethod
    def from_packets(cls, topology: MeshTopology, packets: Sequence[Packet]) -> "TrafficProfile":
        port_packets: Counter = Counter()
        for p in packets:
            for node, in_port, _buf, _out in p.hops:
                port_packets[(node, in_port)] += 1
        return cls(topology, link_utilization(packets, topology),
                   router_injection_ejection(packets, topology.num_nodes),
                   dict(port_packets), len(packets))


@dataclass(frozen=True)
class AttackCandidate:
    router: int
    buffer: int
    estimate: float        # fraction of all packets entering through that buffer
    trigger_port: Port     # least-used outbound link; the fault the Trojan waits for

    @property
    def in_port(self) -> Port:
        return Port.LOCAL if self.buffer == 5 else Port(self.buffer)


def plan_attack(profile: TrafficProfile, k: int = 1) -> List[AttackCandidate]:
    """
    Rank (router, input buffer) insertion points by the fraction of packets
    that pass through the buffer, highest first.

    Each candidate also names the router's least-utilized outbound link:
    a fault there disturbs the profiled routes least, so the estimate
    carries over best once the Trojan wakes up.
    """
    topo = profile.topology
    total = profile.total_packets
    cands = []
    for node in range(topo.num_nodes):
        links = [d for d in DIRECTIONS if topo.has_link(node, d)]
        trigger = min(links, key=lambda d: (profile.link_util.get((node, d), 0.0), int(d)))
        for port in Port:
            n = profile.port_packets.get((node, port), 0)
            est = n / total if total else 0.0
            cands.append(AttackCandidate(node, home_buffer(port), est, trigger))
    cands.sort(key=lambda c: (-c.estimate, c.router, c.buffer))
    return cands[:k]
