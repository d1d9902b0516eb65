"""
Experiment orchestration: build a scenario, validate it, run it, sweep it.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .config import CONFIG_RE, ConfigError, ExperimentPlan, ScenarioConfig
from .metrics import CSV_FIELDS, MetricsReport, build_report
from .network import DropEvent, Network, WatchdogAbort
from .routing import get_routing, route_walk, strandable_sources, validate_reachability
from .sefar import home_buffer
from .topology import DIRECTIONS, MeshTopology, Port
from .traffic import Record, generate_records, read_trace
from .trojan import TrojanInstance

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Scenario rejected before simulation."""

    def __init__(self, msg: str, pairs: Sequence[Tuple[int, int]] = ()):
        self.pairs = list(pairs)
        if self.pairs:
            shown = ", ".join(f"{s}->{d}" for s, d in self.pairs[:10])
            more = f" (+{len(self.pairs) - 10} more)" if len(self.pairs) > 10 else ""
            msg = f"{msg}: {shown}{more}"
        super().__init__(msg)


# -- random faults -----------------------------------------------------------------


class _PathIndex:
    """
    Per destination, the routers a packet may visit under any congestion
    state; used to recheck only the destinations a new fault can affect.
    """

    def __init__(self, topo: MeshTopology, budget: int):
        self.topo = topo
        self.budget = budget
        self.visited: Dict[int, Set[int]] = {}
        lsrs: Dict[int, object] = {}
        for d in range(topo.num_nodes):
            bad, seen = strandable_sources(topo, d, budget, lsrs)
            if bad:
                raise ScenarioError("base topology is not routable", [(bad[0], d)])
            self.visited[d] = seen

    def try_fault(self, node: int, port: Port) -> bool:
        """Add the fault if no packet can be stranded afterwards, else undo it."""
        topo = self.topo
        topo.inject_fault(node, port)
        lsrs: Dict[int, object] = {}
        updates = {}
        for d, seen in self.visited.items():
            # a decision only sees links up to two hops away
            if not any(topo.distance(r, node) <= 2 for r in seen):
                continue
            bad, new_seen = strandable_sources(topo, d, self.budget, lsrs)
            if bad:
                _undo_fault(topo, node, port)
                return False
            updates[d] = new_seen
        self.visited.update(updates)
        return True


def _undo_fault(topo: MeshTopology, node: int, port: Port):
    ln = topo.links[(node, port)]
    ln.healthy = True
    ln.fault_time = None
    topo._fault_time[node][port] = None


def random_fault_set(width: int, height: int, fraction: float, seed: int,
                     budget: int = 8) -> List[Tuple[int, Port]]:
    """
    ``round(fraction * links)`` directed link faults that keep every ordered
    pair deliverable by the routing function, whatever the congestion state.

    Candidates are tried in one seeded random order, so a smaller fraction
    with the same seed yields a prefix of a larger one.
    """
    topo = MeshTopology(width, height)
    target = int(round(fraction * topo.num_links()))
    if target == 0:
        return []
    keys = sorted(topo.links)
    order = np.random.default_rng(seed).permutation(len(keys))
    index = _PathIndex(topo, budget)
    chosen = []
    for i in order:
        node, port = keys[i]
        if index.try_fault(node, port):
            chosen.append((node, port))
            if len(chosen) == target:
                break
    if len(chosen) < target:
        raise ScenarioError(f"could only place {len(chosen)} of {target} routable faults")
    return chosen


_FAULT_CACHE: Dict[Tuple[int, int, float, int, int], List[Tuple[int, Port]]] = {}


def cached_random_faults(cfg: ScenarioConfig) -> List[Tuple[int, Port]]:
    key = (cfg.width, cfg.height, cfg.random_faults, cfg.fault_seed, cfg.misroute_budget)
    if key not in _FAULT_CACHE:
        _FAULT_CACHE[key] = random_fault_set(*key)
    return _FAULT_CACHE[key]


# -- scenario assembly --------------------------------------------------------------


def build_topology(cfg: ScenarioConfig) -> MeshTopology:
    topo = MeshTopology(cfg.width, cfg.height, cfg.propagation_delay)
    try:
        for node, port, cycle in cfg.faults:
            if not topo.inject_fault(node, port, cycle):
                log.warning("fault %d %s listed twice", node, port.letter)
        if cfg.random_faults:
            for node, port in cached_random_faults(cfg):
                topo.inject_fault(node, port, 0)
    except ValueError as e:
        raise ScenarioError(str(e)) from None
    return topo


def auto_trojans(topo: MeshTopology, mode: str, seed: int) -> List[TrojanInstance]:
    """One Trojan per router that owns a faulty link, in a random used buffer."""
    if mode == "none":
        return []
    rng = np.random.default_rng(seed + 1)
    routers = sorted({n for n, _ in topo.faulty_links()})
    out = []
    for node in routers:
        buffers = [home_buffer(d) for d in DIRECTIONS if topo.neighbor(node, d) is not None]
        buffers.append(home_buffer(Port.LOCAL))
        b = buffers[int(rng.integers(len(buffers)))]
        out.append(TrojanInstance(node, b, [(0, None)] if mode == "active" else []))
    return out


def scenario_records(cfg: ScenarioConfig) -> List[Record]:
    t = cfg.traffic
    if t.trace:
        return read_trace(t.trace)
    return generate_records(t, cfg.width, cfg.height, cfg.seed)


@dataclass
class Scenario:
    config: ScenarioConfig
    topology: MeshTopology
    trojans: List[TrojanInstance]
    records: List[Record]


def validate(cfg: ScenarioConfig, records: Optional[List[Record]] = None) -> Scenario:
    """Assemble a scenario and reject it if any used pair is unreachable or unroutable."""
    topo = build_topology(cfg)
    trojans = list(cfg.trojans) + auto_trojans(topo, cfg.auto_trojans, cfg.fault_seed)
    seen = set()
    for tj in trojans:
        if not 0 <= tj.router < topo.num_nodes:
            raise ScenarioError(f"trojan on router {tj.router} outside the mesh")
        if (tj.router, tj.buffer) in seen:
            raise ScenarioError(f"two trojans on router {tj.router} buffer {tj.buffer}")
        seen.add((tj.router, tj.buffer))
    if records is None:
        records = scenario_records(cfg)
    n = topo.num_nodes
    for rec in records:
        if not (0 <= rec[1] < n and 0 <= rec[2] < n):
            raise ScenarioError(f"traffic endpoint outside the mesh in {rec}")
    pairs = sorted({(r[1], r[2]) for r in records})
    bad = validate_reachability(topo, pairs)
    if bad:
        raise ScenarioError("unreachable pairs", bad)
    if topo.faulty_links():
        routing = get_routing(cfg.routing)
        bad = [(s, d) for s, d in pairs
               if route_walk(topo, s, d, routing, cfg.misroute_budget) is None]
        if bad:
            raise ScenarioError("pairs the routing function cannot deliver", bad)
        lsrs: Dict[int, object] = {}
        used = defaultdict(set)
        for s, d in pairs:
            used[d].add(s)
        risky = [(s, d) for d in sorted(used)
                 for s in strandable_sources(topo, d, cfg.misroute_budget, lsrs)[0]
                 if s in used[d]]
        if risky:
            log.warning("%d pairs can stall behind faults under congestion (e.g. %d->%d); "
                        "the watchdog will report it", len(risky), *risky[0])
    return Scenario(cfg, topo, trojans, records)


@dataclass
class ScenarioResult:
    report: MetricsReport
    network: Network
    scenario: Scenario

    @property
    def events(self):
        return self.network.events

    @property
    def drops(self) -> List[DropEvent]:
        return self.network.drops


def run_scenario(cfg: ScenarioConfig, record_events: bool = False,
                 scenario: Optional[Scenario] = None) -> ScenarioResult:
    """Validate, simulate (with drain) and report. Raises ScenarioError or WatchdogAbort."""
    if scenario is None:
        scenario = validate(cfg)
    t = cfg.traffic
    net = Network(scenario.topology, cfg.vcs, cfg.buffer_depth, get_routing(cfg.routing),
                  scenario.trojans, cfg.sefar, cfg.misroute_budget, record_events,
                  cfg.watchdog, cfg.check_interval)
    if t.trace:
        window = (0, None)
        stop = None
    else:
        window = (t.warmup, t.warmup + t.measure)
        stop = t.warmup + t.measure
    (c0, k0, e0), (c1, k1, e1) = net.run(scenario.records, stop=stop, drain=t.drain,
                                         window=window)
    if t.drain:
        net.check_conservation()
    cycles = c1 - c0
    counts = [b - a for a, b in zip(k0, k1)]
    report = build_report(net.packets, counts, cycles, e1 - e0, scenario.topology.num_nodes,
                          scenario.topology, cfg.energy)
    return ScenarioResult(report, net, scenario)


# -- output files -----------------------------------------------------------------


def write_event_log(events: Iterable[tuple], path: Union[str, Path]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cycle", "event", "packet_id", "router", "detail"])
        for ev in events:
            w.writerow(ev)


def metrics_csv(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    w.writerows(rows)
    return buf.getvalue()


def read_metrics_csv(text: str) -> List[Dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


# -- sweeps ----------------------------------------------------------------------


def derived_seed(seed: int, rep: int) -> int:
    return seed + 7919 * rep


def configure(base: ScenarioConfig, name: str, pir: float, rep: int) -> ScenarioConfig:
    m = CONFIG_RE.match(name)
    if not m:
        raise ConfigError(f"unknown configuration {name!r}")
    t = replace(base.traffic, pir=pir)
    if m.group(1) == "fault-free":
        return replace(base, name=name, traffic=t, faults=[], random_faults=0.0,
                       trojans=[], auto_trojans="none", seed=derived_seed(base.seed, rep))
    return replace(base, name=name, traffic=t, random_faults=int(m.group(2)) / 100,
                   auto_trojans=m.group(3), seed=derived_seed(base.seed, rep))


@dataclass
class SweepResult:
    rows: List[List[str]] = field(default_factory=list)
    aborts: List[Tuple[str, float, int, str]] = field(default_factory=list)
    reports: Dict[Tuple[str, float, int], MetricsReport] = field(default_factory=dict)

    def csv(self) -> str:
        return metrics_csv(self.rows)


def run_sweep(plan: ExperimentPlan, progress=None) -> SweepResult:
    """One row per (configuration, pir, repetition); failed cells are logged and skipped."""
    res = SweepResult()
    for name in plan.configurations:
        for pir in plan.pirs:
            for rep in range(plan.repetitions):
                cfg = configure(plan.base, name, pir, rep)
                try:
                    r = run_scenario(cfg).report
                except (ScenarioError, WatchdogAbort) as e:
                    log.error("cell %s pir=%s rep=%d aborted: %s", name, pir, rep, e)
                    res.aborts.append((name, pir, rep, str(e).splitlines()[0]))
                    continue
                res.rows.append(r.csv_row(name, cfg.seed, pir))
                res.reports[(name, pir, rep)] = r
                if progress is not None:
                    progress(name, pir, rep, r)
    return res


PLOT_METRICS = ("apl", "plp", "throughput", "drop_ratio", "energy")


def emit_plotdata(rows: Sequence[Sequence[str]], metric: str,
                  outdir: Union[str, Path, None] = None) -> Dict[str, List[Tuple[float, float]]]:
    """
    Two-column ``pir value`` series per configuration (repetitions averaged).
    With ``outdir`` each series is written to ``<config>_<metric>.txt``.
    """
    if metric not in PLOT_METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {PLOT_METRICS}")
    if not rows:
        raise ValueError("no rows to plot")
    col = CSV_FIELDS.index(metric)
    acc: Dict[str, Dict[float, List[float]]] = defaultdict(lambda: defaultdict(list))
    order = []
    for row in rows:
        name = row[0]
        if name not in acc:
            order.append(name)
        acc[name][float(row[2])].append(float(row[col]))
    series = {}
    for name in order:
        series[name] = [(pir, statistics.fmean(v)) for pir, v in sorted(acc[name].items())]
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        for name, pts in series.items():
            with open(outdir / f"{name}_{metric}.txt", "w") as f:
                for pir, v in pts:
                    f.write(f"{pir:.4f} {v:.6f}\n")
    return series


# -- attack impact -----------------------------------------------------------------


def drop_ratio_sweep(cfg: ScenarioConfig, placements: Sequence[Sequence[TrojanInstance]]
                     ) -> Tuple[float, float, float, List[float]]:
    """
    Drop ratio for each Trojan placement (SeFaR off); returns
    (min, mean, max, per-placement ratios).
    """
    if not placements:
        raise ValueError("no placements given")
    base = replace(cfg, sefar=False)
    records = scenario_records(base)
    ratios = []
    for placement in placements:
        c = replace(base, trojans=list(placement))
        res = run_scenario(c, scenario=validate(c, records))
        ratios.append(res.report.drop_ratio)
    return min(ratios), statistics.fmean(ratios), max(ratios), ratios
