"""
How many packets does one infected router kill?
===============================================

At very low load every packet follows its zero-load route, so the drop
ratio of a Trojan is the share of source/destination pairs whose route
enters the router through an infected buffer. We count that share by
walking every route, then measure it.
"""

# %%
from sefarnoc.config import ScenarioConfig
from sefarnoc.harness import run_scenario
from sefarnoc.routing import route_walk
from sefarnoc.topology import MeshTopology, Port
from sefarnoc.traffic import TrafficSpec
from sefarnoc.trojan import TrojanInstance

ROUTER, FAULT = 27, (27, Port.EAST)
topo = MeshTopology(8, 8)
topo.inject_fault(*FAULT)


def expected(buffers):
    ports = {Port.LOCAL if b == 5 else Port(b) for b in buffers}
    pairs = [(s, d) for s in range(64) for d in range(64) if s != d]
    hit = sum(any(r == ROUTER and ip in ports for r, ip, _ in route_walk(topo, s, d))
              for s, d in pairs)
    return hit / len(pairs)


# %% [markdown]
# 200k cycles at 0.005 flits/cycle/node gives roughly 16k packets, enough
# for a few tenths of a percent. The acceptance test runs 1.3M cycles.

# %%
for buffers in [(4,), (1, 4), (1, 2, 3, 4)]:
    cfg = ScenarioConfig(faults=[(*FAULT, 0)],
                         trojans=[TrojanInstance(ROUTER, b, [(0, None)]) for b in buffers],
                         traffic=TrafficSpec(pir=0.005, warmup=0, measure=200_000), seed=6)
    r = run_scenario(cfg).report
    print(f"IB{list(buffers)}: expected {100 * expected(buffers):.2f}%  "
          f"measured {100 * r.drop_ratio:.2f}% over {r.injected} packets")
