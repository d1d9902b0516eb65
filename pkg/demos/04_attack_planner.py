"""
Where would an attacker put a Trojan?
=====================================

Profile fault-free traffic, rank every (router, input buffer) by the share
of packets passing through it, then plant a Trojan at the winner together
with a fault on the router's quietest link and see what it does.
"""

# %%
from dataclasses import replace

from sefarnoc.config import ScenarioConfig
from sefarnoc.harness import run_scenario, scenario_records, validate
from sefarnoc.metrics import TrafficProfile, plan_attack
from sefarnoc.traffic import TrafficSpec
from sefarnoc.trojan import TrojanInstance

cfg = ScenarioConfig(traffic=TrafficSpec(pattern="transpose", pir=0.02, warmup=500,
                                         measure=5000), seed=11)
records = scenario_records(cfg)
clean = run_scenario(cfg, scenario=validate(cfg, records))
profile = TrafficProfile.from_packets(clean.scenario.topology,
                                      [p for p in clean.network.packets if p.measured])

# %%
ranked = plan_attack(profile, 5)
for i, c in enumerate(ranked, 1):
    print(f"{i}. router {c.router} IB{c.buffer} ({c.in_port.name.lower()} side) "
          f"carries {100 * c.estimate:.1f}% of packets; wait for link "
          f"{c.router}{c.trigger_port.letter}")

# %%
top = ranked[0]
attack = replace(cfg, faults=[(top.router, top.trigger_port, 0)],
                 trojans=[TrojanInstance(top.router, top.buffer, [(0, None)])])
hit = run_scenario(attack, scenario=validate(attack, records)).report
print(f"planned {100 * top.estimate:.2f}%, measured drop ratio {100 * hit.drop_ratio:.2f}%")

# %%
shielded = run_scenario(replace(attack, sefar=True), scenario=validate(attack, records)).report
print(f"with the shuffler on: {shielded.dropped} drops, apl {shielded.apl:.2f} "
      f"vs {clean.report.apl:.2f} without the attack")
