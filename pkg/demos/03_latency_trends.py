"""
Latency with faults, dormant Trojans and active Trojans behind the shield
==========================================================================

Five configurations on the 8x8 mesh: no faults, 5% and 10% of links
faulty with dormant Trojans, and the same fault sets with active Trojans
held off by the buffer shuffler. Faults stretch routes; the shuffler adds
only a little on top.
"""

# %%
from dataclasses import replace
from pathlib import Path

from sefarnoc.config import load_plan
from sefarnoc.harness import emit_plotdata, run_sweep

SCEN = Path(__file__).resolve().parent.parent / "scenarios"
plan = load_plan(SCEN / "latency_uniform.plan")
# shorter windows than the plan file so the demo finishes in about a minute
plan = replace(plan, pirs=[0.02, 0.06],
               base=replace(plan.base, traffic=replace(plan.base.traffic, measure=1500)))

# %%
res = run_sweep(plan, progress=lambda n, pir, rep, r: print(f"{n:18s} pir={pir:.2f} "
                                                               f"apl={r.apl:6.2f} drops={r.dropped}"))

# %%
series = emit_plotdata(res.rows, "apl", Path("plotdata"))
for name, pts in series.items():
    print(name, " ".join(f"{v:.2f}" for _, v in pts))
print("series written to plotdata/ as 'pir value' columns")
