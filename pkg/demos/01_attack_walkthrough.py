"""
A Trojan next to a broken link
==============================

A 4x4 mesh with two dead links (9->10 and 6->7). Router 9 carries a Trojan
in the buffer that receives traffic from the west. Once a link of router 9
is down, the Trojan rewrites the routing decision of every head in that
buffer so it points at the dead link, and the packet is lost.
"""

# %%
from pathlib import Path

from sefarnoc.config import load_config
from sefarnoc.harness import run_scenario

SCEN = Path(__file__).resolve().parent.parent / "scenarios"

# %% [markdown]
# Router 8 sends ten packets, half of them to router 5 and half to router 11.

# %%
attack = run_scenario(load_config(SCEN / "attack4x4.cfg"), record_events=True)
for p in attack.network.packets:
    path = [h[0] for h in p.hops]
    fate = "dropped" if p.dropped else f"delivered after {p.latency} cycles"
    print(f"packet {p.id}: {p.src}->{p.dst} via {path} {fate}")

# %% [markdown]
# The 8->5 packets enter router 9 from the west and die on 9->10. The 8->11
# packets never touch that buffer: the router detours them north around both
# faults.

# %%
r = attack.report
print(f"injected {r.injected}, delivered {r.delivered}, dropped {r.dropped}")

# %% [markdown]
# Now turn on the buffer shuffler. The alarm unit notices a head asking for a
# link it knows is dead, the control unit moves the west port onto another
# buffer, and the stuck head is copied across.

# %%
shield = run_scenario(load_config(SCEN / "shield4x4.cfg"), record_events=True)
for ev in shield.events:
    if ev[1] in ("au_flag", "cu_shift", "migrate"):
        print(ev)
r = shield.report
print(f"injected {r.injected}, delivered {r.delivered}, dropped {r.dropped}")

# %%
later = sorted({h[2] for p in shield.network.packets for h in p.hops
                if h[0] == 9 and p.dst == 5})
print("buffers used at router 9 by 8->5 packets:", later)
