"""
SeFaR security blocks: authentication unit (AU), control unit (CU) and
buffer shuffler (BS).

Buffers are numbered 1..5 and their 3-bit CU state codes are the same
numbers: IB1..IB4 are the home buffers of the N, E, S, W inputs (codes
001..100, identical to the port codes) and IB5 is the Local input's home
buffer (code 101).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .topology import Port

NUM_BUFFERS = 5


def home_buffer(port: Port) -> int:
    return 5 if port == Port.LOCAL else int(port)


def home_port(buffer: int) -> Port:
    return Port.LOCAL if buffer == 5 else Port(buffer)


def au_check(lsr_own: Sequence[bool], a: int) -> int:
    """
    Authentication unit: 1 iff the code entering the crossbar selects an
    output whose own link is faulty. The Local port (000) is never flagged.
    """
    if 1 <= a <= 4:
        return int(bool(lsr_own[a - 1]))
    return 0


@dataclass(frozen=True)
class CuState:
    seed: int
    z: int
    enabled: bool = False
    alarm: bool = False

    @classmethod
    def home(cls, buffer: int) -> "CuState":
        return cls(seed=buffer, z=buffer)


def _next_state(z: int) -> int:
    return z % NUM_BUFFERS + 1


def cu_step(cu: CuState, f: int, busy: Sequence[bool],
            taken: Sequence[int] = ()) -> Tuple[CuState, Tuple[bool, ...]]:
    """
    One clock of the control-unit FSM.

    ``busy`` is indexed 1..5 (index 0 unused). ``taken`` holds the current
    states of the other displaced CUs. Returns the state for the next cycle
    and the updated busy vector: on the first ``f`` the CU sets its home
    buffer busy. The modulo-5 counter then moves to the next state that is
    neither busy nor taken and holds there until that buffer turns busy.
    When no such state exists the CU holds and raises ``alarm``.
    """
    busy = tuple(busy)
    if not cu.enabled:
        if not f:
            return cu, busy
        busy = busy[:cu.seed] + (True,) + busy[cu.seed + 1:]
        cu = replace(cu, enabled=True)
    if not busy[cu.z] and cu.z not in taken:
        return replace(cu, alarm=False), busy
    z = cu.z
    for _ in range(NUM_BUFFERS - 1):
        z = _next_state(z)
        if not busy[z] and z not in taken:
            return replace(cu, z=z, alarm=False), busy
    return replace(cu, alarm=True), busy


class BsMapping:
    """Input port -> buffer selection driven by the CU states."""

    __slots__ = ("_map",)

    def __init__(self, states: Optional[Dict[Port, int]] = None):
        self._map = [0] * 5
        for p in Port:
            self._map[p] = home_buffer(p) if states is None else states[p]

    def __getitem__(self, port: Port) -> int:
        return self._map[port]

    def as_dict(self) -> Dict[Port, int]:
        return {p: self._map[p] for p in Port}

    def is_identity(self) -> bool:
        return all(self._map[p] == home_buffer(p) for p in Port)

    def is_bijection(self) -> bool:
        return sorted(self._map) == [1, 2, 3, 4, 5]


def bs_apply(mapping: BsMapping, arrivals: Dict[Port, object]) -> Dict[int, List[object]]:
    """Route each arriving flit to the buffer its port is currently mapped to."""
    out: Dict[int, List[object]] = {}
    for port, flit in arrivals.items():
        out.setdefault(mapping[port], []).append(flit)
    return out


class SefarUnit:
    """
    Per-router SeFaR state: latched AU flags, busy flags and five CUs.

    AU flags are kept per buffer, i.e. per routing unit, because that is
    what a flagged code incriminates. ``quarantined(b)`` is what the switch
    allocator consults.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.flags = [False] * (NUM_BUFFERS + 1)
        self.busy: Tuple[bool, ...] = (False,) * (NUM_BUFFERS + 1)
        self.cus: List[CuState] = [CuState.home(1)] + [CuState.home(b) for b in range(1, 6)]
        self.alarm = False

    def raise_flag(self, buffer: int) -> bool:
        """Latch F for a buffer. Returns True on the rising edge."""
        if self.flags[buffer]:
            return False
        self.flags[buffer] = True
        return True

    def step(self) -> List[Tuple[int, int, int]]:
        """Clock every CU once; returns (buffer, old_z, new_z) for each shift."""
        shifts = []
        for b in range(1, NUM_BUFFERS + 1):
            cu = self.cus[b]
            if not cu.enabled and not self.flags[b]:
                continue
            taken = [self.cus[o].z for o in range(1, NUM_BUFFERS + 1)
                     if o != b and self.cus[o].enabled]
            new, self.busy = cu_step(cu, int(self.flags[b]), self.busy, taken)
            if new.alarm and self.flags[new.z]:
                # Nothing free and still parked on an infected buffer: share
                # the lowest clean buffer rather than block the port for good.
                clean = [c for c in range(1, NUM_BUFFERS + 1) if not self.flags[c]]
                if clean:
                    new = replace(new, z=clean[0])
            self.cus[b] = new
            if new.z != cu.z:
                shifts.append((b, cu.z, new.z))
        self.alarm = any(self.cus[b].alarm for b in range(1, NUM_BUFFERS + 1))
        return shifts

    def buffer_for(self, port: Port) -> int:
        return self.cus[home_buffer(port)].z

    def mapping(self) -> BsMapping:
        return BsMapping({p: self.buffer_for(p) for p in Port})

    def quarantined(self, buffer: int) -> bool:
        return self.busy[buffer] and self.cus[buffer].z != buffer
