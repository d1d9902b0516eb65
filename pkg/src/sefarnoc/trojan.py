"""
Bit-level model of the packet-drop hardware Trojan.

The Trojan sits between a routing unit and the crossbar. Its trigger is a
link-to-port decoder (DEC) fed by the router's four link-status bits and a
kill-switch enable; its payload is three 2:1 multiplexers that replace the
routing unit's port code with the code of a faulty output port.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

from .topology import Port, port_code


class DecOutput(NamedTuple):
    d: int  # D2D1D0
    s: int  # mux select

    def __str__(self):
        return f"{self.d:03b}/{self.s}"


# Priority used when more than one link is faulty.
_DEC_PRIORITY = (Port.NORTH, Port.EAST, Port.SOUTH, Port.WEST)


def dec(en: int, ln: int, le: int, ls: int, lw: int) -> DecOutput:
    """
    Link-to-port decoder.

    With ``en`` low or every link healthy the output is ``(000, 0)``.
    Otherwise ``d`` is the code of the faulty port and ``s`` is 1; if several
    links are faulty the first of N, E, S, W wins.
    """
    if not en:
        return DecOutput(0, 0)
    for port, bit in zip(_DEC_PRIORITY, (ln, le, ls, lw)):
        if bit:
            return DecOutput(port_code(port), 1)
    return DecOutput(0, 0)


def ht_mux(p: int, out: DecOutput) -> int:
    """Payload: A2A1A0 = D2D1D0 when S is high, else the routing unit's P2P1P0."""
    return out.d if out.s else p


class TriggerState(Enum):
    DORMANT = "dormant"
    ARMED = "armed"
    ACTIVE = "active"


@dataclass
class TrojanInstance:
    """
    A Trojan bound to the routing unit of one input buffer.

    ``buffer`` is 1-based (IB1..IB5 = N, E, S, W, Local home ports).
    ``enable`` holds inclusive cycle ranges during which the kill switch is
    high; an ``end`` of None means "until the end of the run".
    """
    router: int
    buffer: int
    enable: List[Tuple[int, Optional[int]]] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.buffer <= 5:
            raise ValueError(f"trojan buffer must be in 1..5, got {self.buffer}")
        for start, end in self.enable:
            if start < 0 or (end is not None and end < start):
                raise ValueError(f"bad enable range {start}..{end}")

    def en(self, cycle: int) -> int:
        for start, end in self.enable:
            if start <= cycle and (end is None or cycle <= end):
                return 1
        return 0

    def decode(self, lsr_own: Sequence[bool], cycle: int) -> DecOutput:
        return dec(self.en(cycle), *(int(b) for b in lsr_own))


def trigger_state(trojan: TrojanInstance, lsr_own: Sequence[bool], cycle: int) -> TriggerState:
    if not any(lsr_own):
        return TriggerState.DORMANT
    if not trojan.en(cycle):
        return TriggerState.ARMED
    return TriggerState.ACTIVE


def parse_enable(text: str) -> List[Tuple[int, Optional[int]]]:
    """Parse ``"0..99,200.."`` into ``[(0, 99), (200, None)]``; ``always`` and ``never`` are accepted."""
    text = text.strip()
    if text == "always":
        return [(0, None)]
    if text in ("never", ""):
        return []
    ranges = []
    for part in text.split(","):
        lo, sep, hi = part.partition("..")
        if not sep:
            c = int(lo)
            ranges.append((c, c))
            continue
        ranges.append((int(lo), int(hi) if hi.strip() else None))
    return ranges
