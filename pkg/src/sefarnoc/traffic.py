"""
Synthetic traffic patterns, Bernoulli injection and trace files.

A trace is plain text, one packet per line::

    # cycle src dst length
    0 8 5 4
    3 8 11 4

Blank lines and ``#`` comments are ignored; cycles must not decrease.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

PATTERNS = ("uniform", "transpose", "shuffle")

Record = Tuple[int, int, int, int]


@dataclass
class TrafficSpec:
    pattern: str = "uniform"
    pir: float = 0.1               # flits / cycle / node
    packet_length: int = 4
    warmup: int = 1000
    measure: int = 10000
    drain: bool = True
    trace: Optional[str] = None

    def __post_init__(self):
        if self.trace is None and self.pattern not in PATTERNS:
            raise ValueError(f"unknown traffic pattern {self.pattern!r}")
        if self.trace is None and not 0 < self.pir <= 1:
            raise ValueError("pir must be in (0, 1]")
        if self.packet_length < 1:
            raise ValueError("packet length must be >= 1")
        if self.warmup < 0 or self.measure < 0 or self.warmup + self.measure <= 0:
            raise ValueError("warmup + measure must be positive")


def check_pattern(pattern: str, width: int, height: int):
    if pattern in ("transpose", "shuffle") and width != height:
        raise ValueError(f"{pattern} traffic needs a square mesh")
    n = width * height
    if pattern == "shuffle" and n & (n - 1):
        raise ValueError("shuffle traffic needs a power-of-two node count")


def shuffle_destination(src: int, n: int) -> int:
    """Rotate the log2(n)-bit node index left by one."""
    bits = n.bit_length() - 1
    return ((src << 1) | (src >> (bits - 1))) & (n - 1)


def transpose_destination(src: int, width: int) -> int:
    x, y = src % width, src // width
    return x * width + y


def _uniform(src: int, n: int, rng: np.random.Generator) -> int:
    d = int(rng.integers(0, n - 1))
    return d + 1 if d >= src else d


def gen_destination(pattern: str, src: int, rng: np.random.Generator,
                    width: int, height: int) -> int:
    """
    Destination for a packet from ``src``. Transpose and shuffle map some
    nodes onto themselves; those packets go to a uniform-random node instead.
    """
    n = width * height
    if pattern == "uniform":
        return _uniform(src, n, rng)
    if pattern == "transpose":
        check_pattern(pattern, width, height)
        d = transpose_destination(src, width)
    elif pattern == "shuffle":
        check_pattern(pattern, width, height)
        d = shuffle_destination(src, n)
    else:
        raise ValueError(f"unknown traffic pattern {pattern!r}")
    return _uniform(src, n, rng) if d == src else d


def bernoulli_inject(spec: TrafficSpec, node: int, cycle: int, rng: np.random.Generator,
                     width: int, height: int) -> Optional[Record]:
    """One Bernoulli trial: a packet with probability pir / packet_length."""
    if rng.random() >= spec.pir / spec.packet_length:
        return None
    return cycle, node, gen_destination(spec.pattern, node, rng, width, height), spec.packet_length


def generate_records(spec: TrafficSpec, width: int, height: int, seed: int,
                     cycles: Optional[int] = None) -> List[Record]:
    """
    Synthetic packets for ``[0, cycles)`` (default warmup + measure), sorted
    by (cycle, src).

    Each node gets its own generator from ``seed`` and draws geometric gaps,
    which is the same process as a Bernoulli trial per cycle. The stream
    depends only on the traffic parameters, so runs that differ only in
    faults or Trojans see identical offered traffic.
    """
    check_pattern(spec.pattern, width, height)
    if cycles is None:
        cycles = spec.warmup + spec.measure
    n = width * height
    p = spec.pir / spec.packet_length
    out: List[Record] = []
    children = np.random.SeedSequence(seed).spawn(n)
    for src in range(n):
        rng = np.random.default_rng(children[src])
        t = -1
        chunk = max(16, int(cycles * p * 1.2) + 16)
        while True:
            gaps = rng.geometric(p, size=chunk)
            times = t + np.cumsum(gaps)
            times = times[times < cycles]
            for c in times.tolist():
                out.append((c, src, gen_destination(spec.pattern, src, rng, width, height),
                            spec.packet_length))
            if len(times) < chunk:
                break
            t = int(times[-1])
    out.sort(key=lambda r: (r[0], r[1]))
    return out


def read_trace(path: Union[str, Path]) -> List[Record]:
    records = []
    last = -1
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            c, s, d, length = (int(v) for v in line.split())
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected 'cycle src dst length'") from None
        if c < last:
            raise ValueError(f"{path}:{lineno}: cycle {c} goes backwards")
        if s == d:
            raise ValueError(f"{path}:{lineno}: source equals destination")
        if length < 1:
            raise ValueError(f"{path}:{lineno}: length must be >= 1")
        last = c
        records.append((c, s, d, length))
    return records


def write_trace(path: Union[str, Path], records: Iterable[Record]):
    with open(path, "w") as f:
        f.write("# cycle src dst length\n")
        for rec in records:
            f.write("%d %d %d %d\n" % rec)
