"""
Scenario and experiment-plan files.

Both are ``key = value`` text, one setting per line, ``#`` starts a comment.
``fault`` and ``trojan`` may repeat. Scenario keys::

    mesh = 8 8                    # width height
    vcs = 2                       # VCs per input buffer
    buffer_depth = 4              # flits per VC
    packet_length = 4
    routing = ftxy-lookahead
    misroute_budget = 8
    propagation_delay = 0         # LSR update delay for remote links, cycles
    fault = 9 E @0                # router, N|E|S|W, optional @cycle
    random_faults = 0.05          # extra faults: fraction of directed links
    fault_seed = 11               # seed for random_faults / auto trojans
    trojan = 9 4 en=0..           # router, buffer 1..5, kill-switch ranges
    auto_trojans = active         # none|dormant|active: one HT per faulty router
    sefar = on
    traffic = uniform             # uniform|transpose|shuffle|trace <file>
    pir = 0.1                     # flits/cycle/node
    warmup = 1000
    measure = 10000
    drain = on
    seed = 1
    watchdog = 10000              # cycles without flit movement before abort
    check_interval = 0            # full credit audit every N cycles (0 = off)
    energy = 1 0.2 0.6 1 2        # buffer-write route xbar link static

Plan files name a base scenario and the sweep::

    base = uniform.cfg            # relative to the plan file
    pir = 0.02 0.05 0.1
    configurations = fault-free faulty5-dormant faulty5-active
    repetitions = 1

and may override any scenario key (e.g. ``traffic = shuffle``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .metrics import EnergyModel
from .routing import DEFAULT_MISROUTE_BUDGET, ROUTING_POLICIES
from .topology import Port
from .traffic import PATTERNS, TrafficSpec
from .trojan import TrojanInstance, parse_enable


class ConfigError(ValueError):
    pass


AUTO_TROJAN_MODES = ("none", "dormant", "active")


@dataclass
class ScenarioConfig:
    width: int = 8
    height: int = 8
    vcs: int = 2
    buffer_depth: int = 4
    routing: str = "ftxy-lookahead"
    misroute_budget: int = DEFAULT_MISROUTE_BUDGET
    propagation_delay: int = 0
    faults: List[Tuple[int, Port, int]] = field(default_factory=list)
    random_faults: float = 0.0
    fault_seed: int = 0
    trojans: List[TrojanInstance] = field(default_factory=list)
    auto_trojans: str = "none"
    sefar: bool = False
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    seed: int = 1
    watchdog: int = 10_000
    check_interval: int = 0
    energy: EnergyModel = field(default_factory=EnergyModel)
    name: str = ""

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ConfigError("mesh must be at least 2x2")
        if self.vcs < 1 or self.buffer_depth < 1:
            raise ConfigError("vcs and buffer_depth must be positive")
        if self.routing not in ROUTING_POLICIES:
            raise ConfigError(f"unknown routing policy {self.routing!r}")
        if not 0 <= self.random_faults < 1:
            raise ConfigError("random_faults must be a fraction in [0, 1)")
        if self.auto_trojans not in AUTO_TROJAN_MODES:
            raise ConfigError(f"auto_trojans must be one of {AUTO_TROJAN_MODES}")


_BOOL = {"on": True, "off": False, "true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _bool(v: str) -> bool:
    try:
        return _BOOL[v.lower()]
    except KeyError:
        raise ConfigError(f"expected on/off, got {v!r}") from None


def parse_fault(value: str) -> Tuple[int, Port, int]:
    m = re.fullmatch(r"\s*(\d+)\s+([NESWnesw])\w*\s*(?:@\s*(\d+))?\s*", value)
    if not m:
        raise ConfigError(f"bad fault {value!r}; expected '<router> <N|E|S|W> [@cycle]'")
    return int(m.group(1)), Port.from_letter(m.group(2)), int(m.group(3) or 0)


def parse_trojan(value: str) -> TrojanInstance:
    m = re.fullmatch(r"\s*(\d+)\s+(\d+)(?:\s+en\s*=\s*(\S+))?\s*", value)
    if not m:
        raise ConfigError(f"bad trojan {value!r}; expected '<router> <buffer> en=<ranges>'")
    try:
        return TrojanInstance(int(m.group(1)), int(m.group(2)),
                              parse_enable(m.group(3) or "always"))
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        yield lineno, key.strip().lower(), value.strip()


_TRAFFIC_KEYS = {"traffic", "pir", "packet_length", "warmup", "measure", "drain"}


def apply_settings(cfg: ScenarioConfig, items: Sequence[Tuple[str, str]],
                   base_dir: Optional[Path] = None) -> ScenarioConfig:
    """Return a copy of ``cfg`` with ``(key, value)`` settings applied."""
    kw: Dict[str, object] = {}
    tkw: Dict[str, object] = {}
    faults = list(cfg.faults)
    trojans = list(cfg.trojans)
    for key, value in items:
        try:
            if key == "mesh":
                w, h = (int(v) for v in value.replace("x", " ").split())
                kw["width"], kw["height"] = w, h
            elif key in ("vcs", "buffer_depth", "misroute_budget", "propagation_delay",
                         "fault_seed", "seed", "watchdog", "check_interval"):
                kw[key] = int(value)
            elif key == "routing":
                kw["routing"] = value
            elif key == "fault":
                faults.append(parse_fault(value))
            elif key == "faults" and value.lower() == "none":
                faults = []
            elif key == "random_faults":
                kw["random_faults"] = float(value)
            elif key == "trojan":
                trojans.append(parse_trojan(value))
            elif key == "trojans" and value.lower() == "none":
                trojans = []
            elif key == "auto_trojans":
                kw["auto_trojans"] = value.lower()
            elif key == "sefar":
                kw["sefar"] = _bool(value)
            elif key == "name":
                kw["name"] = value
            elif key == "energy":
                vals = [float(v) for v in value.split()]
                if len(vals) != 5:
                    raise ConfigError("energy needs 5 coefficients")
                kw["energy"] = EnergyModel(*vals)
            elif key == "traffic":
                parts = value.split(None, 1)
                if parts[0] == "trace":
                    if len(parts) != 2:
                        raise ConfigError("traffic = trace <file>")
                    p = Path(parts[1])
                    if base_dir is not None and not p.is_absolute():
                        p = base_dir / p
                    tkw["trace"] = str(p)
                elif parts[0] in PATTERNS:
                    tkw["pattern"] = parts[0]
                    tkw["trace"] = None
                else:
                    raise ConfigError(f"unknown traffic {value!r}")
            elif key == "pir":
                tkw["pir"] = float(value)
            elif key in ("packet_length", "warmup", "measure"):
                tkw[key] = int(value)
            elif key == "drain":
                tkw["drain"] = _bool(value)
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"{key} = {value}: {e}") from None
    try:
        traffic = replace(cfg.traffic, **tkw)
        return replace(cfg, faults=faults, trojans=trojans, traffic=traffic, **kw)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def parse_config(text: str, base_dir: Optional[Path] = None) -> ScenarioConfig:
    items = []
    for lineno, key, value in _lines(text):
        items.append((key, value))
    try:
        return apply_settings(ScenarioConfig(), items, base_dir)
    except ConfigError as e:
        raise ConfigError(f"{e}") from None


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    cfg = parse_config(path.read_text(), path.parent)
    if not cfg.name:
        cfg.name = path.stem
    return cfg


def format_config(cfg: ScenarioConfig) -> str:
    """Serialize to the scenario format (auto-generated faults are not expanded)."""
    t = cfg.traffic
    lines = [
        f"mesh = {cfg.width} {cfg.height}",
        f"vcs = {cfg.vcs}",
        f"buffer_depth = {cfg.buffer_depth}",
        f"routing = {cfg.routing}",
        f"misroute_budget = {cfg.misroute_budget}",
        f"propagation_delay = {cfg.propagation_delay}",
    ]
    for node, port, cycle in cfg.faults:
        lines.append(f"fault = {node} {port.letter} @{cycle}")
    if cfg.random_faults:
        lines.append(f"random_faults = {cfg.random_faults}")
    lines.append(f"fault_seed = {cfg.fault_seed}")
    for tj in cfg.trojans:
        en = ",".join(f"{a}..{'' if b is None else b}" for a, b in tj.enable) or "never"
        lines.append(f"trojan = {tj.router} {tj.buffer} en={en}")
    lines += [
        f"auto_trojans = {cfg.auto_trojans}",
        f"sefar = {'on' if cfg.sefar else 'off'}",
        f"traffic = {'trace ' + t.trace if t.trace else t.pattern}",
        f"pir = {t.pir}",
        f"packet_length = {t.packet_length}",
        f"warmup = {t.warmup}",
        f"measure = {t.measure}",
        f"drain = {'on' if t.drain else 'off'}",
        f"seed = {cfg.seed}",
        f"watchdog = {cfg.watchdog}",
        f"check_interval = {cfg.check_interval}",
        "energy = " + " ".join(str(v) for v in (
            cfg.energy.e_buffer_write, cfg.energy.e_route, cfg.energy.e_xbar,
            cfg.energy.e_link, cfg.energy.p_static)),
    ]
    return "\n".join(lines) + "\n"


CONFIG_RE = re.compile(r"^(fault-free|faulty(\d+)-(dormant|active))$")


@dataclass
class ExperimentPlan:
    base: ScenarioConfig
    pirs: List[float]
    configurations: List[str] = field(default_factory=lambda: [
        "fault-free", "faulty5-dormant", "faulty5-active",
        "faulty10-dormant", "faulty10-active"])
    repetitions: int = 1

    def __post_init__(self):
        if not self.pirs:
            raise ConfigError("a sweep needs at least one pir")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        for c in self.configurations:
            if not CONFIG_RE.match(c):
                raise ConfigError(f"unknown configuration {c!r}")


def parse_plan(text: str, base_dir: Optional[Path] = None) -> ExperimentPlan:
    base = ScenarioConfig()
    overrides = []
    pirs: List[float] = []
    configs = None
    reps = 1
    for lineno, key, value in _lines(text):
        if key == "base":
            p = Path(value)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            base = load_config(p)
        elif key == "pir":
            pirs = [float(v) for v in value.replace(",", " ").split()]
        elif key == "configurations":
            configs = value.replace(",", " ").split()
        elif key == "repetitions":
            reps = int(value)
        else:
            overrides.append((key, value))
    base = apply_settings(base, overrides, base_dir)
    kw = {} if configs is None else {"configurations": configs}
    return ExperimentPlan(base, pirs, repetitions=reps, **kw)


def load_plan(path: Union[str, Path]) -> ExperimentPlan:
    path = Path(path)
    return parse_plan(path.read_text(), path.parent)
