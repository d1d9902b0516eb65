"""
Command-line entry point.

    sefarnoc simulate scenario.cfg [--seed N] [--log events.csv] [--out metrics.csv]
    sefarnoc simulate scenario.cfg --validate-only
    sefarnoc sweep plan.txt --out results/
    sefarnoc analyze trace.txt --plan-attack 5 [--mesh 8 8]

Exit status: 0 on success, 2 when a scenario fails validation, 3 on a
watchdog abort.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import ConfigError, load_config, load_plan
from .harness import (PLOT_METRICS, ScenarioError, emit_plotdata, metrics_csv, run_scenario,
                      run_sweep, validate, write_event_log)
from .metrics import TrafficProfile, plan_attack
from .network import Network, WatchdogAbort
from .topology import MeshTopology
from .traffic import read_trace

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_WATCHDOG = 0, 1, 2, 3


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    scenario = validate(cfg)
    if args.validate_only:
        print(f"{args.config}: ok ({len(scenario.records)} packets, "
              f"{len(scenario.topology.faulty_links())} faulty links, "
              f"{len(scenario.trojans)} trojans)")
        return EXIT_OK
    res = run_scenario(cfg, record_events=args.log is not None, scenario=scenario)
    if args.log:
        write_event_log(res.events, args.log)
    pir = 0.0 if cfg.traffic.trace else cfg.traffic.pir
    text = metrics_csv([res.report.csv_row(cfg.name or "scenario", cfg.seed, pir)])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    plan = load_plan(args.plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(name, pir, rep, report):
        logging.info("%s pir=%.4f rep=%d apl=%.2f", name, pir, rep, report.apl)

    res = run_sweep(plan, progress)
    (out / "metrics.csv").write_text(res.csv())
    if res.aborts:
        with open(out / "aborts.txt", "w") as f:
            for name, pir, rep, reason in res.aborts:
                f.write(f"{name} pir={pir} rep={rep}: {reason}\n")
    if res.rows:
        for metric in args.metrics:
            emit_plotdata(res.rows, metric, out / "plotdata")
    print(f"{len(res.rows)} rows, {len(res.aborts)} aborted cells -> {out}")
    return EXIT_WATCHDOG if res.aborts and not res.rows else EXIT_OK


def _cmd_analyze(args) -> int:
    records = read_trace(args.trace)
    if not records:
        raise ScenarioError("trace is empty")
    width, height = args.mesh
    topo = MeshTopology(width, height)
    net = Network(topo, watchdog=args.watchdog)
    net.run(records)
    net.check_conservation()
    profile = TrafficProfile.from_packets(topo, net.packets)
    print("rank,router,buffer,in_port,estimate,trigger_link")
    for i, c in enumerate(plan_attack(profile, args.plan_attack), 1):
        print(f"{i},{c.router},{c.buffer},{c.in_port.letter},{c.estimate:.6f},"
              f"{c.router}{c.trigger_port.letter}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sefarnoc", description="Fault-tolerant NoC simulator "
                                "with hardware-Trojan injection and buffer shuffling.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario file")
    s.add_argument("config")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.add_argument("--log", help="write the event log (CSV) here")
    s.add_argument("--out", help="write metrics CSV here instead of stdout")
    s.add_argument("--validate-only", action="store_true",
                   help="check reachability and routability, then exit")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("sweep", help="run an experiment plan")
    s.add_argument("plan")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--metrics", nargs="+", default=["apl", "plp"], choices=PLOT_METRICS,
                   help="series to emit as plot data (default: apl plp)")
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("analyze", help="profile a trace on a fault-free mesh and "
                       "rank Trojan insertion points")
    s.add_argument("trace")
    s.add_argument("--plan-attack", type=int, default=5, metavar="K")
    s.add_argument("--mesh", type=int, nargs=2, default=(8, 8), metavar=("W", "H"))
    s.add_argument("--watchdog", type=int, default=10_000)
    s.set_defaults(func=_cmd_analyze)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ConfigError) as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_INVALID
    except WatchdogAbort as e:
        print(f"watchdog abort: {e}", file=sys.stderr)
        return EXIT_WATCHDOG
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
