import csv
from dataclasses import replace
from pathlib import Path

import pytest

from sefarnoc.cli import main
from sefarnoc.config import ExperimentPlan, ScenarioConfig, load_config, parse_config
from sefarnoc.harness import (ScenarioError, configure, drop_ratio_sweep, emit_plotdata,
                              random_fault_set, read_metrics_csv, run_scenario, run_sweep,
                              validate)
from sefarnoc.routing import route_walk, strandable_sources
from sefarnoc.topology import MeshTopology, Port
from sefarnoc.traffic import TrafficSpec
from sefarnoc.trojan import TrojanInstance

SCEN = Path(__file__).resolve().parent.parent / "scenarios"


def small(**kw) -> ScenarioConfig:
    t = TrafficSpec(pir=0.05, warmup=100, measure=400)
    return replace(ScenarioConfig(width=4, height=4, traffic=t, seed=5, check_interval=50), **kw)


def test_unreachable_pair_rejected():
    cfg = small(faults=[(5, p, 0) for p in (Port.NORTH, Port.EAST, Port.SOUTH, Port.WEST)])
    with pytest.raises(ScenarioError) as exc:
        validate(cfg)
    assert exc.value.pairs and all(s == 5 for s, _ in exc.value.pairs)


def test_bad_trojans_rejected():
    with pytest.raises(ScenarioError):
        validate(small(trojans=[TrojanInstance(99, 1)]))
    with pytest.raises(ScenarioError):
        validate(small(trojans=[TrojanInstance(3, 1), TrojanInstance(3, 1)]))


def test_sefar_is_transparent_without_active_trojans():
    off = run_scenario(small(random_faults=0.05, fault_seed=2)).report
    on = run_scenario(small(random_faults=0.05, fault_seed=2, sefar=True,
                            auto_trojans="dormant")).report
    assert off.csv_row("x", 0, 0) == on.csv_row("x", 0, 0)


def test_random_faults_nested_and_routable():
    small5 = random_fault_set(6, 6, 0.05, seed=4)
    small10 = random_fault_set(6, 6, 0.10, seed=4)
    assert len(small5) == round(0.05 * 120) and small10[:len(small5)] == small5
    topo = MeshTopology(6, 6)
    for node, port in small10:
        topo.inject_fault(node, port)
    assert all(route_walk(topo, s, d) is not None
               for s in range(36) for d in range(36) if s != d)
    assert not any(strandable_sources(topo, d)[0] for d in range(36))


def test_configure_names():
    base = small(seed=10)
    ff = configure(base, "fault-free", 0.03, 1)
    assert ff.random_faults == 0 and ff.auto_trojans == "none" and ff.seed == 10 + 7919
    act = configure(base, "faulty10-active", 0.03, 0)
    assert act.random_faults == 0.10 and act.auto_trojans == "active"
    assert act.traffic.pir == 0.03


def test_sweep_rows_plotdata_and_determinism(tmp_path):
    plan = ExperimentPlan(small(sefar=True, fault_seed=1), [0.02, 0.04],
                          ["fault-free", "faulty5-dormant", "faulty5-active"], repetitions=2)
    a = run_sweep(plan)
    b = run_sweep(plan)
    assert len(a.rows) == 3 * 2 * 2 and not a.aborts
    assert a.csv() == b.csv()
    rows = read_metrics_csv(a.csv())
    assert {r["config"] for r in rows} == {"fault-free", "faulty5-dormant", "faulty5-active"}
    assert all(r["dropped"] == "0" for r in rows)
    series = emit_plotdata(a.rows, "apl", tmp_path)
    assert [p for p, _ in series["fault-free"]] == [0.02, 0.04]
    lines = (tmp_path / "faulty5-active_apl.txt").read_text().splitlines()
    assert len(lines) == 2 and len(lines[0].split()) == 2
    with pytest.raises(ValueError):
        emit_plotdata(a.rows, "colour")
    with pytest.raises(ValueError):
        emit_plotdata([], "apl")


def test_sweep_logs_aborted_cells():
    # a 2-VC 4x4 mesh at full load with faults and a tiny watchdog will not finish
    base = small(watchdog=5, traffic=TrafficSpec(pir=0.9, warmup=50, measure=200))
    plan = ExperimentPlan(base, [0.9], ["faulty10-dormant"])
    res = run_sweep(plan)
    assert len(res.rows) + len(res.aborts) == 1


def test_drop_ratio_sweep():
    cfg = small()
    lo, mean, hi, ratios = drop_ratio_sweep(cfg, [[], [TrojanInstance(5, 1, [(0, None)])]])
    assert ratios == [0.0, 0.0]  # no faulty link, so the Trojan never fires
    cfg = small(faults=[(5, Port.EAST, 0)])
    _, _, hi, ratios = drop_ratio_sweep(cfg, [[TrojanInstance(5, 5, [(0, None)])]])
    assert ratios[0] > 0
    with pytest.raises(ValueError):
        drop_ratio_sweep(cfg, [])


# -- command line ---------------------------------------------------------------


def test_cli_attack_and_mitigation(tmp_path, capsys):
    assert main(["simulate", str(SCEN / "attack4x4.cfg")]) == 0
    row = list(csv.DictReader(capsys.readouterr().out.splitlines()))[0]
    assert (row["injected"], row["delivered"], row["dropped"]) == ("10", "5", "5")
    log = tmp_path / "ev.csv"
    out = tmp_path / "m.csv"
    assert main(["simulate", str(SCEN / "shield4x4.cfg"), "--log", str(log),
                 "--out", str(out)]) == 0
    row = read_metrics_csv(out.read_text())[0]
    assert (row["delivered"], row["dropped"]) == ("10", "0")
    kinds = [r["event"] for r in csv.DictReader(log.open())]
    assert kinds.index("au_flag") < kinds.index("cu_shift") < kinds.index("migrate")


def test_cli_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("mesh = 4 4\nfault = 5 N\nfault = 5 E\nfault = 5 S\nfault = 5 W\n"
                   "pir = 0.05\nwarmup = 10\nmeasure = 500\n")
    assert main(["simulate", str(bad), "--validate-only"]) == 2
    assert "5->" in capsys.readouterr().err
    assert main(["simulate", str(SCEN / "attack4x4.cfg"), "--validate-only"]) == 0
    (tmp_path / "typo.cfg").write_text("mesh = 4 4\ncolour = red\n")
    assert main(["simulate", str(tmp_path / "typo.cfg")]) == 2
    assert main(["simulate", str(tmp_path / "missing.cfg")]) == 1


def test_cli_sweep(tmp_path):
    (tmp_path / "b.cfg").write_text("mesh = 4 4\nwarmup = 50\nmeasure = 200\nsefar = on\n")
    (tmp_path / "p.plan").write_text("base = b.cfg\npir = 0.02\n"
                                     "configurations = fault-free faulty5-active\n")
    out = tmp_path / "res"
    assert main(["sweep", str(tmp_path / "p.plan"), "--out", str(out)]) == 0
    assert len(read_metrics_csv((out / "metrics.csv").read_text())) == 2
    assert (out / "plotdata" / "faulty5-active_plp.txt").exists()
    first = (out / "metrics.csv").read_bytes()
    assert main(["sweep", str(tmp_path / "p.plan"), "--out", str(out)]) == 0
    assert (out / "metrics.csv").read_bytes() == first


def test_cli_analyze(capsys):
    assert main(["analyze", str(SCEN / "attack4x4.trace"), "--plan-attack", "3",
                 "--mesh", "4", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank,router,buffer,in_port,estimate,trigger_link"
    assert len(lines) == 4
    # every packet starts at router 8, so its local buffer tops the list
    assert lines[1].startswith("1,8,5,L,1.000000")


def test_scenario_files_load():
    cfg = load_config(SCEN / "uniform.cfg")
    assert cfg.width == 8 and cfg.sefar
    assert parse_config("traffic = shuffle").traffic.pattern == "shuffle"
