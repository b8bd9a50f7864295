import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import rhckit.sim
from rhckit.bench import run_bench, write_bench
from rhckit.cli import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_VIOLATED,
                        main, parse_strategy_arg)
from rhckit.constraints import GCBF, Pointwise
from rhckit.dynamics import ConstantProfile
from rhckit.ocp import OCPResult, OPTIMAL
from rhckit.scenario_io import (ScenarioError, load_grid, load_scenario,
                                parse_scenario, scenario_to_dict)
from rhckit.sim import Scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "src/rhckit/scenarios"


def minimal_doc():
    return {
        "plant": "acc",
        "disturbance": {"type": "constant", "speed": 15.0},
        "strategy": {"name": "gcbf", "lambda": 0.1, "m": 2},
        "simulation": {"initial_state": [0.0, 0.0, 0.0], "steps": 5,
                       "horizon": 10},
    }


# ---------------------------------------------------------------------------
# scenario documents
# ---------------------------------------------------------------------------

def test_minimal_document_parses_with_defaults():
    s = parse_scenario(minimal_doc())
    assert s.params.r == 0.054
    assert s.cparams.ds0 == 5.0
    assert s.N == 10 and s.steps == 5


def test_unknown_keys_rejected_with_path():
    doc = minimal_doc()
    doc["strategy"]["lambda_"] = 0.1
    with pytest.raises(ScenarioError, match=r"lambda_.*strategy"):
        parse_scenario(doc)
    doc2 = minimal_doc()
    doc2["typo_section"] = {}
    with pytest.raises(ScenarioError, match="typo_section"):
        parse_scenario(doc2)
    doc3 = minimal_doc()
    doc3["params"] = {"tau": 1.0}
    with pytest.raises(ScenarioError, match=r"tau.*params"):
        parse_scenario(doc3)


def test_bad_values_rejected():
    doc = minimal_doc()
    doc["strategy"] = {"name": "gcbf", "lambda": 1.5, "m": 2}
    with pytest.raises(ScenarioError):
        parse_scenario(doc)
    doc = minimal_doc()
    doc["strategy"] = {"name": "banana"}
    with pytest.raises(ScenarioError, match="strategy.name"):
        parse_scenario(doc)
    doc = minimal_doc()
    doc["simulation"]["initial_state"] = [0.0, "x", 0.0]
    with pytest.raises(ScenarioError, match="initial_state"):
        parse_scenario(doc)
    doc = minimal_doc()
    del doc["simulation"]["initial_state"]
    with pytest.raises(ScenarioError, match="initial_state"):
        parse_scenario(doc)


def test_shipped_scenarios_round_trip():
    for name in ("acc_gcbf", "acc_ptw50", "acc_ptw10", "acc_mscbf",
                 "braking_gcbf"):
        s, doc = load_scenario(SCENARIOS / f"{name}.json")
        again = parse_scenario(scenario_to_dict(s))
        assert again == s, name


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"plant": "acc",\n  "strategy": }\n')
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario(p)


def test_grid_section(tmp_path):
    grid, scenario, _ = load_grid(SCENARIOS / "acc_ptw10.json")
    assert grid.n_delta_d == 41 and grid.n_delta_v == 41
    assert grid.steps == 150
    doc = minimal_doc()
    p = tmp_path / "nogrid.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ScenarioError, match="grid"):
        load_grid(p)


# ---------------------------------------------------------------------------
# CLI commands and exit codes
# ---------------------------------------------------------------------------

def test_parse_strategy_arg():
    assert parse_strategy_arg("pointwise:50") == Pointwise(50)
    assert parse_strategy_arg("gcbf:0.01:2") == GCBF(0.01, 2)
    assert parse_strategy_arg("gcbf:0.5") == GCBF(0.5, 2)
    with pytest.raises(ScenarioError):
        parse_strategy_arg("nope:1")
    with pytest.raises(ScenarioError):
        parse_strategy_arg("gcbf")


def _write(tmp_path, doc, name="scen.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_cmd_run_exit_codes(tmp_path):
    # completed scenario -> 0
    doc = minimal_doc()
    doc["simulation"]["steps"] = 10
    p = _write(tmp_path, doc)
    assert main(["run", str(p), "--out-dir", str(tmp_path / "out")]) == \
        EXIT_OK
    assert (tmp_path / "out" / "scen_log.csv").exists()
    assert (tmp_path / "out" / "scen_summary.json").exists()
    # infeasible braking scenario -> 3
    doc_inf = {
        "plant": "braking",
        "strategy": {"name": "pointwise", "n_c": 5},
        "simulation": {"initial_state": [0.1, 10.0], "steps": 5,
                       "horizon": 10},
    }
    p_inf = _write(tmp_path, doc_inf, "inf.json")
    assert main(["run", str(p_inf), "--out-dir", str(tmp_path / "out")]) == \
        EXIT_INFEASIBLE
    # --relax pushes the same run through to its actual violation
    assert main(["run", str(p_inf), "--out-dir", str(tmp_path / "out"),
                 "--relax"]) == EXIT_VIOLATED
    # violated scenario -> 2 (unsafe start, flagged)
    doc_v = minimal_doc()
    doc_v["simulation"]["initial_state"] = [-15.0, 0.0, 0.0]
    doc_v["simulation"]["allow_unsafe_start"] = True
    doc_v["strategy"] = {"name": "gcbf", "lambda": 0.01, "m": 2}
    p_v = _write(tmp_path, doc_v, "v.json")
    assert main(["run", str(p_v), "--out-dir", str(tmp_path / "out")]) == \
        EXIT_VIOLATED
    # nonexistent path -> 4
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    # malformed -> 4
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["run", str(bad)]) == EXIT_CONFIG


def test_cmd_run_overrides(tmp_path):
    doc = minimal_doc()
    doc["simulation"]["steps"] = 300
    p = _write(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out-dir", str(out), "--steps", "4",
                 "--max-iter", "50"]) == EXIT_OK
    summary = json.loads((out / "scen_summary.json").read_text())
    assert summary["steps_completed"] == 4


def test_cmd_map_outputs(tmp_path):
    doc = minimal_doc()
    doc["simulation"]["steps"] = 10
    doc["grid"] = {"delta_d": [-2.0, 6.0], "delta_v": [-1.0, 1.0],
                   "n_delta_d": 3, "n_delta_v": 3, "steps": 10}
    p = _write(tmp_path, doc)
    out = tmp_path / "out"
    # two strategies -> 2 map files + 1 comparison
    assert main(["map", str(p), "--out-dir", str(out),
                 "--strategy", "gcbf:0.1:2",
                 "--strategy", "pointwise:10"]) == EXIT_OK
    maps = sorted(out.glob("*_map.csv"))
    assert len(maps) == 2
    comps = sorted(out.glob("*_vs_*.json"))
    assert len(comps) == 1
    comp = json.loads(comps[0].read_text())
    assert set(comp) == {"strategy_a", "strategy_b", "feasible_a",
                         "feasible_b", "only_a", "only_b", "difference"}
    # single strategy -> map only, no comparison
    out2 = tmp_path / "out2"
    assert main(["map", str(p), "--out-dir", str(out2),
                 "--strategy", "gcbf:0.1:2"]) == EXIT_OK
    assert len(list(out2.glob("*_map.csv"))) == 1
    assert len(list(out2.glob("*_vs_*.json"))) == 0
    # grid required
    doc2 = minimal_doc()
    p2 = _write(tmp_path, doc2, "nogrid.json")
    assert main(["map", str(p2), "--out-dir", str(out)]) == EXIT_CONFIG


def test_cmd_bench_outputs(tmp_path):
    doc = minimal_doc()
    doc["simulation"]["steps"] = 8
    p = _write(tmp_path, doc)
    out = tmp_path / "out"
    rc = main(["bench", str(p), "--out-dir", str(out),
               "--strategy", "pointwise:10", "--strategy", "gcbf:0.1:2",
               "--repetitions", "3"])
    assert rc == EXIT_OK
    report = json.loads((p.parent / "out" / "scen_bench.json").read_text())
    assert report["baseline"] == "pointwise_10"
    entry = report["entries"]["pointwise_10"]
    # repetitions=3: every statistic over >= 3 x steps samples
    assert entry["samples"] >= 3 * 8
    assert "gcbf_m2_0.1" in report["reductions_vs_baseline"]
    assert (out / "scen_bench.csv").exists()
    # fewer than two strategies is a configuration error
    assert main(["bench", str(p), "--out-dir", str(out),
                 "--strategy", "pointwise:10"]) == EXIT_CONFIG


# ---------------------------------------------------------------------------
# bench internals
# ---------------------------------------------------------------------------

def bench_scenario(steps=6):
    return Scenario(plant="acc", x0=(0.0, 0.0, 0.0), strategy=GCBF(0.1, 2),
                    profile=ConstantProfile(15.0), steps=steps)


def test_bench_requires_three_repetitions():
    with pytest.raises(ValueError):
        run_bench(bench_scenario(), [Pointwise(10), GCBF(0.1, 2)],
                  repetitions=2)


def test_bench_self_comparison_reports_noise_band():
    report = run_bench(bench_scenario(), [GCBF(0.1, 2), GCBF(0.1, 2)],
                       repetitions=3)
    # identical labels merge; no reduction row for the baseline itself
    assert list(report.entries) == ["gcbf_m2_0.1"]
    assert report.reductions == {}
    # benchmarking equivalent problems under distinct labels reports the
    # reduction (the noise band) without asserting its sign
    from rhckit.constraints import SingleStepCBF
    rep2 = run_bench(bench_scenario(), [GCBF(0.1, 1), SingleStepCBF(0.1)],
                     repetitions=3)
    assert "singlestep_cbf_0.1" in rep2.reductions
    assert abs(rep2.reductions["singlestep_cbf_0.1"]) < 1.0


def test_bench_inequality_counts():
    report = run_bench(bench_scenario(), [Pointwise(50), GCBF(0.1, 2)],
                       repetitions=3)
    assert report.entries["pointwise_50"].inequality_count == 50
    assert report.entries["gcbf_m2_0.1"].inequality_count == 1


def test_bench_timing_excludes_harness_overhead(monkeypatch, tmp_path):
    # a stub solver that burns a known amount of time: the report must
    # reflect the stub's own busy time, not harness/IO overhead
    busy_ms = 3.0
    spent = []

    def stub(ocp, warm_start=None, settings=None, warm_working_set=()):
        t0 = time.perf_counter()
        while (time.perf_counter() - t0) * 1e3 < busy_ms:
            pass
        dt = time.perf_counter() - t0
        spent.append(dt)
        return OCPResult(
            verdict=OPTIMAL, u=np.zeros(ocp.N),
            trajectory=np.zeros((ocp.N + 1, ocp.nx)), objective=0.0,
            max_violation=0.0, kkt_residual=0.0, iterations=1,
            solve_time=dt, multipliers=np.zeros(ocp.n_ineq),
            bound_mult_lower=np.zeros(ocp.N), bound_mult_upper=np.zeros(ocp.N),
            active_set=())

    monkeypatch.setattr(rhckit.sim, "solve_sqp", stub)
    report = run_bench(bench_scenario(steps=10), [GCBF(0.1, 2)],
                       repetitions=3)
    entry = report.entries["gcbf_m2_0.1"]
    true_mean = float(np.mean(spent)) * 1e3
    assert entry.samples == 30
    # reported statistic within 1% of the stub's self-measured time
    assert abs(entry.mean_ms - true_mean) / true_mean < 0.01


def test_bench_write(tmp_path):
    report = run_bench(bench_scenario(), [Pointwise(10), GCBF(0.1, 2)],
                       repetitions=3)
    write_bench(report, tmp_path / "b.json", tmp_path / "b.csv")
    doc = json.loads((tmp_path / "b.json").read_text())
    assert doc["repetitions"] == 3
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header == ("strategy,inequality_count,samples,mean_ms,median_ms,"
                      "p95_ms,mean_iterations,reduction_vs_baseline")


# ---------------------------------------------------------------------------
# shipped scenario suite
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name,expected", [
    ("acc_gcbf", EXIT_OK),
    ("acc_ptw50", EXIT_OK),
    ("acc_mscbf", EXIT_OK),
    ("braking_gcbf", EXIT_OK),
    ("acc_ptw10", EXIT_INFEASIBLE),
])
def test_shipped_suite_exit_codes(tmp_path, name, expected):
    rc = main(["run", str(SCENARIOS / f"{name}.json"),
               "--out-dir", str(tmp_path)])
    assert rc == expected, name


def test_bench_marks_unavailable_strategy():
    # a strategy invalid for the scenario produces no samples and is marked
    # unavailable; the other entries are still reported
    report = run_bench(bench_scenario(), [GCBF(0.1, 2), GCBF(0.5, 60)],
                       repetitions=3)
    assert report.entries["gcbf_m60_0.5"].available is False
    assert report.entries["gcbf_m2_0.1"].available is True
    assert math.isnan(report.reductions["gcbf_m60_0.5"])
