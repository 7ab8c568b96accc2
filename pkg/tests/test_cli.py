import json
import subprocess
import sys
from pathlib import Path

import pytest

from adot import cli
from adot.errors import NumericalFailure

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def run(capsys, *args):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def report(capsys, *args):
    code, out, err = run(capsys, *args)
    assert code == 0, err
    return json.loads(out)


def gap_args(mode):
    return ["solve", "--mode", mode, "--marginals", SAMPLES / "mu.json", "--marginals", SAMPLES / "nu.json",
            "--cost", SAMPLES / "terminal_cost.json"]


def test_solve_gap_instance(capsys):
    bi = report(capsys, *gap_args("bicausal"))
    assert bi["value"] == pytest.approx(1.0)
    assert bi["diagnostics"]["duality_gap"] <= 1e-8
    ca = report(capsys, *gap_args("causal"))
    assert ca["value"] == pytest.approx(0.0, abs=1e-12)
    for r in (bi, ca):
        d = r["diagnostics"]
        assert {"duality_gap", "max_constraint_residual", "lp_iterations", "wall_time_ms"} <= d.keys()
        assert set(r["inputs"]) == {str(SAMPLES / n) for n in ("mu.json", "nu.json", "terminal_cost.json")}


def test_solve_lp_method_and_payloads(capsys):
    r = report(capsys, *gap_args("bicausal"), "--method", "lp", "--dual", "--coupling")
    assert r["value"] == pytest.approx(1.0)
    assert r["dual"]["mode"] == "bicausal"
    assert sum(e["p"] for e in r["coupling"]["mass"]) == pytest.approx(1.0)


def test_reports_are_deterministic(capsys):
    a = report(capsys, *gap_args("bicausal"), "--dual", "--coupling")
    b = report(capsys, *gap_args("bicausal"), "--dual", "--coupling")
    a["diagnostics"].pop("wall_time_ms")
    b["diagnostics"].pop("wall_time_ms")
    assert cli.dumps(a) == cli.dumps(b)


def test_missing_cost_entry_exit_code(capsys, tmp_path):
    bad = tmp_path / "cost.json"
    bad.write_text(json.dumps({"type": "table", "entries": [{"paths": ["x11", "yu"], "c": 0}]}))
    code, out, err = run(capsys, "solve", "--mode", "causal", "--marginals", SAMPLES / "mu.json",
                         "--marginals", SAMPLES / "nu.json", "--cost", bad)
    assert code == 1
    assert json.loads(err)["error"] == "MissingCostEntry"


def test_usage_and_malformed_exit_one(capsys, tmp_path):
    code, _, _ = run(capsys, "solve", "--mode", "sideways", "--marginals", SAMPLES / "mu.json",
                     "--cost", SAMPLES / "lp1.json")
    assert code == 1
    broken = tmp_path / "p.json"
    broken.write_text("{")
    code, _, err = run(capsys, "validate", "--process", broken)
    assert code == 1 and json.loads(err)["error"] == "MalformedInput"


def test_numerical_failure_exit_two(capsys, monkeypatch):
    import adot.causal_solver as cs

    def boom(*a, **k):
        raise NumericalFailure("cycling guard exceeded")

    monkeypatch.setattr(cs, "solve_adapted_lp", boom)
    code, _, err = run(capsys, *gap_args("causal"))
    assert code == 2 and json.loads(err)["error"] == "NumericalFailure"


def test_hedge_separable(capsys, tmp_path):
    from adot.process import read_process
    A, B = read_process(SAMPLES / "asset_a.json"), read_process(SAMPLES / "asset_b.json")
    f = {lid: float(v[-1, 0]) ** 2 for lid, v in zip(A.leaf_ids, A.leaf_values)}
    g = {lid: abs(float(v[-1, 0])) for lid, v in zip(B.leaf_ids, B.leaf_values)}
    pay = tmp_path / "pay.json"
    pay.write_text(json.dumps({"entries": [{"paths": [a, b], "xi": f[a] + g[b]} for a in f for b in g]}))
    r = report(capsys, "hedge", "--marginals", SAMPLES / "asset_a.json", "--marginals", SAMPLES / "asset_b.json",
               "--payoff", pay)
    expect = float(A.leaf_probs @ list(f.values()) + B.leaf_probs @ list(g.values()))
    assert r["price"] == pytest.approx(expect)
    assert r["strategy"]["p0"] == pytest.approx(expect)
    assert r["verification"]["ok"]
    assert r["worst_case_model"]["mass"]


def test_hedge_sample(capsys):
    r = report(capsys, "hedge", "--marginals", SAMPLES / "asset_a.json", "--marginals", SAMPLES / "asset_b.json",
               "--payoff", SAMPLES / "basket_call.json")
    assert r["verification"]["ok"] and r["diagnostics"]["duality_gap"] <= 1e-7


def test_polar_empty_event(capsys):
    r = report(capsys, "polar", "--marginals", SAMPLES / "mu.json", "--marginals", SAMPLES / "nu.json",
               "--event", SAMPLES / "empty_event.json")
    assert r["value"] == 0.0 and r["polar"]
    assert r["certificate"]["initial_sets"] == [["x1", "x2"], ["y0"]]


def test_polar_charged_event(capsys, tmp_path):
    ev = tmp_path / "e.json"
    ev.write_text(json.dumps({"tuples": [["x11", "yu"]]}))
    r = report(capsys, "polar", "--mode", "causal", "--marginals", SAMPLES / "mu.json",
               "--marginals", SAMPLES / "nu.json", "--event", ev)
    assert r["value"] == pytest.approx(0.5) and not r["polar"] and "certificate" not in r


def test_barycenter_command(capsys):
    r = report(capsys, "barycenter", "--marginals", SAMPLES / "mu.json", "--marginals", SAMPLES / "nu.json",
               "--cost", SAMPLES / "lp1.json", "--candidates", SAMPLES / "candidates.json")
    assert sum(r["nu"].values()) == pytest.approx(1.0)
    assert r["diagnostics"]["duality_gap"] <= 1e-7 and r["diagnostics"]["congruency"] <= 1e-8


def test_canonicalize_duplicate_branch(capsys, tmp_path):
    out = tmp_path / "merged.json"
    r = report(capsys, "canonicalize", "--process", SAMPLES / "duplicate_branch.json", "--out", out)
    assert r["aw_to_original"] == 0.0
    assert (r["nodes_before"], r["nodes_after"]) == (4, 2)
    merged = json.loads(out.read_text())
    assert len(merged["nodes"]) == 2


def test_validate_with_coupling(capsys, tmp_path):
    cp = tmp_path / "c.json"
    cp.write_text(json.dumps({"marginals": ["mu.json", "nu.json"],
                              "mass": [{"paths": ["x11", "yu"], "p": 0.5}, {"paths": ["x22", "yd"], "p": 0.5}]}))
    r = report(capsys, "validate", "--process", SAMPLES / "mu.json", "--process", SAMPLES / "nu.json",
               "--coupling", cp)
    assert r["coupling"]["causal"]["ok"] and not r["coupling"]["anticausal"]["ok"]
    assert [p["leaves"] for p in r["processes"]] == [2, 2]


def test_selftest_seeded(capsys, monkeypatch):
    monkeypatch.setenv("ADOT_SEED", "5")
    a = report(capsys, "--threads", "2", "selftest", "--count", "5")
    b = report(capsys, "selftest", "--count", "5")
    assert a["ok"] and a["seed"] == 5
    assert a["diagnostics"]["max_dp_lp_difference"] == b["diagnostics"]["max_dp_lp_difference"]


def test_tolerance_flag_is_reported(capsys):
    r = report(capsys, "--tol", "1e-6", *gap_args("causal"))
    assert r["tolerance"] == 1e-6


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "adot.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "solve" in out.stdout
