import json

import pytest

from rawtime.cli import main
from rawtime.distribution import load_distribution
from rawtime.manifest import load_manifest


def run(tmp_path, *args):
    return main([str(a) for a in args])


def test_model_single_station_uniform(tmp_path, capsys):
    out = tmp_path / "m1"
    assert main(["model", "--n", "1", "--paper-params", "--out", str(out)]) == 0
    dist = load_distribution(f"{out}.pa.csv")
    assert dist.atoms == pytest.approx({k * 52 + 2184: 1 / 16 for k in range(16)})
    manifest = load_manifest(f"{out}.pa.csv")
    assert manifest["params"]["cw_min"] == 16
    assert manifest["source"] == "model"
    quantiles = (tmp_path / "m1.quantiles.csv").read_text().splitlines()
    assert quantiles[0] == "distribution,q,duration_us"
    assert f"pa,0.5,{7 * 52 + 2184}" in quantiles


def test_model_rerun_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert main(["model", "--n", "7", "--paper-params", "--format", "json",
                     "--out", str(out)]) == 0
    assert (tmp_path / "a.pa.json").read_bytes() == (tmp_path / "b.pa.json").read_bytes()
    assert (tmp_path / "a.pb.json").read_bytes() == (tmp_path / "b.pb.json").read_bytes()


def test_model_missing_flags_is_usage_error(tmp_path, capsys):
    assert main(["model", "--n", "1", "--out", str(tmp_path / "x")]) == 1
    assert "--paper-params" in capsys.readouterr().err


def test_model_truncation_exit_code(tmp_path, capsys):
    out = tmp_path / "trunc"
    code = main(["model", "--n", "2", "--cw-min", "16", "--cw-max", "16",
                 "--retry-limit", "2", "--te-us", "52", "--ts-us", "2184",
                 "--tc-us", "2184", "--t-max-cap", "4", "--out", str(out)])
    assert code == 2
    assert "t_max_cap" in capsys.readouterr().err


def test_simulate_deterministic_files(tmp_path):
    args = ["simulate", "--n", "3", "--paper-params", "--runs", "5000", "--seed", "21"]
    assert main(args + ["--out", str(tmp_path / "s1")]) == 0
    assert main(args + ["--out", str(tmp_path / "s2")]) == 0
    assert (tmp_path / "s1.pa.csv").read_bytes() == (tmp_path / "s2.pa.csv").read_bytes()
    assert (tmp_path / "s1.pb.csv").read_bytes() == (tmp_path / "s2.pb.csv").read_bytes()


def test_compare_model_vs_simulation_single_station(tmp_path, capsys):
    model_out = tmp_path / "model"
    sim_out = tmp_path / "sim"
    assert main(["model", "--n", "1", "--paper-params", "--out", str(model_out)]) == 0
    assert main(["simulate", "--n", "1", "--paper-params", "--runs", "1000000",
                 "--seed", "5", "--out", str(sim_out)]) == 0
    report = tmp_path / "report.json"
    code = main(["compare", f"{model_out}.pa.csv", f"{sim_out}.pa.csv",
                 "--report", str(report)])
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["passed"]
    assert payload["kolmogorov_distance"] < 0.005


def test_compare_rejects_mismatched_population(tmp_path, capsys):
    assert main(["model", "--n", "2", "--paper-params", "--out", str(tmp_path / "m2")]) == 0
    assert main(["simulate", "--n", "3", "--paper-params", "--runs", "1000",
                 "--seed", "1", "--out", str(tmp_path / "s3")]) == 0
    code = main(["compare", f"{tmp_path}/m2.pa.csv", f"{tmp_path}/s3.pa.csv"])
    assert code == 1
    assert "n_stations" in capsys.readouterr().err


def test_compare_requires_model_then_simulation(tmp_path, capsys):
    assert main(["model", "--n", "2", "--paper-params", "--out", str(tmp_path / "mm")]) == 0
    code = main(["compare", f"{tmp_path}/mm.pa.csv", f"{tmp_path}/mm.pb.csv"])
    assert code == 1


def test_compare_tolerance_failure_exit_code(tmp_path, capsys):
    assert main(["model", "--n", "7", "--paper-params", "--out", str(tmp_path / "m7")]) == 0
    assert main(["simulate", "--n", "7", "--paper-params", "--runs", "2000",
                 "--seed", "9", "--out", str(tmp_path / "s7")]) == 0
    code = main(["compare", f"{tmp_path}/m7.pa.csv", f"{tmp_path}/s7.pa.csv",
                 "--tolerance", "0.0001"])
    assert code == 2
    assert "FAIL" in capsys.readouterr().out


def test_plan_writes_mixture_and_decision(tmp_path):
    out = tmp_path / "plan"
    assert main(["plan", "--n", "4", "--p", "0.5", "--q", "0.9", "--paper-params",
                 "--out", str(out)]) == 0
    decision = json.loads((tmp_path / "plan.plan.json").read_text())
    assert decision["standard_compliant"] is True
    assert decision["slot_duration_us"] > 0
    cdf = (tmp_path / "plan.cdf.csv").read_text().splitlines()
    assert cdf[0] == "duration_us,cumulative_probability"
    mixture = load_distribution(f"{out}.mixture.csv")
    assert 0.99 < mixture.total_mass <= 1.0


def test_plan_unsatisfiable_exit_code(tmp_path, capsys):
    # retry limit 1 with tiny windows: delivery probability far below the target
    code = main(["plan", "--n", "8", "--p", "1.0", "--q", "0.999",
                 "--cw-min", "2", "--cw-max", "2", "--retry-limit", "1",
                 "--te-us", "52", "--ts-us", "2184", "--tc-us", "2184",
                 "--out", str(tmp_path / "bad")])
    assert code == 3
    assert "achievable" in capsys.readouterr().err


def test_groups_sweep_csv_schema(tmp_path):
    out = tmp_path / "grp"
    assert main(["groups", "--n", "12", "--p", "0.5", "--q", "0.9", "--g-min", "1",
                 "--g-max", "4", "--paper-params", "--out", str(out)]) == 0
    lines = (tmp_path / "grp.groups.csv").read_text().splitlines()
    assert lines[0] == "g,group_size,slot_us,total_us,compliant"
    assert len(lines) == 5
    best = json.loads((tmp_path / "grp.best.json").read_text())
    assert best["g"] >= 1
    totals = [int(line.split(",")[3]) for line in lines[1:]]
    assert best["total_reserved_us"] == min(totals)


def test_unknown_command_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1
