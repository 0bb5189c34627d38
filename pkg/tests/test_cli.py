"""CLI surface: formats, exit codes, determinism."""

import json

import numpy as np
import pytest

from ivtest import DGPSpec, discretize, sample
from ivtest.cli import main

from conftest import bernoulli_support_jump_law, location_family_law


@pytest.fixture
def law_file(tmp_path):
    law = discretize(sample(DGPSpec(name="loc"), 4_000, seed=3), 4, 4, 4)
    path = tmp_path / "law.json"
    path.write_text(json.dumps(law.to_json_dict()))
    return path


@pytest.fixture
def sim_config(tmp_path):
    cfg = {
        "specs": [
            {"name": "loc-valid"},
            {
                "name": "loc-invalid",
                "instrument_valid": False,
                "copula_weight": 1.0,
                "copula_target": "v",
            },
        ],
        "tests": [{"name": "fosd", "tol": 0.12}, {"name": "sure-decrease", "K": 1.0}],
        "n": 1000,
        "reps": 3,
        "bins": [4, 4, 4],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_replicate_success(law_file, tmp_path, capsys):
    out = tmp_path / "model.json"
    rc = main(["replicate", "--input", str(law_file), "--depth", "4", "--output", str(out)])
    assert rc == 0
    assert "replication error: 0.0" in capsys.readouterr().out
    payload = json.loads(out.read_text())
    assert payload["replication_error"] == 0.0
    assert payload["independence"] is True
    assert payload["generator"]["depth"] == 4
    assert all(set(c) == {"z_addr", "perm"} for c in payload["generator"]["cells"])


def test_replicate_missing_file(tmp_path):
    rc = main(["replicate", "--input", str(tmp_path / "absent.json")])
    assert rc == 1


def test_replicate_malformed_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"not\": \"a law\"}")
    assert main(["replicate", "--input", str(bad)]) == 1


def test_replicate_refuses_discrete_violation(tmp_path, capsys):
    # single positive x bin per z site: atomic treatment at grid resolution
    law = {
        "z_grid": [0.25, 0.75],
        "pz": {"edges": [0.0, 0.5, 1.0], "masses": [0.5, 0.5], "atoms": []},
        "conditionals": [
            {
                "y_edges": [0, 0.5, 1],
                "x_edges": [0, 0.5, 1],
                "mass": [[1.0, 0.0], [0.0, 0.0]],
            },
            {
                "y_edges": [0, 0.5, 1],
                "x_edges": [0, 0.5, 1],
                "mass": [[1.0, 0.0], [0.0, 0.0]],
            },
        ],
    }
    path = tmp_path / "discrete.json"
    path.write_text(json.dumps(law))
    rc = main(["replicate", "--input", str(path)])
    assert rc == 2
    assert "refused" in capsys.readouterr().err


def test_feasibility_infeasible_example(tmp_path, capsys):
    path = tmp_path / "feas.json"
    path.write_text(json.dumps({"conditionals": [[0.7, 0.3], [0.5, 0.5]]}))
    rc = main(["feasibility", "--input", str(path)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["decision"] == "infeasible"
    assert report["diagnostics"]["excess"] == pytest.approx(0.2, abs=1e-12)


def test_feasibility_feasible_with_coupling(tmp_path, capsys):
    path = tmp_path / "feas.json"
    path.write_text(json.dumps({"conditionals": [[0.5, 0.5], [0.5, 0.5]]}))
    rc = main(["feasibility", "--input", str(path)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["decision"] == "feasible"
    plan = np.array(report["coupling"])
    assert float(np.trace(plan)) <= 1e-9


def test_feasibility_unnormalized_exit1(tmp_path):
    path = tmp_path / "feas.json"
    path.write_text(json.dumps({"conditionals": [[0.7, 0.6], [0.5, 0.5]]}))
    assert main(["feasibility", "--input", str(path)]) == 1


def test_cmd_test_bernoulli_jump_rejects(tmp_path, capsys):
    law = bernoulli_support_jump_law()
    path = tmp_path / "law.json"
    path.write_text(json.dumps(law.to_json_dict()))
    rc = main(["test", "--input", str(path), "--test", "jump", "--K", "1.0"])
    assert rc == 0
    [report] = json.loads(capsys.readouterr().out)
    assert report["decision"] == "reject"
    assert report["statistic"] == pytest.approx(3.0, abs=1e-9)


def test_cmd_test_location_family_consistent(tmp_path, capsys):
    law = location_family_law([0.0, 0.25, 0.5, 0.75])
    path = tmp_path / "law.json"
    path.write_text(json.dumps(law.to_json_dict()))
    rc = main(
        ["test", "--input", str(path), "--test", "fosd", "--test", "sure-decrease",
         "--test", "jump", "--test", "pearl", "--test", "moment", "--format", "csv"]
    )
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "test,statistic,threshold,decision"
    decisions = {ln.split(",")[0]: ln.split(",")[-1] for ln in lines[1:]}
    assert decisions["fosd"] == "consistent"
    assert decisions["sure-decrease"] == "consistent"
    assert decisions["jump"] == "consistent"
    assert decisions["pearl"] == "consistent"
    assert decisions["moment"] == "consistent"


def test_cmd_test_dataset_csv_autodiscretized(tmp_path, capsys):
    data = sample(DGPSpec(name="loc"), 2_000, seed=4)
    path = tmp_path / "rows.csv"
    path.write_text(data.to_csv_text())
    rc = main(["test", "--input", str(path), "--bins", "4,4,4", "--test", "fosd", "--tol", "0.12"])
    assert rc == 0
    [report] = json.loads(capsys.readouterr().out)
    assert report["decision"] == "consistent"


def test_cmd_test_feasibility_selection(law_file, capsys):
    rc = main(["test", "--input", str(law_file), "--test", "feasibility"])
    assert rc == 0
    [report] = json.loads(capsys.readouterr().out)
    assert report["test"] == "feasibility"


def test_simulate_deterministic_csv(sim_config, tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--input", str(sim_config), "--seed", "7",
                 "--format", "csv", "--output", str(out1)]) == 0
    assert main(["simulate", "--input", str(sim_config), "--seed", "7",
                 "--format", "csv", "--output", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0]
    assert header == "spec,test,rejection_rate,reps,mean_statistic"


def test_simulate_seed_env_override(sim_config, tmp_path):
    out1, out2, out3 = (tmp_path / f"{k}.csv" for k in "abc")
    import os

    main(["simulate", "--input", str(sim_config), "--seed", "7", "--format", "csv",
          "--output", str(out1)])
    os.environ["IVT_SEED"] = "8"
    try:
        main(["simulate", "--input", str(sim_config), "--seed", "7", "--format", "csv",
              "--output", str(out2)])
    finally:
        del os.environ["IVT_SEED"]
    main(["simulate", "--input", str(sim_config), "--seed", "8", "--format", "csv",
          "--output", str(out3)])
    assert out2.read_bytes() == out3.read_bytes()
    assert out1.read_bytes() != out2.read_bytes()


def test_simulate_zero_reps_exit1(tmp_path):
    cfg = {"specs": [{"name": "loc"}], "tests": [], "n": 100, "reps": 0}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--input", str(path)]) == 1


def test_json_written_by_commands_reparses(law_file, tmp_path):
    out = tmp_path / "model.json"
    main(["replicate", "--input", str(law_file), "--depth", "2", "--output", str(out)])
    payload = json.loads(out.read_text())
    from ivtest import GeneratorMap, JointLaw

    law = JointLaw.from_json_dict(payload["joint"])
    gen = GeneratorMap.from_json_dict(
        payload["generator"], law.x_marginals(), law.pz, law.z_grid
    )
    assert gen.depth == 2
