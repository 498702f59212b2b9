import csv
from pathlib import Path

import pytest

from frndp import (
    DesignCountExceeded,
    ExperimentSpec,
    GagaConfig,
    enumerate_designs,
    run_experiment,
)
from frndp.cli import main
from conftest import N4_TOTALS

N4_FILE = str(Path(__file__).resolve().parents[1] / "instances" / "n4.json")


def _read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_enumerate_designs_fixture(n4):
    table = enumerate_designs(n4)
    assert len(table) == 4
    got = sorted(obj for _, obj in table)
    expected = sorted(N4_TOTALS.values())
    for g, e in zip(got, expected):
        assert g == pytest.approx(e, rel=0.01)


def test_enumerate_cap(n4):
    with pytest.raises(DesignCountExceeded):
        enumerate_designs(n4, cap=3)


def test_enumerate_single_path_instance():
    import numpy as np
    from frndp import RoadNetwork
    net = RoadNetwork(
        nodes=(0, 1), arcs=((0, 1),), capacity=np.array([10.0]),
        free_flow=np.ones(1), lanes=np.array([2]), demand={0: 5, 1: 0},
        fr_nodes=(0,), exit_nodes=(1,))
    table = enumerate_designs(net)
    assert len(table) == 1


def test_cli_generate_then_bnb(tmp_path):
    inst = tmp_path / "inst.json"
    assert main(["generate", "--n", "10", "--p", "0.5", "--seed", "7",
                 "--out", str(inst)]) == 0
    out = tmp_path / "bnb"
    assert main(["solve", "bnb", "--instance", str(inst),
                 "--time-limit", "20", "--out-dir", str(out)]) == 0
    rows = _read_rows(out / "results.csv")
    assert len(rows) == 1 and rows[0]["solver"] == "bnb"
    assert float(rows[0]["objective_final"]) > 0
    assert (out / "incumbent_trace.csv").exists()


def test_cli_gaga_on_fixture(tmp_path):
    out = tmp_path / "gaga"
    rc = main(["solve", "gaga", "--instance", N4_FILE, "--n-samples", "1000",
               "--m", "1", "--n-paths", "4", "--sa-sweeps", "200",
               "--seed", "2", "--out-dir", str(out)])
    assert rc == 0
    rows = _read_rows(out / "results.csv")
    assert rows[0]["setting"] == "Unnormalized"
    assert float(rows[0]["objective_final"]) == pytest.approx(243.43, rel=0.01)
    assert int(rows[0]["seeds_completed"]) == 1
    assert (out / "seed_trace.csv").exists()
    assert (out / "resolved_config.json").exists()


def test_cli_enumerate_matches_reference(tmp_path):
    out = tmp_path / "enum"
    assert main(["solve", "enumerate", "--instance", N4_FILE,
                 "--out-dir", str(out)]) == 0
    rows = _read_rows(out / "results.csv")
    got = sorted(float(r["objective_final"]) for r in rows)
    for g, e in zip(got, sorted(N4_TOTALS.values())):
        assert g == pytest.approx(e, rel=0.01)


def test_cli_ue_only_writes_flows(tmp_path):
    out = tmp_path / "ue"
    assert main(["solve", "ue-only", "--instance", N4_FILE,
                 "--out-dir", str(out)]) == 0
    flows = _read_rows(out / "flows.csv")
    assert {"from", "to", "flow", "time"} <= set(flows[0])
    assert len(flows) == 6


def test_cli_rejects_ambiguous_source(tmp_path, capsys):
    rc = main(["solve", "bnb", "--instance", N4_FILE, "--n", "10", "--p", "0.5",
               "--out-dir", str(tmp_path / "x")])
    assert rc == 2
    assert "exactly one" in capsys.readouterr().err


def test_cli_unreadable_instance(tmp_path, capsys):
    rc = main(["solve", "bnb", "--instance", str(tmp_path / "nope.json"),
               "--out-dir", str(tmp_path / "x")])
    assert rc == 2


def test_setting_names_follow_grid():
    assert GagaConfig().setting_name == "Unnormalized"
    assert GagaConfig(inner_tolerance=1e-3).setting_name == "Unnormalized, Tol = 1e-3"
    assert GagaConfig(normalized=True).setting_name == "Normalized"
    assert GagaConfig(normalized=True, inner_tolerance=1e-3).setting_name == \
        "Normalized, Tol=1e-3"


def test_run_experiment_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentSpec(solver="gaga", out_dir=str(tmp_path))   # no source at all
    with pytest.raises(ValueError):
        ExperimentSpec(solver="magic", out_dir=str(tmp_path), instance_path=N4_FILE)
