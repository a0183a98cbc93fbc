import json

import numpy as np
import pytest

from cli import build_parser, run
from modules.sensor import PolynomialSensor
from tests.conftest import make_model
from utils.storage import load_model, save_model


@pytest.fixture
def cubic_file(tmp_path):
    path = tmp_path / "cubic.json"
    save_model(make_model(PolynomialSensor.cubic(), var_v=0.5, var_e=0.5), path)
    return str(path)


@pytest.fixture
def quadratic_file(tmp_path):
    path = tmp_path / "quadratic.json"
    save_model(make_model(PolynomialSensor.quadratic()), path)
    return str(path)


def test_gh_nodes(capsys):
    assert run(["gh-nodes", "--order", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "node,weight"
    nodes = [float(line.split(",")[0]) for line in lines[1:]]
    weights = [float(line.split(",")[1]) for line in lines[1:]]
    assert nodes == pytest.approx([-np.sqrt(0.5), np.sqrt(0.5)])
    assert weights == pytest.approx([np.sqrt(np.pi) / 2.0] * 2)


def test_table1_linear_row(capsys):
    assert run(["table1", "--rows", "linear", "--digits", "3"]) == 0
    assert capsys.readouterr().out == "row,0.1,0.25,0.5,0.75,1\nlinear,0.0141,0.0224,0.0316,0.0387,0.0447\n"


def test_moments_json(capsys, cubic_file):
    assert run(["moments", "--model", cubic_file, "--z", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mean"] == pytest.approx(1.0 / 3.0 + 0.5)
    assert report["method"] == "closed"


def test_analyze(capsys, quadratic_file):
    assert run(["analyze", "--model", quadratic_file, "--samples", "1000"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ascov"][0][0] == pytest.approx(1.104 / 0.72**2)
    assert report["normalized_std"][0] == pytest.approx(0.046148, rel=1e-4)


def test_simulate_is_deterministic(tmp_path, cubic_file):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        assert run(["simulate", "--model", cubic_file, "--constant-input", "--samples", "50",
                    "--seed", "5", "--out", str(out)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().splitlines()[0] == "t,u,y"


def test_simulate_estimate_roundtrip(tmp_path, capsys, cubic_file):
    data = tmp_path / "data.csv"
    assert run(["simulate", "--model", cubic_file, "--constant-input", "--samples", "5000",
                "--seed", "11", "--out", str(data)]) == 0
    assert run(["estimate", "--method", "cmp", "--model", cubic_file, "--data", str(data), "--positive"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["theta_hat"][0] == pytest.approx(1.0, abs=0.1)


def test_nll_prints_one_number(tmp_path, capsys, cubic_file):
    data = tmp_path / "data.csv"
    data.write_text("t,u,y\n1,1,0.3\n2,1,0.4\n")
    assert run(["nll", "--method", "exact", "--model", cubic_file, "--data", str(data), "--gh-order", "20"]) == 0
    assert np.isfinite(float(capsys.readouterr().out))


def test_ragged_dataset_is_a_usage_error(tmp_path, capsys, cubic_file):
    data = tmp_path / "data.csv"
    data.write_text("t,u,y\n1,1,0.3\n2,1\n")
    assert run(["nll", "--method", "cmp", "--model", cubic_file, "--data", str(data)]) == 2
    assert "error in system:" in capsys.readouterr().err
    assert run(["estimate", "--method", "cmp", "--model", cubic_file, "--data", str(data)]) == 2


def test_unknown_flag():
    assert run(["gh-nodes", "--order", "2", "--colour"]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["gh-nodes", "--order", "0"],
        ["gh-nodes", "--order", "10001"],
        ["table1", "--realizations", "0"],
        ["nll", "--method", "exact", "--model", "m.json", "--data", "d.csv", "--gh-order", "-3"],
    ],
)
def test_out_of_range_flag_values_are_usage_errors(argv):
    assert run(argv) == 2


def test_invalid_seed():
    assert run(["simulate", "--model", "m.json", "--constant-input", "--seed", "-1"]) == 2


def test_computation_error_exit_code(tmp_path, capsys, quadratic_file):
    data = tmp_path / "data.csv"
    data.write_text("t,u,y\n1,1,0.3\n2,1,0.4\n")
    assert run(["nll", "--method", "invertible", "--model", quadratic_file, "--data", str(data)]) == 1
    assert "error in sensor:" in capsys.readouterr().err


def test_parser_defaults():
    args = build_parser().parse_args(["table1"])
    assert args.rows == ["linear", "quadratic", "ml2", "cubic", "ml3"]
    assert args.realizations == 250
    assert args.samples == 1000


def test_estimate_saves_fitted_model(tmp_path, capsys, cubic_file):
    data, fitted = tmp_path / "data.csv", tmp_path / "fitted.json"
    assert run(["simulate", "--model", cubic_file, "--constant-input", "--samples", "200",
                "--seed", "3", "--out", str(data)]) == 0
    assert run(["estimate", "--method", "cmp", "--model", cubic_file, "--data", str(data),
                "--save-model", str(fitted)]) == 0
    result = json.loads(capsys.readouterr().out)

    model = load_model(fitted)
    assert list(model.theta) == pytest.approx(result["theta_hat"], rel=1e-12)
    assert model.sensor == PolynomialSensor.cubic()
    assert (model.var_v, model.var_e) == (0.5, 0.5)
