import csv
import io
import json
from importlib import resources

import numpy as np
import pytest

from penaltyvi.cli import ConfigError, format_table, load_config, main, parse_config
from penaltyvi.cli import testbed_names as shipped_testbeds

SCALAR = """
[space]
dim = 1
p = 2.0

[operator]
name = "linear"
params = { matrix = [[1.0]] }

[set]
kind = "box"
lower = 1.0
upper = 2.0

[rhs]
value = [0.0]

[schedule]
epsilon = [0.1]
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def summary(err):
    return json.loads(err.strip().splitlines()[-1])


def rows(out):
    return list(csv.DictReader(io.StringIO(out)))


def load_config_text(name):
    return (resources.files("penaltyvi") / "testbeds" / f"{name}.toml").read_text()


@pytest.fixture
def cfg_file(tmp_path):
    def write(text, name="cfg.toml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


def test_testbeds_ship():
    assert {"paper-testbed", "paper-testbed-p2", "scalar", "flat-testbed"} <= set(shipped_testbeds())


def test_solve_scalar(capsys, cfg_file):
    code, out, err = run(capsys, "solve", "--config", cfg_file(SCALAR))
    assert code == 0
    (row,) = rows(out)
    assert float(row["x"]) == pytest.approx(10 / 11, abs=1e-12)
    assert float(row["penalty_gap"]) == pytest.approx(1 / 11, abs=1e-12)
    assert summary(err)["passed"] is True


def test_solve_rejects_multi_step(capsys):
    assert run(capsys, "solve", "--config", "paper-testbed")[0] == 2


def test_converge_needs_three_steps(capsys, cfg_file):
    text = SCALAR.replace("epsilon = [0.1]", "epsilon = [0.1, 0.01]")
    assert run(capsys, "converge", "--config", cfg_file(text))[0] == 2


@pytest.mark.parametrize("text", [
    "[space]\ndim = 1\n",                                  # missing sections
    SCALAR + "\n[bogus]\nx = 1\n",                         # unknown section
    SCALAR.replace("p = 2.0", "p = 2.0\nq = 2.0"),         # unknown key
    SCALAR.replace("dim = 1", "dim = true"),               # bool for int
    SCALAR.replace("p = 2.0", "p = 0.5"),                  # invalid exponent
    SCALAR.replace("epsilon = [0.1]", "epsilon = [0.1, 0.2]"),
    SCALAR.replace('name = "linear"', 'name = "nope"'),
    SCALAR.replace("value = [0.0]", "value = [0.0, 1.0]"),
    SCALAR.replace("[schedule]", "[schedule]\nsigma = [1e-3]"),  # exact coupling with sigma
    "not = [toml",
])
def test_malformed_configs_exit_2(capsys, cfg_file, text):
    code, _, err = run(capsys, "solve", "--config", cfg_file(text))
    assert code == 2
    assert "config error" in err


def test_unknown_testbed_and_command(capsys):
    assert run(capsys, "solve", "--config", "no-such-testbed")[0] == 2
    assert run(capsys, "frobnicate", "--config", "scalar")[0] == 2
    assert run(capsys, "solve", "--config", "scalar", "--threads", "0")[0] == 2


def test_converge_paper_testbed(capsys):
    code, out, err = run(capsys, "converge", "--config", "paper-testbed")
    assert code == 0
    s = summary(err)["seeds"][0]
    assert s["fit"]["slope"] >= 0.9 and s["fit"]["r_squared"] >= 0.95
    np.testing.assert_allclose(summary(err)["x_star"], [1.0, 0.5, -0.7, -1.0, 0.8], atol=1e-8)
    assert len(rows(out)) == 4


def test_converge_interior_reports_exact(capsys):
    code, out, err = run(capsys, "converge", "--config", "interior")
    assert code == 0
    assert summary(err)["seeds"][0]["fit"] == "exact"
    assert all(float(r["penalty_gap"]) == 0.0 for r in rows(out))


def test_converge_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "converge", "--config", "paper-testbed", "--out", str(a))[0] == 0
    assert run(capsys, "converge", "--config", "paper-testbed", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_cold_start_threads_match_sequential(capsys, tmp_path, cfg_file):
    text = load_config_text("paper-testbed-p2").replace("[schedule]", "[schedule]\nwarm_start = false")
    path = cfg_file(text)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "converge", "--config", path, "--out", str(a))[0] == 0
    assert run(capsys, "converge", "--config", path, "--out", str(b), "--threads", "4")[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_jsonl_output(capsys):
    code, out, _ = run(capsys, "converge", "--config", "paper-testbed", "--format", "jsonl")
    assert code == 0
    recs = [json.loads(line) for line in out.splitlines()]
    assert [r["step"] for r in recs] == [0, 1, 2, 3]


def test_seed_override(capsys):
    code, out, _ = run(capsys, "converge", "--config", "paper-testbed", "--seed", "7")
    assert code == 0
    assert {r["seed"] for r in rows(out)} == {"7"}


def test_perturb_fixed_sigma_control_fails(capsys):
    code, _, err = run(capsys, "perturb", "--config", "perturbed-fixed-sigma")
    assert code == 1
    assert summary(err)["seeds"][0]["errors_decreasing"] is False


def test_regularize_control_does_not_settle(capsys):
    code, _, err = run(capsys, "regularize", "--config", "flat-testbed")
    assert code == 0
    s = summary(err)["seeds"][0]
    assert s["control_displacement"] > 10 * s["displacement"]


def test_audit_negated_operator_fails(capsys, cfg_file):
    text = (SCALAR.replace('name = "linear"\nparams = { matrix = [[1.0]] }',
                           'name = "diagonal_power"\nnegate = true')
            .replace("dim = 1", "dim = 3").replace("value = [0.0]", "value = [0.0, 0.0, 0.0]")
            + "\n[audit]\nn_samples = 2000\nsample_dims = [1, 3]\n")
    code, out, err = run(capsys, "audit", "--config", cfg_file(text))
    assert code == 1
    assert "monotonicity" in summary(err)["failed"]


def test_parse_config_programmatic():
    import tomli
    cfg = parse_config(tomli.loads(SCALAR))
    assert cfg.space.dim == 1 and cfg.seeds == [0]
    with pytest.raises(ConfigError):
        parse_config({"space": {"dim": 1, "p": 2.0}})


def test_format_table_floats_round_trip():
    text = format_table([{"a": 0.1, "b": True, "c": None}], "csv")
    (row,) = rows(text)
    assert float(row["a"]) == 0.1 and row["b"] == "true" and row["c"] == ""


def test_load_config_testbed():
    cfg = load_config("paper-testbed")
    assert cfg.space.p == 3.0 and len(cfg.schedule.steps) == 4
