import numpy as np
import pytest

from lionk import matcore
from lionk.config import load_config, parse_config, parse_matrix
from lionk.errors import ConfigError
from lionk.optimizer import Constant, InverseSqrt

BASE = """\
[problem]
kind = toy_quadratic

[optimizer]
beta1 = 0.9
beta2 = 0.99
lambda = 1.25
eta = 0.001

[{section}]
kind = nuclear

[run]
mode = single_run
T = 50
X0 = diag:0.01,0.75
"""


def test_minimal_config():
    cfg = parse_config(BASE.format(section="map"))
    assert cfg.mode == "single_run" and cfg.T == 50
    assert cfg.optimizer.lam == 1.25
    assert cfg.optimizer.schedule == Constant(0.001)
    np.testing.assert_array_equal(cfg.X0, np.diag([0.01, 0.75]))


def test_convex_map_section_alias():
    a = parse_config(BASE.format(section="map"))
    b = parse_config(BASE.format(section="convex_map"))
    assert a.optimizer.kmap.kind == b.optimizer.kmap.kind == "nuclear"


def test_unknown_key_reports_line():
    text = BASE.format(section="map").replace("eta = 0.001", "eta = 0.001\nbogus = 1")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 9
    assert ":9:" in str(exc.value) and "bogus" in str(exc.value)


def test_bad_value_reports_line():
    text = BASE.format(section="map").replace("eta = 0.001", "eta = fast")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 8


def test_unknown_section_and_syntax_errors():
    with pytest.raises(ConfigError):
        parse_config(BASE.format(section="mystery"))
    with pytest.raises(ConfigError):
        parse_config("[problem\nkind = x\n")


def test_unknown_mode_and_schedule():
    with pytest.raises(ConfigError):
        parse_config(BASE.format(section="map").replace("single_run", "dance"))
    with pytest.raises(ConfigError):
        parse_config(BASE.format(section="map").replace("eta = 0.001", "schedule = wild\neta = 1"))


def test_mode_override_validates_requirements():
    text = BASE.format(section="map")
    with pytest.raises(ConfigError):
        parse_config(text, mode="ode_check")  # nuclear norm is not differentiable
    with pytest.raises(ConfigError):
        parse_config(text.replace("T = 50", "T_list = 100,1000"), mode="rate_sweep")


def test_rate_sweep_horizon_and_step():
    text = BASE.format(section="map").replace(
        "eta = 0.001", "schedule = inverse_sqrt\nc = 0.5").replace(
        "T = 50", "T_list = 100,1000,10000").replace("single_run", "rate_sweep")
    cfg = parse_config(text)
    assert isinstance(cfg.optimizer.schedule, InverseSqrt)
    assert cfg.T_list == (100, 1000, 10000)


def test_noise_sweep_needs_thirty_replicas():
    text = BASE.format(section="map") + "replicas = 10\n"
    with pytest.raises(ConfigError):
        parse_config(text, mode="noise_sweep")


def test_eta_lambda_bound():
    text = BASE.format(section="map").replace("eta = 0.001", "eta = 1.0")
    with pytest.raises(ConfigError):
        parse_config(text)


def test_matrix_specs(tmp_path):
    X = np.array([[1.0, -2.5], [0.125, 3.0]])
    matcore.write_matrix_csv(tmp_path / "x.csv", X)
    matcore.write_matrix_bin(tmp_path / "x.bin", X)
    np.testing.assert_array_equal(parse_matrix("x.csv", tmp_path), X)
    np.testing.assert_array_equal(parse_matrix("x.bin", tmp_path), X)
    np.testing.assert_array_equal(parse_matrix("1,0;0,1", tmp_path), np.eye(2))
    np.testing.assert_array_equal(parse_matrix("zeros", tmp_path, (2, 3)), np.zeros((2, 3)))
    sv = parse_matrix("sv:2,1", tmp_path, (2, 2), seed=4)
    np.testing.assert_allclose(matcore.singular_values(sv), [2, 1])
    with pytest.raises(FileNotFoundError):
        parse_matrix("missing.csv", tmp_path)


def test_explicit_problem_from_files(tmp_path):
    matcore.write_matrix_csv(tmp_path / "A.csv", np.diag([2.0, 1.0]))
    matcore.write_matrix_bin(tmp_path / "B.bin", np.ones((2, 3)))
    text = BASE.format(section="map").replace(
        "kind = toy_quadratic", "kind = explicit\nA = A.csv\nB = B.bin\nmu = 0.1").replace(
        "diag:0.01,0.75", "zeros")
    path = tmp_path / "c.ini"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.problem.shape == (2, 3)
    assert cfg.X0.shape == (2, 3)
    assert cfg.problem.L == pytest.approx(2 * (4 + 0.1))


def test_missing_matrix_file_is_config_error(tmp_path):
    text = BASE.format(section="map").replace("diag:0.01,0.75", "nope.csv")
    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises((ConfigError, FileNotFoundError)):
        load_config(path)


def test_seed_override():
    cfg = parse_config(BASE.format(section="map"))
    assert cfg.with_seed(42).oracle.seed == 42


@pytest.mark.parametrize("name", ["trap_lambda1p5", "trap_lambda5", "feasible_start", "infeasible_start",
                                  "rate_sweep", "noise_sweep", "ode_check", "kappa_sweep"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    load_config(Path(__file__).parent.parent / "configs" / f"{name}.ini")
