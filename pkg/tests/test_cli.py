import json
import os
import subprocess
import sys

import numpy as np
import pytest

from orbitkit import cli
from orbitkit import matdecomp as md
from orbitkit.simlab import DEFAULT_TRUE_EULER
from orbitkit.sphere_geom import rotation_from_euler, sample_uniform_s2


def run(argv, capsys):
    code = cli.dispatch(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def pairs(tmp_path):
    rng = np.random.default_rng(0)
    th = sample_uniform_s2(rng, 40)
    u = th @ rotation_from_euler(DEFAULT_TRUE_EULER).T + 0.2 * rng.standard_normal((40, 3))
    y = u / np.linalg.norm(u, axis=1)[:, None]
    path = tmp_path / "pairs.csv"
    path.write_text("tx,ty,tz,yx,yy,yz\n" + md.matrix_to_csv(np.hstack([th, y])))
    return path


def test_project_sphere(tmp_path, capsys):
    (tmp_path / "x.csv").write_text("0,0,2.5\n")
    code, out, _ = run(["project", "--orbit", "sphere", "--in", str(tmp_path / "x.csv")], capsys)
    assert code == 0 and out == "0,0,1\n"


def test_project_to_file_and_complex(tmp_path, capsys):
    md.write_matrix_csv(tmp_path / "x.csv", np.array([[2j, 0], [0, 3]]))
    code, out, _ = run(["project", "--orbit", "lagrangian", "--in", str(tmp_path / "x.csv"),
                        "--out", str(tmp_path / "y.csv")], capsys)
    assert code == 0
    y = md.read_matrix_csv(tmp_path / "y.csv")
    np.testing.assert_allclose(y, np.diag([1j, 1]), atol=1e-15)


def test_project_outside_tube(tmp_path, capsys):
    (tmp_path / "zero.csv").write_text("0,0,0\n")
    code, out, err = run(["project", "--orbit", "sphere", "--in", str(tmp_path / "zero.csv")], capsys)
    assert code == 2 and out == "" and "OutsideTube" in err


def test_missing_file_is_domain_error(tmp_path, capsys):
    code, _, err = run(["project", "--orbit", "sphere", "--in", str(tmp_path / "nope.csv")], capsys)
    assert code == 2 and err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        cli.dispatch(["frobnicate"])
    assert info.value.code == 64
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        cli.dispatch(["project", "--orbit", "sphere"])
    assert info.value.code == 64
    with pytest.raises(SystemExit) as info:
        cli.dispatch(["simulate", "--out", "x", "--threads", "0"])
    assert info.value.code == 64


def test_estimate(tmp_path, capsys):
    (tmp_path / "x.csv").write_text("0,0,2\n")
    (tmp_path / "v.csv").write_text("1,0,0\n")
    code, out, _ = run(["estimate", "--x", str(tmp_path / "x.csv"), "--v", str(tmp_path / "v.csv"),
                        "--alpha", "0.5", "--epsilon", "0.1"], capsys)
    assert code == 0
    rows = dict((r.split(",")[0], r.split(",")[1:]) for r in out.strip().splitlines())
    assert float(rows["step_length"][0]) == pytest.approx(5e-3, rel=1e-14)
    assert float(rows["order2_coeff"][0]) == 2.0
    assert float(rows["order4_coeff"][0]) == pytest.approx(2 / 3 + 0.35208156699783544, abs=1e-14)


def test_estimate_invalid_prior(tmp_path, capsys):
    (tmp_path / "x.csv").write_text("0,0,2\n")
    (tmp_path / "v.csv").write_text("1,0,0\n")
    code, _, err = run(["estimate", "--x", str(tmp_path / "x.csv"), "--v", str(tmp_path / "v.csv"),
                        "--alpha", "1.5", "--epsilon", "0.1"], capsys)
    assert code == 2 and "NonPositiveDensity" in err


@pytest.mark.parametrize("method", ["extrinsic", "intrinsic"])
def test_regress(pairs, method, capsys):
    code, out, _ = run(["regress", "--method", method, "--data", str(pairs)], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    g = np.array([[float(t) for t in r.split(",")] for r in lines[:3]])
    assert md.is_rotation(g, 1e-12)
    diag = json.loads(lines[3])
    assert diag["method"] == method and diag["converged"] is True
    assert set(diag) == {"method", "iterations", "residual_norm", "converged"}


def test_regress_no_convergence(pairs, capsys):
    code, _, err = run(["regress", "--data", str(pairs), "--max-iter", "0"], capsys)
    assert code == 1 and "NoConvergence" in err


def test_simulate_and_seed_override(tmp_path, capsys, monkeypatch):
    argv = ["simulate", "--k", "20", "--draws", "20", "--sigmas", "0.2,0.4"]
    code, out1, _ = run(argv + ["--seed", "5", "--out", str(tmp_path / "a")], capsys)
    assert code == 0 and out1.splitlines()[0] == "sigma,p_a,p_b,p_c" and len(out1.splitlines()) == 3
    assert len(list((tmp_path / "a").iterdir())) == 1 + 2 * 4
    monkeypatch.setenv("ORBITKIT_SEED", "5")
    _, out2, _ = run(argv + ["--seed", "6", "--out", str(tmp_path / "b")], capsys)
    assert out2 == out1
    monkeypatch.delenv("ORBITKIT_SEED")
    _, out3, _ = run(argv + ["--seed", "6", "--out", str(tmp_path / "c")], capsys)
    assert out3 != out1


def test_bayes_verify(capsys):
    code, out, _ = run(["bayes-verify", "--c", "0.2", "--samples", "200000", "--seed", "3"], capsys)
    assert code == 0
    rec = json.loads(out)
    assert rec["relative_error"] < 0.1 and rec["samples"] == 200000 and rec["seed"] == 3
    code, _, err = run(["bayes-verify", "--c", "0.5", "--samples", "10"], capsys)
    assert code == 2


SUBCOMMAND_FLAGS = {
    "project": ["--orbit", "--params", "--base", "--in", "--out"],
    "estimate": ["--orbit", "--x", "--v", "--alpha", "--beta", "--epsilon", "--out"],
    "regress": ["--method", "--data", "--solver", "--max-iter", "--out"],
    "simulate": ["--k", "--draws", "--sigmas", "--seed", "--out", "--design", "--solver", "--threads"],
    "bayes-verify": ["--c", "--samples", "--seed", "--x", "--gamma-hat", "--alpha-test", "--threads", "--out"],
}


@pytest.mark.parametrize("sub", sorted(SUBCOMMAND_FLAGS))
def test_help_lists_every_flag(sub, capsys):
    with pytest.raises(SystemExit) as info:
        cli.dispatch([sub, "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    parser = cli.build_parser()
    subparser = parser._subparsers._group_actions[0].choices[sub]
    declared = {o for a in subparser._actions for o in a.option_strings if o.startswith("--")}
    assert declared - {"--help"} == set(SUBCOMMAND_FLAGS[sub])
    for flag in declared:
        assert flag in text


def test_subprocess_repeat_is_byte_identical(tmp_path):
    env = {k: v for k, v in os.environ.items() if k != "ORBITKIT_SEED"}
    cmd = [sys.executable, "-m", "orbitkit", "bayes-verify", "--samples", "100000", "--seed", "11"]
    a = subprocess.run(cmd, capture_output=True, env=env, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, env=env, check=True).stdout
    assert a == b and a
