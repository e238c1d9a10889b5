from __future__ import annotations

import csv
import io
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbwalk.alcove import geometry
from rbwalk.cli import REFERENCE_CONFIGS, ExperimentConfig, eval_scalar, main, split_vector
from rbwalk.errors import ConfigError


def run(capsys, argv):
    rc = main(argv)
    out, err = capsys.readouterr()
    return rc, out, err


@given(st.decimals(min_value=-1000, max_value=1000, allow_nan=False, places=6))
def test_decimal_strings_parse_exactly(x):
    assert eval_scalar(str(x)) == float(str(x))


def test_expressions():
    assert eval_scalar("sqrt(2)") == math.sqrt(2)
    assert eval_scalar("1+sqrt(2)/3") == pytest.approx(1 + math.sqrt(2) / 3)
    assert eval_scalar("-2**0.5") == pytest.approx(-math.sqrt(2))
    assert eval_scalar("pi/4") == pytest.approx(math.pi / 4)
    for bad in ("__import__('os')", "sqrt(-1)", "1/0", "x", "", "open(1)", "True"):
        with pytest.raises(ConfigError):
            eval_scalar(bad)


def test_split_vector():
    assert split_vector("1,sqrt(2)") == ("1", "sqrt(2)")
    assert split_vector(" 0.3 , 0.95394 ") == ("0.3", "0.95394")
    with pytest.raises(ConfigError):
        split_vector("1,,2")


def test_config_normalizes_b():
    wc = ExperimentConfig("sigma", "A2", "0.3", ("3", "4")).walk()
    assert wc.b == pytest.approx((0.6, 0.8))


@pytest.mark.parametrize("name", sorted(REFERENCE_CONFIGS))
def test_reference_configs_are_valid(name):
    t, p, b = REFERENCE_CONFIGS[name]
    wc = ExperimentConfig("simulate", t, p, b).walk()
    assert wc.geom.rank == len(b)


def test_simulate_smoke_and_byte_stability(tmp_path, capsys):
    argv = ["simulate", "--type", "A2", "--p", "0.3", "--b", "0.3,0.95394", "--steps", "200", "--seed", "42"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(open(a)))
    assert rows[0][:4] == ["n", "t", "eps", "label"] and len(rows) == 201
    rc, out, _ = run(capsys, argv)
    assert rc == 0 and out.encode() == a.read_bytes()


@pytest.mark.parametrize("mode", ["continuous", "refraction"])
def test_simulate_modes(capsys, mode):
    rc, out, _ = run(capsys, ["simulate", "--mode", mode, "--steps", "50", "--seed", "1"])
    assert rc == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) > 10


def test_simulate_ensemble_threads(capsys):
    outs = []
    for k in ("1", "3"):
        rc, out, _ = run(capsys, ["simulate", "--runs", "12", "--steps", "100", "--threads", k])
        assert rc == 0
        outs.append(out)
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert len(rep["ensemble"]["values"]) == 12


def test_json_reports_echo_config(capsys):
    rc, out, _ = run(capsys, ["freq", "--config", "a2-rational", "--steps", "3000", "--window", "1"])
    assert rc == 0
    rep = json.loads(out)
    assert rep["config"]["b"] == ["0", "1"] and rep["config"]["type"] == "A2"
    assert rep["direction_class"] == "rational"
    assert rep["frequencies"]["0"] == pytest.approx(1 / 3, abs=1e-3)


def test_sigma_a1_report(capsys):
    rc, out, _ = run(capsys, ["sigma", "--config", "a1-p0.3", "--steps", "1000", "--runs", "4000",
                              "--n-freq", "5000"])
    rep = json.loads(out)
    assert rc == 0
    assert rep["a1_closed_form"] == pytest.approx(7 / 3)
    assert rep["series"]["sigma2"] == pytest.approx(7 / 3, abs=1e-3)
    assert rep["config"]["p"] == "0.3"


@pytest.mark.parametrize("cmd", ["mixing", "moments", "growth", "martingale", "functional"])
def test_estimator_commands_run(capsys, cmd):
    extra = {"mixing": ["--steps", "20", "--runs", "2000", "--lam", "2", "--quotient-n", "100"],
             "moments": ["--steps", "300", "--runs", "2000"],
             "growth": ["--runs", "300", "--n-grid", "50,100", "--n0-grid", "0"],
             "martingale": ["--runs", "100", "--n-grid", "4,8"],
             "functional": ["--steps", "500", "--runs", "1000"]}[cmd]
    rc, out, _ = run(capsys, [cmd, "--seed", "2"] + extra)
    assert rc == 0
    assert json.loads(out)["config"]["command"] == cmd


def test_exit_code_degenerate(capsys):
    rc, _, err = run(capsys, ["simulate", "--config", "a2-rational", "--b", "1,0"])
    assert rc == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "DegenerateDirection" and "--jitter" in payload["hint"]
    rc, _, _ = run(capsys, ["simulate", "--b", "1,0", "--jitter", "1", "--steps", "20"])
    assert rc == 0


@pytest.mark.parametrize("argv", [["sigma", "--p", "1.5"], ["sigma", "--p", "0"], ["sigma", "--bogus"],
                                  ["sigma", "--type", "Q7", "--b", "1"], ["sigma", "--b", "1,2,3"],
                                  ["sigma", "--b", "0,0"], ["simulate", "--b", "sqrt(-2),1"], []])
def test_exit_code_config(capsys, argv):
    rc, _, err = run(capsys, argv)
    assert rc == 4
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 4


def test_exit_code_estimator(capsys):
    rc, _, err = run(capsys, ["mixing", "--type", "E8", "--b", "1,2,3,4,5,6,7,sqrt(2)"])
    assert rc == 3
    assert json.loads(err)["error"] == "GroupTooLarge"


def test_verify_flag(capsys):
    rc, out, err = run(capsys, ["freq", "--verify", "--steps", "100"])
    assert rc == 0
    assert "[PASS]" in err


def test_verify_all_catches_beta_sign_flip(capsys):
    beta = geometry("A1").frame.beta
    saved = beta.copy()
    try:
        beta[1] *= -1.0
        rc, _, err = run(capsys, ["verify-all"])
    finally:
        beta[...] = saved
    assert rc == 3
    assert json.loads(err.strip().splitlines()[-1])["criterion"].startswith("2 ")


def test_verify_all_clean(capsys):
    rc, out, err = run(capsys, ["verify-all"])
    assert rc == 0
    names = [c["name"] for c in json.loads(out)["criteria"]]
    assert any(n.startswith("1 ") for n in names) and any(n.startswith("15 ") for n in names)
