import json
import os

import numpy as np
import pytest

from moller_lab import cli
from moller_lab.cli import ConfigError, load_config, main

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def cfg_path(name):
    return os.path.join(CONFIG_DIR, name)


def write_cfg(tmp_path, body, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


BASE = """
[metric0]
beta = "1"
a = "1"
[metric1]
beta = "1"
a = "1"
[field]
kind = dirac
[grid]
nx = {nx}
nt = {nt}
t0 = {t0}
t1 = {t1}
[chi]
t_minus = {tm}
t_plus = {tp}
{extra}
"""


def make(tmp_path, nx=64, nt=256, t0=-2.0, t1=2.0, tm=-1.0, tp=1.0, extra=""):
    return write_cfg(tmp_path, BASE.format(nx=nx, nt=nt, t0=t0, t1=t1,
                                           tm=tm, tp=tp, extra=extra))


def test_load_config_roundtrip(tmp_path):
    cfg = load_config(make(tmp_path))
    assert cfg.grid.nx == 64 and cfg.kind == "dirac"
    assert np.allclose(cfg.g0.beta(0.0, np.zeros(3)), 1.0)
    assert cfg.chi.t_minus == -1.0


def test_config_ordering_rejected(tmp_path):
    with pytest.raises(ConfigError, match="ordering"):
        load_config(make(tmp_path, tm=1.0, tp=-1.0))
    with pytest.raises(ConfigError, match="ordering"):
        load_config(make(tmp_path, tm=-3.0))


def test_config_power_of_two(tmp_path):
    with pytest.raises(ConfigError, match="power of two"):
        load_config(make(tmp_path, nx=60))


def test_config_bad_expression(tmp_path):
    bad = make(tmp_path).replace("exp.cfg", "bad.cfg")
    path = write_cfg(tmp_path, BASE.format(nx=64, nt=64, t0=-2, t1=2, tm=-1, tp=1,
                                           extra="").replace('a = "1"', 'a = "1 + qq"', 1),
                     "bad.cfg")
    with pytest.raises(ConfigError, match="expression"):
        load_config(path)


def test_config_unknown_tolerance(tmp_path):
    path = make(tmp_path, extra="[tolerances]\nnot_a_knob = 1.0")
    with pytest.raises(ConfigError, match="unknown tolerance"):
        load_config(path)


def test_missing_file_exit_code(tmp_path):
    assert main(["check", "--config", str(tmp_path / "absent.cfg"),
                 "--out", str(tmp_path / "o")]) == 2


def test_check_command_exit_zero(tmp_path):
    rc = main(["check", "--config", make(tmp_path),
               "--out", str(tmp_path / "out")])
    assert rc == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["condition_S_g0"]["passed"]
    assert report["condition_H_g1"]["value"] > 0.0


def test_threshold_failure_exit_one(tmp_path):
    path = make(tmp_path, extra="[tolerances]\ndrift = 1e-30")
    rc = main(["solve", "--config", path, "--out", str(tmp_path / "out")])
    assert rc == 1


def test_solve_artifacts_and_fd4(tmp_path):
    out = tmp_path / "out"
    rc = main(["solve", "--config", make(tmp_path), "--out", str(out), "--fd4"])
    assert rc == 0
    assert (out / "final_slice.csv").exists()
    header = (out / "final_slice.csv").read_text().splitlines()[0]
    assert header.startswith("x,re_c0,im_c0")
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["fd4"] is True


def test_reports_byte_identical(tmp_path):
    """Identical configuration produces byte-identical reports."""
    p = make(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", p, "--out", str(a)]) == 0
    assert main(["solve", "--config", p, "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_shipped_configs_load():
    for name in ("dirac_default.cfg", "dirac_conserve.cfg", "scalar_default.cfg",
                 "scalar_conserve.cfg", "state_default.cfg", "ultrastatic.cfg"):
        cfg = load_config(cfg_path(name))
        assert cfg.grid.t0 < cfg.chi.t_minus < cfg.chi.t_plus < cfg.grid.t1


def test_moller_command_identity_pair(tmp_path):
    out = tmp_path / "out"
    rc = main(["moller", "--config", cfg_path("ultrastatic.cfg"), "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["intertwining_residual"] < 1e-8
    assert rep["roundtrip_residual"] < 1e-8


CONSERVE_SMALL = """
[metric0]
beta = "1"
a = "2"
[metric1]
beta = "0.2"
a = "0.5"
[field]
kind = dirac
[grid]
nx = 64
nt = 320
t0 = -2.4
t1 = 2.4
[chi]
t_minus = -1.8
t_plus = 1.8
"""


def test_conserve_negative_control_fails(tmp_path):
    path = write_cfg(tmp_path, CONSERVE_SMALL)
    ok_out, bad_out = tmp_path / "ok", tmp_path / "bad"
    assert main(["conserve", "--config", path, "--out", str(ok_out)]) == 0
    assert main(["conserve", "--config", path, "--no-rho", "--out", str(bad_out)]) == 1
    rep = json.loads((bad_out / "report.json").read_text())
    assert abs(rep["norm"]["ratio_source_over_target"] - 4.0) < 1e-3


def test_parse_expr_reexport():
    node = cli.parse_expr("1 + 2*t")
    from moller_lab.exprlang import evaluate
    assert evaluate(node, 3.0, 0.0) == 7.0


def test_scalar_solve_command(tmp_path):
    path = write_cfg(tmp_path, BASE.format(nx=64, nt=256, t0=-2.0, t1=2.0,
                                           tm=-1.0, tp=1.0,
                                           extra="").replace("kind = dirac",
                                                             "kind = scalar"))
    rc = main(["solve", "--config", path, "--out", str(tmp_path / "out")])
    assert rc == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["kind"] == "scalar" and rep["jet_consistency"] < 1e-6


def test_state_command_artifacts(tmp_path):
    body = """
[metric0]
beta = "1"
a = "1/(1 + 0.4*0.5*(tanh((t+1)/0.05) - tanh((t-1)/0.05)))"
[metric1]
beta = "1"
a = "1"
[field]
kind = scalar
mass = 1.0
[grid]
nx = 64
nt = 512
t0 = -2.2
t1 = 2.2
[chi]
t_minus = -1.6
t_plus = 1.6
[state]
kmax = 24
steps = 4000
"""
    path = write_cfg(tmp_path, body)
    out = tmp_path / "out"
    rc = main(["state", "--config", path, "--out", str(out)])
    assert rc == 0
    kernel = json.loads((out / "kernel.json").read_text())
    assert kernel["K"] == 24 and len(kernel["blocks"]) == 49
    decay = (out / "decay.csv").read_text().splitlines()
    assert decay[0] == "k,d_k" and len(decay) == 25
