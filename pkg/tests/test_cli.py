"""CLI: commands, config precedence, determinism, exit codes."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fastdiff_lab import cli
from fastdiff_lab.config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    config_from_dict,
    load_config,
)


def run_cli(args, tmp_path, env_extra=None):
    env = dict(os.environ)
    env["FASTDIFF_LAB_OUT"] = str(tmp_path / "default-out")
    if env_extra:
        env.update(env_extra)
    proc = subprocess.run(
        [sys.executable, "-m", "fastdiff_lab.cli", *args],
        capture_output=True, text=True, env=env, cwd=str(tmp_path),
    )
    return proc


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def test_config_defaults_validate():
    ExperimentConfig().validate()


def test_config_from_dict_unknown_field():
    with pytest.raises(ConfigError, match="unknown fields"):
        config_from_dict({"model": {"n": 3, "bogus": 1}})
    with pytest.raises(ConfigError, match="top-level"):
        config_from_dict({"nonsense": {}})


def test_config_rejects_bad_model():
    cfg = apply_overrides(ExperimentConfig(), model={"m": 1.2})
    with pytest.raises(ConfigError, match="model"):
        cfg.validate()


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"model": {"n": 3, "m": 0.7},
                                "grid": {"s_max": 8.0, "count": 400}}))
    cfg = load_config(str(path))
    assert cfg.model.m == 0.7 and cfg.grid.count == 400
    over = apply_overrides(cfg, model={"m": 0.8})
    assert over.model.m == 0.8
    assert over.grid.count == 400  # untouched sections survive


def test_config_round_trip():
    cfg = ExperimentConfig()
    again = config_from_dict(json.loads(cfg.to_json()))
    assert again == cfg


# ---------------------------------------------------------------------------
# commands (in-process, fast settings)
# ---------------------------------------------------------------------------

def fast_cfg(**kw):
    base = {
        "model": {"n": 3, "m": 2.0 / 3.0, "B": 1.0},
        "grid": {"s_max": 10.0, "count": 250},
        "time": {"dt": 5e-3, "t_final": 0.5, "record_every": 5,
                 "snapshot_every": 5},
        "initial_data": {"kind": "eigenmode", "ell": 0, "k": 1,
                         "amplitude": 0.05, "seed": 3},
    }
    base.update(kw)
    return config_from_dict(base).validate()


def test_cmd_spectrum():
    bundle = cli.cmd_spectrum(fast_cfg())
    closed = bundle.table("closed_form")
    lams = {(r[1], r[2]): r[3] for r in closed.rows if abs(r[0] - 0.5) < 1e-9}
    assert lams[(0, 0)] == pytest.approx(0.0)
    assert lams[(0, 1)] == pytest.approx(-6.0)
    assert lams[(2, 0)] == pytest.approx(-12.0)
    disc = bundle.table("discrete")
    assert bundle.summary["matched_count"] >= 4
    assert bundle.summary["max_match_error"] <= 1e-2


def test_cmd_modes():
    bundle = cli.cmd_modes(fast_cfg())
    names = {r[0] for r in bundle.table("landmarks").rows}
    assert {"m_0", "m_2", "m_n", "m_n+4"} <= names


def test_cmd_evolve_eigenmode_rate():
    cfg = fast_cfg(time={"dt": 2e-3, "t_final": 1.2, "record_every": 2,
                         "snapshot_every": 10})
    bundle = cli.cmd_evolve(cfg)
    assert bundle.summary["sup_slope"] == pytest.approx(-6.0, rel=0.05)
    assert bundle.summary["mass_drift_per_time"] <= 1e-6
    trace = bundle.table("trace")
    assert trace.header[0] == "t"
    assert len(trace.rows) > 10


def test_cmd_evolve_trivial_fixed_point():
    cfg = fast_cfg(initial_data={"kind": "delayed-barenblatt", "tau0": 0.0,
                                 "bplus": 1.0})
    bundle = cli.cmd_evolve(cfg)
    rows = bundle.table("trace").rows
    assert all(abs(r[1]) <= 1e-12 for r in rows)  # sup norm stays zero


def test_cmd_expand():
    cfg = config_from_dict({
        "model": {"n": 3, "m": 0.7},
        "grid": {"s_max": 12.0, "count": 400},
        "time": {"dt": 2e-3, "t_final": 1.5, "record_every": 4,
                 "snapshot_every": 4},
        "initial_data": {"kind": "bump", "amplitude": 0.05, "seed": 11,
                         "centers": (3.0, 7.0)},
    }).validate()
    bundle = cli.cmd_expand(cfg)
    assert "gamma_measured" in bundle.summary
    assert bundle.summary["gamma_closed_form"] == pytest.approx(289 / 264)
    assert bundle.table("time_shift").rows
    assert bundle.table("coefficients").rows


def test_cmd_sweep_partial_failure():
    cfg = config_from_dict({
        "model": {"n": 3, "m": 0.7},
        "grid": {"s_max": 10.0, "count": 250},
        "time": {"dt": 4e-3, "t_final": 1.0, "record_every": 4,
                 "snapshot_every": 4},
        "initial_data": {"kind": "bump", "amplitude": 0.05, "seed": 11,
                         "centers": (3.0, 6.0)},
        "analysis": {"sweep_m": (0.7, 1.4, 0.75)},  # 1.4 is invalid
        "jobs": 1,
    }).validate()
    bundle = cli.cmd_sweep(cfg)
    rows = bundle.table("gamma_delta").rows
    assert [r[0] for r in rows] == [0, 1, 2]  # input order
    assert rows[1][10] != ""  # the invalid row reports its error
    assert rows[0][10] == "" and rows[2][10] == ""
    assert bundle.summary["failures"] == 1


def test_cmd_sweep_parallel_matches_serial():
    base = {
        "model": {"n": 3, "m": 0.7},
        "grid": {"s_max": 10.0, "count": 250},
        "time": {"dt": 4e-3, "t_final": 1.0, "record_every": 4,
                 "snapshot_every": 4},
        "initial_data": {"kind": "bump", "amplitude": 0.05, "seed": 11,
                         "centers": (3.0, 6.0)},
        "analysis": {"sweep_m": (0.7, 0.75)},
    }
    serial = cli.cmd_sweep(config_from_dict({**base, "jobs": 1}).validate())
    parallel = cli.cmd_sweep(config_from_dict({**base, "jobs": 2}).validate())
    assert serial.table("gamma_delta").rows == parallel.table("gamma_delta").rows


def test_spectral_data_and_norm_dispatch():
    import numpy as np
    from fastdiff_lab import closedform as cf
    from fastdiff_lab import geometry as geo
    params = cf.derive_params(3, 2.0 / 3.0)
    data = cf.spectral_data(params.eta_cr, params, ell_max=2)
    kinds = {d.kind for d in data}
    assert kinds == {"eigenvalue", "continuum-threshold"}
    eig = [d for d in data if d.kind == "eigenvalue"]
    assert all(d.mode is not None for d in eig)
    thr = [d for d in data if d.kind == "continuum-threshold"]
    assert all(d.mode is None for d in thr)
    with pytest.raises(ValueError, match="iff"):
        cf.SpectralDatum("eigenvalue", -1.0, 0.0, None)

    grid = geo.make_grid(6.0, 60)
    f = geo.GridFunction(grid, 0, np.exp(-grid.nodes))
    assert geo.norm(f, geo.NormSpec("weighted-sup", eta=0.0)) == pytest.approx(1.0)
    l2 = geo.norm(f, geo.NormSpec("L2-uBm"), params)
    assert l2 == pytest.approx(
        np.sqrt(geo.inner_product_uBm(f, f, params)))
    hn = geo.norm(f, geo.NormSpec("weighted-holder", eta=0.0, alpha=0.5))
    assert hn >= geo.norm(f, geo.NormSpec("weighted-sup", eta=0.0))


# ---------------------------------------------------------------------------
# process-level: exit codes, files, determinism
# ---------------------------------------------------------------------------

def test_exit_code_validation(tmp_path):
    proc = run_cli(["--m", "1.2", "spectrum"], tmp_path)
    assert proc.returncode == 2
    assert "mass-preserving" in proc.stderr


def test_spectrum_writes_files_and_env_default(tmp_path):
    proc = run_cli(["--points", "200", "--smax", "8", "spectrum"], tmp_path)
    assert proc.returncode == 0, proc.stderr
    outdir = tmp_path / "default-out"
    names = {p.name for p in outdir.iterdir()}
    assert "spectrum_summary.json" in names
    assert "spectrum_closed_form.csv" in names
    payload = json.loads((outdir / "spectrum_summary.json").read_text())
    assert payload["provenance"]["config"]["grid"]["count"] == 200


def test_csv_determinism(tmp_path):
    args = ["--points", "200", "--smax", "8", "--dt", "5e-3",
            "--tfinal", "0.3", "--kind", "bump", "--seed", "9",
            "evolve"]
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    p1 = run_cli(args + ["--out", str(out1)], tmp_path)
    p2 = run_cli(args + ["--out", str(out2)], tmp_path)
    assert p1.returncode == 0 and p2.returncode == 0
    b1 = (out1 / "evolve_trace.csv").read_bytes()
    b2 = (out2 / "evolve_trace.csv").read_bytes()
    assert b1 == b2
    rates1 = (out1 / "evolve_rates.csv").read_bytes()
    rates2 = (out2 / "evolve_rates.csv").read_bytes()
    assert rates1 == rates2


def test_selftest_command(tmp_path):
    proc = run_cli(["selftest"], tmp_path)
    assert proc.returncode == 0, proc.stderr
    outdir = tmp_path / "default-out"
    payload = json.loads((outdir / "selftest_summary.json").read_text())
    assert payload["summary"]["passed"] is True
    checks = (outdir / "selftest_checks.csv").read_text().splitlines()
    assert checks[0].startswith("criterion,")
    assert len(checks) > 20


def test_csv_format(tmp_path):
    proc = run_cli(["--points", "200", "--smax", "8", "modes"], tmp_path)
    assert proc.returncode == 0
    csv_path = tmp_path / "default-out" / "modes_modes.csv"
    text = csv_path.read_text()
    assert text.endswith("\n")
    header, first = text.splitlines()[:2]
    assert header == "eta,ell,k,lambda,threshold"
    assert "," in first and ";" not in first
