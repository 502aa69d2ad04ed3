import os
import subprocess
import sys

import numpy as np
import pytest

from mixedfbm.config import (ExperimentConfig, ConfigError, load_config,
                             apply_overrides, config_text, config_hash)
from mixedfbm.experiments import fit_rate, run_experiment
from mixedfbm.report import write_outputs


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# comment\n"
        "theta0.hurst = 0.9\n"
        "eps=0.25\n"
        "quad.rel_tol = 1e-7\t# inline comment\n"
        "fredholm.n_nodes=128\n"
        "eps_grid = 0.5, 0.25, 0.125\n"
    )
    cfg = load_config(str(path))
    assert cfg.hurst == 0.9
    assert cfg.eps == 0.25
    assert cfg.quad_rel_tol == 1e-7
    assert cfg.fredholm_n_nodes == 128
    assert cfg.eps_grid == (0.5, 0.25, 0.125)


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 3\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    bad.write_text("just a line\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        apply_overrides(ExperimentConfig(), [("replicates", "many")])


def test_config_hash_ignores_execution_params():
    a = ExperimentConfig(workers=1, out_dir="x")
    b = ExperimentConfig(workers=8, out_dir="y")
    assert config_hash(a) == config_hash(b)
    c = ExperimentConfig(master_seed=999)
    assert config_hash(a) != config_hash(c)
    assert "workers" not in config_text(a)


def test_fit_rate_examples():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_rate(list(zip(x, x ** 0.7)))
    assert abs(fit.slope - 0.7) < 1e-12
    assert fit.stderr < 1e-12
    flat = fit_rate(list(zip(x, np.ones(4))))
    assert abs(flat.slope) < 1e-12
    rng = np.random.default_rng(5)
    noisy = fit_rate(list(zip(x, x ** 0.7 * np.exp(0.05 * rng.standard_normal(4)))))
    assert abs(noisy.slope - 0.7) < 3 * noisy.stderr + 1e-9
    with pytest.raises(ValueError):
        fit_rate([(1.0, 1.0), (2.0, 2.0)])
    with pytest.raises(ValueError):
        fit_rate([(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)])
    with pytest.raises(ValueError):
        fit_rate([(1.0, 1.0), (2.0, -2.0), (3.0, 3.0)])


def _run_cli(args, cwd):
    env = dict(os.environ, MPLBACKEND="Agg")
    return subprocess.run([sys.executable, "-m", "mixedfbm.cli", *args],
                          capture_output=True, text=True, cwd=cwd, env=env)


def test_cli_simulate_and_exit_codes(tmp_path):
    out = tmp_path / "sim"
    res = _run_cli(["simulate", "--out", str(out), "--seed", "5",
                    "--T", "4", "--dt", "0.25"], tmp_path)
    assert res.returncode == 0, res.stderr
    assert (out / "results.csv").exists()
    assert (out / "summary.txt").exists()
    assert (out / "manifest.txt").exists()
    header = (out / "results.csv").read_text().splitlines()[0]
    assert header == "k,t,x"

    res = _run_cli(["simulate", "--bogus.key", "1"], tmp_path)
    assert res.returncode == 2
    res = _run_cli(["simulate", "--config", str(tmp_path / "missing.cfg")], tmp_path)
    assert res.returncode == 2


def test_cli_rerun_byte_identical(tmp_path):
    args = ["lan", "--seed", "11", "--T", "16", "--dt", "0.25",
            "--lan.replicates", "6"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    r1 = _run_cli(args + ["--out", str(out1)], tmp_path)
    r2 = _run_cli(args + ["--out", str(out2), "--workers", "2"], tmp_path)
    assert r1.returncode in (0, 1) and r2.returncode == r1.returncode
    for name in ("results.csv", "summary.txt", "manifest.txt"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_experiment_writes_plots(tmp_path):
    cfg = ExperimentConfig(experiment="rate-smallnoise", replicates=4,
                           master_seed=3, smallnoise_samples=2 ** 14,
                           eps_grid=(2.0 ** -8, 2.0 ** -10, 2.0 ** -12),
                           out_dir=str(tmp_path / "rs"))
    result = run_experiment(cfg)
    files = write_outputs(cfg, result)
    assert os.path.exists(files["rate_smallnoise_H"])
    assert files["rate_smallnoise_H"].endswith(".png")
    rows = open(files["results"]).read().splitlines()
    assert rows[0] == "eps,replicate,seed,H_hat,sigma2_hat,level"
    assert len(rows) == 1 + 3 * 4


def test_unknown_experiment():
    with pytest.raises(ValueError):
        run_experiment(ExperimentConfig(experiment="nope"))
