import json
import subprocess
import sys

import numpy as np
import pytest

from pnpmc.cli import main
from pnpmc.experiments import (
    ConfigError,
    ExperimentConfig,
    load_config,
    run_experiment,
    seed_sweep,
)

SMALL_2D = {
    "kind": "validate2d",
    "seed": 3,
    "chain": {"n_iters": 60, "batch": 120},
    "diagnostics": {"eval_every": 30, "grid": {"cells": [200, 200]}},
}


def write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return path


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    root = tmp_path / "out"
    monkeypatch.setenv("PNPMC_OUTPUT_ROOT", str(root))
    return root


def test_defaults_fill_a_minimal_config():
    cfg = ExperimentConfig.from_dict({"kind": "validate2d"})
    assert cfg.chain["gamma"] == 0.4
    assert cfg.chain["schedule"] == {"sigma0": 10.0, "xi": 0.975, "sigma_min": 0.0, "alpha0": 10.0}
    assert cfg.chain["init_box"] == [-50.0, 50.0]
    assert cfg.sweep["realizations"] == 20


def test_run_writes_artifacts(tmp_path, out_root):
    path = write_cfg(tmp_path, SMALL_2D)
    assert main(["run", str(path)]) == 0
    out = out_root / "runs" / "validate2d"
    for name in ("samples.csv", "stats.json", "traces.csv", "meta.json"):
        assert (out / name).is_file()
    header = (out / "traces.csv").read_text().splitlines()[0]
    assert header == "iteration,fi,kl"
    meta = json.loads((out / "meta.json").read_text())
    assert meta["seed"] == 3
    assert set(meta["versions"]) >= {"numpy", "scipy", "pnpmc", "python"}
    stats = json.loads((out / "stats.json").read_text())
    rec = {r["metric"]: r for r in stats["records"]}
    assert {"min_fi", "min_kl", "em_monotone"} <= set(rec)
    assert rec["min_fi"]["config_digest"] == meta["config_digest"]
    assert rec["min_fi"]["grid"]["cells"] == [200, 200]


def test_identical_configs_give_identical_samples(tmp_path, out_root):
    a = dict(SMALL_2D, output_dir="a")
    b = dict(SMALL_2D, output_dir="b")
    main(["run", str(write_cfg(tmp_path, a, "a.json"))])
    main(["run", str(write_cfg(tmp_path, b, "b.json"))])
    assert (out_root / "a" / "samples.csv").read_bytes() == (out_root / "b" / "samples.csv").read_bytes()


def test_meta_config_echo_reproduces_digest(tmp_path, out_root):
    main(["run", str(write_cfg(tmp_path, SMALL_2D))])
    meta = json.loads((out_root / "runs" / "validate2d" / "meta.json").read_text())
    again = ExperimentConfig.from_dict(meta["config"])
    assert again.digest() == meta["config_digest"]
    assert again.chain_config().digest() == meta["chain_digest"]


def test_absolute_output_dir_ignores_root(tmp_path, out_root):
    target = tmp_path / "abs"
    main(["run", str(write_cfg(tmp_path, dict(SMALL_2D, output_dir=str(target))))])
    assert (target / "samples.csv").is_file()


def test_validate_is_a_dry_run(tmp_path, out_root, capsys):
    assert main(["validate", str(write_cfg(tmp_path, {"kind": "gaussian_image"}))]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["dim"] == 1024 and report["batch"] == 500
    assert not out_root.exists()


def test_invalid_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "kind": "validate2d",\n  "seed": ,\n}\n')
    assert main(["validate", str(path)]) == 2
    assert f"{path}:3:" in capsys.readouterr().err


def test_bad_value_reports_its_line(tmp_path, capsys):
    doc = {"kind": "validate2d", "chain": {"gamma": -1.0}}
    path = write_cfg(tmp_path, doc)
    assert main(["validate", str(path)]) == 2
    err = capsys.readouterr().err
    line = next(i for i, l in enumerate(path.read_text().splitlines(), 1) if '"gamma"' in l)
    assert f"{path}:{line}:" in err and "gamma" in err


def test_unknown_key_and_kind_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write_cfg(tmp_path, {"kind": "validate2d", "sed": 1}))
    with pytest.raises(ConfigError, match="kind"):
        load_config(write_cfg(tmp_path, {"kind": "ct"}))


def test_schedule_invariant_enforced(tmp_path):
    doc = {"kind": "validate2d", "chain": {"schedule": {"sigma_min": 0.4}}}
    with pytest.raises(ConfigError, match="alpha0"):
        load_config(write_cfg(tmp_path, doc))


def test_missing_referenced_file(tmp_path):
    doc = {"kind": "cs", "posterior": {"prior_file": str(tmp_path / "nope.json")}}
    with pytest.raises(ConfigError, match="prior_file"):
        load_config(write_cfg(tmp_path, doc))


def test_prior_file_is_used(tmp_path):
    prior = {"weights": [1.0], "means": [[5.0, 5.0]], "covariances": [[[1.0, 0.0], [0.0, 1.0]]]}
    (tmp_path / "prior.json").write_text(json.dumps(prior))
    doc = dict(SMALL_2D, posterior={"prior_file": str(tmp_path / "prior.json")})
    from pnpmc.problems import build_problem
    cfg = load_config(write_cfg(tmp_path, doc))
    p = build_problem(cfg.kind, cfg.posterior, cfg.seed)
    np.testing.assert_array_equal(p.prior.means, [[5.0, 5.0]])


def test_sweep_writes_consolidated_csv(tmp_path, out_root, capsys):
    path = write_cfg(tmp_path, SMALL_2D)
    assert main(["sweep", str(path), "--param", "gamma", "--values", "0.8,0.4",
                 "--realizations", "2"]) == 0
    rows = (out_root / "runs" / "validate2d" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "param,value,realization,min_fi,min_kl,n_evals,n_diverged"
    assert len(rows) == 1 + 2 * 2 + 2
    assert sum(r.split(",")[2] == "mean" for r in rows[1:]) == 2
    assert (out_root / "runs" / "validate2d" / "gamma=0.8" / "r01" / "meta.json").is_file()
    assert "gamma=0.4" in capsys.readouterr().out


def test_sweep_shares_posteriors_and_streams_across_values():
    cfg = ExperimentConfig.from_dict(SMALL_2D)
    a = cfg.with_overrides(chain=dict(cfg.chain, gamma=0.8), realization=1)
    b = cfg.with_overrides(chain=dict(cfg.chain, gamma=0.4), realization=1)
    c = cfg.with_overrides(realization=2)
    assert a.chain_seed() == b.chain_seed() != c.chain_seed()


def test_sweep_rejects_bad_values():
    cfg = ExperimentConfig.from_dict(SMALL_2D)
    with pytest.raises(ConfigError):
        seed_sweep(cfg, "gamma", [0.4, 0.8], 1, write=False)
    with pytest.raises(ConfigError):
        seed_sweep(cfg, "beta", [0.4], 1, write=False)
    with pytest.raises(ConfigError):
        seed_sweep(cfg, "eps_max", [-1.0], 1, write=False)


def test_image_kinds_run_small(tmp_path):
    small_chain = {"n_iters": 30, "batch": 8}
    for kind, post in [("cs", {"side": 8}), ("mri_fourier", {"side": 8}),
                       ("bhi", {"side": 8, "n_times": 2}),
                       ("gaussian_image", {"side": 8, "m": 20})]:
        cfg = ExperimentConfig.from_dict({"kind": kind, "posterior": post, "chain": small_chain,
                                          "output_dir": str(tmp_path / kind)})
        res = run_experiment(cfg)
        assert (tmp_path / kind / "samples.csv").is_file()
        assert res.samples.shape == (8, 64)
        assert 0.0 <= res.metric("min_mode_fraction") <= 0.5
        if kind == "bhi":
            assert (tmp_path / kind / "chi2.csv").is_file()
            assert res.metric("chi2_cph_mean") > 0


def test_divergence_is_a_warning_not_a_failure(tmp_path):
    doc = dict(SMALL_2D, output_dir=str(tmp_path / "div"),
               score={"r_s": None}, chain={"gamma": 5.0, "n_iters": 300, "batch": 50})
    res = run_experiment(ExperimentConfig.from_dict(doc))
    meta = json.loads((tmp_path / "div" / "meta.json").read_text())
    assert res.metric("n_diverged") > 0
    assert any("diverged" in w for w in meta["warnings"])
    assert meta["sampler"]["diverged"]


def test_console_entry_point(tmp_path):
    path = write_cfg(tmp_path, SMALL_2D)
    proc = subprocess.run([sys.executable, "-m", "pnpmc.cli", "validate", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and '"dim": 2' in proc.stdout
