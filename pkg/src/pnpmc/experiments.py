"""Config-driven experiments: build a posterior, sample it, score the samples.

A config is one JSON document. Missing sections fall back to per-kind
defaults, so ``{"kind": "validate2d"}`` is a complete config. Every run
writes ``samples.csv``, ``stats.json`` and ``meta.json`` (plus ``traces.csv``
for 2D problems and ``chi2.csv`` for closure imaging) into its output
directory.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import os
import platform
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import ContractError
from .diagnostics import (
    FitError,
    Grid2D,
    GridCoverageWarning,
    GridPosterior,
    classify_modes,
    conjugate_posterior,
    em_fit_gmm,
    grid_fi_kl,
    sample_stats,
)
from .likelihoods import GaussianLinearLikelihood, MaskedFourierLikelihood
from .priors import ScoreModel
from .problems import BUILDERS, Problem, build_problem
from .samplers import AnnealingSchedule, ChainConfig, run_batch

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "PNPMC_OUTPUT_ROOT"
SCHEMA_VERSION = 1
CSV_SCHEMAS = {
    "samples.csv": "x0..x{n-1}, one row per chain",
    "traces.csv": "iteration,fi,kl",
    "chi2.csv": "chain,mode,chi2_cph,chi2_camp",
    "sweep.csv": "param,value,realization,min_fi,min_kl,n_evals,n_diverged",
}
SWEEP_PARAMS = ("gamma", "sigma_min", "eps_max")

_SIGMA_MIN_IMAGE = float(np.sqrt(1.0 / 4000.0))
_CRESCENT = {"side": 16, "prior_scale": 0.1, "prior_length": 2.0, "prior_nugget": 1e-4,
             "truth_component": 0}

DEFAULTS = {
    "validate2d": {
        "posterior": {"prior_means": [[-8.0, -4.0], [8.0, 4.0]], "prior_var": 10.0,
                      "a_norm": 0.3, "beta": 1.0, "truth": [0.0, 0.0]},
        "score": {"kind": "noisy_gmm", "eps_max": 2.5, "r_s": 10.0},
        "chain": {"gamma": 0.4, "n_iters": 400, "batch": 1000, "annealed": True,
                  "schedule": {"sigma0": 10.0, "xi": 0.975, "sigma_min": 0.0, "alpha0": 10.0},
                  "init_box": [-50.0, 50.0]},
        "diagnostics": {"eval_every": 50, "K": 2, "em_restarts": 3, "em_tol": 1e-8,
                        "grid": {"bounds": [[-50.0, 50.0], [-50.0, 50.0]], "cells": [1000, 1000]},
                        "min_mass": 0.999},
        "sweep": {"realizations": 20},
    },
    "gaussian_image": {
        "posterior": {"side": 32, "m": 307, "beta": 0.1, "prior_var": 0.1, "shift": 2.0,
                      "base_level": 2.0, "base_amp": 0.5, "project_shift": True},
        "score": {"kind": "exact_gmm"},
        "chain": {"gamma": 1e-3, "n_iters": 1500, "batch": 500, "annealed": True,
                  "schedule": {"sigma0": 192.0, "xi": 0.975, "sigma_min": _SIGMA_MIN_IMAGE,
                               "alpha0": 1000.0},
                  "sigma_static": _SIGMA_MIN_IMAGE, "init_box": [-3.0, 3.0]},
    },
    "cs": {
        "posterior": dict(_CRESCENT, ratio=0.3, beta=0.05),
        "score": {"kind": "exact_gmm"},
        "chain": {"gamma": 5e-5, "n_iters": 2000, "batch": 200, "annealed": True,
                  "schedule": {"sigma0": 368.0, "xi": 0.99, "sigma_min": 0.01, "alpha0": 1e4},
                  "sigma_static": 0.01, "init_box": [-1.0, 1.0]},
    },
    "mri_fourier": {
        "posterior": dict(_CRESCENT, fraction=0.3, beta=0.05),
        "score": {"kind": "exact_gmm"},
        "chain": {"gamma": 5e-5, "n_iters": 2000, "batch": 200, "annealed": True,
                  "schedule": {"sigma0": 368.0, "xi": 0.99, "sigma_min": 0.01, "alpha0": 1e4},
                  "sigma_static": 0.01, "init_box": [-1.0, 1.0]},
    },
    "bhi": {
        "posterior": dict(_CRESCENT, n_tel=9, n_times=8, rotation=float(np.pi / 12), array_seed=0,
                          gain_std=0.1, phase_std=1.0, thermal_frac=0.02, rho=0.5),
        "score": {"kind": "exact_gmm"},
        "chain": {"gamma": 5e-6, "n_iters": 2000, "batch": 200, "annealed": True,
                  "schedule": {"sigma0": 192.0, "xi": 0.97, "sigma_min": 0.002, "alpha0": 8e3},
                  "sigma_static": 0.002, "init_box": [0.0, 1.0]},
    },
}
_COMMON = {
    "chain": {"discretization": "pnp", "alpha_static": 1.0, "sigma_static": 0.0,
              "deterministic": False, "record_every": None},
    "diagnostics": {},
    "sweep": {"realizations": 1},
}
TOP_KEYS = ("kind", "seed", "realization", "output_dir", "posterior", "score", "chain",
            "diagnostics", "sweep")


class ConfigError(ContractError):
    """An invalid config; the message starts with ``file:line:`` when known."""


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    for i, line in enumerate(text.splitlines(), 1):
        if re.search(rf'"{re.escape(key)}"\s*:', line):
            return i
    return None


@dataclass
class ExperimentConfig:
    """A fully resolved experiment description.

    ``posterior``, ``score``, ``chain`` and ``diagnostics`` hold the merged
    per-kind defaults and user overrides. ``realization`` selects which
    random posterior of the kind is built.
    """

    kind: str
    seed: int = 0
    realization: int = 0
    output_dir: str = "runs"
    posterior: dict = field(default_factory=dict)
    score: dict = field(default_factory=dict)
    chain: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    source: str | None = field(default=None, repr=False, compare=False)
    source_text: str | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_dict(cls, doc: dict, source: str | None = None,
                  source_text: str | None = None) -> "ExperimentConfig":
        def fail(msg, key=None):
            raise ConfigError(_anchor(source, source_text, key, msg))

        if not isinstance(doc, dict):
            fail("config must be a JSON object")
        unknown = [k for k in doc if k not in TOP_KEYS]
        if unknown:
            fail(f"unknown key {unknown[0]!r}", unknown[0])
        kind = doc.get("kind")
        if kind not in BUILDERS:
            fail(f"kind must be one of {sorted(BUILDERS)}, got {kind!r}", "kind")
        defaults = _merge(_COMMON, DEFAULTS[kind])
        cfg = cls(
            kind=kind,
            seed=doc.get("seed", 0),
            realization=doc.get("realization", 0),
            output_dir=doc.get("output_dir", f"runs/{kind}"),
            posterior=_merge(defaults.get("posterior", {}), doc.get("posterior")),
            score=_merge(defaults.get("score", {}), doc.get("score")),
            chain=_merge(defaults["chain"], doc.get("chain")),
            diagnostics=_merge(defaults["diagnostics"], doc.get("diagnostics")),
            sweep=_merge(defaults["sweep"], doc.get("sweep")),
            source=source,
            source_text=source_text,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "realization": self.realization,
            "output_dir": self.output_dir,
            "posterior": copy.deepcopy(self.posterior),
            "score": copy.deepcopy(self.score),
            "chain": copy.deepcopy(self.chain),
            "diagnostics": copy.deepcopy(self.diagnostics),
            "sweep": copy.deepcopy(self.sweep),
        }

    def digest(self) -> str:
        """Hash of everything that affects the numbers (the output path does not)."""
        doc = self.to_dict()
        doc.pop("output_dir")
        text = json.dumps(doc, sort_keys=True, default=float)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def _fail(self, msg, key=None):
        raise ConfigError(_anchor(self.source, self.source_text, key, msg))

    def validate(self) -> "ExperimentConfig":
        for key in ("seed", "realization"):
            val = getattr(self, key)
            if not isinstance(val, int) or isinstance(val, bool) or val < 0:
                self._fail(f"{key} must be a nonnegative integer", key)
        for path_key in ("prior_file", "likelihood_file"):
            path = self.posterior.get(path_key)
            if path and not Path(path).is_file():
                self._fail(f"{path_key} {path!r} does not exist", path_key)
        try:
            self.score_model_kwargs()
            self.chain_config().validate()
        except ContractError as exc:
            self._fail(str(exc), _guess_key(str(exc)))
        except TypeError as exc:
            self._fail(f"bad chain settings: {exc}", "chain")
        if self.kind == "validate2d":
            d = self.diagnostics
            if int(d["eval_every"]) < 1 or int(d["K"]) < 1:
                self._fail("eval_every and K must be positive", "eval_every")
            try:
                self.grid()
            except (ContractError, TypeError, ValueError) as exc:
                self._fail(f"bad grid: {exc}", "grid")
        if int(self.sweep.get("realizations", 1)) < 1:
            self._fail("sweep.realizations must be at least 1", "realizations")
        return self

    def score_model_kwargs(self) -> dict:
        s = dict(self.score)
        allowed = {"kind", "eps_max", "r_s", "noise_std"}
        bad = set(s) - allowed
        if bad:
            raise ContractError(f"unknown score option {sorted(bad)[0]!r}")
        return s

    def chain_seed(self) -> int:
        """Chain streams depend on (seed, realization) but not on swept values."""
        ss = np.random.SeedSequence([int(self.seed), int(self.realization)])
        return int(ss.generate_state(1, dtype=np.uint32)[0])

    def chain_config(self) -> ChainConfig:
        c = dict(self.chain)
        sched = c.pop("schedule", None)
        c.pop("seed", None)
        box = c.pop("init_box", (-1.0, 1.0))
        return ChainConfig(
            seed=self.chain_seed(),
            schedule=AnnealingSchedule(**sched) if sched is not None else None,
            init_box=tuple(box),
            **c,
        )

    def grid(self) -> Grid2D:
        g = self.diagnostics.get("grid", {})
        return Grid2D(tuple(tuple(map(float, b)) for b in g["bounds"]),
                      tuple(int(c) for c in g["cells"]))

    def with_overrides(self, **changes) -> "ExperimentConfig":
        doc = self.to_dict()
        doc.update(changes)
        return ExperimentConfig.from_dict(doc, self.source, None)


def _guess_key(msg: str) -> str | None:
    for key in ("gamma", "n_iters", "batch", "discretization", "alpha0", "sigma0", "xi",
                "sigma_min", "eps_max", "r_s", "init_box", "record_every", "schedule",
                "alpha_static", "sigma_static", "kind"):
        if key in msg:
            return key
    return None


def _anchor(source, text, key, msg) -> str:
    line = _line_of(text, key) if key else None
    where = source or "<config>"
    return f"{where}:{line}: {msg}" if line else f"{where}: {msg}"


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config file; errors name the file and line."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    return ExperimentConfig.from_dict(doc, str(path), text)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "."))


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    return out if out.is_absolute() else output_root() / out


def versions() -> dict:
    return {"pnpmc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# -- running ------------------------------------------------------------------


@dataclass
class RunResult:
    """In-memory view of what a run wrote to disk."""

    config: ExperimentConfig
    output_dir: Path
    records: list
    samples: np.ndarray
    warnings: list
    traces: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def metric(self, name: str):
        for r in self.records:
            if r["metric"] == name:
                return r["value"]
        raise KeyError(name)


_GRID_CACHE: dict = {}


def _grid_posterior(cfg: ExperimentConfig, problem: Problem):
    """Tabulated posterior, shared by sweep cells that differ only in sampler knobs."""
    key = json.dumps([cfg.kind, cfg.posterior, cfg.seed, cfg.realization,
                      cfg.diagnostics["grid"]], sort_keys=True, default=float)
    if key not in _GRID_CACHE:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", GridCoverageWarning)
            gp = GridPosterior((problem.lik, problem.prior), cfg.grid())
        if len(_GRID_CACHE) >= 4:
            _GRID_CACHE.pop(next(iter(_GRID_CACHE)))
        _GRID_CACHE[key] = (gp, tuple(str(w.message) for w in caught))
    return _GRID_CACHE[key]


class _FisherMonitor:
    """Fit a mixture to the batch every few iterations and score it on the grid."""

    def __init__(self, cfg: ExperimentConfig, problem: Problem):
        d = cfg.diagnostics
        self.K = int(d["K"])
        self.restarts = int(d["em_restarts"])
        self.tol = float(d["em_tol"])
        self.min_mass = float(d["min_mass"])
        self.seed = cfg.chain_seed()
        self.gp, warns = _grid_posterior(cfg, problem)
        self.warnings = list(warns)
        self.rows = []
        self.em_monotone = True
        self.skipped = 0

    def __call__(self, k, x):
        finite = x[np.all(np.isfinite(x), axis=1)]
        try:
            nu, trace = em_fit_gmm(finite, self.K, np.random.default_rng([self.seed, k]),
                                   restarts=self.restarts, tol=self.tol, return_trace=True)
        except FitError as exc:
            self.warnings.append(f"iteration {k}: {exc}")
            self.rows.append((k, np.nan, np.nan))
            return
        self.em_monotone &= trace.monotone()
        fi, kl, mass = grid_fi_kl(nu, self.gp)
        if mass < self.min_mass:
            # a fit that leaks off the grid gives meaningless FI/KL
            self.skipped += 1
            self.rows.append((k, np.nan, np.nan))
        else:
            self.rows.append((k, fi, kl))

    def minima(self):
        vals = np.array([r[1:] for r in self.rows], dtype=float).reshape(-1, 2)
        ok = np.all(np.isfinite(vals), axis=1)
        if not ok.any():
            return np.nan, np.nan
        return float(vals[ok, 0].min()), float(vals[ok, 1].min())


def _record(metric, value, digest, grid=None, warn=()):
    if isinstance(value, np.generic):
        value = value.item()
    return {"metric": metric, "value": value, "config_digest": digest,
            "grid": grid, "warnings": list(warn)}


def _linear_view(lik):
    """The linear-Gaussian form of a likelihood, if it has one."""
    if isinstance(lik, GaussianLinearLikelihood):
        return lik
    if isinstance(lik, MaskedFourierLikelihood):
        return GaussianLinearLikelihood(lik.operator, lik.y, lik.beta)
    return None


def _mode_records(samples, mode_means, truth, digest, oracle=None):
    recs = []
    split = classify_modes(samples, mode_means, truth)
    for k, frac in enumerate(split.fractions):
        recs.append(_record(f"mode_fraction_{k}", float(frac), digest))
    recs.append(_record("min_mode_fraction", float(split.fractions.min()), digest))
    if oracle is not None:
        for k in range(oracle.n_components):
            recs.append(_record(f"oracle_weight_{k}", float(oracle.weights[k]), digest))
            cnt = int(split.counts[k])
            if cnt >= 2:
                se = split.sds[k] / np.sqrt(cnt)
                with np.errstate(divide="ignore", invalid="ignore"):
                    z = np.abs(split.means[k] - oracle.means[k]) / se
                within = float(np.mean(z <= 3.0))
            else:
                within = float("nan")
            recs.append(_record(f"mode_mean_within_3se_{k}", within, digest))
    for k, st in enumerate(split.stats):
        if st is not None:
            recs.append(_record(f"mode_{k}_nll", st.nll, digest))
            recs.append(_record(f"mode_{k}_psnr_db", st.psnr_db, digest))
    return recs, split


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """Run one experiment and write its artifacts.

    Chain divergences do not fail the run; they are listed in ``meta.json``.
    """
    cfg.validate()
    digest = cfg.digest()
    problem = build_problem(cfg.kind, cfg.posterior, cfg.seed, cfg.realization)
    score = ScoreModel(problem.prior, **cfg.score_model_kwargs())
    chain = cfg.chain_config()

    monitor = _FisherMonitor(cfg, problem) if cfg.kind == "validate2d" else None
    every = int(cfg.diagnostics["eval_every"]) if monitor else None
    batch = run_batch(chain, problem.lik, score, monitor=monitor, monitor_every=every)

    run_warnings = []
    if batch.diverged:
        run_warnings.append(f"{len(batch.diverged)} chain(s) diverged")
    samples = batch.samples
    finite = batch.finite()
    records = [_record("n_diverged", len(batch.diverged), digest)]
    extras = {}
    traces = []

    if monitor is not None:
        run_warnings += monitor.warnings
        traces = monitor.rows
        min_fi, min_kl = monitor.minima()
        grid = cfg.grid().to_dict()
        if not np.isfinite(min_fi):
            run_warnings.append("no FI/KL evaluation passed the grid-mass check")
        records += [
            _record("min_fi", min_fi, digest, grid, monitor.warnings),
            _record("min_kl", min_kl, digest, grid, monitor.warnings),
            _record("n_evals", sum(np.isfinite(r[1]) for r in traces), digest),
            _record("n_evals_off_grid", monitor.skipped, digest),
            _record("em_monotone", bool(monitor.em_monotone), digest),
        ]
    elif len(finite) >= 2:
        oracle = None
        lin = _linear_view(problem.lik)
        if lin is not None:
            oracle = conjugate_posterior(problem.prior, lin)
        mode_means = oracle.means if oracle is not None else problem.prior.means
        if problem.truth is not None:
            st = sample_stats(finite, problem.truth)
            records += [_record(f"{key}", val, digest)
                        for key, val in st.to_dict().items() if key != "sd_convention"]
        recs, split = _mode_records(finite, mode_means, problem.truth, digest, oracle)
        records += recs
        extras["split"] = split
        extras["oracle"] = oracle
        if cfg.kind == "bhi":
            c_cph, c_camp = problem.lik.chi2(finite)
            extras["chi2"] = (split.labels, c_cph, c_camp)
            records += [
                _record("chi2_cph_mean", float(np.mean(c_cph)), digest),
                _record("chi2_camp_mean", float(np.mean(c_camp)), digest),
            ]
            for k in range(len(mode_means)):
                sel = split.labels == k
                if sel.any():
                    records.append(_record(f"mode_{k}_chi2_cph_mean", float(c_cph[sel].mean()), digest))
                    records.append(_record(f"mode_{k}_chi2_camp_mean", float(c_camp[sel].mean()), digest))
    else:
        run_warnings.append("fewer than two finite chains; no statistics")

    result = RunResult(cfg, resolve_output_dir(cfg), records, samples, run_warnings, traces, extras)
    result.extras["problem"] = problem
    result.extras["batch"] = batch
    if write:
        _write_run(result, batch, chain)
    return result


def _write_run(result: RunResult, batch, chain: ChainConfig):
    out = result.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    batch.to_csv(out / "samples.csv")
    (out / "stats.json").write_text(json.dumps(
        {"config_digest": cfg.digest(), "records": result.records}, indent=2, default=_jsonable))
    if cfg.kind == "validate2d":
        with open(out / "traces.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "fi", "kl"])
            for k, fi, kl in result.traces:
                w.writerow([k, repr(float(fi)), repr(float(kl))])
    if "chi2" in result.extras:
        labels, c_cph, c_camp = result.extras["chi2"]
        rows = np.flatnonzero(np.all(np.isfinite(batch.samples), axis=1))
        with open(out / "chi2.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain", "mode", "chi2_cph", "chi2_camp"])
            for i, lab, a, b in zip(rows, labels, c_cph, c_camp):
                w.writerow([int(i), int(lab), repr(float(a)), repr(float(b))])
    meta = {
        "schema_version": SCHEMA_VERSION,
        "csv_schemas": CSV_SCHEMAS,
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "chain_digest": chain.digest(),
        "seed": cfg.seed,
        "chain_seed": chain.seed,
        "versions": versions(),
        "sampler": batch.sidecar(),
        "warnings": result.warnings,
        "sd_convention": "population",
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, default=_jsonable))


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


# -- sweeps -------------------------------------------------------------------


def _apply_param(doc: dict, param: str, value: float) -> dict:
    doc = copy.deepcopy(doc)
    if param == "gamma":
        doc["chain"]["gamma"] = value
    elif param == "sigma_min":
        if doc["chain"].get("schedule") is None:
            raise ContractError("a sigma_min sweep needs an annealing schedule")
        doc["chain"]["schedule"]["sigma_min"] = value
    elif param == "eps_max":
        doc["score"]["eps_max"] = value
    return doc


def seed_sweep(cfg: ExperimentConfig, param: str, values, realizations: int | None = None,
               write: bool = True) -> dict:
    """Run ``cfg`` for each value of ``param`` on D random posteriors.

    Realization ``r`` uses the same posterior and the same chain streams for
    every value, so differences between values are not masked by sampling
    noise. Returns per-cell rows and per-value means of min-FI and min-KL.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"param must be one of {SWEEP_PARAMS}, got {param!r}")
    values = [float(v) for v in values]
    if not values or any(v <= 0 for v in values):
        raise ConfigError("sweep values must be positive")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep values must be strictly decreasing")
    D = int(realizations if realizations is not None else cfg.sweep.get("realizations", 20))
    base = cfg.to_dict()
    root = resolve_output_dir(cfg)
    rows = []
    for v in values:
        doc = _apply_param(base, param, v)
        for r in range(D):
            doc_r = dict(doc, realization=r,
                         output_dir=str(root / f"{param}={v:g}" / f"r{r:02d}"))
            cell = ExperimentConfig.from_dict(doc_r, cfg.source)
            res = run_experiment(cell, write=write)
            rows.append({
                "param": param, "value": v, "realization": r,
                "min_fi": _metric_or_nan(res, "min_fi"),
                "min_kl": _metric_or_nan(res, "min_kl"),
                "n_evals": _metric_or_nan(res, "n_evals"),
                "n_diverged": res.metric("n_diverged"),
                "em_monotone": bool(_metric_or_nan(res, "em_monotone")),
            })
            logger.info("%s=%g r=%d: min FI %.4g", param, v, r, rows[-1]["min_fi"])
    summary = []
    for v in values:
        cell = [row for row in rows if row["value"] == v]
        summary.append({
            "param": param, "value": v, "realization": "mean",
            "min_fi": _nanmean([c["min_fi"] for c in cell]),
            "min_kl": _nanmean([c["min_kl"] for c in cell]),
            "n_evals": float(np.mean([c["n_evals"] for c in cell])),
            "n_diverged": int(sum(c["n_diverged"] for c in cell)),
        })
    if write:
        root.mkdir(parents=True, exist_ok=True)
        cols = ["param", "value", "realization", "min_fi", "min_kl", "n_evals", "n_diverged"]
        with open(root / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            for row in rows + summary:
                w.writerow(row)
        (root / "sweep_meta.json").write_text(json.dumps({
            "schema_version": SCHEMA_VERSION, "config": base, "config_digest": cfg.digest(),
            "param": param, "values": values, "realizations": D, "versions": versions(),
        }, indent=2, default=_jsonable))
    return {"rows": rows, "summary": summary}


def _nanmean(vals) -> float:
    vals = np.asarray(vals, dtype=float)
    ok = np.isfinite(vals)
    return float(vals[ok].mean()) if ok.any() else float("nan")


def _metric_or_nan(res, name):
    try:
        return res.metric(name)
    except KeyError:
        return float("nan")


def validate(cfg: ExperimentConfig) -> dict:
    """Dry run: check the config and build the posterior without sampling."""
    cfg.validate()
    problem = build_problem(cfg.kind, cfg.posterior, cfg.seed, cfg.realization)
    chain = cfg.chain_config()
    return {
        "kind": cfg.kind,
        "dim": problem.dim,
        "config_digest": cfg.digest(),
        "chain_digest": chain.digest(),
        "output_dir": str(resolve_output_dir(cfg)),
        "n_iters": chain.n_iters,
        "batch": chain.batch,
    }
