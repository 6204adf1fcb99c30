"""Plug-and-play Monte Carlo samplers (stationary and annealed).

Both discretizations drive x along ``-grad g(x) + alpha * S(., sigma)`` plus a
Brownian increment ``sqrt(2 gamma) Z``:

* RED evaluates the score at the current iterate,
* PnP evaluates it after a likelihood gradient step, ``x - gamma grad g(x)``.

With ``alpha = 1`` and fixed ``sigma`` this is the stationary sampler; the
annealed variant takes ``(sigma_k, alpha_k)`` from an exponential schedule.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import BatchStreams, ContractError, RngStream

logger = logging.getLogger(__name__)

DISCRETIZATIONS = ("pnp", "red")

# sub-stream keys inside each chain's RngStream
BROWNIAN, SCORE_NOISE, INIT = 0, 1, 2


class DivergedChainError(FloatingPointError):
    """A chain produced a non-finite iterate."""

    def __init__(self, iteration: int, message: str = "non-finite iterate"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class AnnealingSchedule:
    """Exponential decay ``sigma_k = max(sigma0 xi^k, sigma_min)``, ``alpha_k = max(alpha0 sigma_k^2, 1)``."""

    sigma0: float = 10.0
    xi: float = 0.975
    sigma_min: float = 0.0
    alpha0: float = 10.0

    def __post_init__(self):
        if self.sigma0 <= 0 or self.alpha0 <= 0:
            raise ContractError("sigma0 and alpha0 must be positive")
        if not 0 < self.xi < 1:
            raise ContractError("xi must lie in (0, 1)")
        if self.sigma_min < 0:
            raise ContractError("sigma_min must be nonnegative")
        if self.sigma_min > 0 and self.alpha0 * self.sigma_min**2 > 1 + 1e-12:
            raise ContractError("alpha0 must not exceed 1 / sigma_min^2, or alpha_k never reaches 1")

    def at(self, k: int) -> tuple[float, float]:
        if k < 0:
            raise ContractError("iteration index must be nonnegative")
        sigma = max(self.sigma0 * self.xi**k, self.sigma_min)
        return sigma, max(self.alpha0 * sigma * sigma, 1.0)

    def arrays(self, n_iters: int) -> tuple[np.ndarray, np.ndarray]:
        pairs = np.array([self.at(k) for k in range(n_iters)])
        return pairs[:, 0], pairs[:, 1]


def schedule_at(s: AnnealingSchedule, k: int) -> tuple[float, float]:
    return s.at(k)


@dataclass
class ChainConfig:
    """All knobs of a batch run.

    ``alpha_static`` and ``sigma_static`` set the prior weight and smoothing of
    stationary runs. ``deterministic`` drops the Brownian term, turning both
    samplers into plain PnP/RED gradient iterations. ``record_every`` keeps
    every k-th iterate of every chain.
    """

    gamma: float
    n_iters: int
    batch: int = 1
    seed: int = 0
    discretization: str = "pnp"
    annealed: bool = False
    schedule: AnnealingSchedule | None = None
    alpha_static: float = 1.0
    sigma_static: float = 0.0
    deterministic: bool = False
    init_box: tuple = (-1.0, 1.0)
    record_every: int | None = None

    def validate(self) -> "ChainConfig":
        if not self.gamma > 0:
            raise ContractError("gamma must be positive")
        if int(self.n_iters) < 1:
            raise ContractError("n_iters must be at least 1")
        if int(self.batch) < 1:
            raise ContractError("batch must be at least 1")
        if self.discretization not in DISCRETIZATIONS:
            raise ContractError(f"discretization must be one of {DISCRETIZATIONS}")
        if self.annealed and self.schedule is None:
            raise ContractError("annealed runs need a schedule")
        if self.alpha_static <= 0 or self.sigma_static < 0:
            raise ContractError("alpha_static must be positive and sigma_static nonnegative")
        if self.record_every is not None and int(self.record_every) < 1:
            raise ContractError("record_every must be a positive integer")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init_box"] = [np.asarray(b, dtype=float).tolist() for b in self.init_box]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ChainConfig":
        doc = dict(doc)
        if doc.get("schedule") is not None:
            doc["schedule"] = AnnealingSchedule(**doc["schedule"])
        if "init_box" in doc:
            doc["init_box"] = tuple(doc["init_box"])
        return cls(**doc)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class SampleBatch:
    """Final iterates of a batch of chains; row ``i`` is chain ``i``.

    Diverged chains keep a row of NaNs and are listed in ``diverged`` as
    ``(chain, iteration)`` pairs.
    """

    samples: np.ndarray
    config_digest: str = ""
    seed: int = 0
    diverged: list = field(default_factory=list)
    trajectory: np.ndarray | None = None
    trajectory_iters: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def batch(self) -> int:
        return self.samples.shape[0]

    def finite(self) -> np.ndarray:
        return self.samples[np.all(np.isfinite(self.samples), axis=1)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j}" for j in range(self.samples.shape[1])])
            for row in self.samples:
                writer.writerow([repr(float(v)) for v in row])

    @staticmethod
    def read_csv(path) -> np.ndarray:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)

    def sidecar(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "batch": self.batch,
            "dim": int(self.samples.shape[1]),
            "diverged": [list(map(int, d)) for d in self.diverged],
            "wall_time": self.wall_time,
        }


def _langevin_update(x, drift, gamma, rng, deterministic):
    x_new = x - gamma * drift
    if not deterministic:
        x_new = x_new + np.sqrt(2.0 * gamma) * rng.standard_normal(np.shape(x))
    return x_new


def pmc_red_step(x, lik, score, gamma, sigma, alpha, rng=None, deterministic=False,
                 score_rng=None):
    """One RED-discretized step: ``x - gamma (grad g(x) - alpha S(x, sigma)) + sqrt(2 gamma) Z``.

    The score's own noise (if any) is drawn from ``score_rng``, falling back to
    ``rng``; it is drawn before the Brownian increment.
    """
    x = np.asarray(x, dtype=float)
    drift = lik.grad(x) - alpha * score(x, sigma, rng if score_rng is None else score_rng)
    return _langevin_update(x, drift, gamma, rng, deterministic)


def pmc_pnp_step(x, lik, score, gamma, sigma, alpha, rng=None, deterministic=False,
                 score_rng=None):
    """One PnP-discretized step: the score is taken at ``x - gamma grad g(x)``."""
    x = np.asarray(x, dtype=float)
    g = lik.grad(x)
    drift = g - alpha * score(x - gamma * g, sigma, rng if score_rng is None else score_rng)
    return _langevin_update(x, drift, gamma, rng, deterministic)


STEPS = {"pnp": pmc_pnp_step, "red": pmc_red_step}


class _Rows:
    """Serve the rows of the active chains from a batch stream channel."""

    def __init__(self, streams: BatchStreams, key: int):
        self.streams = streams
        self.key = key
        self.rows = None

    def standard_normal(self, size=None):
        z = self.streams.normal(self.key)
        return z if self.rows is None else z[self.rows]


def initial_points(cfg: ChainConfig, dim: int) -> np.ndarray:
    """Chain ``i`` starts uniform on ``init_box`` using its own stream."""
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (dim,)) for b in cfg.init_box)
    if np.any(hi <= lo):
        raise ContractError("init_box must satisfy lo < hi")
    x0 = np.empty((cfg.batch, dim))
    for i in range(cfg.batch):
        x0[i] = RngStream(cfg.seed, i).generator(INIT).uniform(lo, hi)
    return x0


def run_batch(cfg: ChainConfig, lik, score, x0=None, monitor=None, monitor_every=None) -> SampleBatch:
    """Run ``cfg.batch`` independent chains for ``cfg.n_iters`` steps.

    Args:
        cfg: Sampler configuration (validated here).
        lik: Likelihood exposing ``grad`` and ``dim``.
        score: Callable ``score(x, sigma, rng)``.
        x0: Optional ``(batch, n)`` starting points overriding ``init_box``.
        monitor: Optional ``monitor(k, x)`` called after every
            ``monitor_every``-th iteration with the current iterates (NaN rows
            for diverged chains).

    Returns:
        SampleBatch of final iterates.
    """
    cfg.validate()
    dim = lik.dim
    step = STEPS[cfg.discretization]
    x = initial_points(cfg, dim) if x0 is None else np.array(x0, dtype=float, copy=True)
    if x.shape != (cfg.batch, dim):
        raise ContractError(f"x0 must have shape {(cfg.batch, dim)}")

    streams = BatchStreams(cfg.seed, cfg.batch, dim)
    brownian = _Rows(streams, BROWNIAN)
    score_noise = _Rows(streams, SCORE_NOISE)
    active = np.ones(cfg.batch, dtype=bool)
    diverged = []
    traj, traj_iters = [], []
    t0 = time.perf_counter()

    for k in range(int(cfg.n_iters)):
        if cfg.annealed:
            sigma, alpha = cfg.schedule.at(k)
        else:
            sigma, alpha = cfg.sigma_static, cfg.alpha_static
        all_active = active.all()
        rows = None if all_active else np.flatnonzero(active)
        brownian.rows = score_noise.rows = rows
        xa = x if all_active else x[rows]
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                xa = step(xa, lik, score, cfg.gamma, sigma, alpha, brownian,
                          cfg.deterministic, score_noise)
            except ArithmeticError:
                # a degenerate likelihood evaluation poisons only the rows that caused it
                xa = _step_rowwise(step, xa, lik, score, cfg, sigma, alpha, brownian, score_noise)
        bad = ~np.all(np.isfinite(xa), axis=1)
        if all_active:
            x = xa
        else:
            x[rows] = xa
        if np.any(bad):
            idx = np.flatnonzero(active)[bad]
            for i in idx:
                diverged.append((int(i), k))
            logger.warning("%d chain(s) diverged at iteration %d", len(idx), k)
            x[idx] = np.nan
            active[idx] = False
            if not active.any():
                break
        if cfg.record_every and (k + 1) % cfg.record_every == 0:
            traj.append(x.copy())
            traj_iters.append(k + 1)
        if monitor is not None and monitor_every and (k + 1) % monitor_every == 0:
            monitor(k + 1, x)

    return SampleBatch(
        samples=x,
        config_digest=cfg.digest(),
        seed=int(cfg.seed),
        diverged=diverged,
        trajectory=np.array(traj) if traj else None,
        trajectory_iters=traj_iters,
        wall_time=time.perf_counter() - t0,
    )


def _step_rowwise(step, xa, lik, score, cfg, sigma, alpha, brownian, score_noise):
    z = brownian.standard_normal()
    e = score_noise.standard_normal()
    out = np.empty_like(xa)
    for j in range(xa.shape[0]):
        try:
            out[j] = step(xa[j:j + 1], lik, score, cfg.gamma, sigma, alpha,
                          _Fixed(z[j:j + 1]), cfg.deterministic, _Fixed(e[j:j + 1]))[0]
        except ArithmeticError:
            out[j] = np.nan
    return out


class _Fixed:
    def __init__(self, z):
        self.z = z

    def standard_normal(self, size=None):
        return self.z
