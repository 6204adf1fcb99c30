"""Gaussian mixtures and seeded random streams.

Every density in the package is ultimately a :class:`GaussianMixture`: the
prior, the fitted density of a sample batch, and the closed-form posterior of
a linear-Gaussian problem. Arrays of points are always shaped ``(..., n)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

LOG_2PI = np.log(2.0 * np.pi)

COV_TYPES = ("full", "diag", "spherical")


def logsumexp_rows(a: np.ndarray, keepdims: bool = False) -> np.ndarray:
    """log(sum(exp(a), axis=-1)), stable for rows of -inf."""
    m = np.max(a, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = m + np.log(np.sum(np.exp(a - m), axis=-1, keepdims=True))
    return out if keepdims else out[..., 0]


class ContractError(ValueError):
    """Raised when an argument violates an operation's precondition."""


@dataclass(frozen=True)
class RngStream:
    """Address of a reproducible random stream.

    The pair ``(master_seed, stream_id)`` fully determines the draws; chain
    ``i`` of a batch uses ``stream_id = i``. Sub-keys split a stream further
    (e.g. Brownian increments vs. score noise) without overlap.
    """

    master_seed: int
    stream_id: int = 0

    def seed_sequence(self, *subkeys: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            int(self.master_seed), spawn_key=(int(self.stream_id), *map(int, subkeys))
        )

    def generator(self, *subkeys: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*subkeys)))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an RngStream, or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        raise ContractError("a random stream is required")
    return np.random.default_rng(rng)


class BatchStreams:
    """Per-chain normal draws for a batch of chains, served row-wise.

    Chain ``i`` owns ``RngStream(master_seed, i)``; each named channel is a
    sub-stream of it. Draws are pre-generated in blocks of ``block`` steps so
    that a batch step costs one array lookup, while row ``i`` of every draw
    still comes only from chain ``i``'s stream.
    """

    block = 64

    def __init__(self, master_seed: int, batch: int, dim: int, chains=None):
        self.master_seed = int(master_seed)
        self.dim = int(dim)
        self.chains = np.arange(batch) if chains is None else np.asarray(chains)
        self._gens = {}
        self._buf = {}
        self._pos = {}

    def _channel(self, key: int):
        if key not in self._gens:
            self._gens[key] = [
                RngStream(self.master_seed, int(i)).generator(key) for i in self.chains
            ]
            self._pos[key] = self.block
        return self._gens[key]

    def normal(self, key: int) -> np.ndarray:
        """Next ``(batch, dim)`` standard normal draw on channel ``key``."""
        gens = self._channel(key)
        if self._pos[key] >= self.block:
            buf = np.empty((self.block, len(gens), self.dim))
            for j, g in enumerate(gens):
                buf[:, j, :] = g.standard_normal((self.block, self.dim))
            self._buf[key] = buf
            self._pos[key] = 0
        out = self._buf[key][self._pos[key]]
        self._pos[key] += 1
        return out

    def channel(self, key: int) -> "_Channel":
        return _Channel(self, key)


class _Channel:
    """Generator-like view of one channel; only ``standard_normal`` is served."""

    def __init__(self, streams: BatchStreams, key: int):
        self.streams = streams
        self.key = key

    def standard_normal(self, size=None):
        z = self.streams.normal(self.key)
        if size is not None and tuple(np.atleast_1d(size)) != z.shape:
            raise ContractError(f"channel serves shape {z.shape}, asked for {size}")
        return z


class GaussianMixture:
    """Finite mixture of Gaussians with exact log-density, score and sampling.

    Covariances may be given as ``(K, n, n)`` full matrices, ``(K, n)``
    diagonals, or ``(K,)`` isotropic variances; the storage type is kept
    through smoothing so high-dimensional isotropic priors stay cheap.
    Instances are immutable.
    """

    def __init__(self, weights, means, covariances):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        m = np.asarray(means, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        c = np.asarray(covariances, dtype=float)
        K, n = m.shape
        if w.shape != (K,):
            raise ContractError(f"expected {K} weights, got shape {w.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
                raise ContractError("weights must be nonnegative and sum to one")
            w = w / w.sum()
        if c.shape == (K, n, n):
            cov_type = "full"
        elif c.shape == (K, n) and n > 1:
            cov_type = "diag"
        elif c.shape == (K,):
            cov_type = "spherical"
        elif c.shape == (K, 1) and n == 1:
            cov_type, c = "spherical", c[:, 0]
        else:
            raise ContractError(f"covariance shape {c.shape} incompatible with means {m.shape}")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c))):
            raise ContractError("mixture parameters must be finite")

        self.weights = w
        self.means = m
        self.covariances = c
        self.cov_type = cov_type
        for a in (w, m, c):
            a.setflags(write=False)

        if cov_type == "full":
            if not np.allclose(c, np.swapaxes(c, 1, 2), rtol=1e-10, atol=1e-12):
                raise ContractError("covariances must be symmetric")
            try:
                self._chol = np.stack([linalg.cholesky(ck, lower=True) for ck in c])
            except linalg.LinAlgError as exc:
                raise ContractError("covariance is not positive definite") from exc
            self._logdet = 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)
            eye = np.eye(n)
            self._prec = np.stack([linalg.cho_solve((L, True), eye) for L in self._chol])
            self._prec = 0.5 * (self._prec + np.swapaxes(self._prec, 1, 2))
        else:
            if np.any(c <= 0):
                raise ContractError("covariance is not positive definite")
            self._logdet = np.log(c).sum(axis=1) if cov_type == "diag" else n * np.log(c)
        with np.errstate(divide="ignore"):
            self._logw = np.log(w)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __repr__(self):
        return f"GaussianMixture(K={self.n_components}, n={self.dim}, cov_type={self.cov_type!r})"

    def full_covariances(self) -> np.ndarray:
        K, n = self.means.shape
        if self.cov_type == "full":
            return np.array(self.covariances)
        if self.cov_type == "diag":
            return np.stack([np.diag(d) for d in self.covariances])
        return self.covariances[:, None, None] * np.eye(n)

    # -- per-component linear algebra -------------------------------------

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ContractError(f"point dimension {x.shape[-1:]} != mixture dimension {self.dim}")
        return x

    def _precision_times(self, k: int, d: np.ndarray) -> np.ndarray:
        """Sigma_k^{-1} d for row vectors ``d`` of shape (B, n)."""
        if self.cov_type == "full":
            return d @ self._prec[k]
        return d / self.covariances[k]

    def _mahalanobis(self, k: int, d: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", d, self._precision_times(k, d))

    def _component_logpdf(self, x2: np.ndarray) -> np.ndarray:
        """(B, K) matrix of log w_k + log N(x; m_k, Sigma_k)."""
        n = self.dim
        out = np.empty((x2.shape[0], self.n_components))
        for k in range(self.n_components):
            d = x2 - self.means[k]
            out[:, k] = self._logw[k] - 0.5 * (n * LOG_2PI + self._logdet[k] + self._mahalanobis(k, d))
        return out

    # -- public density API -----------------------------------------------

    def logpdf(self, x) -> np.ndarray | float:
        """log sum_k w_k N(x; m_k, Sigma_k), evaluated by log-sum-exp."""
        x = self._check(x)
        x2 = x.reshape(-1, self.dim)
        val = logsumexp_rows(self._component_logpdf(x2))
        return float(val[0]) if x.ndim == 1 else val.reshape(x.shape[:-1])

    def responsibilities(self, x) -> np.ndarray:
        x = self._check(x)
        x2 = x.reshape(-1, self.dim)
        lp = self._component_logpdf(x2)
        r = np.exp(lp - logsumexp_rows(lp, keepdims=True))
        return r.reshape(x.shape[:-1] + (self.n_components,))

    def score(self, x) -> np.ndarray:
        """Gradient of :meth:`logpdf`: sum_k r_k(x) Sigma_k^{-1} (m_k - x)."""
        x = self._check(x)
        x2 = x.reshape(-1, self.dim)
        lp = self._component_logpdf(x2)
        r = np.exp(lp - logsumexp_rows(lp, keepdims=True))
        out = np.zeros_like(x2)
        for k in range(self.n_components):
            out += r[:, k:k + 1] * self._precision_times(k, self.means[k] - x2)
        return out.reshape(x.shape)

    def sample(self, rng, size: int | None = None) -> np.ndarray:
        """Draw a component index from the weights, then a Gaussian draw from it."""
        gen = as_generator(rng)
        count = 1 if size is None else int(size)
        idx = gen.choice(self.n_components, size=count, p=self.weights)
        z = gen.standard_normal((count, self.dim))
        out = np.empty_like(z)
        for k in range(self.n_components):
            sel = idx == k
            if not np.any(sel):
                continue
            if self.cov_type == "full":
                out[sel] = self.means[k] + z[sel] @ self._chol[k].T
            else:
                out[sel] = self.means[k] + z[sel] * np.sqrt(self.covariances[k])
        return out[0] if size is None else out

    # -- transformations --------------------------------------------------

    def smoothed(self, sigma: float) -> "GaussianMixture":
        """The mixture convolved with N(0, sigma^2 I): covariances + sigma^2 I."""
        if sigma < 0:
            raise ContractError("sigma must be nonnegative")
        if sigma == 0:
            return self
        return _smoothed_cached(self, float(sigma))

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.full_covariances().tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianMixture":
        return cls(doc["weights"], doc["means"], doc["covariances"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))


@lru_cache(maxsize=64)
def _smoothed_cached(gmm: GaussianMixture, sigma: float) -> GaussianMixture:
    s2 = sigma * sigma
    if gmm.cov_type == "full":
        cov = gmm.covariances + s2 * np.eye(gmm.dim)
    else:
        cov = gmm.covariances + s2
    return GaussianMixture(gmm.weights, gmm.means, cov)


def gmm_logpdf(gmm: GaussianMixture, x) -> float | np.ndarray:
    return gmm.logpdf(x)


def gmm_score(gmm: GaussianMixture, x) -> np.ndarray:
    return gmm.score(x)


def gmm_sample(gmm: GaussianMixture, rng, size: int | None = None) -> np.ndarray:
    return gmm.sample(rng, size)
