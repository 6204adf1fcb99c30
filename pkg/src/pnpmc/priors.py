"""Score models of the Gaussian-smoothed prior.

A score model answers ``S(x, sigma) ~ grad log p_sigma(x)`` where ``p_sigma``
is the prior convolved with ``N(0, sigma^2 I)``. For a Gaussian-mixture prior
this is exact; the noisy variant adds a norm-bounded random error to emulate
an imperfect learned score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import ContractError, GaussianMixture, as_generator, logsumexp_rows

KINDS = ("exact_gmm", "noisy_gmm")


def clip_norm(v: np.ndarray, radius: float | None) -> np.ndarray:
    """Rescale each row of ``v`` so its Euclidean norm is at most ``radius``."""
    if radius is None:
        return v
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norm, np.finfo(float).tiny))
    return v * scale


@dataclass(frozen=True)
class ScoreModel:
    """Analytic (optionally perturbed and clipped) score of a smoothed GMM prior.

    Attributes:
        base: The unsmoothed prior mixture.
        kind: ``"exact_gmm"`` or ``"noisy_gmm"``.
        eps_max: Maximal norm of the additive score error (noisy kind only).
        r_s: Optional clip radius applied to the returned score.
        noise_std: Per-coordinate std of the error before truncation.
            Defaults to ``eps_max / sqrt(n)``.
    """

    base: GaussianMixture
    kind: str = "exact_gmm"
    eps_max: float = 0.0
    r_s: float | None = None
    noise_std: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown score kind {self.kind!r}")
        if self.eps_max < 0:
            raise ContractError("eps_max must be nonnegative")
        if self.r_s is not None and self.r_s <= 0:
            raise ContractError("r_s must be positive")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def perturbation_std(self) -> float:
        if self.noise_std is not None:
            return float(self.noise_std)
        return self.eps_max / np.sqrt(self.dim)

    def __call__(self, x, sigma: float, rng=None) -> np.ndarray:
        return smoothed_score(self, x, sigma, rng)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "prior": self.base.to_dict(),
            "eps_max": self.eps_max,
            "r_s": self.r_s,
            "noise_std": self.noise_std,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScoreModel":
        return cls(
            base=GaussianMixture.from_dict(doc["prior"]),
            kind=doc.get("kind", "exact_gmm"),
            eps_max=float(doc.get("eps_max", 0.0)),
            r_s=doc.get("r_s"),
            noise_std=doc.get("noise_std"),
        )


def smoothed_score(model: ScoreModel, x, sigma: float, rng=None) -> np.ndarray:
    """Score of the sigma-smoothed prior, with the model's error and clipping.

    ``rng`` supplies the error draw for the noisy kind; anything exposing
    ``standard_normal(shape)`` works, including a batch channel that serves
    one independent row per chain.
    """
    if sigma < 0:
        raise ContractError("sigma must be nonnegative")
    x = np.asarray(x, dtype=float)
    s = model.base.smoothed(sigma).score(x)
    if model.kind == "noisy_gmm" and model.eps_max > 0:
        gen = rng if hasattr(rng, "standard_normal") else as_generator(rng)
        e = model.perturbation_std * gen.standard_normal(x.shape)
        s = s + clip_norm(e, model.eps_max)
    return clip_norm(s, model.r_s)


def mmse_denoise(gmm: GaussianMixture, x, sigma: float) -> np.ndarray:
    """E[z | x] for z ~ gmm and x = z + N(0, sigma^2 I).

    Computed componentwise as ``m_k + Sigma_k (Sigma_k + sigma^2 I)^{-1} (x - m_k)``
    weighted by responsibilities under the smoothed mixture.
    """
    if sigma <= 0:
        raise ContractError("the denoiser needs sigma > 0")
    x = np.asarray(x, dtype=float)
    x2 = x.reshape(-1, gmm.dim)
    inflated = gmm.smoothed(sigma)
    lp = inflated._component_logpdf(x2)
    r = np.exp(lp - logsumexp_rows(lp, keepdims=True))
    s2 = sigma * sigma
    out = np.zeros_like(x2)
    for k in range(gmm.n_components):
        d = x2 - gmm.means[k]
        cov = gmm.covariances[k]
        if gmm.cov_type == "full":
            gain = linalg.solve(cov + s2 * np.eye(gmm.dim), cov, assume_a="pos").T
            est = gmm.means[k] + d @ gain.T
        else:
            est = gmm.means[k] + d * (cov / (cov + s2))
        out += r[:, k:k + 1] * est
    return out.reshape(x.shape)
