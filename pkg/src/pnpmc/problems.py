"""Synthetic test posteriors used by the experiments.

Each builder turns a plain parameter dictionary (plus a master seed and a
realization index) into a likelihood, a prior mixture and a few extras such
as the ground truth. Randomness is drawn only from
``RngStream(seed, PROBLEM_STREAM + realization)``, so a posterior is fully
determined by ``(seed, realization)`` and independent of the sampler's
streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ContractError, GaussianMixture, RngStream
from .likelihoods import (
    ClosureLikelihood,
    ClosureSystem,
    GaussianLinearLikelihood,
    MaskedFourierLikelihood,
    radial_mask,
    simulate_measurements,
)

# problem streams live far above chain indices so they never collide
PROBLEM_STREAM = 1 << 40


@dataclass
class Problem:
    """A posterior ``exp(-g(x)) p(x)`` plus what the diagnostics need."""

    lik: object
    prior: GaussianMixture
    truth: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.prior.dim


def problem_rng(seed: int, realization: int) -> np.random.Generator:
    return RngStream(seed, PROBLEM_STREAM + int(realization)).generator()


def _load_prior(params, fallback):
    path = params.get("prior_file")
    if path:
        return GaussianMixture.from_json(Path(path).read_text())
    return fallback()


def _load_json(path):
    return json.loads(Path(path).read_text())


# -- image priors -------------------------------------------------------------


def pixel_grid(side: int):
    """Centered pixel coordinates of a ``side x side`` image, unit field of view."""
    yy, xx = (np.mgrid[:side, :side] - (side - 1) / 2.0) / side
    return yy, xx


def crescent(side: int, angle: float, radius: float = 0.28, width: float = 0.07) -> np.ndarray:
    """A ring whose brightness peaks toward ``angle``; row-major flattened."""
    yy, xx = pixel_grid(side)
    rr = np.hypot(xx, yy)
    ring = np.exp(-0.5 * ((rr - radius) / width) ** 2)
    return (ring * (0.6 + 0.4 * np.cos(np.arctan2(yy, xx) - angle))).ravel()


def smooth_covariance(side: int, scale: float, length: float, nugget: float) -> np.ndarray:
    """Squared-exponential pixel covariance; ``length`` is in pixels."""
    yy, xx = pixel_grid(side)
    p = np.stack([xx.ravel(), yy.ravel()], axis=1) * side
    d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(-1)
    return scale**2 * np.exp(-0.5 * d2 / length**2) + nugget * np.eye(side * side)


def crescent_prior(side: int, scale: float, length: float, nugget: float,
                   peak: float = 0.8) -> GaussianMixture:
    """Two equally weighted crescents facing opposite ways, shared smooth covariance."""
    means = np.array([crescent(side, 0.0), crescent(side, np.pi)])
    means = peak * means / means.max()
    cov = smooth_covariance(side, scale, length, nugget)
    return GaussianMixture([0.5, 0.5], means, np.array([cov, cov]))


# -- builders -----------------------------------------------------------------


def build_validate2d(params: dict, seed: int, realization: int) -> Problem:
    """Random 2D bimodal posterior: fixed GMM prior, A redrawn per realization.

    ``A`` is a standard Gaussian 2x2 matrix rescaled to spectral norm
    ``a_norm``; ``y = A x_true + N(0, beta^2)`` with ``x_true`` fixed.
    """
    gen = problem_rng(seed, realization)

    def default_prior():
        means = np.asarray(params["prior_means"], dtype=float)
        var = float(params["prior_var"])
        return GaussianMixture(np.full(len(means), 1.0 / len(means)), means,
                               np.array([var * np.eye(2)] * len(means)))

    prior = _load_prior(params, default_prior)
    if prior.dim != 2:
        raise ContractError("validate2d needs a 2D prior")
    G = gen.standard_normal((2, 2))
    A = G / np.linalg.norm(G, 2) * float(params["a_norm"])
    truth = np.asarray(params["truth"], dtype=float)
    lik = GaussianLinearLikelihood.simulate(A, truth, float(params["beta"]), gen, params.get("r_g"))
    return Problem(lik, prior, truth)


def build_gaussian_image(params: dict, seed: int, realization: int) -> Problem:
    """Two-mode Gaussian image prior under a wide random Gaussian matrix.

    The modes are ``base -/+ shift`` per pixel with isotropic variance. With
    ``project_shift`` the rows of ``A`` are made orthogonal to the all-ones
    direction, so the data cannot tell the modes apart and the exact posterior
    keeps both of them with equal weight.
    """
    gen = problem_rng(seed, realization)
    side = int(params["side"])
    n = side * side
    m = int(params["m"])
    shift = float(params["shift"])

    def default_prior():
        yy, xx = pixel_grid(side)
        base = (params["base_level"]
                + params["base_amp"] * np.sin(2 * np.pi * xx) * np.cos(2 * np.pi * yy)).ravel()
        var = float(params["prior_var"])
        return GaussianMixture([0.5, 0.5], [base - shift, base + shift], [var, var])

    prior = _load_prior(params, default_prior)
    A = gen.standard_normal((m, n)) / np.sqrt(m)
    if params.get("project_shift", True):
        u = np.ones(n) / np.sqrt(n)
        A = A - np.outer(A @ u, u)
    truth = prior.sample(gen)
    lik = GaussianLinearLikelihood.simulate(A, truth, float(params["beta"]), gen, params.get("r_g"))
    return Problem(lik, prior, truth)


def _image_truth(prior, gen, component):
    k = int(component)
    single = GaussianMixture([1.0], prior.means[k:k + 1], prior.covariances[k:k + 1])
    return single.sample(gen)


def build_cs(params: dict, seed: int, realization: int) -> Problem:
    """Compressed sensing: ``m = ratio * n`` Gaussian measurements of a crescent image."""
    gen = problem_rng(seed, realization)
    side = int(params["side"])
    n = side * side
    prior = _load_prior(params, lambda: crescent_prior(
        side, params["prior_scale"], params["prior_length"], params["prior_nugget"]))
    if params.get("likelihood_file"):
        lik = GaussianLinearLikelihood.from_dict(_load_json(params["likelihood_file"]))
        return Problem(lik, prior, None)
    truth = _image_truth(prior, gen, params.get("truth_component", 0))
    m = max(1, int(round(float(params["ratio"]) * n)))
    A = gen.standard_normal((m, n)) / np.sqrt(m)
    lik = GaussianLinearLikelihood.simulate(A, truth, float(params["beta"]), gen, params.get("r_g"))
    return Problem(lik, prior, truth)


def build_mri_fourier(params: dict, seed: int, realization: int) -> Problem:
    """Radially undersampled 2D DFT of a crescent image."""
    gen = problem_rng(seed, realization)
    side = int(params["side"])
    prior = _load_prior(params, lambda: crescent_prior(
        side, params["prior_scale"], params["prior_length"], params["prior_nugget"]))
    if params.get("likelihood_file"):
        lik = MaskedFourierLikelihood.from_dict(_load_json(params["likelihood_file"]))
        return Problem(lik, prior, None)
    truth = _image_truth(prior, gen, params.get("truth_component", 0))
    mask = radial_mask((side, side), float(params["fraction"]))
    lik = MaskedFourierLikelihood.simulate(truth, mask, float(params["beta"]), (side, side),
                                           gen, params.get("r_g"))
    return Problem(lik, prior, truth, {"mask_fraction": float(mask.mean())})


def build_bhi(params: dict, seed: int, realization: int) -> Problem:
    """Closure-quantity imaging of a crescent with a synthetic rotating array.

    The array layout is seeded by ``array_seed`` (not the realization) so
    realizations share one uv coverage. Closure noise scales are propagated
    from the thermal noise unless given explicitly.
    """
    gen = problem_rng(seed, realization)
    side = int(params["side"])
    prior = _load_prior(params, lambda: crescent_prior(
        side, params["prior_scale"], params["prior_length"], params["prior_nugget"]))
    if params.get("likelihood_file"):
        lik = ClosureLikelihood.from_dict(_load_json(params["likelihood_file"]))
        return Problem(lik, prior, None)
    system = ClosureSystem.synthetic(
        n_tel=int(params["n_tel"]), n_times=int(params["n_times"]), grid_shape=(side, side),
        fov=1.0, rotation=float(params["rotation"]), seed=int(params["array_seed"]))
    truth = _image_truth(prior, gen, params.get("truth_component", 0))
    thermal = float(params["thermal_frac"]) * float(np.sum(truth))
    lik = simulate_measurements(
        truth, system, float(params["gain_std"]), float(params["phase_std"]), thermal, gen,
        beta_cph=params.get("beta_cph"), beta_camp=params.get("beta_camp"),
        rho=float(params["rho"]), r_g=params.get("r_g"))
    return Problem(lik, prior, truth)


BUILDERS = {
    "validate2d": build_validate2d,
    "gaussian_image": build_gaussian_image,
    "cs": build_cs,
    "mri_fourier": build_mri_fourier,
    "bhi": build_bhi,
}


def build_problem(kind: str, params: dict, seed: int, realization: int = 0) -> Problem:
    if kind not in BUILDERS:
        raise ContractError(f"unknown experiment kind {kind!r}")
    return BUILDERS[kind](params, int(seed), int(realization))
