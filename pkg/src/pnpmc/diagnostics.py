"""Turning sample batches into numbers.

* :func:`em_fit_gmm` fits a Gaussian mixture to samples (EM with restarts).
* :func:`grid_kl` / :func:`grid_fi` evaluate KL divergence and relative Fisher
  information between a fitted mixture and a 2D posterior by midpoint
  quadrature on a fine grid.
* :func:`conjugate_posterior` is the closed-form posterior of a GMM prior
  under a linear-Gaussian likelihood.
* :func:`sample_stats` and :func:`classify_modes` give per-pixel statistics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import LOG_2PI, ContractError, GaussianMixture, as_generator, logsumexp_rows


class FitError(RuntimeError):
    """EM could not produce a valid mixture from the samples."""


class GridCoverageWarning(UserWarning):
    """The quadrature grid misses a noticeable part of a density's mass."""


def _rows(samples) -> np.ndarray:
    x = samples.finite() if hasattr(samples, "finite") else np.asarray(samples, dtype=float)
    return np.atleast_2d(x) if x.ndim > 1 else x[:, None]


# -- EM ---------------------------------------------------------------------


@dataclass
class EMTrace:
    """Per-restart mean log-likelihood after each E-step."""

    histories: list = field(default_factory=list)
    best: int = -1

    def monotone(self, tol: float = 1e-10) -> bool:
        for h in self.histories:
            h = np.asarray(h)
            if np.any(np.diff(h) < -tol * np.maximum(1.0, np.abs(h[1:]))):
                return False
        return True


def _kmeanspp(x, K, gen):
    centers = [x[gen.integers(len(x))]]
    for _ in range(1, K):
        d2 = np.min(((x[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[gen.integers(len(x))])
        else:
            centers.append(x[gen.choice(len(x), p=d2 / total)])
    return np.array(centers)


def _m_step(x, r):
    nk = r.sum(axis=0)
    if np.any(nk <= 0):
        raise FitError("an EM component lost all its samples")
    means = (r.T @ x) / nk[:, None]
    covs = []
    for k in range(r.shape[1]):
        d = x - means[k]
        covs.append((r[:, k:k + 1] * d).T @ d / nk[k])
    cov = np.array(covs)
    return GaussianMixture(nk / nk.sum(), means, 0.5 * (cov + np.swapaxes(cov, 1, 2)))


def _em_once(x, K, gen, max_iter, tol):
    centers = _kmeanspp(x, K, gen)
    labels = np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    r = np.eye(K)[labels]
    gmm = _m_step(x, r)
    history = []
    for _ in range(max_iter):
        lp = gmm._component_logpdf(x)
        ll = logsumexp_rows(lp)
        history.append(float(ll.mean()))
        if len(history) > 1 and history[-1] - history[-2] < tol * max(1.0, abs(history[-1])):
            break
        gmm = _m_step(x, np.exp(lp - ll[:, None]))
    return gmm, history


def em_fit_gmm(samples, K: int, rng, restarts: int = 5, max_iter: int = 500,
               tol: float = 1e-10, return_trace: bool = False):
    """Maximum-likelihood GMM with full covariances, best of ``restarts`` EM runs.

    Each restart is seeded by k-means++ centres and a hard assignment.
    Restarts whose covariances degenerate are dropped.
    """
    x = _rows(samples)
    n, d = x.shape
    if K < 1 or n < K * (d + 1):
        raise FitError(f"need at least {K * (d + 1)} finite samples for K={K}, got {n}")
    if np.allclose(x, x[0]):
        raise FitError("samples are degenerate")
    gen = as_generator(rng)
    trace = EMTrace()
    best, best_ll = None, -np.inf
    for _ in range(max(1, restarts)):
        try:
            gmm, hist = _em_once(x, K, gen, max_iter, tol)
        except (FitError, ContractError):
            continue
        trace.histories.append(hist)
        if hist[-1] > best_ll:
            best, best_ll = gmm, hist[-1]
            trace.best = len(trace.histories) - 1
    if best is None:
        raise FitError("every EM restart degenerated")
    return (best, trace) if return_trace else best


# -- grid quadrature --------------------------------------------------------


@dataclass(frozen=True)
class Grid2D:
    """Midpoint-rule grid of ``cells[0] x cells[1]`` equal cells over ``bounds``."""

    bounds: tuple = ((-50.0, 50.0), (-50.0, 50.0))
    cells: tuple = (1000, 1000)

    def __post_init__(self):
        for (lo, hi), c in zip(self.bounds, self.cells):
            if not lo < hi:
                raise ContractError("grid bounds need lo < hi")
            if int(c) < 2:
                raise ContractError("grid needs at least 2 cells per axis")

    @property
    def cell_area(self) -> float:
        (a0, b0), (a1, b1) = self.bounds
        return (b0 - a0) / self.cells[0] * (b1 - a1) / self.cells[1]

    def axes(self):
        return [lo + (np.arange(c) + 0.5) * (hi - lo) / c
                for (lo, hi), c in zip(self.bounds, self.cells)]

    def points(self) -> np.ndarray:
        g0, g1 = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g0.ravel(), g1.ravel()], axis=1)

    def widened(self, factor: float = 2.0) -> "Grid2D":
        b = tuple((0.5 * (lo + hi) - 0.5 * factor * (hi - lo),
                   0.5 * (lo + hi) + 0.5 * factor * (hi - lo)) for lo, hi in self.bounds)
        return Grid2D(b, self.cells)

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "cells": list(self.cells)}


class Posterior:
    """Unnormalized ``exp(-g(x)) p(x)`` with analytic score."""

    def __init__(self, lik, prior: GaussianMixture):
        self.lik = lik
        self.prior = prior

    def log_unnormalized(self, x):
        return self.prior.logpdf(x) - self.lik.value(x)

    def score(self, x):
        return self.prior.score(x) - self.lik.grad(x)


class GridPosterior:
    """A posterior tabulated on a grid: normalized log-density and score.

    Build once per posterior; reuse across many :func:`grid_kl` / :func:`grid_fi`
    calls.
    """

    def __init__(self, posterior, grid: Grid2D, check_coverage: bool = True):
        if isinstance(posterior, tuple):
            posterior = Posterior(*posterior)
        if posterior.prior.dim != 2:
            raise ContractError("grid quadrature is implemented for 2D problems")
        self.posterior = posterior
        self.grid = grid
        self.points = grid.points()
        logu = posterior.log_unnormalized(self.points)
        self.log_norm = float(logsumexp_rows(logu) + np.log(grid.cell_area))
        self.logpdf = logu - self.log_norm
        self.score = posterior.score(self.points)
        self.warnings = []
        if check_coverage:
            wide = grid.widened(2.0)
            lw = float(logsumexp_rows(posterior.log_unnormalized(wide.points())) + np.log(wide.cell_area))
            captured = np.exp(self.log_norm - lw)
            if captured < 0.999:
                self.warnings.append(f"grid captures only {captured:.4f} of the posterior mass")
                warnings.warn(self.warnings[-1], GridCoverageWarning, stacklevel=2)


def _as_grid_posterior(posterior, grid):
    if isinstance(posterior, GridPosterior):
        if grid is not None and grid != posterior.grid:
            raise ContractError("grid differs from the tabulated posterior's grid")
        return posterior
    return GridPosterior(posterior, grid if grid is not None else Grid2D())


def _support_mask(nu: GaussianMixture, gp: GridPosterior, truncate):
    """Cells within ``truncate`` marginal SDs of some component of ``nu``."""
    if truncate is None:
        return None
    ax0, ax1 = gp.grid.axes()
    sd = np.sqrt(np.diagonal(nu.full_covariances(), axis1=1, axis2=2))
    mask = np.zeros((ax0.size, ax1.size), dtype=bool)
    for k in range(nu.n_components):
        lo = nu.means[k] - truncate * sd[k]
        hi = nu.means[k] + truncate * sd[k]
        i0, i1 = np.searchsorted(ax0, [lo[0], hi[0]])
        j0, j1 = np.searchsorted(ax1, [lo[1], hi[1]])
        mask[i0:i1, j0:j1] = True
    return mask.ravel()


def _nu_on_grid(nu: GaussianMixture, gp: GridPosterior, truncate=10.0):
    """log-density, density and score of ``nu`` on the grid cells that matter.

    Cells farther than ``truncate`` marginal SDs from every component carry
    negligible mass and are skipped (density set to zero there).
    """
    if nu.dim != 2:
        raise ContractError("nu must be a 2D mixture")
    mask = _support_mask(nu, gp, truncate)
    pts = gp.points if mask is None else gp.points[mask]
    lp = nu._component_logpdf(pts)
    lnu = logsumexp_rows(lp)
    r = np.exp(lp - lnu[:, None])
    score = np.zeros_like(pts)
    for k in range(nu.n_components):
        score += r[:, k:k + 1] * nu._precision_times(k, nu.means[k] - pts)
    dens = np.exp(lnu)
    mass = dens.sum() * gp.grid.cell_area
    if mass < 0.999:
        warnings.warn(f"grid captures only {mass:.4f} of the fitted density's mass",
                      GridCoverageWarning, stacklevel=3)
    return lnu, dens, score, mask, mass


def _restrict(a, mask):
    return a if mask is None else a[mask]


def grid_kl(nu: GaussianMixture, posterior, grid: Grid2D | None = None) -> float:
    """KL(nu || pi) = sum_cells nu log(nu / pi) dA, pi normalized on the grid."""
    gp = _as_grid_posterior(posterior, grid)
    lnu, dens, _, mask, _ = _nu_on_grid(nu, gp)
    terms = np.where(dens > 0, dens * (lnu - _restrict(gp.logpdf, mask)), 0.0)
    return float(terms.sum() * gp.grid.cell_area)


def grid_fi(nu: GaussianMixture, posterior, grid: Grid2D | None = None) -> float:
    """Relative Fisher information sum_cells |grad log nu - grad log pi|^2 nu dA."""
    gp = _as_grid_posterior(posterior, grid)
    _, dens, score, mask, _ = _nu_on_grid(nu, gp)
    diff = score - _restrict(gp.score, mask)
    return float((np.einsum("ij,ij->i", diff, diff) * dens).sum() * gp.grid.cell_area)


def grid_fi_kl(nu: GaussianMixture, gp: GridPosterior) -> tuple[float, float, float]:
    """(FI, KL, grid mass of nu) sharing one evaluation of ``nu`` on the grid."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridCoverageWarning)
        lnu, dens, score, mask, mass = _nu_on_grid(nu, gp)
    diff = score - _restrict(gp.score, mask)
    fi = float((np.einsum("ij,ij->i", diff, diff) * dens).sum() * gp.grid.cell_area)
    kl = float(np.where(dens > 0, dens * (lnu - _restrict(gp.logpdf, mask)), 0.0).sum()
               * gp.grid.cell_area)
    return fi, kl, float(mass)


# -- closed-form oracle -------------------------------------------------------


def conjugate_posterior(prior: GaussianMixture, lik) -> GaussianMixture:
    """Exact posterior of a GMM prior under ``y = A x + N(0, beta^2 I)``.

    Component k: precision ``Sigma_k^{-1} + A^T A / beta^2``, mean
    ``Sigma'_k (Sigma_k^{-1} m_k + A^T y / beta^2)``, weight proportional to
    ``w_k N(y; A m_k, A Sigma_k A^T + beta^2 I)``.
    """
    A, y, b2 = lik.A, lik.y, lik.beta**2
    n, m = prior.dim, A.shape[0]
    covs = prior.full_covariances()
    AtA = A.T @ A / b2
    Aty = A.T @ y / b2
    means, post_covs, logw = [], [], []
    for k in range(prior.n_components):
        try:
            c_prior = linalg.cho_factor(covs[k], lower=True)
            prior_prec = linalg.cho_solve(c_prior, np.eye(n))
            c_post = linalg.cho_factor(prior_prec + AtA, lower=True)
        except linalg.LinAlgError as exc:
            raise ContractError("posterior precision is not positive definite") from exc
        cov = linalg.cho_solve(c_post, np.eye(n))
        cov = 0.5 * (cov + cov.T)
        mean = cov @ (prior_prec @ prior.means[k] + Aty)
        S = A @ covs[k] @ A.T + b2 * np.eye(m)
        cS = linalg.cho_factor(S, lower=True)
        r = y - A @ prior.means[k]
        logdet = 2.0 * np.log(np.diag(cS[0])).sum()
        logev = -0.5 * (m * LOG_2PI + logdet + r @ linalg.cho_solve(cS, r))
        means.append(mean)
        post_covs.append(cov)
        with np.errstate(divide="ignore"):
            logw.append(np.log(prior.weights[k]) + logev)
    logw = np.array(logw)
    w = np.exp(logw - logsumexp_rows(logw))
    return GaussianMixture(w, np.array(means), np.array(post_covs))


# -- per-pixel statistics -----------------------------------------------------


@dataclass
class PixelStats:
    """Sample mean/SD per coordinate and their agreement with a reference.

    SD uses the population (1/batch) convention.
    """

    mean: np.ndarray
    sd: np.ndarray
    coverage3sd: float
    nll: float
    mse: float
    psnr_db: float
    count: int
    nll_infinite: bool = False

    def to_dict(self) -> dict:
        return {
            "coverage3sd": self.coverage3sd,
            "nll": self.nll,
            "nll_infinite": self.nll_infinite,
            "mse": self.mse,
            "psnr_db": self.psnr_db,
            "count": self.count,
            "sd_convention": "population",
        }


def nll_terms(mean, sd, truth):
    """Per-coordinate error and log terms of the Gaussian NLL of ``truth``."""
    err = (np.asarray(mean) - np.asarray(truth)) ** 2
    var = np.asarray(sd) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        err_term = np.where(var > 0, err / (2 * var), np.where(err > 0, np.inf, 0.0))
        log_term = 0.5 * np.log(2 * np.pi * var)
    return err_term, log_term


def sample_stats(samples, truth, max_ref: float | None = None) -> PixelStats:
    """NLL, MSE, PSNR and 3-SD coverage of ``truth`` under the batch statistics.

    ``max_ref`` defaults to ``max(truth)``.
    """
    x = _rows(samples)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if x.shape[0] < 2:
        raise ContractError("need at least two samples for an SD")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    err_term, log_term = nll_terms(mean, sd, truth)
    with np.errstate(invalid="ignore"):
        nll = float(np.mean(err_term + log_term))
    infinite = not np.isfinite(nll)
    if np.isnan(nll):
        nll = np.inf
    mse = float(np.mean((mean - truth) ** 2))
    peak = float(np.max(truth)) if max_ref is None else float(max_ref)
    with np.errstate(divide="ignore"):
        psnr = float(10 * np.log10(peak**2 / mse)) if mse > 0 else np.inf
    coverage = float(np.mean(np.abs(mean - truth) <= 3 * sd))
    return PixelStats(mean, sd, coverage, nll, mse, psnr, x.shape[0], infinite)


@dataclass
class ModeSplit:
    labels: np.ndarray
    counts: np.ndarray
    means: list
    sds: list
    stats: list

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / max(1, self.counts.sum())


def classify_modes(samples, mode_means, truth=None, max_ref=None) -> ModeSplit:
    """Assign each sample to the nearest mode mean.

    Exact distance ties go to the larger cosine similarity, then the lower
    mode index.
    """
    x = _rows(samples)
    mm = np.atleast_2d(np.asarray(mode_means, dtype=float))
    if mm.shape[0] < 1:
        raise ContractError("need at least one mode mean")
    dist = np.linalg.norm(x[:, None, :] - mm[None], axis=2)
    norms = np.linalg.norm(x, axis=1)[:, None] * np.linalg.norm(mm, axis=1)[None]
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norms > 0, (x @ mm.T) / norms, -2.0)
    best = dist.min(axis=1, keepdims=True)
    tied = dist <= best * (1 + 1e-12)
    # argmax keeps the first (lowest) index among equal cosines
    labels = np.argmax(np.where(tied, cos, -np.inf), axis=1)
    counts = np.bincount(labels, minlength=mm.shape[0])
    means, sds, stats = [], [], []
    for k in range(mm.shape[0]):
        xs = x[labels == k]
        means.append(xs.mean(axis=0) if len(xs) else np.full(x.shape[1], np.nan))
        sds.append(xs.std(axis=0) if len(xs) else np.full(x.shape[1], np.nan))
        if truth is not None and len(xs) >= 2:
            stats.append(sample_stats(xs, truth, max_ref))
        else:
            stats.append(None)
    return ModeSplit(labels, counts, means, sds, stats)
