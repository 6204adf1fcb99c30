"""Undersampled 2D Fourier measurements (an MRI-style forward model).

The masked DFT is held as an explicit real-linear operator on stacked
real/imaginary parts. Desk-scale grids (up to 64x64) keep this exact and
make the adjoint a plain transpose.
"""

from __future__ import annotations

import numpy as np

from ..core import ContractError, as_generator
from ..priors import clip_norm


def dft_matrix(size: int) -> np.ndarray:
    """Unitary 1D DFT matrix (``norm="ortho"`` convention)."""
    k = np.arange(size)
    return np.exp(-2j * np.pi * np.outer(k, k) / size) / np.sqrt(size)


def radial_mask(grid_shape, fraction: float) -> np.ndarray:
    """Boolean mask of radial spokes through the k-space center.

    Spokes at evenly spaced angles are added until at least ``fraction`` of
    the frequencies are kept. The mask is returned in unshifted FFT order.
    """
    h, w = grid_shape
    if not 0 < fraction <= 1:
        raise ContractError("fraction must lie in (0, 1]")
    ky, kx = np.meshgrid(np.arange(h) - h // 2, np.arange(w) - w // 2, indexing="ij")
    target = int(np.ceil(fraction * h * w))
    for n_spokes in range(1, 4 * (h + w)):
        mask = np.zeros((h, w), dtype=bool)
        for theta in np.pi * np.arange(n_spokes) / n_spokes:
            t = np.linspace(-max(h, w), max(h, w), 8 * max(h, w))
            iy = np.round(t * np.sin(theta)).astype(int)
            ix = np.round(t * np.cos(theta)).astype(int)
            ok = (np.abs(iy) <= h // 2) & (np.abs(ix) <= w // 2)
            iy, ix = iy[ok], ix[ok]
            ok = (iy >= ky.min()) & (iy <= ky.max()) & (ix >= kx.min()) & (ix <= kx.max())
            mask[iy[ok] + h // 2, ix[ok] + w // 2] = True
        if mask.sum() >= target:
            break
    return np.fft.ifftshift(mask)


class MaskedFourierLikelihood:
    """``g(x) = ||M o DFT(x) - y||^2 / (2 beta^2)`` on an ``(h, w)`` image grid.

    ``y`` holds the kept complex frequencies interleaved as ``re, im, re, ...``
    in row-major mask order.
    """

    def __init__(self, mask, y, beta: float, grid_shape, r_g: float | None = None):
        h, w = map(int, grid_shape)
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if mask.size != h * w:
            raise ContractError(f"mask has {mask.size} entries for a {h}x{w} grid")
        if y.size != 2 * int(mask.sum()):
            raise ContractError(f"y must have {2 * int(mask.sum())} real entries, got {y.size}")
        if beta <= 0:
            raise ContractError("beta must be positive")
        self.mask = mask
        self.y = y
        self.beta = float(beta)
        self.grid_shape = (h, w)
        self.r_g = r_g
        self.operator = self.real_operator(mask, (h, w))

    @staticmethod
    def real_operator(mask, grid_shape) -> np.ndarray:
        h, w = grid_shape
        full = np.kron(dft_matrix(h), dft_matrix(w))[np.asarray(mask, dtype=bool).reshape(-1)]
        op = np.empty((2 * full.shape[0], h * w))
        op[0::2] = full.real
        op[1::2] = full.imag
        return op

    @property
    def dim(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ContractError(f"x has dimension {x.shape[-1:]}, expected {self.dim}")
        return x

    def forward(self, x) -> np.ndarray:
        return self._check(x) @ self.operator.T

    def value(self, x):
        r = self.forward(x) - self.y
        return 0.5 * np.sum(r * r, axis=-1) / self.beta**2

    def grad(self, x) -> np.ndarray:
        r = self.forward(x) - self.y
        return clip_norm(r @ self.operator / self.beta**2, self.r_g)

    def to_dict(self) -> dict:
        return {
            "mask": self.mask.astype(int).tolist(),
            "y": self.y.tolist(),
            "beta": self.beta,
            "grid_shape": list(self.grid_shape),
            "r_g": self.r_g,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MaskedFourierLikelihood":
        return cls(doc["mask"], doc["y"], doc["beta"], doc["grid_shape"], doc.get("r_g"))

    @classmethod
    def simulate(cls, truth, mask, beta: float, grid_shape, rng, r_g=None):
        op = cls.real_operator(mask, grid_shape)
        gen = as_generator(rng)
        y = op @ np.asarray(truth, dtype=float).reshape(-1)
        y = y + beta * gen.standard_normal(y.shape)
        return cls(mask, y, beta, grid_shape, r_g)


def fourier_grad(lik: MaskedFourierLikelihood, x) -> np.ndarray:
    return lik.grad(x)
