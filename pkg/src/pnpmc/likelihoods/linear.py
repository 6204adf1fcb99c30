"""Least-squares data fidelity for linear Gaussian measurements."""

from __future__ import annotations

import numpy as np

from ..core import ContractError, as_generator
from ..priors import clip_norm


class GaussianLinearLikelihood:
    """``g(x) = ||y - A x||^2 / (2 beta^2)`` for ``y = A x + N(0, beta^2 I)``."""

    def __init__(self, A, y, beta: float, r_g: float | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if beta <= 0:
            raise ContractError("beta must be positive")
        if A.shape[0] != y.shape[0]:
            raise ContractError(f"A has {A.shape[0]} rows but y has {y.shape[0]} entries")
        if r_g is not None and r_g <= 0:
            raise ContractError("r_g must be positive")
        self.A = A
        self.y = y
        self.beta = float(beta)
        self.r_g = r_g
        self._AtA = A.T @ A
        self._Aty = A.T @ y
        # two thin products beat one square product when m < n / 2
        self._wide = 2 * A.shape[0] < A.shape[1]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ContractError(f"x has dimension {x.shape[-1:]}, expected {self.dim}")
        return x

    def value(self, x):
        x = self._check(x)
        r = x @ self.A.T - self.y
        return 0.5 * np.sum(r * r, axis=-1) / self.beta**2

    def grad(self, x) -> np.ndarray:
        """A^T (A x - y) / beta^2, clipped to ``r_g`` when set."""
        x = self._check(x)
        if self._wide:
            g = (x @ self.A.T - self.y) @ self.A / self.beta**2
        else:
            g = (x @ self._AtA - self._Aty) / self.beta**2
        return clip_norm(g, self.r_g)

    def precision(self) -> np.ndarray:
        """Hessian of g, i.e. the likelihood's contribution to the posterior precision."""
        return self._AtA / self.beta**2

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "y": self.y.tolist(), "beta": self.beta, "r_g": self.r_g}

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianLinearLikelihood":
        return cls(doc["A"], doc["y"], doc["beta"], doc.get("r_g"))

    @classmethod
    def simulate(cls, A, truth, beta: float, rng, r_g: float | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        gen = as_generator(rng)
        y = A @ np.asarray(truth, dtype=float) + beta * gen.standard_normal(A.shape[0])
        return cls(A, y, beta, r_g)


def linear_grad(lik: GaussianLinearLikelihood, x) -> np.ndarray:
    return lik.grad(x)
