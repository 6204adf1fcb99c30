"""Negative log-likelihoods ``g(x)`` and their gradients for three forward models.

Every likelihood exposes ``value(x)``, ``grad(x)`` and ``dim`` and accepts a
single point or a ``(batch, n)`` array.
"""

from .closure import (
    ClosureLikelihood,
    ClosureSystem,
    DegenerateMeasurementError,
    bhi_forward,
    bhi_grad,
    closure_quads,
    closure_triangles,
    simulate_measurements,
    wrap_phase,
)
from .fourier import MaskedFourierLikelihood, fourier_grad, radial_mask
from .linear import GaussianLinearLikelihood, linear_grad

__all__ = [
    "ClosureLikelihood",
    "ClosureSystem",
    "DegenerateMeasurementError",
    "GaussianLinearLikelihood",
    "MaskedFourierLikelihood",
    "bhi_forward",
    "bhi_grad",
    "closure_quads",
    "closure_triangles",
    "fourier_grad",
    "linear_grad",
    "radial_mask",
    "simulate_measurements",
    "wrap_phase",
]
