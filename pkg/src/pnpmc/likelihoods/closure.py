"""Interferometric imaging from closure phases and log closure amplitudes.

Visibilities are a nonuniform DFT of the image. Per-telescope gain and phase
errors cancel in the closure quantities:

* closure phase over triangle (a, b, c): ``angle(V_ab V_bc conj(V_ac))``
* log closure amplitude over quad (a, b, c, d):
  ``log(|V_ab| |V_cd| / (|V_ac| |V_bd|))``

A total-flux penalty pins down the overall brightness, which neither closure
quantity constrains.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..core import ContractError, as_generator
from ..priors import clip_norm


class DegenerateMeasurementError(ArithmeticError):
    """A visibility amplitude entering a log closure amplitude vanished."""


def wrap_phase(a):
    """Map angles to the principal interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def closure_triangles(n_tel: int) -> np.ndarray:
    """Non-redundant triangles: all (0, b, c) with 0 < b < c."""
    return np.array([(0, b, c) for b, c in itertools.combinations(range(1, n_tel), 2)], dtype=int)


def _camp_row(quad, index):
    a, b, c, d = quad
    row = np.zeros(len(index))
    for (p, q), s in (((a, b), 1), ((c, d), 1), ((a, c), -1), ((b, d), -1)):
        row[index[(min(p, q), max(p, q))]] += s
    return row


def closure_quads(n_tel: int) -> np.ndarray:
    """A maximal independent set of n(n-3)/2 log closure amplitude quadruples.

    Candidates are scanned in lexicographic order and kept only if their
    baseline-incidence row raises the rank.
    """
    pairs = list(itertools.combinations(range(n_tel), 2))
    index = {p: i for i, p in enumerate(pairs)}
    target = n_tel * (n_tel - 3) // 2
    basis = np.zeros((0, len(pairs)))
    chosen = []
    for combo in itertools.combinations(range(n_tel), 4):
        for quad in itertools.permutations(combo):
            if len(chosen) == target:
                break
            row = _camp_row(quad, index)
            if not np.any(row):
                continue
            trial = np.vstack([basis, row])
            if np.linalg.matrix_rank(trial) > basis.shape[0]:
                basis = trial
                chosen.append(quad)
    return np.array(chosen, dtype=int).reshape(-1, 4)


@dataclass
class ClosureSystem:
    """Array geometry: uv samples per time step plus closure index sets.

    Attributes:
        uv: ``(T, n_baselines, 2)`` spatial frequencies for baselines ordered as
            ``itertools.combinations(range(n_tel), 2)``, in cycles per unit of
            image angle.
        grid_shape: Image grid ``(h, w)``; images are flattened row-major.
        fov: Angular extent of the image (same unit as ``1/uv``).
    """

    uv: np.ndarray
    n_tel: int
    grid_shape: tuple
    fov: float = 1.0
    triangles: np.ndarray = field(default=None)
    quads: np.ndarray = field(default=None)

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=float)
        self.grid_shape = tuple(int(s) for s in self.grid_shape)
        self.pairs = list(itertools.combinations(range(self.n_tel), 2))
        if self.uv.ndim != 3 or self.uv.shape[1:] != (len(self.pairs), 2):
            raise ContractError(f"uv must be (T, {len(self.pairs)}, 2), got {self.uv.shape}")
        if self.triangles is None:
            self.triangles = closure_triangles(self.n_tel)
        if self.quads is None:
            self.quads = closure_quads(self.n_tel)
        self.triangles = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        self.quads = np.asarray(self.quads, dtype=int).reshape(-1, 4)
        self._build()

    @classmethod
    def synthetic(cls, n_tel=9, n_times=4, grid_shape=(16, 16), fov=1.0,
                  max_baseline=None, rotation=np.pi / 12, seed=0):
        """Telescopes scattered in a disk; baselines rotate by ``rotation`` per time step.

        ``max_baseline`` defaults to a quarter of the grid's Nyquist frequency
        so only low spatial frequencies are observed.
        """
        h, w = grid_shape
        if max_baseline is None:
            max_baseline = 0.25 * min(h, w) / (2.0 * fov)
        gen = np.random.default_rng(seed)
        r = 0.5 * max_baseline * np.sqrt(gen.uniform(0.05, 1.0, n_tel))
        theta = gen.uniform(0, 2 * np.pi, n_tel)
        pos = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        pairs = list(itertools.combinations(range(n_tel), 2))
        uv = []
        for t in range(n_times):
            c, s = np.cos(t * rotation), np.sin(t * rotation)
            rot = pos @ np.array([[c, -s], [s, c]]).T
            uv.append([rot[a] - rot[b] for a, b in pairs])
        return cls(np.array(uv), n_tel, grid_shape, fov)

    def _build(self):
        h, w = self.grid_shape
        psize = self.fov / w
        ly = ((h - 1) / 2.0 - np.arange(h)) * (self.fov / h)
        lx = (np.arange(w) - (w - 1) / 2.0) * psize
        LY, LX = np.meshgrid(ly, lx, indexing="ij")
        uv = self.uv.reshape(-1, 2)
        phase = -2.0 * np.pi * (np.outer(uv[:, 0], LX.ravel()) + np.outer(uv[:, 1], LY.ravel()))
        self.dft = np.exp(1j * phase)

        T, nb = self.uv.shape[:2]
        index = {p: i for i, p in enumerate(self.pairs)}
        tri_rows, quad_rows = [], []
        for a, b, c in self.triangles:
            row = np.zeros(nb)
            for (p, q), s in (((a, b), 1), ((b, c), 1), ((a, c), -1)):
                if p < q:
                    row[index[(p, q)]] += s
                else:
                    # V_qp = conj(V_pq) flips the phase sign
                    row[index[(q, p)]] -= s
            tri_rows.append(row)
        for quad in self.quads:
            quad_rows.append(_camp_row(quad, index))
        eye_t = np.eye(T)
        self.cph_map = np.kron(eye_t, np.array(tri_rows).reshape(-1, nb))
        self.camp_map = np.kron(eye_t, np.array(quad_rows).reshape(-1, nb))

    @property
    def n_pixels(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    @property
    def n_times(self) -> int:
        return self.uv.shape[0]

    def visibilities(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.n_pixels,):
            raise ContractError(f"image has {x.shape[-1:]} pixels, expected {self.n_pixels}")
        return x @ self.dft.T

    def closures(self, vis):
        """Closure phases, log closure amplitudes from visibilities (..., n_vis)."""
        vis = np.asarray(vis)
        amp = np.abs(vis)
        used = np.any(self.camp_map != 0, axis=0)
        if np.any(amp[..., used] == 0):
            raise DegenerateMeasurementError("zero visibility amplitude in a closure amplitude")
        with np.errstate(divide="ignore"):
            logamp = np.log(amp)
        logamp = np.where(used, logamp, 0.0)
        cph = wrap_phase(np.angle(vis) @ self.cph_map.T)
        camp = logamp @ self.camp_map.T
        return cph, camp

    def to_dict(self) -> dict:
        return {
            "uv": self.uv.tolist(),
            "n_tel": self.n_tel,
            "grid_shape": list(self.grid_shape),
            "fov": self.fov,
            "triangles": self.triangles.tolist(),
            "quads": self.quads.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClosureSystem":
        return cls(doc["uv"], doc["n_tel"], doc["grid_shape"], doc.get("fov", 1.0),
                   doc.get("triangles"), doc.get("quads"))


class ClosureLikelihood:
    """chi^2 on closure phases and log closure amplitudes plus a flux penalty."""

    def __init__(self, system: ClosureSystem, y_cph, y_camp, beta_cph: float,
                 beta_camp: float, y_flux: float, rho: float = 0.0, r_g: float | None = None):
        y_cph = np.asarray(y_cph, dtype=float).reshape(-1)
        y_camp = np.asarray(y_camp, dtype=float).reshape(-1)
        if y_cph.size != system.cph_map.shape[0] or y_camp.size != system.camp_map.shape[0]:
            raise ContractError("closure data length does not match the array geometry")
        if beta_cph <= 0 or beta_camp <= 0 or rho < 0:
            raise ContractError("noise scales must be positive and rho nonnegative")
        self.system = system
        self.y_cph = wrap_phase(y_cph)
        self.y_camp = y_camp
        self.beta_cph = float(beta_cph)
        self.beta_camp = float(beta_camp)
        self.y_flux = float(y_flux)
        self.rho = float(rho)
        self.r_g = r_g

    @property
    def dim(self) -> int:
        return self.system.n_pixels

    def forward(self, x):
        """(closure phases, log closure amplitudes, total flux) of image(s) ``x``."""
        cph, camp = self.system.closures(self.system.visibilities(x))
        return cph, camp, np.sum(np.asarray(x, dtype=float), axis=-1)

    def residuals(self, x):
        cph, camp, flux = self.forward(x)
        return wrap_phase(cph - self.y_cph), camp - self.y_camp, flux - self.y_flux

    def value(self, x):
        r_cph, r_camp, r_flux = self.residuals(x)
        return (np.sum(r_cph**2, axis=-1) / (2 * self.beta_cph**2)
                + np.sum(r_camp**2, axis=-1) / (2 * self.beta_camp**2)
                + 0.5 * self.rho * r_flux**2)

    def chi2(self, x):
        """Reduced chi^2 per data product; 1 means residuals match the noise level."""
        r_cph, r_camp, _ = self.residuals(x)
        return (np.mean(r_cph**2, axis=-1) / self.beta_cph**2,
                np.mean(r_camp**2, axis=-1) / self.beta_camp**2)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sysm = self.system
        vis = sysm.visibilities(x)
        cph, camp = sysm.closures(vis)
        r_cph = wrap_phase(cph - self.y_cph)
        r_camp = camp - self.y_camp
        # d angle(V)/dx = Im(F / V), d log|V|/dx = Re(F / V)
        w_phase = (r_cph / self.beta_cph**2) @ sysm.cph_map
        w_amp = (r_camp / self.beta_camp**2) @ sysm.camp_map
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(vis != 0, 1.0 / vis, 0.0)
        g = ((w_phase * inv) @ sysm.dft).imag + ((w_amp * inv) @ sysm.dft).real
        flux_res = np.sum(x, axis=-1) - self.y_flux
        g = g + self.rho * np.asarray(flux_res)[..., None]
        return clip_norm(g, self.r_g)

    def to_dict(self) -> dict:
        return {
            "system": self.system.to_dict(),
            "y_cph": self.y_cph.tolist(),
            "y_camp": self.y_camp.tolist(),
            "beta_cph": self.beta_cph,
            "beta_camp": self.beta_camp,
            "y_flux": self.y_flux,
            "rho": self.rho,
            "r_g": self.r_g,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClosureLikelihood":
        return cls(ClosureSystem.from_dict(doc["system"]), doc["y_cph"], doc["y_camp"],
                   doc["beta_cph"], doc["beta_camp"], doc["y_flux"], doc.get("rho", 0.0),
                   doc.get("r_g"))


def corrupt_visibilities(system: ClosureSystem, vis, gain_std, phase_std, thermal_std, rng):
    """Apply ``g_a g_b exp(-i(phi_a - phi_b)) V + eta`` per time step."""
    gen = as_generator(rng)
    T, nb = system.uv.shape[:2]
    gains = np.exp(gain_std * gen.standard_normal((T, system.n_tel)))
    phases = phase_std * gen.standard_normal((T, system.n_tel))
    a = np.array([p[0] for p in system.pairs])
    b = np.array([p[1] for p in system.pairs])
    factor = gains[:, a] * gains[:, b] * np.exp(-1j * (phases[:, a] - phases[:, b]))
    noise = thermal_std * (gen.standard_normal((T, nb)) + 1j * gen.standard_normal((T, nb)))
    return np.asarray(vis).reshape(T, nb) * factor.reshape(T, nb) + noise


def simulate_measurements(truth, system: ClosureSystem, gain_std: float, phase_std: float,
                          thermal_std: float, rng, beta_cph: float | None = None,
                          beta_camp: float | None = None, rho: float = 0.0,
                          r_g: float | None = None) -> ClosureLikelihood:
    """Corrupt the true visibilities, then form closure data from them.

    Unspecified noise scales are set by first-order error propagation of the
    thermal noise (root-mean-square over measurements); with no thermal noise
    they default to 1.
    """
    truth = np.asarray(truth, dtype=float)
    clean = system.visibilities(truth)
    vis = corrupt_visibilities(system, clean, gain_std, phase_std, thermal_std, rng).reshape(-1)
    cph, camp = system.closures(vis)
    # per-visibility std of phase and log-amplitude under thermal noise
    rel_var = (thermal_std / np.abs(clean)) ** 2
    if beta_cph is None:
        var = np.abs(system.cph_map) @ rel_var
        beta_cph = float(np.sqrt(np.mean(var))) or 1.0
    if beta_camp is None:
        var = np.abs(system.camp_map) @ rel_var
        beta_camp = float(np.sqrt(np.mean(var))) or 1.0
    return ClosureLikelihood(system, cph, camp, beta_cph, beta_camp, float(truth.sum()), rho, r_g)


def bhi_forward(lik: ClosureLikelihood, x):
    return lik.forward(x)


def bhi_grad(lik: ClosureLikelihood, x) -> np.ndarray:
    return lik.grad(x)
