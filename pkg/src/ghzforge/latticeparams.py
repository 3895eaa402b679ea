"""Hubbard and trap parameters from optical-lattice inputs.

Lowest-band quantities come from a plane-wave solution of the 1D lattice
``V sin^2(pi z / a)``. Lengths inside the band solver are in units of
``a / pi`` and energies in recoil units ``E_r = pi^2 hbar^2 / (2 m a^2)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.constants as sc
import scipy.linalg as la

from .propagator import NumericalError

AMU = sc.physical_constants["atomic mass constant"][0]
BOHR = sc.physical_constants["Bohr radius"][0]
SR87_MASS = 86.9088774 * AMU


@dataclass(frozen=True)
class LatticeInputs:
    wavelength: float = 813e-9
    Vx: float = 200.0
    Vy: float = 200.0
    Vz: float = 19.0
    waist_x: float = 45e-6
    waist_y: float = 45e-6
    mass: float = SR87_MASS
    scattering_length: float = 69.1  # Bohr radii
    g: float = sc.g

    def __post_init__(self):
        if min(self.Vx, self.Vy, self.Vz) < 0:
            raise ValueError("lattice depths must be non-negative")
        if self.wavelength <= 0 or self.mass <= 0:
            raise ValueError("wavelength and mass must be positive")

    @property
    def a(self) -> float:
        return self.wavelength / 2

    @property
    def recoil_hz(self) -> float:
        """E_r / h."""
        return (np.pi * sc.hbar) ** 2 / (2 * self.mass * self.a ** 2) / sc.h


@dataclass(frozen=True)
class DerivedParams:
    """Frequencies in Hz (E / h); ``j0`` in sites."""

    J: float
    U: float
    eta_ext: float
    j0: float
    band_gap: float
    U_over_J: float
    eta_over_J: float

    def report(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Band:
    q: np.ndarray       # quasi-momenta in units of pi / a, on [-1, 1)
    energies: np.ndarray  # (nq, nbands) in E_r
    vectors: np.ndarray   # (nq, nwaves, nbands) plane-wave coefficients
    l: np.ndarray         # plane-wave orders; wave numbers q + 2 l


def solve_bands(V: float, n_waves: int = 41, nq: int = 64, n_bands: int = 2) -> Band:
    if n_waves % 2 == 0:
        n_waves += 1
    l = np.arange(n_waves) - n_waves // 2
    q = -1 + 2 * np.arange(nq) / nq
    off = np.full(n_waves - 1, -V / 4)
    E = np.empty((nq, n_bands))
    C = np.empty((nq, n_waves, n_bands))
    for k, qk in enumerate(q):
        w, v = la.eigh_tridiagonal((qk + 2 * l) ** 2 + V / 2, off, select="i",
                                   select_range=(0, n_bands - 1))
        E[k], C[k] = w, v
    return Band(q, E, C, l)


def _tunneling_from_band(band: Band) -> float:
    # eps(q) = E0 - 2 J cos(pi q): J = -(1/2) int_{-1}^{1} eps cos(pi q) dq,
    # a periodic trapezoid rule on the uniform grid
    eps = band.energies[:, 0]
    return float(-np.mean(eps * np.cos(np.pi * band.q)))


def band_tunneling(V: float, n_waves: int = 41, nq: int = 64, rtol: float = 1e-3) -> float:
    """Nearest-neighbour tunneling in E_r from the lowest band's first harmonic."""
    if V <= 0:
        raise ValueError("lattice depth must be positive")
    J = _tunneling_from_band(solve_bands(V, n_waves, nq))
    J2 = _tunneling_from_band(solve_bands(V, 2 * n_waves + 1, nq))
    if abs(J2 - J) > rtol * abs(J2):
        raise NumericalError(f"tunneling not converged in plane-wave count: {J} vs {J2}")
    return J2


def deep_lattice_tunneling(V: float) -> float:
    return 4 / np.sqrt(np.pi) * V ** 0.75 * np.exp(-2 * np.sqrt(V))


def band_gap(V: float, n_waves: int = 41, nq: int = 64) -> float:
    """Mean separation of the two lowest bands, in E_r."""
    E = solve_bands(V, n_waves, nq).energies
    return float(np.mean(E[:, 1]) - np.mean(E[:, 0]))


def wannier(V: float, cells: int = 11, points_per_cell: int = 2048, n_waves: int = 41,
            nq: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Lowest-band Wannier orbital on ``y = pi z / a`` over ``cells`` cells around 0.

    Bloch functions are fixed to be real and positive at the origin, the gauge
    that localizes the orbital for this symmetric band. Normalized so that
    ``sum |w|^2 dy = 1``.
    """
    band = solve_bands(V, n_waves, nq, 1)
    y = np.pi * (np.arange(cells * points_per_cell) / points_per_cell - cells / 2)
    w = np.zeros_like(y)
    for k, qk in enumerate(band.q):
        c = band.vectors[k, :, 0]
        c = c * np.sign(c.sum())  # psi_q(0) = sum_l c_l
        # the q and -q terms pair up into the real part
        w += np.cos(np.outer(y, qk + 2 * band.l)) @ c
    dy = y[1] - y[0]
    return y, w / np.sqrt(np.sum(w ** 2) * dy)


@lru_cache(maxsize=64)
def _fourth_moment(V, cells, points_per_cell, n_waves, nq):
    y, w = wannier(V, cells, points_per_cell, n_waves, nq)
    return float(np.sum(w ** 4) * (y[1] - y[0]))


def wannier_fourth_moment(V: float, a: float, cells: int = 11, points_per_cell: int = 2048,
                          n_waves: int = 41, nq: int = 64) -> float:
    """int |w(z)|^4 dz in 1/m."""
    return _fourth_moment(float(V), cells, points_per_cell, n_waves, nq) * np.pi / a


def onsite_interaction(inputs: LatticeInputs, rtol: float = 1e-3, **kw) -> float:
    """s-wave U / h in Hz from the product of per-axis Wannier fourth moments."""
    depths = (inputs.Vx, inputs.Vy, inputs.Vz)
    if min(depths) <= 0:
        raise ValueError("all three depths must be positive")
    prefactor = 4 * np.pi * sc.hbar ** 2 * inputs.scattering_length * BOHR / inputs.mass
    prod = 1.0
    for V in depths:
        m1 = wannier_fourth_moment(V, inputs.a, **kw)
        fine = dict(kw, points_per_cell=2 * kw.get("points_per_cell", 2048))
        m2 = wannier_fourth_moment(V, inputs.a, **fine)
        if abs(m2 - m1) > rtol * abs(m2):
            raise NumericalError(f"Wannier grid not converged at V={V}: {m1} vs {m2}")
        prod *= m1
    return float(prefactor * prod / sc.h)


def gaussian_interaction(inputs: LatticeInputs) -> float:
    """Harmonic-orbital estimate of U / h for comparison."""
    prod = 1.0
    for V in (inputs.Vx, inputs.Vy, inputs.Vz):
        omega = 2 * np.sqrt(V) * inputs.recoil_hz * 2 * np.pi
        sigma = np.sqrt(sc.hbar / (inputs.mass * omega))
        prod *= 1 / (np.sqrt(2 * np.pi) * sigma)
    prefactor = 4 * np.pi * sc.hbar ** 2 * inputs.scattering_length * BOHR / inputs.mass
    return float(prefactor * prod / sc.h)


def renormalized_depth(V: float) -> float:
    """Transverse depth seen by the ground state, in E_r."""
    return V - np.sqrt(V) / 2


def trap_curvature(inputs: LatticeInputs, renormalized: bool = True) -> float:
    """eta_ext / h in Hz per site^2 from the transverse Gaussian beams."""
    if inputs.waist_x <= 0 or inputs.waist_y <= 0:
        raise ValueError("beam waists must be positive")
    dep = renormalized_depth if renormalized else (lambda v: v)
    a = inputs.a
    eta = (2 * dep(inputs.Vx) / (inputs.waist_x / a) ** 2
           + 2 * dep(inputs.Vy) / (inputs.waist_y / a) ** 2)
    return float(eta * inputs.recoil_hz)


def transverse_potential(inputs: LatticeInputs, j) -> np.ndarray:
    """Gaussian envelope of the transverse beams along z at sites ``j``, Hz."""
    z = np.asarray(j, dtype=float) * inputs.a
    vx, vy = renormalized_depth(inputs.Vx), renormalized_depth(inputs.Vy)
    v = -vx * np.exp(-2 * z ** 2 / inputs.waist_x ** 2) - vy * np.exp(-2 * z ** 2 / inputs.waist_y ** 2)
    return v * inputs.recoil_hz


def gravity_shift(inputs: LatticeInputs, eta_ext: float) -> float:
    """Trap centre in sites: minimum of eta (j - j0)^2 + (m g a / h) j."""
    if eta_ext <= 0:
        raise ValueError("trap curvature must be positive")
    return float(-inputs.mass * inputs.g * inputs.a / sc.h / (2 * eta_ext))


def derive(inputs: LatticeInputs) -> DerivedParams:
    J = band_tunneling(inputs.Vz) * inputs.recoil_hz
    U = onsite_interaction(inputs)
    eta = trap_curvature(inputs)
    return DerivedParams(J=J, U=U, eta_ext=eta, j0=gravity_shift(inputs, eta),
                         band_gap=band_gap(inputs.Vz) * inputs.recoil_hz,
                         U_over_J=U / J, eta_over_J=eta / J)
