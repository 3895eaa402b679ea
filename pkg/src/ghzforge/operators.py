"""Hamiltonian terms in the lab (g, e) or drive-rotated (down, up) frame.

All one-body terms are first written as a ``2L x 2L`` matrix over lab modes and
then, for the rotated frame, conjugated by the single-particle mode transform

    a_{j,up}   = (c_{j,e} + u_j c_{j,g}) / sqrt(2)
    a_{j,down} = (c_{j,e} - u_j c_{j,g}) / sqrt(2),   u_j = exp(i (j pi + lam))

with ``lam`` the global drive phase (0 unless a drift is present). Energies are
in units of J unless the caller passes physical values consistently.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fock import Basis, apply_bilinear_array, occupation_arrays

FRAMES = ("lab", "rotated")

# CSR assembly is skipped above this dimension; matvec then runs term by term.
ASSEMBLE_MAX_DIM = 100_000


@dataclass(frozen=True)
class HamiltonianSpec:
    J: float = 1.0
    U: float = 0.0
    Omega: float = 0.0
    delta: float = 0.0
    eta_ext: float = 0.0
    j0: float = 0.0
    frame: str = "rotated"
    drift: Callable[[float], float] | None = None
    OmegaP: float = 0.0
    pulse_phase: float = -np.pi / 2

    def with_(self, **kw) -> "HamiltonianSpec":
        return replace(self, **kw)


class SparseOperator:
    """Number-conserving operator on a fixed-N basis.

    Holds a list of one-body terms ``(create, destroy, coeff)`` plus an onsite
    interaction strength, and applies them either from an assembled CSR matrix
    or term by term on the fly.
    """

    def __init__(self, basis: Basis, terms, U: float = 0.0, frame: str = "rotated",
                 hermitian: bool = True, assemble: bool | None = None):
        self.basis = basis
        self.terms = [(int(a), int(b), complex(c)) for a, b, c in terms]
        self.U = float(U)
        self.frame = frame
        self.hermitian = hermitian
        self.shape = (basis.size, basis.size)
        self.dtype = complex if any(c.imag for *_, c in self.terms) else float
        self._doublon = None
        if assemble is None:
            assemble = basis.size <= ASSEMBLE_MAX_DIM
        self._csr = self._assemble() if assemble else None

    def _doublon_count(self) -> np.ndarray:
        if self._doublon is None:
            nd, nu = occupation_arrays(self.basis)
            self._doublon = (nd & nu).sum(axis=1).astype(float)
        return self._doublon

    def _assemble(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        states = self.basis.states
        for a, b, c in self.terms:
            src, new, sign = apply_bilinear_array(states, a, b)
            rows.append(self.basis.lookup(new))
            cols.append(src)
            vals.append(c * sign)
        if self.U:
            d = self._doublon_count()
            nz = np.nonzero(d)[0]
            rows.append(nz)
            cols.append(nz)
            vals.append(self.U * d[nz])
        n = self.basis.size
        if not rows:
            return sp.csr_matrix((n, n), dtype=self.dtype)
        vals = np.concatenate(vals)
        if self.dtype is float:
            vals = vals.real
        m = sp.coo_matrix((vals, (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        m = m.tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        return m

    @classmethod
    def from_csr(cls, basis: Basis, m: sp.csr_matrix, frame: str = "rotated",
                 hermitian: bool = True) -> "SparseOperator":
        op = cls(basis, [], frame=frame, hermitian=hermitian, assemble=False)
        op._csr = m.tocsr()
        op.dtype = m.dtype
        return op

    @property
    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = self._assemble()
        return self._csr

    @property
    def assembled(self) -> bool:
        return self._csr is not None

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self._csr is not None:
            return self._csr @ v
        out = np.zeros(v.shape, dtype=np.result_type(v, self.dtype))
        states = self.basis.states
        for a, b, c in self.terms:
            src, new, sign = apply_bilinear_array(states, a, b)
            np.add.at(out, self.basis.lookup(new), (c * sign)[:, None] * v[src]
                      if v.ndim == 2 else c * sign * v[src])
        if self.U:
            d = self.U * self._doublon_count()
            out += d[:, None] * v if v.ndim == 2 else d * v
        return out

    __matmul__ = matvec

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.matvec(psi)).real)

    def hermiticity_error(self) -> float:
        m = self.csr
        diff = abs(m - m.conj().T)
        return float(diff.max()) if diff.nnz else 0.0

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        if other.basis is not self.basis or other.frame != self.frame:
            raise ValueError("operators live on different bases or frames")
        if not (self.terms or self.U) or not (other.terms or other.U):
            return SparseOperator.from_csr(self.basis, self.csr + other.csr, self.frame,
                                           self.hermitian and other.hermitian)
        return SparseOperator(self.basis, self.terms + other.terms, self.U + other.U,
                              self.frame, self.hermitian and other.hermitian,
                              assemble=self.assembled)

    def scaled(self, s: float) -> "SparseOperator":
        if not (self.terms or self.U):
            return SparseOperator.from_csr(self.basis, s * self.csr, self.frame,
                                           self.hermitian and np.isreal(s))
        return SparseOperator(self.basis, [(a, b, s * c) for a, b, c in self.terms],
                              s * self.U, self.frame, self.hermitian and np.isreal(s),
                              assemble=self.assembled)


def mode_transform(L: int, phase: float = 0.0) -> np.ndarray:
    """Columns: rotated creation operators expanded in lab creation operators.

    ``a_k^dagger = sum_l M[l, k] c_l^dagger`` with both index sets following
    the flattened ordering ``2*(site-1) + spin``.
    """
    M = np.zeros((2 * L, 2 * L), dtype=complex)
    r = 1 / np.sqrt(2)
    for j in range(1, L + 1):
        g, e = 2 * (j - 1), 2 * (j - 1) + 1
        uc = np.exp(-1j * (j * np.pi + phase))
        M[e, e] = r
        M[g, e] = r * uc
        M[e, g] = r
        M[g, g] = -r * uc
    return M


def _site_sign(j: int) -> float:
    return -1.0 if j % 2 else 1.0


def one_body_lab(L: int, spec: HamiltonianSpec, t: float = 0.0) -> np.ndarray:
    """Lab-mode matrix ``h`` of all one-body terms: ``sum h[l,m] c_l^dag c_m``."""
    h = np.zeros((2 * L, 2 * L), dtype=complex)
    lam = spec.drift(t) if spec.drift is not None else 0.0
    for j in range(1, L + 1):
        g, e = 2 * (j - 1), 2 * (j - 1) + 1
        if j < L:
            for s in (0, 1):
                h[g + s, g + s + 2] -= spec.J
                h[g + s + 2, g + s] -= spec.J
        trap = spec.eta_ext * (j - spec.j0) ** 2
        h[g, g] += trap - spec.delta / 2
        h[e, e] += trap + spec.delta / 2
        drive = spec.Omega / 2 * _site_sign(j) * np.exp(1j * lam)
        drive += spec.OmegaP / 2 * _site_sign(j) * np.exp(1j * spec.pulse_phase)
        h[e, g] += drive
        h[g, e] += np.conj(drive)
    return h


def one_body(L: int, spec: HamiltonianSpec, t: float = 0.0, frame: str | None = None) -> np.ndarray:
    frame = frame or spec.frame
    if frame not in FRAMES:
        raise ValueError(f"unknown frame {frame!r}")
    h = one_body_lab(L, spec, t)
    if frame == "lab":
        return h
    if spec.drift is not None:
        raise ValueError("drive-phase drift is only supported in the lab frame")
    M = mode_transform(L)
    hr = M.conj().T @ h @ M
    return (hr + hr.conj().T) / 2


def quadratic_operator(basis: Basis, h: np.ndarray, U: float = 0.0, frame: str = "rotated",
                       tol: float = 1e-13, assemble: bool | None = None) -> SparseOperator:
    # relative cut: removes round-off left by the frame conjugation
    cut = tol * max(1.0, float(np.abs(h).max(initial=0.0)))
    h = np.where(np.abs(h) > cut, h, 0)
    h = np.where(np.abs(h.imag) > cut, h, h.real)
    terms = [(a, b, h[a, b]) for a, b in zip(*np.nonzero(h))]
    return SparseOperator(basis, terms, U=U, frame=frame, assemble=assemble)


def build_hamiltonian(spec: HamiltonianSpec, basis: Basis, t: float = 0.0,
                      assemble: bool | None = None) -> SparseOperator:
    if spec.frame not in FRAMES:
        raise ValueError(f"unknown frame {spec.frame!r}")
    h = one_body(basis.L, spec, t)
    return quadratic_operator(basis, h, U=spec.U, frame=spec.frame, assemble=assemble)


def build_trap_diagonal(eta_ext: float, j0: float, basis: Basis) -> np.ndarray:
    """Diagonal of ``eta_ext * sum_j (j - j0)^2 n_j``; frame independent."""
    nd, nu = occupation_arrays(basis)
    w = eta_ext * (np.arange(1, basis.L + 1) - j0) ** 2
    return ((nd + nu) * w).sum(axis=1).astype(float)


def build_pulse_generator(OmegaP: float, pulse_phase: float, basis: Basis,
                          frame: str = "lab") -> SparseOperator:
    spec = HamiltonianSpec(J=0.0, OmegaP=OmegaP, pulse_phase=pulse_phase, frame=frame)
    return build_hamiltonian(spec, basis)


def number_operator(basis: Basis, mode: int, frame: str = "rotated") -> SparseOperator:
    return SparseOperator(basis, [(mode, mode, 1.0)], frame=frame)


def doublon_operator(basis: Basis, sites=None) -> np.ndarray:
    """Diagonal of ``sum_{j in sites} n_{j,0} n_{j,1}`` (same in both frames)."""
    nd, nu = occupation_arrays(basis)
    d = nd & nu
    if sites is not None:
        d = d[:, [j - 1 for j in sites]]
    return d.sum(axis=1).astype(float)


def _site_step(basis: Basis, j: int, block: np.ndarray) -> sp.csr_matrix:
    """Many-body image of a 2x2 single-particle map on site ``j`` (1-based)."""
    spin0 = np.int64(1 << (2 * (j - 1)))
    spin1 = np.int64(1 << (2 * (j - 1) + 1))
    s = basis.states
    has0 = (s & spin0) != 0
    has1 = (s & spin1) != 0
    n = basis.size
    idx = np.arange(n)
    rows, cols, vals = [], [], []
    empty = ~has0 & ~has1
    rows.append(idx[empty]); cols.append(idx[empty]); vals.append(np.ones(empty.sum(), complex))
    both = has0 & has1
    rows.append(idx[both]); cols.append(idx[both])
    vals.append(np.full(both.sum(), np.linalg.det(block), dtype=complex))
    for src_mask, src_spin in ((has0 & ~has1, 0), (has1 & ~has0, 1)):
        src = idx[src_mask]
        flipped = basis.lookup(s[src] ^ (spin0 | spin1))
        rows += [src, flipped]
        cols += [src, src]
        vals += [np.full(len(src), block[src_spin, src_spin], complex),
                 np.full(len(src), block[1 - src_spin, src_spin], complex)]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def frame_unitary(basis: Basis, phase: float = 0.0) -> sp.csr_matrix:
    """Sparse ``W`` with ``psi_lab = W @ psi_rot``."""
    M = mode_transform(basis.L, phase)
    W = sp.identity(basis.size, dtype=complex, format="csr")
    for j in range(1, basis.L + 1):
        k = 2 * (j - 1)
        W = _site_step(basis, j, M[k:k + 2, k:k + 2]) @ W
    return W.tocsr()


def rotate_frame(psi: np.ndarray, basis: Basis, direction: str, phase: float = 0.0) -> np.ndarray:
    """Change the frame of a many-body state.

    ``direction`` is ``"lab->rotated"`` or ``"rotated->lab"``; ``phase`` selects
    the drive phase that defines the rotated modes.
    """
    W = frame_unitary(basis, phase)
    if direction in ("lab->rotated", "to_rotated"):
        return W.conj().T @ psi
    if direction in ("rotated->lab", "to_lab"):
        return W @ psi
    raise ValueError(f"unknown direction {direction!r}")
