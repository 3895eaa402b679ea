"""Time evolution ``psi -> exp(-i H t) psi``.

Two routes: full eigendecomposition (small dimensions, cached per operator) and
an adaptive Lanczos propagator that only needs ``H @ v``. Time-dependent
Hamiltonians use a fourth-order commutator-free Magnus step (two frozen
exponentials per substep); the substep length is controlled by comparing one
step against two half steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Union

import numba
import numpy as np
import scipy.linalg as la

from .operators import SparseOperator, build_hamiltonian, rotate_frame
from .schedule import RunResult

log = logging.getLogger(__name__)

DENSE_MAX_DIM = 4096
METHODS = ("auto", "dense", "krylov")


_GAUSS = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
_CF4 = ((3 - 2 * np.sqrt(3)) / 12, (3 + 2 * np.sqrt(3)) / 12)


class NumericalError(RuntimeError):
    """Propagation failed to reach the requested accuracy."""


OperatorLike = Union[SparseOperator, Callable[[float], SparseOperator]]


@dataclass
class EvolutionRequest:
    operator: OperatorLike
    psi: np.ndarray
    duration: float
    method: str = "auto"
    tol: float = 1e-10
    max_substep: float | None = None
    t0: float = 0.0
    krylov_dim: int = 30
    dense_max_dim: int = DENSE_MAX_DIM
    td_tol: float = 1e-7
    max_iter: int = 1_000_000

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


def eigh_cached(op: SparseOperator) -> tuple[np.ndarray, np.ndarray]:
    cached = getattr(op, "_eigh", None)
    if cached is None:
        cached = la.eigh(op.toarray())
        op._eigh = cached
    return cached


def dense_expm(op: SparseOperator, psi: np.ndarray, t) -> np.ndarray:
    """``exp(-i H t) psi``; ``t`` may be an array, giving one column per time."""
    w, V = eigh_cached(op)
    c = V.conj().T @ psi
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        phase = np.exp(-1j * w * t)
        return V @ (phase[:, None] * c if c.ndim == 2 else phase * c)
    if psi.ndim != 1:
        raise ValueError("time grids need a single input vector")
    return V @ (np.exp(-1j * np.outer(w, t)) * c[:, None])


def dense_unitary(op: SparseOperator, t: float) -> np.ndarray:
    w, V = eigh_cached(op)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def _real_split_matvec(op: SparseOperator):
    # real CSR applied to real and imaginary parts separately is about twice
    # as fast as upcasting to a complex product
    m = op.csr if op.assembled else None
    if m is not None and m.dtype == np.float64:
        cached = getattr(op, "_csr_matvec", None)
        if cached is None:
            cached = op._csr_matvec = CSRMatvec(m)
        return cached
    return op.matvec


def _lanczos(matvec, v: np.ndarray, m: int):
    """Three-term Lanczos with local reorthogonalization against the two
    previous vectors; enough for short-time exponentials at m ~ 30."""
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    V = np.empty((m, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v / beta0
    for k in range(m):
        w = matvec(V[k])
        if k:
            w -= beta[k - 1] * V[k - 1]
        a = np.vdot(V[k], w).real
        w -= a * V[k]
        # second pass against the last two vectors
        w -= np.vdot(V[k], w) * V[k]
        if k:
            w -= np.vdot(V[k - 1], w) * V[k - 1]
        alpha[k] = a
        b = np.linalg.norm(w)
        beta[k] = b
        if b < 1e-12 * max(1.0, abs(a)):
            return V[: k + 1], alpha[: k + 1], beta[:k], 0.0, beta0
        if k + 1 < m:
            V[k + 1] = w / b
    return V, alpha, beta[: m - 1], beta[m - 1], beta0


@numba.njit(cache=True)
def _lanczos_csr(indptr, indices, data, v, m):
    """``_lanczos`` fused with a real CSR matvec."""
    n = v.shape[0]
    beta0 = np.sqrt((v.real ** 2 + v.imag ** 2).sum())
    V = np.empty((m, n), dtype=np.complex128)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    w = np.empty(n, dtype=np.complex128)
    for i in range(n):
        V[0, i] = v[i] / beta0
    kept = m
    for k in range(m):
        for i in range(n):
            acc = 0j
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * V[k, indices[p]]
            w[i] = acc
        if k:
            for i in range(n):
                w[i] -= beta[k - 1] * V[k - 1, i]
        a = 0.0
        for i in range(n):
            a += (V[k, i].conjugate() * w[i]).real
        for i in range(n):
            w[i] -= a * V[k, i]
        c = 0j
        for i in range(n):
            c += V[k, i].conjugate() * w[i]
        for i in range(n):
            w[i] -= c * V[k, i]
        if k:
            c = 0j
            for i in range(n):
                c += V[k - 1, i].conjugate() * w[i]
            for i in range(n):
                w[i] -= c * V[k - 1, i]
        alpha[k] = a
        b = 0.0
        for i in range(n):
            b += w[i].real ** 2 + w[i].imag ** 2
        b = np.sqrt(b)
        beta[k] = b
        if b < 1e-12 * max(1.0, abs(a)):
            kept = k + 1
            beta[k] = 0.0
            break
        if k + 1 < m:
            for i in range(n):
                V[k + 1, i] = w[i] / b
    return V[:kept], alpha[:kept], beta[:kept], beta0


class CSRMatvec:
    """Real CSR operator handle; lets ``krylov_expm`` take the fused path."""

    def __init__(self, m):
        self.m = m
        self.indptr = m.indptr.astype(np.int64)
        self.indices = m.indices.astype(np.int64)
        self.data = m.data.astype(np.float64)

    def __call__(self, v):
        return self.m @ v.real + 1j * (self.m @ v.imag)

    def lanczos(self, v, m):
        V, alpha, beta, beta0 = _lanczos_csr(self.indptr, self.indices, self.data,
                                             np.ascontiguousarray(v, dtype=np.complex128), m)
        k = len(alpha)
        return V, alpha, beta[: k - 1], beta[k - 1], beta0


def _tridiag_eigh(alpha, beta):
    if len(alpha) == 1:
        return alpha, np.ones((1, 1))
    try:
        return la.eigh_tridiagonal(alpha, beta)
    except la.LinAlgError:
        return la.eigh(np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1))


def krylov_expm(matvec, psi: np.ndarray, t: float, m: int = 30, tol: float = 1e-10,
                max_iter: int = 1_000_000) -> np.ndarray:
    """Adaptive Lanczos approximation of ``exp(-i H t) psi``.

    Each Krylov space is reused for the longest substep whose a-posteriori
    error estimate ``beta_m |[exp(-i tau T)]_{m,1}|`` stays below ``tol``.
    """
    psi = np.array(psi, dtype=complex)
    m = min(m, psi.shape[0])
    remaining = float(t)
    it = 0
    while remaining > 0:
        it += 1
        if it > max_iter:
            raise NumericalError(
                f"Krylov propagation did not finish in {max_iter} restarts "
                f"(remaining time {remaining:.3e})")
        if isinstance(matvec, CSRMatvec):
            V, alpha, beta, beta_next, nrm = matvec.lanczos(psi, m)
        else:
            V, alpha, beta, beta_next, nrm = _lanczos(matvec, psi, m)
        theta, Q = _tridiag_eigh(alpha, beta)
        q0 = Q[0]

        def coeffs(tau):
            return Q @ (np.exp(-1j * theta * tau) * q0)

        def err(tau):
            return nrm * beta_next * abs(coeffs(tau)[-1])

        tau = remaining
        # the estimate bottoms out at round-off (~eps m beta_m) rather than 0;
        # with wide spectra that floor can sit above tol
        limit = max(tol, 2 * err(0.0))
        if beta_next > 0 and err(tau) > limit:
            lo, hi = 0.0, tau
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if err(mid) > limit:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-3 * hi:
                    break
            tau = lo
            if tau <= 0:
                raise NumericalError(
                    f"Krylov step underflow: error estimate {err(hi):.2e} at tau={hi:.2e}, "
                    f"subspace dim {len(alpha)}")
        psi = nrm * (V.T @ coeffs(tau))
        remaining -= tau
        if remaining < 1e-14 * abs(t):
            remaining = 0.0
    return psi


def _propagate_frozen(op: SparseOperator, psi, dt, req: EvolutionRequest):
    method = req.method
    if method == "auto":
        method = "dense" if op.shape[0] <= req.dense_max_dim else "krylov"
    if method == "dense":
        if op.shape[0] > req.dense_max_dim:
            raise ValueError(f"dense evolution limited to dim <= {req.dense_max_dim}")
        return dense_expm(op, psi, dt)
    return krylov_expm(_real_split_matvec(op), psi, dt, req.krylov_dim, req.tol, req.max_iter)


def evolve(req: EvolutionRequest) -> np.ndarray:
    psi = np.asarray(req.psi, dtype=complex)
    if req.duration == 0:
        return psi.copy()
    if isinstance(req.operator, SparseOperator):
        return _propagate_frozen(req.operator, psi, req.duration, req)

    # time-dependent: 4th-order commutator-free Magnus step (two exponentials at
    # the Gauss points), step doubling for error control
    H = req.operator
    sub = req.method
    if sub == "auto":
        sub = "krylov"  # fresh operator each substep: eigendecompositions are wasted
    # sweeps make the spectrum wide: a bigger subspace saves restarts
    inner = EvolutionRequest(req.operator, psi, 0.0, sub, req.tol, None, 0.0,
                             2 * req.krylov_dim, req.dense_max_dim, req.td_tol, req.max_iter)

    def step(p, t, h):
        h1, h2 = H(t + _GAUSS[0] * h), H(t + _GAUSS[1] * h)
        b = h1.basis
        first = _combine(b, [(_CF4[1], h1), (_CF4[0], h2)], h1.frame)
        second = _combine(b, [(_CF4[0], h1), (_CF4[1], h2)], h1.frame)
        p = _propagate_frozen(first, p, h, inner)
        return _propagate_frozen(second, p, h, inner)

    t, t_end = req.t0, req.t0 + req.duration
    h = req.max_substep or req.duration / 16
    h = min(h, req.duration)
    steps = 0
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        h = min(h, t_end - t)
        one = step(psi, t, h)
        two = step(step(psi, t, h / 2), t + h / 2, h / 2)
        e = np.linalg.norm(two - one)
        if e <= req.td_tol or h < 1e-12:
            psi = two
            t += h
            steps += 1
            grow = 2.0 if e == 0 else min(2.0, 0.9 * (req.td_tol / e) ** 0.2)
            h *= max(grow, 0.2)
        else:
            h *= max(0.2, 0.9 * (req.td_tol / e) ** 0.2)
        if req.max_substep:
            h = min(h, req.max_substep)
        if steps > req.max_iter:
            raise NumericalError("time-dependent propagation exceeded step budget")
    log.debug("time-dependent evolution: %d substeps", steps)
    return psi


def _combine(basis, parts, frame):
    m = None
    for coeff, op in parts:
        if coeff == 0:
            continue
        term = coeff * op.csr
        m = term if m is None else m + term
    if m is None:
        m = parts[0][1].csr * 0
    return SparseOperator.from_csr(basis, m, frame)


class ScheduleRunner:
    """Executes pulse schedules on one basis for fixed lattice parameters.

    Operators are cached per distinct segment so repeated segments reuse
    their eigendecompositions on the dense route.
    """

    def __init__(self, basis, base_spec, method: str = "auto", tol: float = 1e-10,
                 krylov_dim: int = 30, dense_max_dim: int = DENSE_MAX_DIM, td_tol: float = 1e-7,
                 max_substep: float | None = None):
        self.basis = basis
        self.base = base_spec.with_(Omega=0.0, delta=0.0, OmegaP=0.0, drift=None)
        self.method = method
        self.tol = tol
        self.krylov_dim = krylov_dim
        self.dense_max_dim = dense_max_dim
        self.td_tol = td_tol
        self.max_substep = max_substep
        self._ops: dict = {}

    def _request(self, op, psi, dt, t0=0.0, max_substep=None):
        return EvolutionRequest(op, psi, dt, self.method, self.tol, max_substep or self.max_substep,
                                t0, self.krylov_dim, self.dense_max_dim, self.td_tol)

    def operator(self, frame: str, omega: float = 0.0, delta: float = 0.0, omega_p: float = 0.0,
                 pulse_phase: float = -np.pi / 2, J: float | None = None, drive_phase: float = 0.0,
                 bare: bool = False):
        """Cached Hamiltonian; ``bare`` drops tunneling, interaction and trap."""
        key = (frame, float(omega), float(delta), float(omega_p), float(pulse_phase), J,
               float(drive_phase), bare)
        op = self._ops.get(key)
        if op is None:
            spec = self.base.with_(frame=frame, Omega=omega, delta=delta, OmegaP=omega_p,
                                   pulse_phase=pulse_phase)
            if J is not None:
                spec = spec.with_(J=J)
            if bare:
                spec = spec.with_(J=0.0, U=0.0, eta_ext=0.0)
            if drive_phase:
                spec = spec.with_(drift=lambda t, p=drive_phase: p)
            op = build_hamiltonian(spec, self.basis)
            self._ops[key] = op
        return op

    def segment_operator(self, seg, drift=None, t_abs: float = 0.0):
        """Frozen operator, or a callable ``H(t_abs)`` for ramps and drifts."""
        if seg.ramp is None and drift is None:
            return self.operator(seg.frame, seg.omega, seg.delta, seg.omega_p, seg.pulse_phase)
        if drift is not None and seg.frame != "lab":
            raise ValueError("drive-phase drift requires lab-frame segments")
        static = self.operator(seg.frame, 0.0, seg.delta if seg.ramp is None else 0.0,
                               seg.omega_p, seg.pulse_phase)
        parts = [(1.0, static)]
        if seg.ramp is not None:
            det = self.operator(seg.frame, delta=1.0, bare=True)
            parts.append((None, det))
        if drift is None:
            drive = self.operator(seg.frame, omega=1.0, bare=True)
            parts.append((seg.omega, drive))
        else:
            dx = self.operator(seg.frame, omega=1.0, bare=True)
            dy = self.operator(seg.frame, omega=1.0, drive_phase=np.pi / 2, bare=True)
        t_start = t_abs
        basis, frame = self.basis, seg.frame

        def H(t):
            terms = []
            for c, op in parts:
                if c is None:
                    c = seg.ramp(t - t_start)
                terms.append((c, op))
            if drift is not None:
                lam = drift(t)
                terms += [(seg.omega * np.cos(lam), dx), (seg.omega * np.sin(lam), dy)]
            return _combine(basis, terms, frame)

        return H

    def evolve_segment(self, seg, psi, t_abs=0.0, drift=None, duration=None):
        dt = seg.duration if duration is None else duration
        H = self.segment_operator(seg, drift, t_abs)
        max_sub = None
        if drift is not None:
            max_sub = self.max_substep or 0.25
        return evolve(self._request(H, psi, dt, t0=t_abs, max_substep=max_sub))

    def convert(self, psi, src: str, dst: str, phase: float = 0.0):
        if src == dst:
            return psi
        return rotate_frame(psi, self.basis, f"{src}->{dst}", phase)

    def run(self, schedule, initial, frame: str = "rotated", record=None, grid_dt=None,
            drift=None, t0: float = 0.0):
        """Evolve ``initial`` (given in ``frame``) through every segment.

        ``record`` maps names to ``f(psi, frame) -> float``; values are taken at
        t0, after each segment and, if ``grid_dt`` is set, on that grid inside
        segments. The returned state is expressed in ``frame``.
        """
        record = record or {}
        psi = np.asarray(initial, dtype=complex)
        cur = frame
        t = t0
        times, labels = [t], ["initial"]
        obs = {k: [f(psi, cur)] for k, f in record.items()}
        for seg in schedule:
            if seg.frame != cur:
                psi = self.convert(psi, cur, seg.frame, drift(t) if drift else 0.0)
                cur = seg.frame
            pieces = [seg.duration]
            if grid_dt and seg.duration > grid_dt:
                n = int(np.ceil(seg.duration / grid_dt))
                pieces = [seg.duration / n] * n
            done = 0.0
            for k, dt in enumerate(pieces):
                if seg.ramp is None and drift is None:
                    psi = self.evolve_segment(seg, psi, t + done, drift, dt)
                else:
                    H = self.segment_operator(seg, drift, t)
                    max_sub = (self.max_substep or 0.25) if drift is not None else None
                    psi = evolve(self._request(H, psi, dt, t0=t + done, max_substep=max_sub))
                done += dt
                if k < len(pieces) - 1:
                    times.append(t + done)
                    labels.append(f"{seg.label}~")
                    for name, f in record.items():
                        obs[name].append(f(psi, cur))
            t += seg.duration
            times.append(t)
            labels.append(seg.label)
            for name, f in record.items():
                obs[name].append(f(psi, cur))
        if cur != frame:
            psi = self.convert(psi, cur, frame, drift(t) if drift else 0.0)
        return RunResult(times=np.array(times), labels=labels,
                         observables={k: np.array(v) for k, v in obs.items()}, state=psi,
                         metadata={"schedule": schedule.digest() if hasattr(schedule, "digest") else None})


def run_schedule(schedule, initial, basis, base_spec, record=None, frame: str = "rotated",
                 **kw):
    drift = kw.pop("drift", None)
    grid_dt = kw.pop("grid_dt", None)
    return ScheduleRunner(basis, base_spec, **kw).run(schedule, initial, frame, record,
                                                      grid_dt=grid_dt, drift=drift)
