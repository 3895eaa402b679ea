"""Targets, fidelities, doublon readout, noise Monte Carlo and period extraction."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .fock import Basis
from .operators import doublon_operator
from .propagator import dense_expm, eigh_cached
from .protocol import (ProtocolParams, build_generation_schedule, build_precession_schedule,
                       build_reversal_schedule, config_energy, expected_components,
                       ghz_components, make_runner, psi0, resonance_frequencies,
                       run_generation)
from .schedule import PulseSchedule, RunResult

log = logging.getLogger(__name__)


def theta_f(L: int, U_over_J: float, eta_over_J: float) -> float:
    """Relative GHZ phase in the infinite-gap limit (not reduced mod 2 pi)."""
    if L < 2:
        raise ValueError("L must be at least 2")
    return np.pi / 2 * ((L - 1) - U_over_J * (L - 2) + eta_over_J * L / 3 * (L - 1) * (L - 2))


def wrap(phase):
    """Reduce to (-pi, pi]."""
    return -(np.mod(-np.asarray(phase) + np.pi, 2 * np.pi) - np.pi)


def doublon_sign(state: int) -> int:
    """Basis-ket sign between the up-first doublon convention and the canonical order.

    A doublon written as ``a_up^dag a_down^dag |vac>`` is minus the canonical
    (down-first) ket, so amplitudes pick up one sign per doublon.
    """
    s = int(state)
    return -1 if (s & (s >> 1) & 0x5555555555555555).bit_count() & 1 else 1


@dataclass(frozen=True)
class GHZTarget:
    """(|A> + e^{i theta} |B>)/sqrt(2) with A all-down and B = |0, up, ..., up, d>."""

    L: int
    A: int
    B: int
    theta: float | None = None

    def __post_init__(self):
        if self.A == self.B:
            raise ValueError("GHZ components must differ")

    @classmethod
    def from_params(cls, params: ProtocolParams, theta: float | None = None) -> "GHZTarget":
        a, b = ghz_components(params)
        return cls(params.L, a, b, theta)

    def amplitudes(self, psi: np.ndarray, basis: Basis) -> tuple[complex, complex]:
        """Overlaps with the two components in the up-first doublon convention."""
        ca = psi[basis.index(self.A)] * doublon_sign(self.A)
        cb = psi[basis.index(self.B)] * doublon_sign(self.B)
        return complex(ca), complex(cb)

    def vector(self, basis: Basis, theta: float | None = None) -> np.ndarray:
        th = self.theta if theta is None else theta
        if th is None:
            raise ValueError("target phase not set")
        v = np.zeros(basis.size, dtype=complex)
        v[basis.index(self.A)] = doublon_sign(self.A)
        v[basis.index(self.B)] = doublon_sign(self.B) * np.exp(1j * th)
        return v / np.sqrt(2)


def relative_phase(psi: np.ndarray, target: GHZTarget, basis: Basis) -> float:
    ca, cb = target.amplitudes(psi, basis)
    return float(np.angle(cb / ca))


def fidelity(psi: np.ndarray, target: GHZTarget, basis: Basis, mode: str = "phase-optimized",
             theta: float | None = None) -> float:
    ca, cb = target.amplitudes(psi, basis)
    if mode == "phase-optimized":
        return float((abs(ca) + abs(cb)) ** 2 / 2)
    if mode == "fixed-phase":
        th = target.theta if theta is None else theta
        if th is None:
            raise ValueError("fixed-phase fidelity needs a phase")
        return float(abs(ca + np.exp(-1j * th) * cb) ** 2 / 2)
    raise ValueError(f"unknown fidelity mode {mode!r}")


def superposition_fidelity(psi: np.ndarray, components: Sequence[int], basis: Basis) -> float:
    """Phase-optimized overlap with the equal superposition of Fock states."""
    amps = np.abs([psi[basis.index(c)] for c in components])
    return float(amps.sum() ** 2 / len(components))


def doublon_number(psi: np.ndarray, basis: Basis, window: Sequence[int] | None = None) -> float:
    if window is not None and any(not 1 <= j <= basis.L for j in window):
        raise ValueError(f"window {window} outside 1..{basis.L}")
    d = doublon_operator(basis, window)
    psi = np.asarray(psi)
    if psi.ndim == 2:
        return (np.abs(psi) ** 2 * d[:, None]).sum(axis=0)
    return float(np.abs(psi) ** 2 @ d)


# reversal readout ---------------------------------------------------------------------

def measurement_signal(params: ProtocolParams, delta: float, t_grid, window=(1, 2, 3),
                       state: np.ndarray | None = None, **runner_kw) -> np.ndarray:
    """Doublon number in ``window`` after generation, precession for each t and reversal.

    On the dense route every segment is a cached eigendecomposition and the
    whole time grid is carried as one matrix of columns.
    """
    runner = make_runner(params, **runner_kw)
    basis = runner.basis
    if state is None:
        state = run_generation(params, runner=runner).state
    prec = build_precession_schedule(params, delta, 0.0)
    rev = build_reversal_schedule(params)
    t_grid = np.asarray(t_grid, dtype=float)
    if basis.size <= runner.dense_max_dim and runner.method in ("auto", "dense"):
        op = lambda seg: runner.segment_operator(seg)
        x = dense_expm(op(prec[0]), state, prec[0].duration)
        cols = dense_expm(op(prec[1]), x, t_grid)
        for seg in (prec[2],) + tuple(rev):
            cols = dense_expm(op(seg), cols, seg.duration)
        return doublon_number(cols, basis, window)
    out = []
    for t in t_grid:
        sched = build_precession_schedule(params, delta, t) + rev
        out.append(doublon_number(runner.run(sched, state).state, basis, window))
    return np.array(out)


def bare_precession_rate(params: ProtocolParams, state: np.ndarray | None = None,
                         **runner_kw) -> float:
    """Angular rate of the detuning-free relative phase between the GHZ components.

    With the drive off the two components differ by interaction and trap
    energy, so their relative phase winds at hundreds of J during precession.
    On the dense route the rate is the gap between the two eigenstates that
    carry the pulsed GHZ state; otherwise the diagonal configuration energies.
    """
    runner = make_runner(params, **runner_kw)
    basis = runner.basis
    prec = build_precession_schedule(params, 0.0, 0.0)
    if basis.size <= runner.dense_max_dim:
        if state is None:
            state = run_generation(params, runner=runner).state
        op = runner.segment_operator(prec[1])
        x = dense_expm(runner.segment_operator(prec[0]), state, prec[0].duration)
        w, V = eigh_cached(op)
        top = np.argsort(np.abs(V.conj().T @ x))[-2:]
        return float(abs(w[top[1]] - w[top[0]]))
    a, b = ghz_components(params)
    return float(abs(config_energy(b, 0.0, params) - config_energy(a, 0.0, params)))


def stroboscopic_grid(params: ProtocolParams, t_max: float, dt: float = 0.1,
                      rate: float | None = None, **runner_kw) -> np.ndarray:
    """Precession times on whole multiples of the bare period, spaced close to ``dt``.

    Sampling in step with the bare phase leaves only the detuning-induced
    winding, so the doublon trace oscillates at delta (L-1).
    """
    rate = bare_precession_rate(params, **runner_kw) if rate is None else rate
    period = 2 * np.pi / rate
    stride = max(1, int(round(dt / period))) * period
    return stride * np.arange(int(t_max // stride) + 1)


# noise Monte Carlo --------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseScanConfig:
    deltaOmega_max: float
    params: ProtocolParams
    trajectories: int = 100
    seed: int = 0
    workers: int = 1
    calibrate: bool = False
    runner: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory")
        if self.deltaOmega_max < 0:
            raise ValueError("shift bound must be non-negative")


def trajectory_shifts(cfg: NoiseScanConfig, k: int) -> np.ndarray:
    """Per-step shifts of trajectory ``k``, from a stream keyed by (seed, k)."""
    rng = np.random.default_rng([cfg.seed, k])
    n = len(resonance_frequencies(cfg.params))
    return rng.uniform(-cfg.deltaOmega_max, cfg.deltaOmega_max, n)


def _trajectory(args):
    cfg, k = args
    p = cfg.params
    shifts = trajectory_shifts(cfg, k)
    res = run_generation(p, shifts=shifts, calibrate=cfg.calibrate, **cfg.runner)
    target = GHZTarget.from_params(p)
    f = fidelity(res.state, target, make_basis_cached(p))
    return k, f, build_generation_schedule(p, shifts).digest()


_BASES: dict = {}


def make_basis_cached(p: ProtocolParams) -> Basis:
    key = (p.L, p.N)
    if key not in _BASES:
        _BASES[key] = p.basis()
    return _BASES[key]


def noise_scan(cfg: NoiseScanConfig) -> RunResult:
    """Phase-optimized fidelity over trajectories with random per-step frequency shifts."""
    n = cfg.trajectories
    if cfg.deltaOmega_max == 0:
        # every draw is the zero vector: one run stands for all of them
        k, f, digest = _trajectory((cfg, 0))
        fids, digests = np.full(n, f), [digest] * n
    else:
        jobs = [(cfg, k) for k in range(n)]
        workers = cfg.workers or os.cpu_count() or 1
        if workers == 1:
            out = [_trajectory(j) for j in jobs]
        else:
            with ProcessPoolExecutor(workers) as pool:
                out = list(pool.map(_trajectory, jobs))
        out.sort()
        fids = np.array([f for _, f, _ in out])
        digests = [d for _, _, d in out]
    meta = {"seed": cfg.seed, "deltaOmega_max": cfg.deltaOmega_max, "trajectories": n,
            "params": asdict(cfg.params), "calibrate": cfg.calibrate,
            "schedule": build_generation_schedule(cfg.params).digest(),
            "trajectory_schedules": digests}
    return RunResult(fidelities=fids, metadata=meta)


def scan_row(res: RunResult) -> dict:
    p = res.metadata["params"]
    return {"L": p["L"], "N": p["N"], "U": p["U"], "eta_ext": p["eta_ext"], "j0": p["j0"],
            "deltaOmega_max": res.metadata["deltaOmega_max"], "mean": res.mean,
            "std": res.std, "n": res.n}


# period extraction --------------------------------------------------------------------

class Peak(NamedTuple):
    omega: float
    amplitude: float


class DetuningEstimate(NamedTuple):
    delta: float
    omega: float
    found: bool
    peaks: list
    periods_covered: float


def _interp(mag, k):
    """Vertex of the parabola through log-magnitudes at k-1, k, k+1."""
    if k == 0 or k == len(mag) - 1:
        return float(k), mag[k]
    a, b, c = np.log(mag[k - 1:k + 2] + 1e-300)
    den = a - 2 * b + c
    x = 0.0 if den == 0 else 0.5 * (a - c) / den
    return k + x, float(np.exp(b - 0.25 * (a - c) * x))


def spectrum(signal, times, pad: int = 16):
    """Windowed, zero-padded amplitude spectrum as (angular frequencies, magnitudes)."""
    y = np.asarray(signal, dtype=float)
    t = np.asarray(times, dtype=float)
    if len(y) != len(t) or len(y) < 4:
        raise ValueError("need matching signal and time arrays with at least 4 samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=0):
        raise ValueError("times must be uniformly spaced")
    y = (y - y.mean()) * np.hanning(len(y))
    nfft = pad * 1 << int(np.ceil(np.log2(len(y))))
    mag = np.abs(np.fft.rfft(y, nfft))
    omega = 2 * np.pi * np.fft.rfftfreq(nfft, dt[0])
    return omega, mag


def find_peaks(signal, times, rel_height: float = 0.2, pad: int = 16) -> list[Peak]:
    omega, mag = spectrum(signal, times, pad)
    dw = omega[1] - omega[0]
    top = mag.max()
    if not top > 0:
        return []
    out = []
    inner = np.nonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:]))[0] + 1
    for k in inner:
        if mag[k] >= rel_height * top:
            x, a = _interp(mag, k)
            out.append(Peak(float(x * dw), a))
    return sorted(out, key=lambda p: -p.amplitude)


def extract_detuning(signal, times, L: int, floor: float = 1e-9, rel_height: float = 0.2,
                     pad: int = 16) -> DetuningEstimate:
    """Dominant oscillation frequency omega of a doublon trace and delta = omega/(L-1).

    ``found`` is False when the trace carries no peak above ``floor`` (relative
    to its mean level) or the dominant peak sits at zero frequency.
    """
    y = np.asarray(signal, dtype=float)
    t = np.asarray(times, dtype=float)
    scale = max(abs(y).max(), 1e-300)
    if y.std() <= floor * scale:
        return DetuningEstimate(float("nan"), float("nan"), False, [], 0.0)
    peaks = find_peaks(y, t, rel_height, pad)
    if not peaks or peaks[0].omega <= 0:
        return DetuningEstimate(float("nan"), float("nan"), False, peaks, 0.0)
    w = peaks[0].omega
    span = t[-1] - t[0]
    return DetuningEstimate(w / (L - 1), w, True, peaks, float(w * span / (2 * np.pi)))


# per-block and drift checks -----------------------------------------------------------

def block_fidelities(params: ProtocolParams, **runner_kw) -> list[tuple[str, float]]:
    """Fidelity to the tracker's expected superposition after every segment."""
    schedule = build_generation_schedule(params)
    expected = expected_components(params, schedule)
    basis = params.basis()
    runner = make_runner(params, basis, **runner_kw)
    psi = psi0(params, basis)
    out = []
    for seg, comps in zip(schedule, expected):
        psi = runner.evolve_segment(seg, psi)
        out.append((seg.label, superposition_fidelity(psi, comps, basis)))
    return out


def drift_fidelity(params: ProtocolParams, ratio: float, **runner_kw) -> float:
    """Phase-optimized fidelity of a lab-frame run with drive phase lambda(t) = eps t.

    ``eps = ratio * min_i |Omega_i|``; the result is read out in the dressed
    frame that belongs to the final drive phase.
    """
    eps = ratio * min(abs(w) for w in resonance_frequencies(params))
    basis = params.basis()
    runner = make_runner(params, basis, **runner_kw)
    sched = PulseSchedule(tuple(replace(s, frame="lab") for s in build_generation_schedule(params)))
    drift = (lambda t: eps * t) if eps else None
    res = runner.run(sched, psi0(params, basis), "rotated", drift=drift)
    return fidelity(res.state, GHZTarget.from_params(params), basis)
