"""Pulse-schedule compilation for preparation, GHZ generation and reversal.

Sites are 1-based with the trap centre ``j0`` to the right of the chain
(``j0 > L``). A drive frequency is resonant with a single hop when the energy of
the move, ``Omega * (spin change) + U * (doublon change) + trap change``,
vanishes; the schedule below picks one such hop per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .fock import Basis, build_basis, sites_from_state, state_from_sites
from .operators import HamiltonianSpec, build_hamiltonian
from .propagator import ScheduleRunner
from .schedule import PulseSchedule, RampProfile, Segment


@dataclass(frozen=True)
class ProtocolParams:
    L: int
    N: int | None = None
    J: float = 1.0
    U: float = 405.0
    eta_ext: float = 21.0
    j0: float | None = None
    holes: tuple[int, ...] = ()
    hole_correction: bool = False
    reverse: bool = False
    two_sided: bool = False
    OmegaP: float = 1000.0
    precess_omega: float = 0.0

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("need at least two sites")
        holes = tuple(sorted(set(int(h) for h in self.holes)))
        if any(not 1 <= h <= self.L for h in holes):
            raise ValueError(f"hole positions {holes} outside 1..{self.L}")
        object.__setattr__(self, "holes", holes)
        n = self.L - len(holes)
        if self.N is None:
            object.__setattr__(self, "N", n)
        elif self.N != n:
            raise ValueError(f"N={self.N} inconsistent with L={self.L} and holes {holes}")
        if self.j0 is None:
            object.__setattr__(self, "j0", float(self.L + 3))
        if self.two_sided:
            raise ValueError("two-sided trap protocol is not supported")

    def with_(self, **kw) -> "ProtocolParams":
        if "holes" in kw and "N" not in kw:
            kw["N"] = None
        return replace(self, **kw)

    def check_one_sided(self):
        if not self.j0 > self.L:
            raise ValueError(f"generation requires the trap centre outside the chain "
                             f"(j0={self.j0} must exceed L={self.L})")

    @property
    def hamiltonian(self) -> HamiltonianSpec:
        return HamiltonianSpec(J=self.J, U=self.U, eta_ext=self.eta_ext, j0=self.j0)

    def basis(self) -> Basis:
        return build_basis(self.L, self.N)


def delta_eta(j, eta_ext: float, j0: float):
    """Trap energy difference between sites ``j`` and ``j+1``."""
    return -2 * eta_ext * (np.asarray(j, dtype=float) - j0 + 0.5)


def resonance_frequencies(params: ProtocolParams) -> list[float]:
    """Drive frequencies for the pi/2 step and the L-2 transfer steps."""
    params.check_one_sided()
    d = delta_eta(np.arange(1, params.L), params.eta_ext, params.j0)
    return [float(d[0] - params.U)] + [float(x) for x in d[1:]]


def aux_frequencies(i: int, params: ProtocolParams) -> tuple[float, float]:
    """Auxiliary drives for a hole on site ``i+1`` during transfer step ``i``.

    aux1 moves the down atom of the doublon on ``i`` into the hole (doublon
    destroyed): Omega - U - dEta_i = 0. aux2 moves the remaining up atom over
    and re-forms the doublon: -Omega + U - dEta_i = 0.
    """
    d = float(delta_eta(i, params.eta_ext, params.j0))
    return params.U + d, params.U - d


def _pi2(J):
    return np.pi / (4 * J)


def _pi(J):
    return np.pi / (2 * J)


def build_generation_schedule(params: ProtocolParams, shifts: Sequence[float] | None = None,
                              durations: Sequence[float] | None = None) -> PulseSchedule:
    """pi/2 step then L-2 transfer steps (each optionally followed by two aux steps).

    ``shifts`` adds a constant offset to each primary step's drive frequency;
    ``durations`` overrides the primary-step durations (e.g. from calibration).
    """
    omegas = resonance_frequencies(params)
    n = len(omegas)
    shifts = np.zeros(n) if shifts is None else np.asarray(shifts, dtype=float)
    if len(shifts) != n:
        raise ValueError(f"expected {n} frequency shifts, got {len(shifts)}")
    if durations is None:
        durations = [_pi2(params.J)] + [_pi(params.J)] * (n - 1)
    segs = [Segment("pi/2-step", omegas[0] + shifts[0], float(durations[0]), step=1)]
    for i in range(2, params.L):
        segs.append(Segment("pi-step", omegas[i - 1] + shifts[i - 1], float(durations[i - 1]), step=i))
        if params.hole_correction:
            a1, a2 = aux_frequencies(i, params)
            segs.append(Segment("aux1", a1, _pi(params.J), step=i))
            segs.append(Segment("aux2", a2, _pi(params.J), step=i))
    return PulseSchedule(tuple(segs))


def build_reversal_schedule(params: ProtocolParams, include_final: bool = True) -> PulseSchedule:
    omegas = resonance_frequencies(params)
    segs = [Segment("reverse-pi", omegas[i - 1], _pi(params.J), step=i)
            for i in range(params.L - 1, 1, -1)]
    if include_final:
        segs.append(Segment("final-pi/2", omegas[0], _pi2(params.J), step=1))
    return PulseSchedule(tuple(segs))


def pulse_segment(params: ProtocolParams, dagger: bool = False, frame: str = "rotated") -> Segment:
    """The fast pulse P (phase -pi/2 behind the drive) or its inverse (phase +pi/2)."""
    return Segment("prep-pulse", 0.0, np.pi / (2 * params.OmegaP), frame=frame,
                   omega_p=params.OmegaP, pulse_phase=np.pi / 2 if dagger else -np.pi / 2)


def build_precession_schedule(params: ProtocolParams, delta: float, t_delta: float) -> PulseSchedule:
    return PulseSchedule((pulse_segment(params),
                          Segment("precess", params.precess_omega, float(t_delta), delta=delta),
                          pulse_segment(params, dagger=True)))


# ideal resonant-transfer bookkeeping --------------------------------------------------

def config_energy(state: int, omega: float, params: ProtocolParams) -> float:
    """Diagonal rotated-frame energy of a Fock configuration (no tunneling)."""
    e = 0.0
    for j in range(1, params.L + 1):
        nd = (state >> (2 * (j - 1))) & 1
        nu = (state >> (2 * (j - 1) + 1)) & 1
        e += omega / 2 * (nu - nd) + params.U * (nd & nu)
        e += params.eta_ext * (j - params.j0) ** 2 * (nd + nu)
    return e


def single_hops(state: int, L: int):
    """All Pauli-allowed spin-flipping nearest-neighbour hops from ``state``."""
    out = []
    for j in range(1, L + 1):
        for k in (j - 1, j + 1):
            if not 1 <= k <= L:
                continue
            for s in (0, 1):
                src = 2 * (j - 1) + s
                dst = 2 * (k - 1) + (1 - s)
                if (state >> src) & 1 and not (state >> dst) & 1:
                    out.append(state ^ (1 << src) ^ (1 << dst))
    return out


def resonant_hops(state: int, omega: float, params: ProtocolParams, tol: float | None = None):
    tol = 0.5 * params.J if tol is None else tol
    e0 = config_energy(state, omega, params)
    return [s for s in single_hops(state, params.L)
            if abs(config_energy(s, omega, params) - e0) < tol]


def initial_state(params: ProtocolParams) -> int:
    """All-down configuration on the occupied sites."""
    return state_from_sites("".join("0" if j in params.holes else "d"
                                    for j in range(1, params.L + 1)))


def expected_components(params: ProtocolParams, schedule: PulseSchedule,
                        start: int | None = None) -> list[tuple[int, ...]]:
    """Fock configurations the ideal protocol should populate after each segment.

    A resonant pi/2 segment splits a configuration into itself plus its
    resonant partner; any other segment fully transfers a configuration with
    exactly one resonant hop and leaves the rest untouched.
    """
    comps: tuple[int, ...] = (initial_state(params) if start is None else start,)
    out = []
    for seg in schedule:
        new = []
        for c in comps:
            hops = resonant_hops(c, seg.omega, params)
            if seg.tag in ("pi/2-step", "final-pi/2") and len(hops) == 1:
                new += [c, hops[0]]
            elif len(hops) == 1:
                new.append(hops[0])
            else:
                new.append(c)
        comps = tuple(dict.fromkeys(new))
        out.append(comps)
    return out


def ghz_components(params: ProtocolParams) -> tuple[int, int]:
    """The two Fock states of the ideal generation output."""
    comps = expected_components(params, build_generation_schedule(params))[-1]
    if len(comps) != 2:
        raise ValueError(f"protocol does not end in two components: "
                         f"{[sites_from_state(c, params.L) for c in comps]}")
    return comps[0], comps[1]


# duration refinement ------------------------------------------------------------------

def calibrate_durations(params: ProtocolParams) -> list[float]:
    """Per-step durations from a two-level reduction of each resonant transfer.

    The two resonant configurations get second-order energy shifts from every
    other configuration they couple to; the residual detuning sets the
    generalized Rabi frequency and hence the pi/2 and pi times.
    """
    basis = params.basis()
    schedule = build_generation_schedule(params)
    comps = expected_components(params, schedule)
    prev = (initial_state(params),)
    out = []
    primaries = [s for s in schedule if s.tag in ("pi/2-step", "pi-step")]
    for seg, now in zip(schedule, comps):
        if seg.tag not in ("pi/2-step", "pi-step"):
            prev = now
            continue
        moved = [(a, b) for a in prev for b in resonant_hops(a, seg.omega, params)]
        H = build_hamiltonian(params.hamiltonian.with_(Omega=seg.omega), basis).csr
        default = seg.duration
        if len(moved) != 1:
            out.append(default)
            prev = now
            continue
        a, b = (basis.index(x) for x in moved[0])
        g = abs(H[b, a])

        def shifted(i):
            row = H.getrow(i)
            e = H[i, i]
            s = 0.0
            for k, v in zip(row.indices, row.data):
                if k not in (a, b):
                    s += abs(v) ** 2 / (e - H[k, k])
            return e + s

        detune = shifted(b) - shifted(a)
        rabi = np.sqrt(g ** 2 + detune ** 2 / 4)
        if seg.tag == "pi-step":
            out.append(float(np.pi / (2 * rabi)))
        else:
            x = np.sqrt(min(1.0, 0.5 * rabi ** 2 / g ** 2))
            out.append(float(np.arcsin(x) / rabi))
        prev = now
    assert len(out) == len(primaries)
    return out


# execution helpers --------------------------------------------------------------------

class PrepResult(NamedTuple):
    state: np.ndarray  # rotated frame
    fidelity: float


def psi0(params: ProtocolParams, basis: Basis | None = None) -> np.ndarray:
    basis = basis or params.basis()
    return basis.basis_vector(initial_state(params))


def make_runner(params: ProtocolParams, basis: Basis | None = None, **kw) -> ScheduleRunner:
    return ScheduleRunner(basis or params.basis(), params.hamiltonian, **kw)


def run_generation(params: ProtocolParams, shifts=None, record=None, calibrate: bool = False,
                   runner: ScheduleRunner | None = None, **kw):
    runner = runner or make_runner(params, **kw)
    durations = None
    if calibrate:
        durations = calibrate_durations(params)
    schedule = build_generation_schedule(params, shifts, durations)
    res = runner.run(schedule, psi0(params, runner.basis), "rotated", record)
    res.metadata["schedule"] = schedule.digest()
    return res


def prepare_pulse(params: ProtocolParams, J_active: bool = True, **kw) -> PrepResult:
    """Fast pulse P applied to the all-g lab state, returned in the rotated frame."""
    basis = params.basis()
    p = params if J_active else params.with_(J=0.0)
    runner = make_runner(p, basis, **kw)
    lab_g = psi0(params, basis)  # spin-0 lab modes are g
    res = runner.run(PulseSchedule((pulse_segment(params, frame="lab"),)), lab_g, "lab")
    rot = runner.convert(res.state, "lab", "rotated")
    return PrepResult(rot, float(abs(np.vdot(psi0(params, basis), rot)) ** 2))


def dressed_product_state(params: ProtocolParams, basis: Basis, omega: float, delta: float) -> np.ndarray:
    """Product over sites of the onsite ground state of drive plus detuning (lab frame)."""
    amps = {}
    for j in range(1, params.L + 1):
        if j in params.holes:
            continue
        s = -1.0 if j % 2 else 1.0
        h = np.array([[-delta / 2, omega / 2 * s], [omega / 2 * s, delta / 2]])
        w, v = np.linalg.eigh(h)
        amps[j] = v[:, 0]
    psi = np.zeros(basis.size, dtype=complex)
    for k, st in enumerate(basis.states):
        a = 1.0
        for j in range(1, params.L + 1):
            occ = (int(st) >> (2 * (j - 1))) & 3
            if j in params.holes:
                a *= occ == 0
            elif occ in (1, 2):
                a *= amps[j][occ - 1]
            else:
                a = 0.0
            if a == 0:
                break
        psi[k] = a
    return psi / np.linalg.norm(psi)


def prepare_ramp(params: ProtocolParams, t_ramp: float = 5.0, delta0: float = 1000.0,
                 Omega_hold: float = 122.0, profile: str = "descending", initial: str = "g",
                 **kw) -> PrepResult:
    """Adiabatic detuning ramp under the drive, starting from all-g (or the dressed state)."""
    basis = params.basis()
    ramp = RampProfile(delta0, t_ramp, profile, params.J)
    seg = Segment("prep-ramp", Omega_hold, t_ramp, frame="lab", ramp=ramp)
    if initial == "g":
        start = psi0(params, basis)
    elif initial == "dressed":
        start = dressed_product_state(params, basis, Omega_hold, ramp(0.0))
    else:
        raise ValueError(f"unknown initial state {initial!r}")
    runner = make_runner(params, basis, **kw)
    res = runner.run(PulseSchedule((seg,)), start, "lab")
    rot = runner.convert(res.state, "lab", "rotated")
    return PrepResult(rot, float(abs(np.vdot(psi0(params, basis), rot)) ** 2))


def precess(psi: np.ndarray, delta: float, t_delta: float, params: ProtocolParams,
            runner: ScheduleRunner | None = None) -> np.ndarray:
    """P, free evolution with detuning for ``t_delta``, then P^dagger (rotated frame)."""
    runner = runner or make_runner(params)
    return runner.run(build_precession_schedule(params, delta, t_delta), psi, "rotated").state
