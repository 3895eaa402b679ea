import numpy as np
import pytest
from hypothesis import given, strategies as st

from ghzforge.analysis import doublon_number
from ghzforge.fock import sites_from_state, state_from_sites
from ghzforge.operators import doublon_operator
from ghzforge.protocol import (ProtocolParams, aux_frequencies, build_generation_schedule,
                               build_precession_schedule, build_reversal_schedule,
                               calibrate_durations, delta_eta, expected_components,
                               ghz_components, initial_state, make_runner, precess,
                               prepare_pulse, prepare_ramp, psi0, resonance_frequencies,
                               resonant_hops)
from ghzforge.schedule import PulseSchedule, Segment


def pop(psi, basis, states):
    return float(sum(abs(psi[basis.index(s)]) ** 2 for s in states))


def test_delta_eta_examples():
    assert delta_eta(11, 21.0, 11) == pytest.approx(-21.0)
    assert delta_eta(1, 21.0, 11) == pytest.approx(399.0)


@given(st.integers(-10, 10), st.floats(0.1, 50), st.integers(-5, 20))
def test_delta_eta_reflection(k, eta, j0):
    assert delta_eta(j0 - 1 + k, eta, j0) == pytest.approx(-delta_eta(j0 - k, eta, j0), abs=1e-9)


def test_resonance_frequencies_example():
    p = ProtocolParams(L=4, U=405, eta_ext=21, j0=9)
    assert resonance_frequencies(p) == pytest.approx([-90.0, 273.0, 231.0])


def test_resonance_without_interaction():
    p = ProtocolParams(L=4, U=0, eta_ext=21, j0=9)
    assert resonance_frequencies(p)[0] == pytest.approx(float(delta_eta(1, 21, 9)))


def test_aux_degenerate():
    assert aux_frequencies(2, ProtocolParams(L=4, U=0, eta_ext=0, j0=9)) == (0.0, 0.0)


@pytest.mark.parametrize("j0", [3.0, 2.0, 1.5])
def test_trap_centre_must_lie_outside(j0):
    with pytest.raises(ValueError):
        resonance_frequencies(ProtocolParams(L=3, j0=j0))


@pytest.mark.parametrize("kw", [dict(L=1), dict(L=3, holes=(4,)), dict(L=3, N=2),
                                dict(L=3, two_sided=True)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        ProtocolParams(**kw)


def test_schedule_counts_and_times():
    s3 = build_generation_schedule(ProtocolParams(L=3, j0=6))
    assert [x.tag for x in s3] == ["pi/2-step", "pi-step"]
    assert s3.total_time == pytest.approx(np.pi / 4 + np.pi / 2)
    s10 = build_generation_schedule(ProtocolParams(L=10, j0=13))
    assert s10.total_time == pytest.approx(np.pi / 4 + 4 * np.pi)
    assert len(build_generation_schedule(ProtocolParams(L=5, hole_correction=True))) == 10


def test_reversal_mirror():
    p = ProtocolParams(L=3, j0=6)
    r = build_reversal_schedule(p)
    assert [s.label for s in r] == ["reverse-pi(2)", "final-pi/2(1)"]
    g = build_generation_schedule(p)
    assert r[0].omega == g[1].omega and r[1].omega == g[0].omega
    assert r[1].duration == pytest.approx(np.pi / 4)


@given(st.integers(3, 9), st.booleans(),
       st.lists(st.floats(-1, 1, allow_nan=False), min_size=8, max_size=8))
def test_schedule_deterministic(L, hc, shifts):
    p = ProtocolParams(L=L, hole_correction=hc)
    sh = shifts[:L - 1]
    a = build_generation_schedule(p, sh).to_text()
    b = build_generation_schedule(ProtocolParams(L=L, hole_correction=hc), list(sh)).to_text()
    assert a == b
    assert PulseSchedule.from_text(a).to_text() == a


def test_shift_length_checked():
    with pytest.raises(ValueError):
        build_generation_schedule(ProtocolParams(L=4), [0.0])


def scan_peak(params, start, target, centre, duration, span=2.0, n=33):
    """Drive frequency maximizing transfer start -> target over a grid around centre."""
    basis = params.basis()
    runner = make_runner(params, basis)
    grid = centre + np.linspace(-span, span, n)
    out = []
    for w in grid:
        psi = runner.run(PulseSchedule((Segment("pi-step", w, duration),)),
                         basis.basis_vector(start)).state
        out.append(abs(psi[basis.index(target)]) ** 2)
    k = int(np.argmax(out))
    return grid[k], out[k]


def test_step2_resonance_scan():
    p = ProtocolParams(L=3, j0=6)
    sched = build_generation_schedule(p)
    comps = expected_components(p, sched)
    start = [c for c in comps[0] if c != initial_state(p)][0]
    target = [c for c in comps[1] if c != initial_state(p)][0]
    w2 = resonance_frequencies(p)[1]
    peak, best = scan_peak(p, start, target, w2, np.pi / 2)
    assert abs(peak - w2) < 0.5
    assert best > 0.9


def test_aux_resonance_scans():
    # doublon on site 2, hole on site 3
    p = ProtocolParams(L=3, j0=6, holes=(3,))
    d0 = state_from_sites("0x0")
    uu = state_from_sites("0uu")
    a1, a2 = aux_frequencies(2, p)
    assert resonant_hops(d0, a1, p) == [uu]
    peak, best = scan_peak(p, d0, uu, a1, np.pi / 2)
    assert abs(peak - a1) < 0.5 and best > 0.9
    moved = state_from_sites("00x")
    assert moved in resonant_hops(uu, a2, p)
    peak, best = scan_peak(p, uu, moved, a2, np.pi / 2)
    assert abs(peak - a2) < 0.5 and best > 0.9


@pytest.fixture(scope="module")
def l5():
    p = ProtocolParams(L=5, j0=8)
    basis = p.basis()
    return p, basis, make_runner(p, basis)


def test_ghz_components_l5(l5):
    p, basis, _ = l5
    a, b = ghz_components(p)
    assert sites_from_state(a, 5) == "ddddd"
    assert sites_from_state(b, 5) == "0uuux"


def test_support_follows_tracker(l5):
    p, basis, runner = l5
    sched = build_generation_schedule(p)
    psi = psi0(p, basis)
    for seg, comps in zip(sched, expected_components(p, sched)):
        psi = runner.evolve_segment(seg, psi)
        assert pop(psi, basis, comps) >= 0.95, seg.label


def test_all_down_spectator(l5):
    p, basis, runner = l5
    steps = PulseSchedule(tuple(s for s in build_generation_schedule(p) if s.tag == "pi-step"))
    psi = runner.run(steps, psi0(p, basis)).state
    assert 1 - pop(psi, basis, [initial_state(p)]) <= 2e-2


def test_aux_steps_are_noops_without_holes(l5):
    p, basis, runner = l5
    plain = runner.run(build_generation_schedule(p), psi0(p, basis)).state
    hc = runner.run(build_generation_schedule(p.with_(hole_correction=True)), psi0(p, basis)).state
    a, b = ghz_components(p)
    f = lambda psi: pop(psi, basis, [a, b])
    assert abs(f(plain) - f(hc)) <= 1e-2


def test_reverse_steps_leave_all_down(l5):
    p, basis, runner = l5
    psi = runner.run(build_reversal_schedule(p, include_final=False), psi0(p, basis)).state
    assert abs(np.vdot(psi0(p, basis), psi)) ** 2 >= 1 - 1e-2


def test_generation_then_reversal_returns_doublon_weight():
    p = ProtocolParams(L=5, j0=9)
    basis = p.basis()
    runner = make_runner(p, basis)
    g = runner.run(build_generation_schedule(p), psi0(p, basis)).state
    r = runner.run(build_reversal_schedule(p, include_final=False), g).state
    manifold = [initial_state(p), state_from_sites("0xddd")]
    assert pop(r, basis, manifold) >= 0.95
    total = doublon_number(r, basis)
    assert doublon_number(r, basis, window=(1, 2)) >= 0.95 * total
    assert total == pytest.approx(0.5, abs=0.05)


def test_calibrated_durations_close_to_nominal():
    p = ProtocolParams(L=5, j0=8)
    d = calibrate_durations(p)
    nominal = [np.pi / 4] + [np.pi / 2] * 3
    assert np.allclose(d, nominal, rtol=0.05)


def test_pulse_preparation():
    assert prepare_pulse(ProtocolParams(L=5, j0=8), J_active=False).fidelity == pytest.approx(1, abs=1e-10)
    assert prepare_pulse(ProtocolParams(L=5, j0=8)).fidelity >= 0.999


def test_double_pulse_stays_product():
    p = ProtocolParams(L=3, j0=6, J=0.0)
    basis = p.basis()
    runner = make_runner(p, basis)
    from ghzforge.protocol import pulse_segment
    seg = pulse_segment(p, frame="lab")
    psi = runner.run(PulseSchedule((seg, seg)), psi0(p, basis), "lab").state
    # two quarter turns in the g/e plane: all weight on the all-e configuration
    assert abs(psi[basis.index(state_from_sites("uuu"))]) ** 2 == pytest.approx(1, abs=1e-10)


def test_ramp_without_detuning_stays_dressed():
    p = ProtocolParams(L=3, j0=2)
    r = prepare_ramp(p, t_ramp=3.0, delta0=0.0, Omega_hold=122.0, initial="dressed")
    assert r.fidelity >= 0.999


def test_ramp_slower_is_not_worse():
    p = ProtocolParams(L=3, j0=2)
    f3 = prepare_ramp(p, t_ramp=3.0).fidelity
    f6 = prepare_ramp(p, t_ramp=6.0).fidelity
    assert f6 >= f3 - 1e-3


def test_ramp_rejects_unknown_start():
    with pytest.raises(ValueError):
        prepare_ramp(ProtocolParams(L=2, j0=3), initial="e")


def test_precess_zero_time_is_identity(l5):
    p, basis, runner = l5
    psi = runner.run(build_generation_schedule(p), psi0(p, basis)).state
    out = precess(psi, 0.3, 0.0, p, runner)
    # the two pulses still accrue the bare interaction/trap phase between components
    assert np.abs(np.abs(out) ** 2 - np.abs(psi) ** 2).sum() <= 1e-3
    from ghzforge.analysis import GHZTarget, fidelity
    t = GHZTarget.from_params(p)
    assert fidelity(out, t, basis) == pytest.approx(fidelity(psi, t, basis), abs=1e-3)


def test_precession_schedule_shape():
    s = build_precession_schedule(ProtocolParams(L=3), 0.3, 2.0)
    assert [x.tag for x in s] == ["prep-pulse", "precess", "prep-pulse"]
    assert s[0].pulse_phase == -s[2].pulse_phase


def _phase(psi, basis, a, b):
    return np.angle(psi[basis.index(b)] * np.conj(psi[basis.index(a)]))


@pytest.mark.parametrize("delta", [0.0, 0.3])
def test_precession_phase_rate(l5, delta):
    # sampled at multiples of the bare period, the detuning phase grows as delta (L-1)
    from ghzforge.analysis import GHZTarget, bare_precession_rate
    p, basis, runner = l5
    a, b = ghz_components(p)
    ghz = GHZTarget.from_params(p, theta=0.0).vector(basis)
    period = 2 * np.pi / bare_precession_rate(p, ghz)
    n = np.arange(0, 41, 4)
    phases = [_phase(precess(ghz, delta, k * period, p, runner), basis, a, b) for k in n]
    slope = np.polyfit(n * period, np.unwrap(phases), 1)[0]
    rate = abs(slope)
    if delta == 0:
        assert rate < 0.05
    else:
        assert rate == pytest.approx(4 * delta, rel=0.05)
