import numpy as np
import pytest
from hypothesis import given, strategies as st

from ghzforge.fock import build_basis, state_from_sites
from ghzforge.operators import (HamiltonianSpec, build_hamiltonian, build_pulse_generator,
                                build_trap_diagonal, doublon_operator, frame_unitary,
                                mode_transform, number_operator, one_body, rotate_frame)

import jw

FULL = dict(J=1.0, U=7.3, Omega=2.1, delta=0.37, eta_ext=0.8, j0=4.5)


def embed(b):
    return np.ix_(b.states, b.states)


@pytest.mark.parametrize("L,N", [(2, 2), (3, 3), (3, 2)])
def test_lab_hamiltonian_matches_jordan_wigner(L, N):
    b = build_basis(L, N)
    H = build_hamiltonian(HamiltonianSpec(frame="lab", OmegaP=0.9, **FULL), b).toarray()
    ref = jw.lab_hamiltonian(L, OmegaP=0.9, eta=FULL["eta_ext"],
                             **{k: v for k, v in FULL.items() if k != "eta_ext"})
    assert np.allclose(H, ref[embed(b)], atol=1e-12)


@pytest.mark.parametrize("L,N", [(2, 2), (3, 3), (2, 1)])
def test_rotated_hamiltonian_is_the_lab_one_in_rotated_kets(L, N):
    b = build_basis(L, N)
    Hr = build_hamiltonian(HamiltonianSpec(frame="rotated", **FULL), b).toarray()
    ref = jw.lab_hamiltonian(L, eta=FULL["eta_ext"],
                             **{k: v for k, v in FULL.items() if k != "eta_ext"})
    B = jw.rotated_kets(L, b.states)
    assert np.allclose(Hr, B.conj().T @ ref @ B, atol=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.4, -2.0])
def test_frame_unitary_columns_are_rotated_kets(lam):
    b = build_basis(2, 2)
    W = frame_unitary(b, lam).toarray()
    B = jw.rotated_kets(2, b.states, lam)
    assert np.allclose(W, B[b.states], atol=1e-12)
    # B has no weight outside the N-particle sector
    assert np.allclose(np.linalg.norm(B, axis=0), 1)


def test_frame_unitary_is_unitary_at_l4():
    b = build_basis(4, 4)
    W = frame_unitary(b).toarray()
    assert np.allclose(W.conj().T @ W, np.eye(b.size), atol=1e-12)


def test_rotated_drive_is_diagonal():
    # in the rotated frame the drive term splits up from down by Omega per atom
    b = build_basis(1, 1)
    h = one_body(1, HamiltonianSpec(J=0, Omega=2.0, frame="rotated"))
    assert np.allclose(h, np.diag([-1.0, 1.0]))
    assert b.size == 2


def test_mode_transform_unitary():
    M = mode_transform(5, 0.3)
    assert np.allclose(M.conj().T @ M, np.eye(10))


@given(st.floats(-3, 3), st.floats(0, 20), st.floats(-3, 3), st.floats(0, 2), st.floats(-5, 12),
       st.sampled_from(["lab", "rotated"]))
def test_hermitian(Omega, U, delta, eta, j0, frame):
    b = build_basis(3, 3)
    op = build_hamiltonian(HamiltonianSpec(J=1, U=U, Omega=Omega, delta=delta, eta_ext=eta,
                                           j0=j0, frame=frame), b)
    assert op.hermiticity_error() < 1e-12


@given(st.sampled_from(["xd0", "uud", "0xu", "d0x"]))
def test_on_the_fly_matvec_agrees_with_csr(s):
    b = build_basis(3, 3)
    spec = HamiltonianSpec(**FULL)
    a = build_hamiltonian(spec, b)
    c = build_hamiltonian(spec, b, assemble=False)
    v = np.zeros(b.size, complex)
    v[b.index(state_from_sites(s))] = 1
    v += 0.1 * np.arange(b.size)
    assert np.allclose(a @ v, c @ v)
    assert np.allclose(a @ np.stack([v, 2 * v], 1), c @ np.stack([v, 2 * v], 1))


def test_interaction_and_trap_are_frame_independent():
    b = build_basis(3, 3)
    W = frame_unitary(b).toarray()
    diag = doublon_operator(b) * 5.0 + build_trap_diagonal(0.7, 6.0, b)
    assert np.allclose(W.conj().T @ np.diag(diag) @ W, np.diag(diag), atol=1e-12)
    lab = build_hamiltonian(HamiltonianSpec(J=0, U=5.0, eta_ext=0.7, j0=6.0, frame="lab"), b)
    assert np.allclose(lab.diagonal(), diag)


def test_doublon_operator_window():
    b = build_basis(3, 4)
    s = b.index(state_from_sites("xxo".replace("o", "0")))
    assert doublon_operator(b)[s] == 2
    assert doublon_operator(b, sites=[2, 3])[s] == 1


def test_rotate_frame_roundtrip():
    b = build_basis(3, 3)
    rng = np.random.default_rng(1)
    psi = rng.normal(size=b.size) + 1j * rng.normal(size=b.size)
    back = rotate_frame(rotate_frame(psi, b, "lab->rotated", 0.2), b, "rotated->lab", 0.2)
    assert np.allclose(back, psi)
    with pytest.raises(ValueError):
        rotate_frame(psi, b, "sideways")


def test_pulse_generator_in_rotated_frame_flips_spins():
    b = build_basis(1, 1)
    G = build_pulse_generator(2.0, -np.pi / 2, b, frame="rotated").toarray()
    assert np.allclose(np.diag(G), 0)
    assert np.allclose(np.abs(G[0, 1]), 1)


def test_number_operator_counts():
    b = build_basis(2, 2)
    n = number_operator(b, 1).diagonal()
    assert set(n) == {0.0, 1.0}


def test_unknown_frame():
    with pytest.raises(ValueError):
        build_hamiltonian(HamiltonianSpec(frame="bogus"), build_basis(1, 1))


def test_drift_requires_lab_frame():
    with pytest.raises(ValueError):
        one_body(2, HamiltonianSpec(drift=lambda t: 0.1 * t, frame="rotated"))
