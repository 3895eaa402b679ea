"""Fixed-particle-number Fock basis for a two-species 1D chain.

Mode ordering is site-major, spin-minor: mode ``2*(site-1) + spin`` with
spin 0 = down (rotated frame) or g (lab frame) and spin 1 = up or e. Bit ``m``
of a state integer is the occupation of mode ``m``. Fermionic signs follow the
canonical ordering: a basis ket is ``prod_m (f_m^dagger)^{n_m} |vac>`` with the
operators written left to right in increasing mode index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple

import numpy as np

DOWN = 0
UP = 1
G = 0
E = 1


class ModeIndex(NamedTuple):
    site: int  # 1-based
    spin: int  # 0 = down/g, 1 = up/e

    @property
    def flat(self) -> int:
        return 2 * (self.site - 1) + self.spin

    @classmethod
    def from_flat(cls, m: int) -> "ModeIndex":
        return cls(m // 2 + 1, m % 2)


def _flat(mode) -> int:
    return mode.flat if isinstance(mode, ModeIndex) else int(mode)


@dataclass(frozen=True)
class Basis:
    """Sorted list of occupation bit fields with ``popcount == N``."""

    L: int
    N: int
    states: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def n_modes(self) -> int:
        return 2 * self.L

    def __len__(self) -> int:
        return self.size

    def index(self, state: int) -> int:
        k = int(np.searchsorted(self.states, state))
        if k >= self.size or self.states[k] != state:
            raise KeyError(f"state {state:#b} not in basis (L={self.L}, N={self.N})")
        return k

    def lookup(self, states: np.ndarray) -> np.ndarray:
        """Vectorized index lookup; every entry must be in the basis."""
        idx = np.searchsorted(self.states, states)
        return idx

    def contains(self, states: np.ndarray) -> np.ndarray:
        idx = np.minimum(np.searchsorted(self.states, states), self.size - 1)
        return self.states[idx] == states

    def basis_vector(self, state: int, dtype=complex) -> np.ndarray:
        v = np.zeros(self.size, dtype=dtype)
        v[self.index(state)] = 1.0
        return v


def build_basis(L: int, N: int) -> Basis:
    if L < 1 or not 0 <= N <= 2 * L:
        raise ValueError(f"invalid basis parameters L={L}, N={N}")
    states = np.fromiter(
        (sum(1 << m for m in modes) for modes in itertools.combinations(range(2 * L), N)),
        dtype=np.int64,
        count=comb(2 * L, N),
    )
    states.sort()
    states.setflags(write=False)
    return Basis(L, N, states)


def state_from_sites(config) -> int:
    """Bit field from a per-site spec: each entry in {'0', 'd', 'u', 'x'}.

    'd' and 'u' are the spin-0 and spin-1 modes (down/up or g/e), 'x' is a
    doublon, '0' an empty site. Accepts a string such as ``"ddd0x"`` too.
    """
    bits = 0
    for j, c in enumerate(config):
        base = 2 * j
        if c == "d":
            bits |= 1 << base
        elif c == "u":
            bits |= 1 << (base + 1)
        elif c == "x":
            bits |= 3 << base
        elif c != "0":
            raise ValueError(f"unknown site symbol {c!r}")
    return bits


def sites_from_state(state: int, L: int) -> str:
    return "".join("0dux"[(state >> (2 * j)) & 3] for j in range(L))


def _between_mask(a: int, b: int) -> int:
    lo, hi = min(a, b), max(a, b)
    return ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)


def apply_bilinear(state: int, create, destroy) -> tuple[int, int] | None:
    """Apply ``f_create^dagger f_destroy`` to one basis ket.

    Returns ``(new_state, sign)`` or ``None`` when the ket is annihilated.
    """
    a, b = _flat(create), _flat(destroy)
    if not (state >> b) & 1:
        return None
    if a == b:
        return state, 1
    if (state >> a) & 1:
        return None
    crossed = (state & _between_mask(a, b)).bit_count()
    return state ^ (1 << a) ^ (1 << b), -1 if crossed & 1 else 1


def apply_bilinear_array(states: np.ndarray, create, destroy):
    """Vectorized ``apply_bilinear``.

    Returns ``(rows, new_states, signs)`` where ``rows`` indexes the input
    states that survive.
    """
    a, b = _flat(create), _flat(destroy)
    states = np.asarray(states, dtype=np.int64)
    ok = ((states >> b) & 1).astype(bool)
    if a != b:
        ok &= ~((states >> a) & 1).astype(bool)
    rows = np.nonzero(ok)[0]
    src = states[rows]
    if a == b:
        return rows, src, np.ones(len(rows), dtype=np.int8)
    crossed = np.bitwise_count(src & np.int64(_between_mask(a, b)))
    signs = np.where(crossed & 1, -1, 1).astype(np.int8)
    return rows, src ^ np.int64((1 << a) | (1 << b)), signs


class SiteOccupation(NamedTuple):
    n_down: int
    n_up: int
    is_doublon: bool


def occupations(state: int, L: int) -> list[SiteOccupation]:
    out = []
    for j in range(L):
        nd = (state >> (2 * j)) & 1
        nu = (state >> (2 * j + 1)) & 1
        out.append(SiteOccupation(nd, nu, bool(nd and nu)))
    return out


def occupation_arrays(basis: Basis) -> tuple[np.ndarray, np.ndarray]:
    """Per-state, per-site occupations, shape ``(size, L)`` for each species."""
    shifts = 2 * np.arange(basis.L, dtype=np.int64)
    s = basis.states[:, None]
    return (s >> shifts) & 1, (s >> (shifts + 1)) & 1
