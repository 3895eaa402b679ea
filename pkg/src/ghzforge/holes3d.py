"""Random holes in an L x L x L lattice: usable chain lengths and the summed readout."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class Occupancy3D:
    L: int
    occupied: np.ndarray = field(repr=False)  # bool, shape (L, L, L)
    seed: int | None = None
    mode: str = "iid"

    @property
    def filling(self) -> float:
        return float(self.occupied.mean())

    def to_text(self) -> str:
        """Layers along axis 0, one row per line; '#' occupied, '.' hole."""
        blocks = []
        for k, layer in enumerate(self.occupied):
            rows = ["".join("#" if x else "." for x in row) for row in layer]
            blocks.append(f"layer {k}\n" + "\n".join(rows))
        return "\n\n".join(blocks) + "\n"


@dataclass(frozen=True)
class LengthHistogram:
    """``m[l]`` = number of tubes whose first hole sits after ``l`` atoms."""

    L: int
    m: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return np.arange(self.L + 1)

    @property
    def total(self) -> int:
        return int(self.m.sum())


def sprinkle(L: int, filling: float, seed: int | None = None, mode: str = "iid") -> Occupancy3D:
    if not 0 <= filling <= 1:
        raise ValueError(f"filling {filling} outside [0, 1]")
    rng = np.random.default_rng(seed)
    n = L ** 3
    if mode == "iid":
        occ = rng.random(n) < filling
    elif mode == "exact-count":
        occ = np.zeros(n, dtype=bool)
        occ[rng.choice(n, int(round(filling * n)), replace=False)] = True
    else:
        raise ValueError(f"unknown sprinkling mode {mode!r}")
    return Occupancy3D(L, occ.reshape(L, L, L), seed, mode)


def chain_lengths(occ: Occupancy3D, direction: int = 0) -> np.ndarray:
    """Run length of occupied sites from the low edge of every tube, shape (L, L)."""
    run = np.cumprod(np.moveaxis(occ.occupied, direction, 0), axis=0, dtype=np.int64)
    return run.sum(axis=0)


def length_histogram(occ: Occupancy3D, direction: int = 0) -> LengthHistogram:
    if direction not in (0, 1, 2):
        raise ValueError("direction must be 0, 1 or 2")
    m = np.bincount(chain_lengths(occ, direction).ravel(), minlength=occ.L + 1)
    return LengthHistogram(occ.L, m)


def expected_histogram(L: int, filling: float) -> np.ndarray:
    """Mean tube counts under iid sprinkling: geometric law truncated at L."""
    f = filling
    m = L ** 2 * (1 - f) * f ** np.arange(L + 1, dtype=float)
    m[L] = L ** 2 * f ** L
    return m


def histogram_variance(L: int, filling: float) -> np.ndarray:
    """Per-lattice variance of each m_l (independent tubes, multinomial counts)."""
    p = expected_histogram(L, filling) / L ** 2
    return L ** 2 * p * (1 - p)


def draw_theta_r(L: int, seed: int | None = None) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0, 2 * np.pi, L + 1)


def aggregate_doublon_signal(hist: LengthHistogram, delta: float, times,
                             theta_r: Sequence[float] | Mapping[int, float] | None = None,
                             seed: int | None = None) -> np.ndarray:
    """Doublon number summed over tubes, each length following its own closed form.

    Every tube of length l contributes (1 - sin(theta_r[l] + delta (l-1) t)) / 2.
    Missing ``theta_r`` values are drawn uniformly from [0, 2 pi) with ``seed``.
    """
    t = np.asarray(times, dtype=float)
    if theta_r is None:
        th = draw_theta_r(hist.L, seed)
    elif isinstance(theta_r, Mapping):
        th = draw_theta_r(hist.L, seed)
        for l, v in theta_r.items():
            th[l] = v
    else:
        th = np.asarray(theta_r, dtype=float)
        if th.shape != (hist.L + 1,):
            raise ValueError(f"need {hist.L + 1} phases, got {th.shape}")
    l = hist.lengths
    arg = th[:, None] + delta * (l - 1)[:, None] * t[None, :]
    return (hist.m[:, None] * 0.5 * (1 - np.sin(arg))).sum(axis=0)


def histogram_rows(hist: LengthHistogram, filling: float | None = None) -> list[dict]:
    exp = expected_histogram(hist.L, filling) if filling is not None else None
    return [{"l": int(l), "m_l": float(hist.m[l]),
             "expected": float(exp[l]) if exp is not None else float("nan")}
            for l in hist.lengths]


def signal_rows(times, signal) -> list[dict]:
    return [{"t": float(t), "n_d_total": float(s)} for t, s in zip(times, signal)]
