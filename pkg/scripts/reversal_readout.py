"""Doublon number after generation, precession and reversal, and the recovered detuning."""

import argparse

import numpy as np

from ghzforge.analysis import extract_detuning, measurement_signal, stroboscopic_grid
from ghzforge.protocol import ProtocolParams

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--L", type=int, default=6)
ap.add_argument("--delta", type=float, default=0.3)
ap.add_argument("--periods", type=float, default=4.0)
args = ap.parse_args()

p = ProtocolParams(L=args.L)
t = stroboscopic_grid(p, args.periods * 2 * np.pi / (args.delta * (p.L - 1)), 0.1)
sig = measurement_signal(p, args.delta, t)
for ti, s in zip(t[::max(1, len(t) // 25)], sig[::max(1, len(t) // 25)]):
    print(f"{ti:8.3f}  {s:.4f}  " + "#" * int(40 * s))
est = extract_detuning(sig, t, p.L)
print(f"delta estimate {est.delta:.5f} (true {args.delta})")
