"""Usable chain-length histograms in a holey cube and the summed doublon signal."""

import argparse

import numpy as np

from ghzforge.analysis import find_peaks
from ghzforge.holes3d import aggregate_doublon_signal, expected_histogram, length_histogram, sprinkle

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--L", type=int, default=10)
ap.add_argument("--fillings", type=float, nargs="+", default=[0.85, 0.9, 0.95])
ap.add_argument("--seeds", type=int, default=200)
ap.add_argument("--delta", type=float, default=0.3)
args = ap.parse_args()

t = np.arange(0, 60, 0.1)
for f in args.fillings:
    ms = np.mean([length_histogram(sprinkle(args.L, f, s)).m for s in range(args.seeds)], axis=0)
    exp = expected_histogram(args.L, f)
    print(f"filling {f}")
    for l in range(args.L + 1):
        print(f"  l={l:2d}  m={ms[l]:7.2f}  expected={exp[l]:7.2f}")
    sig = aggregate_doublon_signal(length_histogram(sprinkle(args.L, f, 0)), args.delta, t, seed=0)
    peaks = find_peaks(sig, t)[:3]
    print("  spectral peaks (omega/delta): " + ", ".join(f"{pk.omega / args.delta:.2f}" for pk in peaks))
