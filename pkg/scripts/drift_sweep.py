"""GHZ fidelity of the lab-frame protocol under a linear drive-phase drift."""

import argparse

from ghzforge.analysis import drift_fidelity
from ghzforge.protocol import ProtocolParams

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--L", type=int, default=5)
ap.add_argument("--ratios", type=float, nargs="+", default=[0.0, 1e-3, 1e-2, 3e-2])
args = ap.parse_args()

p = ProtocolParams(L=args.L)
for r in args.ratios:
    print(f"eps/min|Omega| = {r:g}: F = {drift_fidelity(p, r):.5f}")
