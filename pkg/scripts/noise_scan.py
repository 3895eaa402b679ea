"""Mean and spread of the GHZ fidelity under random per-step drive-frequency shifts."""

import argparse
import os

from ghzforge.analysis import NoiseScanConfig, noise_scan
from ghzforge.protocol import ProtocolParams

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--L", type=int, default=6)
ap.add_argument("--j0", type=float, default=None)
ap.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5])
ap.add_argument("--trajectories", type=int, default=20)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
args = ap.parse_args()

p = ProtocolParams(L=args.L, j0=args.j0)
print("dOmega/J    mean      std      n")
for lvl in args.levels:
    r = noise_scan(NoiseScanConfig(lvl, p, args.trajectories, args.seed, args.workers))
    print(f"{lvl:8.3f}  {r.mean:.5f}  {r.std:.5f}  {r.n:4d}")
