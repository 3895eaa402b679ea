"""Fidelity of the fast-pulse and detuning-ramp preparations versus ramp time."""

import argparse

from ghzforge.protocol import ProtocolParams, prepare_pulse, prepare_ramp

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--L", type=int, default=5)
ap.add_argument("--j0", type=float, default=3.0)
ap.add_argument("--t-ramp", type=float, nargs="+", default=[2.0, 3.0, 5.0])
ap.add_argument("--profile", choices=["descending", "printed"], default="descending")
args = ap.parse_args()

p = ProtocolParams(L=args.L, j0=args.j0)
print(f"pulse: {prepare_pulse(p).fidelity:.6f}")
for tr in args.t_ramp:
    print(f"ramp t={tr:4.1f} ({args.profile}): {prepare_ramp(p, tr, profile=args.profile).fidelity:.5f}")
