"""Population of the tracked Fock configurations through each generation step."""

import argparse

from ghzforge.analysis import GHZTarget, block_fidelities, fidelity, relative_phase, theta_f, wrap
from ghzforge.protocol import ProtocolParams, build_generation_schedule, run_generation

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--L", type=int, default=5)
ap.add_argument("--j0", type=float, default=None)
ap.add_argument("--hole", type=int, action="append", default=[])
ap.add_argument("--hole-correction", action="store_true")
args = ap.parse_args()

p = ProtocolParams(L=args.L, j0=args.j0, holes=tuple(args.hole),
                   hole_correction=args.hole_correction)
sched = build_generation_schedule(p)
print(f"L={p.L} N={p.N} j0={p.j0}  segments={len(sched)}  tJ={sched.total_time:.4f}")
for label, f in block_fidelities(p):
    print(f"  {label:<14s} {f:.5f}")
if not p.holes:
    psi = run_generation(p).state
    t = GHZTarget.from_params(p)
    print(f"GHZ fidelity {fidelity(psi, t, p.basis()):.5f}, phase "
          f"{relative_phase(psi, t, p.basis()):+.4f} (closed form {float(wrap(theta_f(p.L, p.U, p.eta_ext))):+.4f})")
