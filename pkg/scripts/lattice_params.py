"""Hubbard and trap parameters for a range of longitudinal lattice depths."""

import argparse
import dataclasses

from ghzforge.latticeparams import LatticeInputs, derive

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--Vz", type=float, nargs="+", default=[15.0, 19.0, 25.0])
args = ap.parse_args()

print("  Vz      J[Hz]     U[Hz]   eta[Hz]    j0    U/J     eta/J")
for vz in args.Vz:
    d = derive(dataclasses.replace(LatticeInputs(), Vz=vz))
    print(f"{vz:5.1f}  {d.J:8.3f}  {d.U:8.1f}  {d.eta_ext:7.1f}  {d.j0:5.2f}  {d.U_over_J:6.1f}  {d.eta_over_J:6.2f}")
