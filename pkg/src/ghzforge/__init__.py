"""Driven Fermi-Hubbard simulator for stepwise GHZ-state generation in tilted lattices."""

__version__ = "0.1.0"

from .fock import Basis, build_basis, state_from_sites, sites_from_state  # noqa: E402
from .operators import HamiltonianSpec, build_hamiltonian  # noqa: E402
from .protocol import ProtocolParams  # noqa: E402
from .schedule import PulseSchedule, RunResult, Segment  # noqa: E402

__all__ = ["Basis", "build_basis", "state_from_sites", "sites_from_state", "HamiltonianSpec",
           "build_hamiltonian", "ProtocolParams", "PulseSchedule", "RunResult", "Segment"]
