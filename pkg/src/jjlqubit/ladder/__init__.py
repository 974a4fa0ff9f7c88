"""Josephson-junction ladder: geometry, classical minima, exact diagonalization, flux ramps."""
from .lattice import (SEAMS, AmbiguousChirality, ChiralityPattern, ClassicalModel, DoubleKinkResult,
                      LadderSpec, Link, ParityObstruction, PhaseConfiguration, alternation_ok,
                      build_links, chirality_from_circulation, classical_chirality,
                      classical_minimize, double_kink, plaquette_loops)
from .quantum import (ChargeBasis, DimensionCapExceeded, Eigenpair, LadderHamiltonian,
                      NonConvergence, SparseOperator, build_hamiltonian, ground_spectrum,
                      quantum_chirality, read_eigenvectors, write_eigenvectors)
from .dynamics import (AdiabaticityWarning, DoubleRampResult, FluxGauge, RampResult,
                       adiabatic_ramp, cosine_schedule, double_ramp, find_flux_gauge,
                       flux_transport, gap_profile, lanczos_expm, logical_basis)

__all__ = [name for name in dir() if not name.startswith("_")]
