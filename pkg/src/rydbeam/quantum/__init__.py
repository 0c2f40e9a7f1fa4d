"""Four-level ladder model: steady state, Doppler averaging, susceptibility."""
from rydbeam.quantum.doppler import (averaged_coherence, doppler_averaged_coherence,
                                     velocity_grid)
from rydbeam.quantum.levels import TWO_PI, DopplerSpec, DriveParams, LevelScheme
from rydbeam.quantum.lindblad import (DensityMatrix, build_hamiltonian, lindblad_residual,
                                      lindblad_rhs, liouvillian, steady_state)
from rydbeam.quantum.optics import (RabiCurve, absorption, absorption_curve, sensitivity,
                                    sensitivity_curve, sensitivity_many, susceptibility,
                                    susceptibility_prefactor)

__all__ = [
    "TWO_PI", "DopplerSpec", "DriveParams", "LevelScheme", "DensityMatrix",
    "build_hamiltonian", "liouvillian", "lindblad_rhs", "lindblad_residual",
    "steady_state", "velocity_grid", "averaged_coherence", "doppler_averaged_coherence",
    "susceptibility", "susceptibility_prefactor", "absorption", "sensitivity",
    "sensitivity_many", "RabiCurve", "absorption_curve", "sensitivity_curve",
]
