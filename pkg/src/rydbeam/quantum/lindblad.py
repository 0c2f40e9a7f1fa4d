"""Hamiltonian, Liouvillian and steady state of the four-level ladder."""
from dataclasses import dataclass

import numpy as np

from rydbeam import _pykernels
from rydbeam.errors import SingularSystem

_TRACE = (0, 5, 10, 15)


def build_hamiltonian(drive):
    """H/hbar (rad/s) in the interaction picture.

    Probe couples |1>-|2>, coupling |2>-|3>, and the composite RF field
    ``drive.omega_rf`` couples |3>-|4> with its conjugate below the diagonal.
    """
    w = complex(drive.omega_rf)
    dp, dc, dl = drive.delta_p, drive.delta_c, drive.delta_l
    return 0.5 * np.array([
        [0.0, drive.omega_p, 0.0, 0.0],
        [drive.omega_p, -2 * dp, drive.omega_c, 0.0],
        [0.0, drive.omega_c, -2 * dp - 2 * dc, w],
        [0.0, 0.0, w.conjugate(), -2 * dp - 2 * dc - 2 * dl],
    ], dtype=complex)


def liouvillian(scheme, drive):
    """16x16 generator acting on row-major vec(rho)."""
    return _pykernels.liouvillian_batch(
        np.array([drive.omega_p], float), np.array([drive.omega_c], float),
        np.array([drive.omega_rf], complex), np.array([drive.delta_p], float),
        np.array([drive.delta_c], float), np.array([drive.delta_l], float),
        scheme.gammas)[0]


def lindblad_rhs(scheme, drive, rho):
    """d(rho)/dt = -i[H, rho] + L[rho] evaluated directly in matrix form."""
    H = build_hamiltonian(drive)
    g2, g3, g4 = scheme.gammas
    G = np.diag([0.0, g2, g3, g4])
    repop = np.diag([g2 * rho[1, 1] + g4 * rho[3, 3], g3 * rho[2, 2], 0.0, 0.0])
    return -1j * (H @ rho - rho @ H) - 0.5 * (G @ rho + rho @ G) + repop


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray

    @property
    def rho21(self):
        return complex(self.rho[1, 0])

    @property
    def populations(self):
        return np.real(np.diag(self.rho))

    def hermiticity_error(self):
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def trace_error(self):
        return float(abs(np.trace(self.rho) - 1.0))

    def min_eigenvalue(self):
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))))


def steady_state(scheme, drive, cond_limit=1e13):
    """Stationary density matrix of the Lindblad equation.

    One row of the (rate-scaled) Liouvillian is replaced by the unit-trace
    condition and the 16x16 system is solved directly.

    Raises
    ------
    SingularSystem
        If the constrained system is numerically rank deficient.
    """
    scale = _pykernels.rate_scale(drive.omega_p, drive.omega_c, drive.omega_rf,
                                  drive.delta_p, drive.delta_c, drive.delta_l,
                                  scheme.gamma2)
    A = liouvillian(scheme, drive) / scale
    A[0, :] = 0.0
    A[0, _TRACE] = 1.0
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularSystem(
            f"trace-constrained Liouvillian is rank deficient (cond={cond:.3g})")
    b = np.zeros(16, dtype=complex)
    b[0] = 1.0
    rho = np.linalg.solve(A, b).reshape(4, 4)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return DensityMatrix(rho)


def lindblad_residual(scheme, drive, dm):
    """max |d(rho)/dt| at the supplied state."""
    return float(np.max(np.abs(lindblad_rhs(scheme, drive, dm.rho))))
