"""Maxwell-Boltzmann velocity averaging of the probe coherence."""
from functools import lru_cache

import numpy as np

from rydbeam import kernels
from rydbeam.errors import SingularSystem


@lru_cache(maxsize=32)
def _unit_rule(node_count, truncation):
    x, w = np.polynomial.legendre.leggauss(node_count)
    s = truncation * x
    w = w * np.exp(-s * s)
    w /= w.sum()
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def velocity_grid(scheme, spec):
    """Velocity nodes (m/s) and normalized Gaussian weights.

    Gauss-Legendre nodes on [-truncation*u, truncation*u] carrying the
    Maxwell-Boltzmann density exp(-v^2/u^2)/(sqrt(pi) u), renormalized to
    sum to one after truncation.
    """
    s, w = _unit_rule(int(spec.node_count), float(spec.truncation))
    return s * scheme.u, w.copy()


def _raise_for_status(status, nodes, where=""):
    bad = np.flatnonzero(status.ravel())
    if bad.size == 0:
        return
    code = int(status.ravel()[bad[0]])
    if code >= 10:
        v = float(nodes[code - 10])
        raise SingularSystem(f"singular steady-state system at velocity node "
                             f"{code - 10} (v={v:.4g} m/s){where}", velocity=v)
    reason = {1: "trace-constrained Liouvillian is rank deficient",
              2: "velocity-pole decomposition failed",
              3: "velocity pole on the real axis"}.get(code, f"status {code}")
    raise SingularSystem(f"{reason}{where}")


def averaged_coherence(scheme, drive, spec, *, omega_rf=None, delta_c=None,
                       delta_p=None, omega_p=None):
    """Vectorized Doppler-averaged rho21.

    Keyword arrays override the corresponding ``drive`` fields and are
    broadcast together; the result has the broadcast shape.
    """
    nodes, weights = velocity_grid(scheme, spec)
    rho, status = kernels.rho21_doppler(
        drive.omega_p if omega_p is None else omega_p,
        drive.omega_c,
        drive.omega_rf if omega_rf is None else omega_rf,
        drive.delta_p if delta_p is None else delta_p,
        drive.delta_c if delta_c is None else delta_c,
        drive.delta_l,
        scheme.gammas, scheme.k_p, scheme.k_c, scheme.u,
        nodes, weights, spec.pole_cut * scheme.u)
    _raise_for_status(status, nodes)
    return rho


def doppler_averaged_coherence(scheme, drive, spec):
    """rho21 averaged over the thermal velocity distribution.

    Probe and coupling are counter-propagating: an atom moving at v sees
    delta_p - k_p v and delta_c + k_c v.
    """
    return complex(averaged_coherence(scheme, drive, spec)[()])
