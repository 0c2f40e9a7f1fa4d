"""Susceptibility, absorption and LO sensitivity of the vapor."""
import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.constants import epsilon_0, hbar

from rydbeam import kernels
from rydbeam.errors import StepTooSmall
from rydbeam.quantum.doppler import averaged_coherence

MIN_STEP = 1e-6


def susceptibility_prefactor(scheme, drive):
    if not drive.omega_p > 0:
        raise ValueError("susceptibility requires omega_p > 0")
    return -2.0 * scheme.n0 * scheme.mu12 ** 2 / (epsilon_0 * hbar * drive.omega_p)


def susceptibility(scheme, drive, rho21_bar):
    """chi = -2 N0 mu12^2 / (eps0 hbar Omega_p) * rho21_bar."""
    return susceptibility_prefactor(scheme, drive) * rho21_bar


def absorption(scheme, drive, spec, omega_rf=None, **overrides):
    """Im[chi] for (arrays of) composite RF Rabi frequencies."""
    rho = averaged_coherence(scheme, drive, spec, omega_rf=omega_rf, **overrides)
    return np.imag(susceptibility(scheme, drive, rho))


def sensitivity_many(scheme, drive, spec, omega_l, step=1e-3):
    """d Im[chi] / d Omega_l by central differences, vectorized over Omega_l."""
    omega_l = np.asarray(omega_l, dtype=float)
    if not 0 < step <= 0.1:
        raise ValueError("step must lie in (0, 0.1]")
    if step < MIN_STEP:
        raise StepTooSmall(f"relative step {step:g} is below the solver noise floor "
                           f"({MIN_STEP:g})")
    if np.any(omega_l <= 0):
        raise ValueError("sensitivity requires Omega_l > 0")
    h = step * omega_l
    both = absorption(scheme, drive, spec, omega_rf=np.stack([omega_l + h, omega_l - h]))
    return (both[0] - both[1]) / (2.0 * h)


def sensitivity(scheme, drive, spec, step=1e-3, richardson=False):
    """d Im[chi] / d Omega_l at the LO-only operating point ``drive.omega_rf``.

    With ``richardson=True`` the step-h and step-h/2 estimates are combined
    to cancel the leading O(h^2) truncation error.
    """
    omega_l = abs(drive.omega_rf)
    d1 = float(sensitivity_many(scheme, drive, spec, omega_l, step))
    if not richardson:
        return d1
    d2 = float(sensitivity_many(scheme, drive, spec, omega_l, step / 2))
    return (4.0 * d2 - d1) / 3.0


class RabiCurve:
    """Piecewise Chebyshev interpolant of a smooth function of |Omega|.

    The steady state depends on the composite RF coupling only through its
    modulus (a phase on Omega can be absorbed into |4>), so Im[chi] and its
    derivative along any spatial/temporal grid are functions of |Omega|
    alone. Panels of fixed ``degree`` are bisected until the trailing
    coefficients fall below ``tol`` relative to the largest sampled value;
    bisection stops at ``max_depth``. All nodes of one refinement level are
    passed to ``func`` in a single call.
    """

    def __init__(self, func, lo, hi, tol=1e-12, degree=32, max_depth=14):
        lo, hi = float(lo), float(hi)
        if hi <= lo:
            hi = lo * (1 + 1e-9) + 1e-9
        self.lo, self.hi = lo, hi
        self.degree = degree
        x = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        pending = [(lo, hi, 0)]
        done = []
        scale = 0.0
        self.converged = True
        while pending:
            pts = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * x for a, b, _ in pending])
            vals = np.asarray(func(pts), dtype=float).reshape(len(pending), degree + 1)
            scale = max(scale, float(np.max(np.abs(vals))), 1e-300)
            nxt = []
            for (a, b, depth), v in zip(pending, vals):
                coef = C.chebfit(x, v, degree)
                if np.max(np.abs(coef[-4:])) <= tol * scale:
                    done.append((a, b, coef))
                elif depth >= max_depth:
                    self.converged = False
                    done.append((a, b, coef))
                else:
                    m = 0.5 * (a + b)
                    nxt += [(a, m, depth + 1), (m, b, depth + 1)]
            pending = nxt
        done.sort(key=lambda item: item[0])
        self.edges = np.array([d[0] for d in done] + [hi])
        self.coefs = np.array([d[2] for d in done])

    @property
    def n_panels(self):
        return self.coefs.shape[0]

    def _locate(self, values):
        v = np.asarray(values, dtype=float)
        flat = v.ravel()
        idx = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, self.n_panels - 1)
        a, b = self.edges[idx], self.edges[idx + 1]
        return v.shape, (2.0 * flat - (a + b)) / (b - a), idx, b - a

    def __call__(self, values):
        shape, u, idx, _ = self._locate(values)
        return kernels.chebval_panels(u, idx, self.coefs).reshape(shape)

    def derivative(self, values):
        shape, u, idx, width = self._locate(values)
        d = C.chebder(self.coefs, axis=1)
        return (kernels.chebval_panels(u, idx, d) * 2.0 / width).reshape(shape)


def absorption_curve(scheme, drive, spec, lo, hi, tol=1e-12):
    """Im[chi] as a :class:`RabiCurve` over |Omega| in [lo, hi]."""
    return RabiCurve(lambda w: absorption(scheme, drive, spec, omega_rf=w), lo, hi, tol)


def sensitivity_curve(scheme, drive, spec, lo, hi, step=1e-3, tol=1e-8):
    """d Im[chi]/d Omega_l as a :class:`RabiCurve` over Omega_l in [lo, hi]."""
    return RabiCurve(lambda w: sensitivity_many(scheme, drive, spec, w, step), lo, hi, tol)
