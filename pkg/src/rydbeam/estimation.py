"""Quantities extracted from simulated measurements.

Half-power beamwidths, Autler-Townes splittings from two-Lorentzian fits,
the angular response of LO-free EIT-AT detection, and LO initial phases
recovered by least-squares pattern fitting.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import least_squares, minimize
from scipy.signal import find_peaks

from rydbeam._io import atomic_write_text
from rydbeam.aperture import FLOOR_RATIO, BeamPattern, LoConfiguration, operating_profile
from rydbeam.errors import DegenerateFit, NoCrossing, NonConvergence
from rydbeam.quantum import DriveParams, absorption, sensitivity_curve

WIDE_BEAM_DEG = 60.0


def measure_hpbw(pattern):
    """Width in degrees between the half-power crossings around the peak.

    Crossings are linearly interpolated. Raises NoCrossing when the gain
    does not drop below one half on both sides inside the sampled sector.
    """
    a, g = pattern.angles, pattern.gains / np.max(pattern.gains)
    i = int(np.argmax(g))
    below = g < 0.5
    left = np.flatnonzero(below[:i])
    right = np.flatnonzero(below[i + 1:])
    if left.size == 0 or right.size == 0:
        raise NoCrossing("beam wider than the sampled sector")
    j, k = left[-1], i + 1 + right[0]
    th_l = np.interp(0.5, [g[j], g[j + 1]], [a[j], a[j + 1]])
    th_r = np.interp(0.5, [g[k], g[k - 1]], [a[k], a[k - 1]])
    return float(th_r - th_l)


def is_wide_beam(width_deg):
    return width_deg > WIDE_BEAM_DEG


@dataclass
class SpectrumTrace:
    """Im chi versus coupling detuning (rad/s)."""

    detunings: np.ndarray
    absorption: np.ndarray

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.absorption = np.asarray(self.absorption, dtype=float)
        if self.detunings.shape != self.absorption.shape or self.detunings.ndim != 1:
            raise ValueError("detunings and absorption must be 1-D of equal length")
        if np.any(np.diff(self.detunings) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if np.any(self.absorption < -1e-9):
            raise ValueError("absorption must be nonnegative")


def eit_spectrum(scheme, drive, spec, delta_c_grid):
    """Doppler-averaged Im chi over a coupling-detuning sweep."""
    grid = np.asarray(delta_c_grid, dtype=float)
    return SpectrumTrace(grid, absorption(scheme, drive, spec, delta_c=grid))


def _lorentz_pair(p, x):
    b, a1, c1, w1, a2, c2, w2 = p
    return b + a1 / (1.0 + ((x - c1) / w1) ** 2) + a2 / (1.0 + ((x - c2) / w2) ** 2)


def lorentzian_pair_fit(trace, return_params=False):
    """Fit two Lorentzians plus a constant baseline to a spectrum.

    The feature polarity (peaks or transparency dips) is taken from the
    largest deviation from the wing baseline; the two most prominent
    extrema of that polarity seed the fit. Returns (separation, residual)
    with the separation in the units of ``trace.detunings`` and the
    residual on the peak-normalized trace.
    """
    x = trace.detunings
    scale = np.max(np.abs(trace.absorption))
    if not scale > 0:
        raise DegenerateFit("trace is identically zero")
    y = trace.absorption / scale
    n = x.size
    edge = max(2, n // 10)
    base = np.median(np.r_[y[:edge], y[-edge:]])
    dev = y - base
    sign = 1.0 if dev[np.argmax(np.abs(dev))] > 0 else -1.0
    peaks, props = find_peaks(sign * dev, prominence=0.0)
    if peaks.size < 2:
        raise DegenerateFit("fewer than two extrema in the transmission feature")
    top = peaks[np.argsort(props["prominences"])[-2:]]
    p1, p2 = np.sort(top)
    prom = np.sort(props["prominences"])[-2:]
    if prom[0] < 1e-3 * prom[1]:
        raise DegenerateFit("second extremum is negligible; single-peak regime")
    step = np.median(np.diff(x))
    span = x[-1] - x[0]
    w0 = max(abs(x[p2] - x[p1]) / 4.0, 2 * step)
    p0 = [base, dev[p1], x[p1], w0, dev[p2], x[p2], w0]
    lower = [-np.inf, -np.inf, x[0], step / 4, -np.inf, x[0], step / 4]
    upper = [np.inf, np.inf, x[-1], span, np.inf, x[-1], span]
    sol = least_squares(lambda p: _lorentz_pair(p, x) - y, p0, bounds=(lower, upper),
                        x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000)
    sep = abs(sol.x[5] - sol.x[2])
    if sep < 2 * step:
        raise DegenerateFit(f"fitted peaks {sep:.3g} apart, closer than two grid steps")
    residual = float(np.sum(sol.fun ** 2))
    if return_params:
        return sep, residual, sol.x
    return sep, residual


def _spatial_absorption(scheme, drive, spec, moduli, y, delta_c):
    """Aperture-averaged Im chi for a Rabi-modulus profile along y."""
    scale = max(float(np.max(moduli)), 1e-300)
    key = np.round(moduli / scale, 12) * scale
    uniq, inv = np.unique(key, return_inverse=True)
    chi = absorption(scheme, drive, spec, omega_rf=uniq[:, None],
                     delta_c=np.asarray(delta_c)[None, :])
    per_node = chi[inv]
    if y.size < 2 or uniq.size == 1:
        return per_node[0]
    return simpson(per_node, x=y, axis=0) / (y[-1] - y[0])


def eit_at_angular_response(scheme, spec, sigs, delta_c_grid, *, drive=None,
                            geometry=None):
    """LO-free EIT-AT angular response.

    For each signal tone the probe sees the aperture-averaged Im chi of the
    local signal Rabi modulus; the field estimate is the AT splitting from
    :func:`lorentzian_pair_fit`. Gains are splittings normalized by their
    maximum. Metadata holds the raw splittings (rad/s).
    """
    drive = DriveParams() if drive is None else drive
    grid = np.asarray(delta_c_grid, dtype=float)
    angles, seps = [], []
    for s in sigs:
        if geometry is None:
            y = np.array([0.0])
        else:
            y = geometry.grid(s.wavelength)
        field_ = s.amplitude * np.exp(1j * (s.wavenumber * y * s.cos_theta + s.phase))
        trace = SpectrumTrace(grid, _spatial_absorption(scheme, drive, spec, np.abs(field_),
                                                        y, grid))
        sep, _ = lorentzian_pair_fit(trace)
        angles.append(s.direction_deg)
        seps.append(sep)
    order = np.argsort(angles)
    seps = np.asarray(seps)[order]
    return BeamPattern.from_values(np.asarray(angles)[order], seps,
                                   {"kind": "eit-at", "splitting_rad_s": seps})


@dataclass
class FitResult:
    """Outcome of an LO phase fit."""

    phases_rad: np.ndarray
    residual: float
    converged: bool
    evaluations: int
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.phases_rad = np.mod(np.asarray(self.phases_rad, dtype=float), 2 * np.pi)
        if self.residual < 0:
            raise ValueError("residual must be >= 0")

    def to_dict(self):
        return {"phases_rad": [float(p) for p in self.phases_rad],
                "residual": float(self.residual), "converged": bool(self.converged),
                "evaluations": int(self.evaluations)}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.asarray(d["phases_rad"]), d["residual"], d["converged"],
                   d["evaluations"])


class _PatternModel:
    """Multipeak pattern as a function of the LO phases on a fixed grid."""

    def __init__(self, geometry, config, scheme, spec, drive, angles):
        self.geometry, self.config, self.scheme = geometry, config, scheme
        self.spec, self.drive, self.angles = spec, drive, angles
        top = config.max_amplitude
        total = sum(t.amplitude for t in config.tones)
        self.sens = sensitivity_curve(scheme, drive, spec, FLOOR_RATIO * top, total)
        self.evaluations = 0

    def pattern(self, phases):
        tones = tuple(t.replace(phase=float(p)) for t, p in zip(self.config.tones, phases))
        cfg = LoConfiguration(tones)
        prof = operating_profile(self.geometry, cfg, self.scheme, self.drive, self.spec,
                                 sens=self.sens)
        resp = np.abs(prof.response(cfg.wavenumber, self.angles)) ** 2
        self.evaluations += 1
        return resp / np.max(resp)


def fit_lo_phases(measured, geometry, config, scheme, spec, *, drive=None, grid_points=16,
                  budget=5000, strict=False):
    """Recover LO initial phases from a measured multipeak pattern.

    Only phase differences are observable, so the first tone's phase is held
    at zero. A coarse grid (``grid_points`` per free phase) picks the start
    for a Nelder-Mead refinement. The residual is the sum of squared gain
    differences between ``measured`` and the model normalized by its
    sampled maximum.

    Returns
    -------
    FitResult
        ``converged`` is False when the refinement exhausted ``budget``;
        with ``strict`` a NonConvergence carrying the result is raised.
    """
    drive = DriveParams() if drive is None else drive
    if not isinstance(config, LoConfiguration):
        config = LoConfiguration(tuple(config))
    model = _PatternModel(geometry, config, scheme, spec, drive, measured.angles)
    target = measured.gains
    n_free = len(config.tones) - 1

    def residual(free):
        return float(np.sum((model.pattern(np.r_[0.0, free]) - target) ** 2))

    if n_free == 0:
        r = residual(np.zeros(0))
        return FitResult(np.zeros(1), r, True, model.evaluations, [r])

    axes = [np.arange(grid_points) * 2 * np.pi / grid_points] * n_free
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n_free)
    if mesh.shape[0] >= budget:
        raise ValueError("grid search alone exceeds the evaluation budget")
    scores = np.array([residual(p) for p in mesh])
    best = int(np.argmin(scores))
    x0 = mesh[best]
    history = [float(scores[best])]
    cache = {}

    def objective(free):
        key = tuple(np.round(free, 15))
        if key not in cache:
            cache[key] = residual(free)
        return cache[key]

    def record(xk):
        history.append(min(history[-1], objective(xk)))

    remaining = budget - model.evaluations
    step = 2 * np.pi / grid_points
    simplex = np.vstack([x0] + [x0 + step / 2 * e for e in np.eye(n_free)])
    sol = minimize(objective, x0, method="Nelder-Mead", callback=record,
                   options={"maxfev": remaining, "xatol": 1e-10, "fatol": 1e-16,
                            "initial_simplex": simplex})
    if sol.fun <= history[0]:
        x_best, r_best = sol.x, float(sol.fun)
    else:
        x_best, r_best = x0, history[0]
    converged = bool(sol.success)
    result = FitResult(np.r_[0.0, x_best], r_best, converged, model.evaluations, history)
    if strict and not converged:
        exc = NonConvergence(f"phase refinement used {result.evaluations} evaluations "
                             f"without converging")
        exc.result = result
        raise exc
    return result


def model_pattern(geometry, config, phases, scheme, spec, angles, *, drive=None):
    """Normalized multipeak pattern for ``config`` with the given phases."""
    drive = DriveParams() if drive is None else drive
    model = _PatternModel(geometry, config, scheme, spec, drive, np.asarray(angles, float))
    return BeamPattern(np.asarray(angles, float), model.pattern(phases))
