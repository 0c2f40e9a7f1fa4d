"""Continuous-aperture response of an LO-dressed vapor cell.

The cell is a line y in [0, L]. Plane-wave tones are written in the frame
rotating at the LO frequency, so the composite Rabi frequency seen by the
atoms at (y, t) is

    Omega(y, t) = sum_n Omega_l,n exp(j(k_l y cos th_l,n + phi_l,n))
                + sum_s Omega_s exp(j(w_d,s t + k_s y cos th_s + phi_s)).

Transmission follows Beer-Lambert, P = P_in exp(-k_p int Im chi dy).
"""
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.optimize import minimize_scalar

from rydbeam._io import atomic_write_text, read_csv_columns
from rydbeam.errors import (AliasingRisk, AmplitudeNull, NumericalError, QuasiStaticWarning,
                            SingularSystem, WeakLoViolation)
from rydbeam.quantum import (TWO_PI, DopplerSpec, DriveParams, RabiCurve, absorption,
                             sensitivity, sensitivity_curve)
from rydbeam.waveform import Waveform

PATTERN_HEADER = "theta_deg,gain"
NULL_RATIO = 1e-12
FLOOR_RATIO = 1e-4
WEAK_LO_RATIO = 0.1
REFINE_RATIO = 0.1
GRADING = 0.3
GRADING_LEVELS = 30
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class RfTone:
    """Plane-wave RF tone.

    Parameters
    ----------
    amplitude : float
        Rabi frequency mu34*E/hbar in rad/s (see :meth:`from_field`).
    freq_hz : float
        Carrier frequency.
    direction_deg : float
        Arrival direction. LO tones lie in [180, 360], signals in [0, 180]
        unless ``coincident`` is set.
    phase : float
        Initial phase in rad.
    band_index : int
        Rydberg transition the tone drives.
    role : {"lo", "sig"}
    """

    amplitude: float
    freq_hz: float
    direction_deg: float
    phase: float = 0.0
    band_index: int = 0
    role: str = "lo"
    coincident: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError(f"tone amplitude must be >= 0, got {self.amplitude!r}")
        if not (np.isfinite(self.freq_hz) and self.freq_hz > 0):
            raise ValueError(f"tone frequency must be > 0, got {self.freq_hz!r}")
        if self.role not in ("lo", "sig"):
            raise ValueError(f"role must be 'lo' or 'sig', got {self.role!r}")
        lo, hi = (180.0, 360.0) if self.role == "lo" else (0.0, 180.0)
        if self.coincident:
            lo, hi = 0.0, 360.0
        if not lo <= self.direction_deg <= hi:
            raise ValueError(f"{self.role} direction {self.direction_deg} deg outside "
                             f"[{lo:g}, {hi:g}]")

    @classmethod
    def from_field(cls, field_v_m, scheme, **kwargs):
        return cls(amplitude=float(scheme.rabi(field_v_m)), **kwargs)

    @property
    def omega(self):
        return TWO_PI * self.freq_hz

    @property
    def wavelength(self):
        return C_LIGHT / self.freq_hz

    @property
    def wavenumber(self):
        return TWO_PI * self.freq_hz / C_LIGHT

    @property
    def cos_theta(self):
        return np.cos(np.deg2rad(self.direction_deg))

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class LoConfiguration:
    """Set of LO tones, grouped into bands by ``band_index``."""

    tones: tuple

    def __post_init__(self):
        tones = tuple(self.tones)
        object.__setattr__(self, "tones", tones)
        if not tones:
            raise ValueError("LO configuration needs at least one tone")
        freqs = {}
        for t in tones:
            f = freqs.setdefault(t.band_index, t.freq_hz)
            if f != t.freq_hz:
                raise ValueError(f"band {t.band_index}: LO tones must share one frequency")
        if len(set(freqs.values())) != len(freqs):
            raise ValueError("distinct bands must use distinct LO frequencies")

    @property
    def band_indices(self):
        return sorted({t.band_index for t in self.tones})

    def band(self, index):
        return LoConfiguration(tuple(t for t in self.tones if t.band_index == index))

    @property
    def is_single_band(self):
        return len(self.band_indices) == 1

    @property
    def freq_hz(self):
        self._require_single_band()
        return self.tones[0].freq_hz

    @property
    def wavelength(self):
        return C_LIGHT / self.freq_hz

    @property
    def wavenumber(self):
        return TWO_PI * self.freq_hz / C_LIGHT

    @property
    def max_amplitude(self):
        return max(t.amplitude for t in self.tones)

    def _require_single_band(self):
        if not self.is_single_band:
            raise ValueError("operation needs LO tones in a single band")


@dataclass(frozen=True)
class ApertureGeometry:
    """Vapor-cell aperture.

    ``spatial_samples=None`` picks an odd node count with at least 40 nodes
    per shortest spatial period of the LO-signal beat, and at least 201.
    Simpson needs an odd count, so explicit even requests are rounded up.
    """

    length: float
    spatial_samples: int = None
    probe_input_power: float = 1.5e-3
    probe_wavenumber: float = TWO_PI / 852.347e-9

    def __post_init__(self):
        if not 0.01 <= self.length <= 1.0:
            raise ValueError(f"aperture length must lie in [0.01, 1] m, got {self.length!r}")
        if self.spatial_samples is not None and int(self.spatial_samples) < 2:
            raise ValueError("spatial_samples must be >= 2")
        if not self.probe_input_power > 0:
            raise ValueError("probe_input_power must be > 0")
        if not self.probe_wavenumber > 0:
            raise ValueError("probe_wavenumber must be > 0")

    def samples_for(self, wavelength):
        """Simpson node count; an even explicit request is rounded up to odd."""
        if self.spatial_samples is not None:
            m = max(3, int(self.spatial_samples))
        else:
            m = max(201, int(np.ceil(40.0 * 2.0 * self.length / wavelength)) + 1)
        return m + 1 - m % 2

    def grid(self, wavelength):
        return np.linspace(0.0, self.length, self.samples_for(wavelength))

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class BandConfig:
    """One band of a multiband receiver: its LO, coupling scale and IF."""

    lo: RfTone
    coupling_scale: float = 1.0
    if_freq_hz: float = 24e3

    def __post_init__(self):
        if not self.coupling_scale > 0:
            raise ValueError("coupling_scale must be > 0")

    @property
    def band_index(self):
        return self.lo.band_index

    @property
    def wavelength(self):
        return self.lo.wavelength

    @property
    def if_omega(self):
        return TWO_PI * self.if_freq_hz


@dataclass
class BeamPattern:
    """Normalized gain versus signal arrival angle (degrees)."""

    angles: np.ndarray
    gains: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        if self.angles.ndim != 1 or self.angles.shape != self.gains.shape:
            raise ValueError("angles and gains must be 1-D arrays of equal length")
        if self.angles.size < 2 or np.any(np.diff(self.angles) <= 0):
            raise ValueError("pattern angles must be strictly increasing")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("pattern gains must be finite")
        if np.min(self.gains) < 0 or abs(np.max(self.gains) - 1.0) > 1e-12:
            raise ValueError("pattern gains must lie in [0, 1] with maximum 1")

    @classmethod
    def from_values(cls, angles, values, metadata=None):
        """Normalize nonnegative ``values`` by their sampled maximum."""
        values = np.asarray(values, dtype=float)
        peak = np.max(values)
        if not peak > 0:
            raise NumericalError("pattern is identically zero on the sampled grid")
        gains = np.clip(values / peak, 0.0, 1.0)
        return cls(angles, gains, dict(metadata or {}))

    @property
    def peak_angle(self):
        return float(self.angles[np.argmax(self.gains)])

    def gain_at(self, theta_deg):
        return np.interp(theta_deg, self.angles, self.gains)

    def to_csv(self, path):
        rows = "".join(f"{a:.4f},{g:.9g}\n" for a, g in zip(self.angles, self.gains))
        atomic_write_text(path, PATTERN_HEADER + "\n" + rows)

    @classmethod
    def from_csv(cls, path, normalize=True):
        a, g = read_csv_columns(path, PATTERN_HEADER)
        if normalize:
            return cls.from_values(a, g, {"source": str(path)})
        return cls(a, g, {"source": str(path)})


def lo_field(config, y):
    """Complex LO Rabi profile sum_n Omega_n exp(j(k y cos th_n + phi_n))."""
    config._require_single_band()
    y = np.asarray(y, dtype=float)
    k = config.wavenumber
    out = np.zeros(y.shape, dtype=complex)
    for t in config.tones:
        out += t.amplitude * np.exp(1j * (k * y * t.cos_theta + t.phase))
    return out


def lo_profile(config, y, strict=True):
    """Modulus and principal-value argument of the LO field along y.

    Raises AmplitudeNull (with the offending positions) when the modulus
    drops below 1e-12 of the largest tone and ``strict`` is set.
    """
    total = lo_field(config, y)
    amp = np.abs(total)
    null = amp < NULL_RATIO * config.max_amplitude
    if strict and np.any(null):
        pos = np.asarray(y, dtype=float)[null] if np.ndim(y) else np.asarray([y])
        raise AmplitudeNull(f"LO amplitude vanishes at {null.sum()} position(s)",
                            positions=pos)
    return amp, np.angle(total)


def _cos_deg(theta):
    return np.cos(np.deg2rad(np.asarray(theta, dtype=float)))


def single_peak_gain(length, wavelength, theta_s, theta_l):
    """Unnormalized sinc^2[L/lambda (cos th_s - cos th_l)]."""
    x = length / wavelength * (_cos_deg(theta_s) - _cos_deg(theta_l))
    return np.sinc(x) ** 2


def pattern_single_peak(geometry, lo, theta_s_grid):
    """Single-LO beam pattern sinc^2[L/lambda_l (cos th_s - cos th_l)]."""
    g = single_peak_gain(geometry.length, lo.wavelength, theta_s_grid, lo.direction_deg)
    return BeamPattern.from_values(theta_s_grid, g, {
        "kind": "single", "length_m": geometry.length, "freq_hz": lo.freq_hz,
        "lo_deg": lo.direction_deg})


def hpbw_theoretical(length, wavelength):
    """Half-power beamwidth 0.886 lambda / L in radians."""
    if not (length > 0 and wavelength > 0):
        raise ValueError("length and wavelength must be > 0")
    return 0.886 * wavelength / length


def _beat_argument(geometry, lo, sig, exact_k):
    k_s = sig.wavenumber if exact_k else lo.wavenumber
    kappa = k_s * sig.cos_theta - lo.wavenumber * lo.cos_theta
    return kappa * geometry.length / TWO_PI


def delta_p_linearized(geometry, lo, sig, sensitivity, t, *, absorption0=None,
                       exact_k=False):
    """First-order AC probe power for one LO and one signal.

    dP(t) = -P_dc k_p S L Omega_s sinc(x) cos(w_d t + phi_s - phi_l + pi x),
    x = L (k_s cos th_s - k_l cos th_l) / 2 pi, with k_s = k_l unless
    ``exact_k``. ``P_dc = P_in exp(-k_p L absorption0)``, or P_in when
    ``absorption0`` is None.

    Parameters
    ----------
    sensitivity : float
        d Im[chi] / d Omega_l at the LO operating point (s/rad).
    t : array_like
        Sample times (s).
    """
    if sig.amplitude > WEAK_LO_RATIO * lo.amplitude:
        raise WeakLoViolation(f"signal Rabi {sig.amplitude:.3g} exceeds "
                              f"{WEAK_LO_RATIO:g} x LO Rabi {lo.amplitude:.3g}")
    x = _beat_argument(geometry, lo, sig, exact_k)
    p_dc = geometry.probe_input_power
    if absorption0 is not None:
        p_dc *= np.exp(-geometry.probe_wavenumber * geometry.length * absorption0)
    w_d = sig.omega - lo.omega
    amp = -p_dc * geometry.probe_wavenumber * sensitivity * geometry.length * sig.amplitude
    return amp * np.sinc(x) * np.cos(w_d * np.asarray(t, float) + sig.phase - lo.phase
                                     + np.pi * x)


def _check_quasi_static(scheme, if_omegas, ratio):
    w = np.max(np.abs(if_omegas)) if len(if_omegas) else 0.0
    if w >= ratio * scheme.gamma2:
        warnings.warn(f"IF {w / TWO_PI:.4g} Hz is not small against gamma2/2pi; the "
                      "instantaneous steady state may be inaccurate", QuasiStaticWarning,
                      stacklevel=3)


def _absorption_of_modulus(scheme, drive, spec, r, y, memo):
    """Im chi at composite Rabi moduli ``r`` (last axis runs over ``y``)."""
    try:
        if memo:
            lo, hi = float(np.min(r)), float(np.max(r))
            curve = RabiCurve(lambda w: absorption(scheme, drive, spec, omega_rf=w), lo, hi)
            return curve(r)
        return absorption(scheme, drive, spec, omega_rf=r)
    except SingularSystem as exc:
        rr = r.reshape(-1, r.shape[-1])
        for j in range(rr.shape[-1]):
            try:
                absorption(scheme, drive, spec, omega_rf=rr[:, j])
            except SingularSystem:
                raise SingularSystem(f"{exc} at position y={y[j]:.6g} m",
                                     velocity=exc.velocity, position=float(y[j])) from exc
        raise


def simpson_rule(length, n):
    """Uniform composite-Simpson nodes and weights on [0, length], n odd."""
    y = np.linspace(0.0, length, n)
    w = np.full(n, 2.0)
    w[1:-1:2] = 4.0
    w[0] = w[-1] = 1.0
    return y, w * (length / (n - 1)) / 3.0


def _gl_panels(edges):
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    y = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return y, w


def _graded_segment(p, q, toward_p):
    """Gauss-Legendre panels on [p, q] shrinking geometrically toward one end."""
    frac = GRADING ** np.arange(GRADING_LEVELS, -1, -1)
    rel = np.r_[0.0, frac]
    edges = p + (q - p) * rel if toward_p else q - (q - p) * rel[::-1]
    return _gl_panels(edges)


def _graded_region(a, b, nulls):
    anchors = [a] + sorted(nulls) + [b]
    parts = []
    for i in range(len(anchors) - 1):
        p, q = anchors[i], anchors[i + 1]
        if q - p <= 0:
            continue
        p_null, q_null = i > 0, i < len(anchors) - 2
        if p_null and q_null:
            m = 0.5 * (p + q)
            parts += [_graded_segment(p, m, True), _graded_segment(m, q, False)]
        else:
            parts.append(_graded_segment(p, q, p_null))
    return (np.concatenate([u for u, _ in parts]), np.concatenate([v for _, v in parts]))


def aperture_rule(geometry, config):
    """Quadrature nodes and weights along the cell for an LO configuration.

    Composite Simpson on the uniform grid of :meth:`ApertureGeometry.samples_for`.
    Where the superposed LO modulus dips below 0.1 of the strongest tone,
    the sensitivity varies on the scale of the Rydberg decay rates, far below
    the grid spacing; the Simpson double-panels around each such minimum are
    replaced by Gauss-Legendre panels graded geometrically toward it.

    Returns
    -------
    y, w : ndarray
        Sorted nodes and weights; integrals are ``f @ w``.
    info : dict
        ``refined_minima`` lists the refined positions.
    """
    n = geometry.samples_for(config.wavelength)
    y, w = simpson_rule(geometry.length, n)
    info = {"refined_minima": []}
    if len(config.tones) < 2:
        return y, w, info
    top = config.max_amplitude
    amp = np.abs(lo_field(config, y))
    padded = np.r_[np.inf, amp, np.inf]
    cand = np.flatnonzero((amp <= padded[:-2]) & (amp <= padded[2:])
                          & (amp < REFINE_RATIO * top))
    h = y[1] - y[0]
    n_panels = (n - 1) // 2
    regions = []
    for i in cand:
        lo_y, hi_y = y[max(i - 1, 0)], y[min(i + 1, n - 1)]
        res = minimize_scalar(lambda v: abs(lo_field(config, v)), bounds=(lo_y, hi_y),
                              method="bounded", options={"xatol": 1e-13 * geometry.length})
        if abs(lo_field(config, res.x)) >= REFINE_RATIO * top:
            continue
        j = min(int(res.x // (2 * h)), n_panels - 1)
        regions.append([max(j - 1, 0), min(j + 1, n_panels - 1), [float(res.x)]])
    if not regions:
        return y, w, info
    regions.sort(key=lambda r: r[0])
    merged = [regions[0]]
    for r in regions[1:]:
        if r[0] <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], r[1])
            merged[-1][2] += r[2]
        else:
            merged.append(r)
    keep = np.ones(n_panels, dtype=bool)
    extra_y, extra_w = [], []
    for j0, j1, nulls in merged:
        keep[j0:j1 + 1] = False
        a, b = y[2 * j0], y[2 * j1 + 2]
        nulls = sorted({min(max(z, a), b) for z in nulls})
        gy, gw = _graded_region(a, b, nulls)
        extra_y.append(gy)
        extra_w.append(gw)
        info["refined_minima"] += nulls
    w = np.zeros(n)
    idx = 2 * np.flatnonzero(keep)
    for off, c in ((0, 1.0), (1, 4.0), (2, 1.0)):
        np.add.at(w, idx + off, c * h / 3.0)
    used = w > 0
    y_all = np.concatenate([y[used]] + extra_y)
    w_all = np.concatenate([w[used]] + extra_w)
    order = np.argsort(y_all, kind="stable")
    return y_all[order], w_all[order], info


def composite_rabi(geometry, config, sigs, t, y=None):
    """Composite RF Rabi frequency on the (t, y) grid, in the LO frame.

    Returns the field, the nodes and the quadrature weights.
    """
    config._require_single_band()
    if y is None:
        y, w, _ = aperture_rule(geometry, config)
    else:
        w = None
    t = np.atleast_1d(np.asarray(t, dtype=float))
    omega = np.broadcast_to(lo_field(config, y), (t.size, y.size)).copy()
    for s in sigs:
        if s.band_index != config.tones[0].band_index:
            raise ValueError("full model supports signals in the LO band only")
        w_d = s.omega - TWO_PI * config.freq_hz
        phase = w_d * t[:, None] + s.wavenumber * y[None, :] * s.cos_theta + s.phase
        omega += s.amplitude * np.exp(1j * phase)
    return omega, y, w


def delta_p_full(geometry, config, sigs, scheme, drive, spec, t, *, memo=True,
                 quasi_static_ratio=0.1):
    """Transmitted probe power P(t) from the full steady-state model.

    At each (y, t) the Doppler-averaged Im chi is evaluated at the modulus of
    the composite Rabi frequency, integrated over the cell with
    :func:`aperture_rule` and exponentiated. With ``memo`` the absorption is
    taken from a Chebyshev interpolant over the visited Rabi range instead
    of one solve per node. The caller removes the DC part.
    """
    if_omegas = [s.omega - TWO_PI * config.freq_hz for s in sigs]
    _check_quasi_static(scheme, if_omegas, quasi_static_ratio)
    omega, y, w = composite_rabi(geometry, config, sigs, t)
    chi_im = _absorption_of_modulus(scheme, drive, spec, np.abs(omega), y, memo)
    p = geometry.probe_input_power * np.exp(-geometry.probe_wavenumber * (chi_im @ w))
    return p if np.ndim(t) else float(p[0])


def if_line(geometry, config, sigs, scheme, drive, spec, n_time=16, memo=True):
    """Complex amplitude of the IF component of P(t) in the full model.

    All signals must share one IF. P(t) is then periodic with the IF period,
    so one period sampled at ``n_time`` points gives the exact DFT bin up to
    aliasing of harmonics above n_time/2.
    """
    ifs = {s.freq_hz - config.freq_hz for s in sigs}
    if len(ifs) != 1 or 0.0 in ifs:
        raise ValueError("if_line needs signals sharing one nonzero IF")
    w_d = TWO_PI * ifs.pop()
    t = np.arange(n_time) * (TWO_PI / abs(w_d)) / n_time
    p = delta_p_full(geometry, config, sigs, scheme, drive, spec, t, memo=memo)
    return 2.0 / n_time * np.sum(p * np.exp(-1j * w_d * t))


def pattern_full(geometry, lo, sig, theta_s_grid, scheme, drive, spec, *, n_time=16,
                 memo=True):
    """Beam pattern from the IF-line power of the full model.

    ``lo`` may be a single tone or an :class:`LoConfiguration`; ``sig``
    supplies amplitude, frequency and phase, its direction is swept.
    """
    config = lo if isinstance(lo, LoConfiguration) else LoConfiguration((lo,))
    theta = np.asarray(theta_s_grid, dtype=float)
    w_d = TWO_PI * (sig.freq_hz - config.freq_hz)
    t = np.arange(n_time) * (TWO_PI / abs(w_d)) / n_time
    base, y, w = composite_rabi(geometry, config, [], t)
    fields = np.empty((theta.size, t.size, y.size), dtype=complex)
    for i, th in enumerate(theta):
        s = sig.replace(direction_deg=float(th))
        fields[i] = base + s.amplitude * np.exp(1j * (w_d * t[:, None] + s.wavenumber
                                                      * y[None, :] * s.cos_theta + s.phase))
    _check_quasi_static(scheme, [w_d], 0.1)
    chi_im = _absorption_of_modulus(scheme, drive, spec, np.abs(fields), y, memo)
    p = geometry.probe_input_power * np.exp(-geometry.probe_wavenumber * (chi_im @ w))
    line = 2.0 / n_time * np.sum(p * np.exp(-1j * w_d * t), axis=-1)
    return BeamPattern.from_values(theta, np.abs(line) ** 2, {
        "kind": "full", "length_m": geometry.length, "freq_hz": config.freq_hz,
        "if_amplitude": np.abs(line)})


def _sens_function(scheme, drive, spec, lo, hi, sens):
    if sens is None:
        return sensitivity_curve(scheme, drive, spec, lo, hi)
    if isinstance(sens, RabiCurve) and (lo < sens.lo * (1 - 1e-12)
                                        or hi > sens.hi * (1 + 1e-12)):
        return sensitivity_curve(scheme, drive, spec, min(lo, sens.lo), max(hi, sens.hi))
    return sens


@dataclass
class ApertureProfile:
    """LO operating point along the cell on the quadrature nodes."""

    y: np.ndarray
    weights: np.ndarray
    amplitude: np.ndarray
    sensitivity: np.ndarray
    phase: np.ndarray
    sensitivity_fn: object
    info: dict

    def response(self, k_s, theta_s):
        """int S(y) exp(j(k_s y cos th_s - phi_l(y))) dy for each th_s."""
        arg = k_s * np.multiply.outer(_cos_deg(theta_s), self.y) - self.phase
        return (self.sensitivity * np.exp(1j * arg)) @ self.weights


def operating_profile(geometry, config, scheme, drive, spec, *, sens=None):
    """Sensitivity and LO phase along the cell for a single-band LO set.

    Nodes where the LO modulus falls below 1e-4 of the strongest tone are
    evaluated at that floor; at exact nulls the phase is taken from the
    nearest regular node. ``sens`` may be a callable of the Rabi modulus
    (for example a :class:`RabiCurve`) reused across calls.
    """
    y, w, info = aperture_rule(geometry, config)
    total = lo_field(config, y)
    amp = np.abs(total)
    top = config.max_amplitude
    null = amp < NULL_RATIO * top
    phase = np.angle(total)
    if np.all(null):
        raise AmplitudeNull("LO field vanishes along the whole aperture", positions=y)
    if np.any(null):
        good = np.flatnonzero(~null)
        nearest = good[np.abs(np.flatnonzero(null)[:, None] - good[None, :]).argmin(axis=1)]
        phase[null] = phase[nearest]
    floor = FLOOR_RATIO * top
    clipped = np.maximum(amp, floor)
    fn = _sens_function(scheme, drive, spec, float(clipped.min()), float(clipped.max()), sens)
    info.update(null_nodes=int(null.sum()), floored_nodes=int((amp < floor).sum()))
    return ApertureProfile(y, w, amp, fn(clipped), phase, fn, info)


def multipeak_response(geometry, config, theta_s, scheme, drive=None, spec=None, *,
                       sens=None, sig_freq_hz=None, profile=None):
    """Complex aperture response R(th_s) = int S(y) exp(j(k_s y cos th_s - phi_l(y))) dy.

    ``S(y)`` is d Im[chi]/d Omega_l at the local LO modulus. For one LO tone
    the integral is evaluated in closed form,
    R = S L sinc(x) exp(j(pi x - phi_l)). ``sig_freq_hz`` selects the exact
    signal wavenumber; by default k_s = k_l. Units: s/rad * m.
    """
    drive = DriveParams() if drive is None else drive
    spec = DopplerSpec() if spec is None else spec
    theta = np.asarray(theta_s, dtype=float)
    k_l = config.wavenumber
    k_s = k_l if sig_freq_hz is None else TWO_PI * sig_freq_hz / C_LIGHT
    if len(config.tones) == 1:
        lo = config.tones[0]
        if sens is None:
            s0 = sensitivity(scheme, drive.replace(omega_rf=lo.amplitude), spec)
        else:
            s0 = float(sens(lo.amplitude)) if callable(sens) else float(sens)
        x = geometry.length * (k_s * _cos_deg(theta) - k_l * lo.cos_theta) / TWO_PI
        return s0 * geometry.length * np.sinc(x) * np.exp(1j * (np.pi * x - lo.phase))
    if profile is None:
        profile = operating_profile(geometry, config, scheme, drive, spec, sens=sens)
    return profile.response(k_s, theta)


def pattern_multipeak(geometry, config, scheme, spec, theta_s_grid, *, drive=None,
                      sens=None):
    """Normalized |R(th_s)|^2 for a single-band set of LO tones.

    Unlike :func:`multipeak_response` the single-tone case also goes through
    the spatial quadrature, so N = 1 checks the quadrature against sinc^2.
    """
    drive = DriveParams() if drive is None else drive
    profile = operating_profile(geometry, config, scheme, drive, spec, sens=sens)
    theta = np.asarray(theta_s_grid, dtype=float)
    resp = profile.response(config.wavenumber, theta)
    meta = {"kind": "multipeak", "length_m": geometry.length, "freq_hz": config.freq_hz,
            "lo_deg": [t.direction_deg for t in config.tones],
            "null_nodes": profile.info["null_nodes"],
            "floored_nodes": profile.info["floored_nodes"],
            "refined_minima": len(profile.info["refined_minima"]),
            "response_max": float(np.max(np.abs(resp)))}
    return BeamPattern.from_values(theta, np.abs(resp) ** 2, meta)


def pattern_multiband(geometry, bands, theta_s_grid):
    """One sinc^2 pattern per band, in input order."""
    freqs = [b.lo.freq_hz for b in bands]
    if len(set(freqs)) != len(freqs):
        raise ValueError("bands must have distinct LO frequencies")
    out = []
    for b in bands:
        p = pattern_single_peak(geometry, b.lo, theta_s_grid)
        p.metadata.update(band_index=b.band_index, coupling_scale=b.coupling_scale)
        out.append(p)
    return out


def synthesize_waveform(geometry, config, sigs, scheme, spec, duration, sample_rate, *,
                        drive=None, model="linearized", bands=None,
                        quasi_static_ratio=0.1):
    """Sampled AC probe power for LO set ``config`` and signal tones ``sigs``.

    In linearized mode the result is a sum of per-signal terms
    -alpha_n P_dc,n k_p Omega_s Re[R_n(th_s) exp(j(w_d t + phi_s))], one DC
    level and response per band. In full mode the steady-state model is
    sampled directly (single band only) and its time average removed.

    Parameters
    ----------
    bands : list of BandConfig, optional
        Supplies the coupling scale alpha_n per band (default 1).
    """
    drive = DriveParams() if drive is None else drive
    if model not in ("linearized", "full"):
        raise ValueError(f"unknown model {model!r}")
    lo_freq = {i: config.band(i).freq_hz for i in config.band_indices}
    for s in sigs:
        if s.band_index not in lo_freq:
            raise ValueError(f"signal band {s.band_index} has no LO")
    ifs = np.array([s.freq_hz - lo_freq[s.band_index] for s in sigs])
    if ifs.size and np.any(ifs == 0):
        raise ValueError("signal coincides with its LO frequency (zero IF)")
    max_if = np.max(np.abs(ifs)) if ifs.size else 0.0
    if sample_rate <= 4.0 * max_if:
        raise AliasingRisk(f"sample rate {sample_rate:g} Hz <= 4 x max IF {max_if:g} Hz")
    if ifs.size and duration < 10.0 / np.min(np.abs(ifs)):
        raise ValueError("duration must cover at least 10 periods of every IF")
    _check_quasi_static(scheme, TWO_PI * ifs, quasi_static_ratio)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    if model == "full":
        if not config.is_single_band:
            raise ValueError("full model supports a single band only")
        p = delta_p_full(geometry, config, sigs, scheme, drive, spec, t,
                         quasi_static_ratio=np.inf)
        samples = p - p.mean()
    else:
        alphas = {b.band_index: b.coupling_scale for b in (bands or [])}
        samples = np.zeros(n)
        for idx in config.band_indices:
            band_sigs = [s for s in sigs if s.band_index == idx]
            if not band_sigs:
                continue
            cfg = config.band(idx)
            p_dc, profile = _band_dc(geometry, cfg, scheme, drive, spec)
            for s in band_sigs:
                r = multipeak_response(geometry, cfg, s.direction_deg, scheme, drive, spec,
                                       sens=profile.sensitivity_fn, profile=profile)
                w_d = TWO_PI * (s.freq_hz - cfg.freq_hz)
                samples += (-alphas.get(idx, 1.0) * p_dc * geometry.probe_wavenumber
                            * s.amplitude * np.real(r * np.exp(1j * (w_d * t + s.phase))))
    return Waveform(sample_rate, samples, {"model": model, "if_hz": ifs.tolist()})


def _band_dc(geometry, cfg, scheme, drive, spec):
    """DC probe power under LO-only dressing and the band's operating profile."""
    profile = operating_profile(geometry, cfg, scheme, drive, spec)
    if len(cfg.tones) > 1:
        amp = np.maximum(profile.amplitude, FLOOR_RATIO * cfg.max_amplitude)
        chi_im = absorption(scheme, drive, spec, omega_rf=amp)
    else:
        chi_im = np.full(profile.y.shape,
                         absorption(scheme, drive, spec, omega_rf=cfg.tones[0].amplitude))
    od = geometry.probe_wavenumber * (chi_im @ profile.weights)
    return geometry.probe_input_power * np.exp(-od), profile
