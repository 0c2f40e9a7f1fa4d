"""Received IF waveform of a multi-user scenario.

Each user contributes sqrt(2) Re[g a(t) exp(j w_IF t)], where a(t) is its
QAM baseband scaled by the square root of its transmit power and g the
complex aperture gain in its direction. The gain is the aperture response
R(th) of the user's band, normalized by a per-band reference (by default
the largest |R| over arrival angles) and with the sign of the
probe-power modulation included. Interferers enter the same way with a
seeded band-limited complex Gaussian envelope; receiver noise is real white
Gaussian noise.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import fftconvolve, firwin, kaiserord, welch

from rydbeam.aperture import (ApertureGeometry, LoConfiguration, RfTone, _absorption_of_modulus,
                              _band_dc, aperture_rule, lo_field, multipeak_response,
                              operating_profile)
from rydbeam.comms.modem import QamStream, qam_modulate, samples_per_symbol
from rydbeam.errors import AliasingRisk
from rydbeam.quantum import TWO_PI, DopplerSpec, DriveParams, LevelScheme
from rydbeam.waveform import Waveform

NOISE_DENSITY = 2.25e-6
SAMPLE_RATE = 160e3
SIGNAL_RABI_RATIO = 1e-3
INTERFERER_ATTENUATION_DB = 80.0


@dataclass(frozen=True)
class User:
    """A transmitting user: arrival direction, band and QAM stream."""

    direction_deg: float
    stream: QamStream
    band_index: int = 0
    phase: float = 0.0

    def __post_init__(self):
        RfTone(1.0, 1.0, self.direction_deg, role="sig")


@dataclass(frozen=True)
class Interferer:
    """Band-limited Gaussian noise source.

    ``if_freq`` is the centre of its band in the probe power, ``power`` the
    transmit power relative to the unit user reference.
    """

    direction_deg: float
    if_freq: float
    bandwidth: float = 8e3
    power: float = 1.0
    band_index: int = 0

    def __post_init__(self):
        RfTone(1.0, 1.0, self.direction_deg, role="sig")
        if not self.bandwidth > 0:
            raise ValueError("interferer bandwidth must be > 0")
        if not self.power >= 0:
            raise ValueError("interferer power must be >= 0")
        if not self.if_freq > self.bandwidth / 2:
            raise ValueError("interferer band must lie above DC")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to synthesize one received waveform.

    Parameters
    ----------
    noise_density : float
        One-sided PSD of the receiver noise relative to a unit-power user
        at unit gain (per Hz).
    duration : float, optional
        Record length in s; by default just long enough for every stream.
    gain_reference : dict, optional
        Per-band normalization of |R|. By default the maximum of |R| over
        arrival angles for the scenario's own LO setting.
    coupling : dict, optional
        Per-band amplitude scale alpha_n applied to the normalized gains.
    model : {"linearized", "full"}
    """

    geometry: ApertureGeometry
    lo_config: LoConfiguration
    users: tuple
    interferers: tuple = ()
    noise_density: float = NOISE_DENSITY
    duration: float = None
    seed: int = 0
    sample_rate: float = SAMPLE_RATE
    scheme: LevelScheme = field(default_factory=LevelScheme)
    drive: DriveParams = field(default_factory=DriveParams)
    spec: DopplerSpec = field(default_factory=DopplerSpec)
    gain_reference: dict = None
    coupling: dict = None
    model: str = "linearized"

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "interferers", tuple(self.interferers))
        if not self.users:
            raise ValueError("scenario needs at least one user")
        ifs = [u.stream.if_freq for u in self.users]
        if len(set(ifs)) != len(ifs):
            raise ValueError("user IFs must be distinct")
        bands = set(self.lo_config.band_indices)
        for src in self.users + self.interferers:
            if src.band_index not in bands:
                raise ValueError(f"source in band {src.band_index} has no LO")
        if not self.noise_density >= 0:
            raise ValueError("noise_density must be >= 0")
        if self.model not in ("linearized", "full"):
            raise ValueError(f"unknown model {self.model!r}")
        max_if = max(ifs + [i.if_freq for i in self.interferers])
        bw = max([u.stream.bandwidth for u in self.users]
                 + [i.bandwidth for i in self.interferers])
        if self.sample_rate <= 4 * max_if + 2 * bw:
            raise AliasingRisk(f"sample rate {self.sample_rate:g} Hz <= 4 x max IF "
                               f"+ 2 x bandwidth = {4 * max_if + 2 * bw:g} Hz")
        for u in self.users:
            samples_per_symbol(u.stream, self.sample_rate)
        if self.duration is not None and self.duration < self.min_duration():
            raise ValueError(f"duration {self.duration:g} s shorter than the streams "
                             f"({self.min_duration():g} s)")

    def min_duration(self):
        n = max(qam_length(u.stream, self.sample_rate) for u in self.users)
        return n / self.sample_rate

    @property
    def n_samples(self):
        if self.duration is None:
            return max(qam_length(u.stream, self.sample_rate) for u in self.users)
        return int(round(self.duration * self.sample_rate))

    def replace(self, **changes):
        return replace(self, **changes)


def qam_length(stream, sample_rate):
    sps = samples_per_symbol(stream, sample_rate)
    return (stream.n_symbols + stream.span) * sps


def _response_peak(profile, k):
    """Largest |R| over arrival angles in [0, 180] deg."""
    grid = np.linspace(0.0, 180.0, 721)
    mag = np.abs(profile.response(k, grid))
    i = int(np.argmax(mag))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda th: -abs(profile.response(k, np.array([th]))[0]),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    return max(float(mag[i]), float(-res.fun))


def band_gains(scenario, directions, band_index):
    """Normalized complex gains of ``band_index`` toward ``directions``.

    Returns (gains, reference, context); ``context`` carries the operating
    profile reused by the full model.
    """
    cfg = scenario.lo_config.band(band_index)
    sc, dr, sp = scenario.scheme, scenario.drive, scenario.spec
    profile = operating_profile(scenario.geometry, cfg, sc, dr, sp)
    theta = np.asarray(directions, dtype=float)
    resp = multipeak_response(scenario.geometry, cfg, theta, sc, dr, sp,
                              sens=profile.sensitivity_fn, profile=profile)
    ref = (scenario.gain_reference or {}).get(band_index)
    if ref is None:
        if len(cfg.tones) == 1:
            ref = abs(multipeak_response(scenario.geometry, cfg, 360.0 - cfg.tones[0].direction_deg,
                                         sc, dr, sp, sens=profile.sensitivity_fn))
        else:
            ref = _response_peak(profile, cfg.wavenumber)
    alpha = (scenario.coupling or {}).get(band_index, 1.0)
    gains = -alpha * resp / ref if ref > 0 else np.zeros_like(resp)
    return gains, float(ref), {"config": cfg, "profile": profile, "response": resp}


def response_reference(scenario, band_index=0):
    """Default gain normalization of ``band_index`` for this LO setting."""
    return band_gains(scenario, [90.0], band_index)[1]


def _seeded(seed, *path):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


@lru_cache(maxsize=32)
def _kaiser_lowpass(cutoff, width, sample_rate):
    """Odd-length Kaiser-window low-pass taps."""
    n, beta = kaiserord(INTERFERER_ATTENUATION_DB, width / (sample_rate / 2.0))
    n += 1 - n % 2
    taps = firwin(n, cutoff, window=("kaiser", beta), fs=sample_rate)
    taps.setflags(write=False)
    return taps


def interferer_envelope(interferer, n, sample_rate, rng):
    """Unit-power complex Gaussian noise low-passed to +-bandwidth/2."""
    width = 0.125 * interferer.bandwidth
    taps = _kaiser_lowpass(interferer.bandwidth / 2.0, width, sample_rate)
    pad = taps.size
    w = rng.standard_normal(n + 2 * pad) + 1j * rng.standard_normal(n + 2 * pad)
    env = fftconvolve(w, taps, mode="same")[pad:pad + n]
    return env / np.sqrt(np.mean(np.abs(env) ** 2))


def _envelopes(scenario, n):
    """Baseband envelopes (already power scaled) and IFs of every source."""
    out = []
    for i, u in enumerate(scenario.users):
        b = np.zeros(n, dtype=complex)
        mod = qam_modulate(u.stream, scenario.sample_rate)[:n]
        b[:mod.size] = mod
        out.append((f"user{i}", u, u.stream.if_freq,
                    np.sqrt(u.stream.tx_power_scale) * np.exp(1j * u.phase) * b))
    for i, itf in enumerate(scenario.interferers):
        env = interferer_envelope(itf, n, scenario.sample_rate, _seeded(scenario.seed, 1, i))
        out.append((f"interferer{i}", itf, itf.if_freq, np.sqrt(itf.power) * env))
    return out


def _full_model_components(scenario, sources, t):
    """Normalized probe-power AC from the full steady-state model.

    Sources are weak plane waves with complex Rabi envelope
    ratio * Omega_l,max * a(t); the result is scaled so that a linear
    response would reproduce sqrt(2) Re[g a exp(j w t)].
    """
    if not scenario.lo_config.is_single_band:
        raise ValueError("full model supports a single band only")
    cfg = scenario.lo_config
    geo, sc, dr, sp = scenario.geometry, scenario.scheme, scenario.drive, scenario.spec
    _, ref, _ = band_gains(scenario, [90.0], cfg.band_indices[0])
    y, w, _ = aperture_rule(geo, cfg)
    unit = SIGNAL_RABI_RATIO * cfg.max_amplitude
    omega = np.broadcast_to(lo_field(cfg, y), (t.size, y.size)).copy()
    k = cfg.wavenumber
    for _, src, if_freq, env in sources:
        ph = TWO_PI * if_freq * t[:, None] + k * y[None, :] * np.cos(np.deg2rad(src.direction_deg))
        omega += unit * env[:, None] * np.exp(1j * ph)
    chi_im = _absorption_of_modulus(sc, dr, sp, np.abs(omega), y, True)
    p = geo.probe_input_power * np.exp(-geo.probe_wavenumber * (chi_im @ w))
    p_dc, _ = _band_dc(geo, cfg, sc, dr, sp)
    alpha = (scenario.coupling or {}).get(cfg.band_indices[0], 1.0)
    scale = np.sqrt(2.0) * alpha / (p_dc * geo.probe_wavenumber * unit * ref)
    return (p - np.mean(p)) * scale


def channel_apply(scenario, t_grid=None):
    """Received probe-power AC waveform of ``scenario``.

    ``t_grid`` must be uniform at the scenario sample rate starting at 0; by
    default the scenario's own record length is used. Per-source received
    components and gains are returned in ``metadata``.
    """
    fs = scenario.sample_rate
    if t_grid is None:
        n = scenario.n_samples
    else:
        t_grid = np.asarray(t_grid, dtype=float)
        n = t_grid.size
        if n < 2 or not np.allclose(t_grid, np.arange(n) / fs, rtol=0, atol=1e-9 / fs):
            raise ValueError("t_grid must be arange(n) / sample_rate")
    t = np.arange(n) / fs
    sources = _envelopes(scenario, n)
    gains = {}
    for band in scenario.lo_config.band_indices:
        members = [(name, src) for name, src, _, _ in sources if src.band_index == band]
        if members:
            g, _, _ = band_gains(scenario, [s.direction_deg for _, s in members], band)
            gains.update({name: complex(v) for (name, _), v in zip(members, g)})
    components = {}
    for name, src, if_freq, env in sources:
        components[name] = np.sqrt(2.0) * np.real(gains[name] * env
                                                 * np.exp(2j * np.pi * if_freq * t))
    rng = _seeded(scenario.seed, 2)
    noise = rng.standard_normal(n) * np.sqrt(scenario.noise_density * fs / 2.0)
    components["noise"] = noise
    if scenario.model == "full":
        samples = _full_model_components(scenario, sources, t) + noise
    else:
        samples = np.sum(list(components.values()), axis=0)
    meta = {"model": scenario.model, "gains": gains, "components": components,
            "if_hz": {name: f for name, _, f, _ in sources}}
    return Waveform(fs, samples, meta)


def band_psd(x, sample_rate, centre, width, nperseg=4096):
    """Mean one-sided Welch PSD of ``x`` over centre +- width/2, in dB."""
    f, p = welch(x, fs=sample_rate, nperseg=min(nperseg, x.size))
    sel = np.abs(f - centre) <= width / 2.0
    val = np.mean(p[sel])
    return float(10.0 * np.log10(val)) if val > 0 else -np.inf
