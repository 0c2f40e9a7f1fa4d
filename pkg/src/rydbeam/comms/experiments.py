"""Link campaigns: interference sweep, multiuser and multiband access.

Every cell of a campaign is an independent :class:`Scenario` run. By
default all cells share the same random streams (payload, interferer
waveform and receiver noise), so that a change of cell length, SIR or LO
power is compared on identical noise realizations.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from rydbeam._io import atomic_write_text
from rydbeam.aperture import ApertureGeometry, LoConfiguration, RfTone
from rydbeam.comms.channel import (Interferer, Scenario, User, band_gains, band_psd,
                                   channel_apply)
from rydbeam.comms.modem import QamStream, compute_ber, compute_evm, superhet_demodulate
from rydbeam.errors import LockFailure
from rydbeam.quantum import TWO_PI

RABI_AT_0DBM = TWO_PI * 5e6
# The multiuser LO schedule spans 2-10 dBm; with 0 dBm at 2pi x 2.5 MHz the
# composite LO modulus stays around the sensitivity maximum, so a weaker LO
# gives a weaker beam peak throughout the schedule.
MULTIUSER_RABI_AT_0DBM = TWO_PI * 2.5e6
KU_FREQ_HZ = 15.59e9
S_FREQ_HZ = 3.39e9
INTERFERENCE_HEADER = ("cell_len_m", "sir_db")
MULTIUSER_HEADER = ("step", "lo1_dbm", "lo2_dbm", "user")
MULTIBAND_HEADER = ("band", "offset_deg")
METRIC_COLUMNS = ("evm_pct", "ber", "rx_psd_db", "sir_eff_db")


def dbm_to_rabi(p_dbm, reference=RABI_AT_0DBM):
    """LO Rabi frequency for a power in dBm; 0 dBm maps to ``reference``."""
    return reference * 10.0 ** (np.asarray(p_dbm, dtype=float) / 20.0)


@dataclass(frozen=True)
class LinkMetrics:
    """Figures of merit of one user link.

    ``rx_psd`` and ``interferer_psd`` are mean Welch PSDs (dB, relative
    units) of the user's and the interferers' received components over the
    user band; ``sir_effective`` is their received power ratio in dB.
    """

    evm: float
    ber: float
    rx_psd: float
    sir_effective: float
    interferer_psd: float = float("nan")
    n_bits: int = 0
    locked: bool = True

    def __post_init__(self):
        if not self.evm >= 0:
            raise ValueError(f"EVM must be >= 0, got {self.evm!r}")
        if not 0.0 <= self.ber <= 0.5:
            raise ValueError(f"BER must lie in [0, 0.5], got {self.ber!r}")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"


@dataclass
class MetricsTable:
    """Rows of (key values, LinkMetrics) with a CSV form."""

    keys: tuple
    rows: list

    def column(self, name):
        if name in self.keys:
            i = self.keys.index(name)
            return np.array([k[i] for k, _ in self.rows])
        attr = {"evm_pct": "evm", "ber": "ber", "rx_psd_db": "rx_psd",
                "sir_eff_db": "sir_effective"}.get(name, name)
        return np.array([getattr(m, attr) for _, m in self.rows], dtype=float)

    def select(self, **match):
        idx = [self.keys.index(k) for k in match]
        rows = [(k, m) for k, m in self.rows
                if all(k[i] == v for i, v in zip(idx, match.values()))]
        return MetricsTable(self.keys, rows)

    def to_csv(self, path=None):
        lines = [",".join(self.keys + METRIC_COLUMNS)]
        for k, m in self.rows:
            vals = list(k) + [m.evm, m.ber, m.rx_psd, m.sir_effective]
            lines.append(",".join(_fmt(v) for v in vals))
        text = "\n".join(lines) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text


def evaluate_link(scenario, waveform=None):
    """Demodulate every user of ``scenario``; one LinkMetrics per user.

    A LockFailure yields BER 0.5 and the EVM of the forced decisions.
    """
    wf = channel_apply(scenario) if waveform is None else waveform
    comps = wf.metadata["components"]
    fs = wf.sample_rate
    interferers = [v for k, v in comps.items() if k.startswith("interferer")]
    out = []
    for i, u in enumerate(scenario.users):
        s = u.stream
        try:
            sym, bits = superhet_demodulate(wf, s)
            ber, locked = min(compute_ber(bits, s.payload), 0.5), True
        except LockFailure as exc:
            sym, bits, _ = exc.result
            ber, locked = 0.5, False
        evm = compute_evm(sym, s.symbols)
        own = np.mean(comps[f"user{i}"] ** 2)
        rx_psd = band_psd(comps[f"user{i}"], fs, s.if_freq, s.bandwidth)
        if interferers:
            total = np.sum(interferers, axis=0)
            p_int = np.mean(total ** 2)
            int_psd = band_psd(total, fs, s.if_freq, s.bandwidth)
            with np.errstate(divide="ignore"):
                sir = 10 * np.log10(own / p_int) if p_int > 0 else np.inf
        else:
            int_psd, sir = float("nan"), np.inf
        out.append(LinkMetrics(evm, ber, rx_psd, float(sir), int_psd, s.payload.size, locked))
    return out


def _run_cells(scenarios, threads):
    if threads is None or threads <= 1:
        return [evaluate_link(sc) for sc in scenarios]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(evaluate_link, scenarios))


def _cell_seed(base, index, paired):
    if paired:
        return base.seed
    return int(np.random.SeedSequence([base.seed, index]).generate_state(1)[0])


def run_interference_sweep(base, lengths, sirs, *, threads=1, paired=True, min_bits=100_000):
    """LinkMetrics for every (cell length, transmit SIR) pair.

    The interferer power is set to the user's transmit power times
    10^(-SIR/10); an interferer with zero power in ``base`` stays silent.
    """
    if len(base.users) != 1 or len(base.interferers) != 1:
        raise ValueError("interference sweep needs exactly one user and one interferer")
    user = base.users[0]
    if user.stream.payload.size < min_bits:
        raise ValueError(f"need at least {min_bits} bits per cell, stream has "
                         f"{user.stream.payload.size}")
    itf = base.interferers[0]
    keys, cells = [], []
    for i, length in enumerate(lengths):
        for j, sir in enumerate(sirs):
            power = 0.0 if itf.power == 0 else user.stream.tx_power_scale * 10 ** (-sir / 10)
            cells.append(base.replace(
                geometry=base.geometry.replace(length=float(length)),
                interferers=(replace(itf, power=power),),
                seed=_cell_seed(base, i * len(sirs) + j, paired)))
            keys.append((float(length), float(sir)))
    results = _run_cells(cells, threads)
    return MetricsTable(INTERFERENCE_HEADER, [(k, r[0]) for k, r in zip(keys, results)])


def _multiuser_config(base, p1, p2, ref):
    t1, t2 = base.lo_config.tones
    a1 = 0.0 if p1 is None else float(dbm_to_rabi(p1, ref))
    a2 = 0.0 if p2 is None else float(dbm_to_rabi(p2, ref))
    return LoConfiguration((t1.replace(amplitude=a1), t2.replace(amplitude=a2)))


DEFAULT_SCHEDULE = ((6, 6), (7, 5), (8, 4), (9, 3), (10, 2))


def run_multiuser(base, lo_power_schedule=DEFAULT_SCHEDULE, *, threads=1, paired=True,
                  rabi_reference=MULTIUSER_RABI_AT_0DBM, common_reference=False):
    """Per-step metrics of two users served by a two-LO double-peak beam.

    Each schedule entry gives (LO1, LO2) powers in dBm (None switches an LO
    off). User gains are the complex multipeak pattern of that step,
    normalized by its own peak response. With ``common_reference`` every
    step is normalized by the peak response of the first step instead, so
    the absolute change of the aperture response is kept.
    """
    if len(base.lo_config.tones) != 2 or not base.lo_config.is_single_band:
        raise ValueError("multiuser scenario needs two LO tones in one band")
    if len(base.users) != 2:
        raise ValueError("multiuser scenario needs two users")
    schedule = [tuple(s) for s in lo_power_schedule]
    band = base.lo_config.band_indices[0]
    reference = None
    if common_reference:
        first = base.replace(lo_config=_multiuser_config(base, *schedule[0], rabi_reference))
        reference = {band: band_gains(first, [90.0], band)[1]}
    cells = []
    for i, (p1, p2) in enumerate(schedule):
        cfg = _multiuser_config(base, p1, p2, rabi_reference)
        cells.append(base.replace(lo_config=cfg, gain_reference=reference,
                                  seed=_cell_seed(base, i, paired)))
    results = _run_cells(cells, threads)
    rows = []
    for i, ((p1, p2), res) in enumerate(zip(schedule, results)):
        for u, m in enumerate(res):
            rows.append(((i, np.nan if p1 is None else float(p1),
                          np.nan if p2 is None else float(p2), f"UE{u + 1}"), m))
    return MetricsTable(MULTIUSER_HEADER, rows)


DEFAULT_OFFSETS = {0: (0, 10, 20, 30, 40), 1: (0, 5, 10, 15, 20)}


def run_multiband(base, misalignments=None, *, side=1, threads=1, paired=True):
    """Metrics of each band's user as it is moved off its beam centre.

    ``misalignments`` maps band index to offsets in degrees; the user of
    that band moves by ``side * offset`` while the other users stay put.
    """
    misalignments = DEFAULT_OFFSETS if misalignments is None else misalignments
    if len(base.lo_config.band_indices) < 2:
        raise ValueError("multiband scenario needs LOs in at least two bands")
    keys, cells, which = [], [], []
    for band, offsets in sorted(misalignments.items()):
        idx = [i for i, u in enumerate(base.users) if u.band_index == band]
        if len(idx) != 1:
            raise ValueError(f"band {band} needs exactly one user")
        u = base.users[idx[0]]
        for k, off in enumerate(offsets):
            users = list(base.users)
            users[idx[0]] = replace(u, direction_deg=u.direction_deg + side * float(off))
            cells.append(base.replace(users=tuple(users),
                                      seed=_cell_seed(base, len(cells), paired)))
            keys.append((int(band), float(off)))
            which.append(idx[0])
    results = _run_cells(cells, threads)
    return MetricsTable(MULTIBAND_HEADER, [(k, r[w]) for k, r, w in zip(keys, results, which)])


def _stream(order, n_bits, seed, if_freq, salt):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7, salt]))
    return QamStream.random(order, n_bits, rng, if_freq=if_freq)


def interference_scenario(length=0.08, *, sir_db=0.0, n_bits=100_000, seed=0, order=16,
                          if_freq=28e3, lo_deg=300.0, user_deg=60.0, interferer_deg=75.0,
                          freq_hz=KU_FREQ_HZ, lo_dbm=0.0, **kwargs):
    """One user and one 8 kHz Gaussian interferer sharing the user's IF."""
    lo = LoConfiguration((RfTone(float(dbm_to_rabi(lo_dbm)), freq_hz, lo_deg),))
    stream = _stream(order, n_bits, seed, if_freq, 0)
    itf = Interferer(interferer_deg, if_freq, 8e3, 10 ** (-sir_db / 10))
    return Scenario(ApertureGeometry(length), lo, (User(user_deg, stream),), (itf,),
                    seed=seed, **kwargs)


def multiuser_scenario(*, length=0.08, n_bits=40_000, seed=0, order=16, lo_deg=(300.0, 270.0),
                       lo_dbm=(6.0, 6.0), if_freq=(24e3, 33e3), freq_hz=KU_FREQ_HZ,
                       rabi_reference=MULTIUSER_RABI_AT_0DBM, **kwargs):
    """Two LOs in one band and a user in each beam-peak direction."""
    tones = tuple(RfTone(float(dbm_to_rabi(p, rabi_reference)), freq_hz, d)
                  for p, d in zip(lo_dbm, lo_deg))
    users = tuple(User(360.0 - d, _stream(order, n_bits, seed, f, i))
                  for i, (d, f) in enumerate(zip(lo_deg, if_freq)))
    return Scenario(ApertureGeometry(length), LoConfiguration(tones), users, seed=seed, **kwargs)


def multiband_scenario(*, length=0.08, n_bits=40_000, seed=0, order=16,
                       freq_hz=(S_FREQ_HZ, KU_FREQ_HZ), lo_deg=(300.0, 270.0),
                       if_freq=(24e3, 33e3), lo_dbm=0.0, **kwargs):
    """One LO and one aligned user per band."""
    tones = tuple(RfTone(float(dbm_to_rabi(lo_dbm)), f, d, band_index=b)
                  for b, (f, d) in enumerate(zip(freq_hz, lo_deg)))
    users = tuple(User(360.0 - d, _stream(order, n_bits, seed, f, b), band_index=b)
                  for b, (d, f) in enumerate(zip(lo_deg, if_freq)))
    return Scenario(ApertureGeometry(length), LoConfiguration(tones), users, seed=seed, **kwargs)
