import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import c as LIGHT

from rydbeam.aperture import ApertureGeometry, LoConfiguration, RfTone
from rydbeam.comms import (KU_FREQ_HZ, LOCK_THRESHOLD, Interferer, LinkMetrics, QamStream,
                           Scenario, User, analytic_ber, band_psd, channel_apply,
                           compute_ber, compute_evm, constellation, dbm_to_rabi,
                           evaluate_link, gray_demap, gray_map, interference_scenario,
                           lock_metric, matched_filter, multiband_scenario,
                           multiuser_scenario, qam_modulate, run_interference_sweep,
                           run_multiband, run_multiuser, srrc_taps, superhet_demodulate)
from rydbeam.comms.modem import _srrc_textbook
from rydbeam.errors import AliasingRisk, LengthMismatch, LockFailure
from rydbeam.waveform import Waveform

FS = 160e3


def link_scenario(order=16, if_freq=24e3, n_bits=10_000, noise=0.0, seed=0, user_deg=90.0,
                  **kw):
    rng = np.random.default_rng(seed)
    stream = QamStream.random(order, n_bits, rng, if_freq=if_freq)
    lo = LoConfiguration((RfTone(float(dbm_to_rabi(0.0)), KU_FREQ_HZ, 270.0),))
    return Scenario(ApertureGeometry(0.08), lo, (User(user_deg, stream),),
                    noise_density=noise, seed=seed, **kw)


def sinc_gain_db(length, freq, theta_s, theta_l):
    lam = LIGHT / freq
    x = length / lam * (np.cos(np.deg2rad(theta_s)) - np.cos(np.deg2rad(theta_l)))
    return 20 * np.log10(abs(np.sinc(x)))


# ---------------------------------------------------------------- mapping


def test_qpsk_gray_points():
    s = gray_map([0, 0, 0, 1, 1, 1, 1, 0], 4)
    expected = np.array([1 + 1j, 1 - 1j, -1 - 1j, -1 + 1j]) / np.sqrt(2)
    np.testing.assert_allclose(s, expected, atol=1e-15)
    assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("order", [4, 16])
def test_constellation_unit_energy_and_gray_neighbours(order):
    pts = constellation(order)
    assert pts.size == order
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-14)
    n = int(np.log2(order))
    bits = ((np.arange(order)[:, None] >> np.arange(n - 1, -1, -1)) & 1)
    dmin = np.min(np.abs(np.subtract.outer(pts, pts))[~np.eye(order, dtype=bool)])
    for i in range(order):
        for j in range(order):
            if i != j and abs(pts[i] - pts[j]) < dmin * 1.01:
                assert np.sum(bits[i] != bits[j]) == 1


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([4, 16]), st.lists(st.integers(0, 1), min_size=4, max_size=400))
def test_gray_roundtrip(order, raw):
    k = int(np.log2(order))
    bits = np.array(raw[:len(raw) // k * k], dtype=np.uint8)
    if bits.size == 0:
        return
    np.testing.assert_array_equal(gray_demap(gray_map(bits, order), order), bits)


def test_unsupported_order():
    with pytest.raises(ValueError):
        gray_map([0] * 6, 64)


def test_stream_validation():
    with pytest.raises(ValueError):
        QamStream(16, 4e3, 0.35, 24e3, np.zeros(6, dtype=np.uint8))
    with pytest.raises(ValueError):
        QamStream(4, 4e3, 0.0, 24e3, np.zeros(8, dtype=np.uint8))
    with pytest.raises(ValueError):
        QamStream(4, -1.0, 0.35, 24e3, np.zeros(8, dtype=np.uint8))
    s = QamStream(4, 4e3, 0.35, 24e3, np.zeros(8, dtype=np.uint8))
    assert s.bandwidth == pytest.approx(5.4e3)
    with pytest.raises(ValueError):
        s.payload[0] = 1


# ---------------------------------------------------------------- pulse


def test_srrc_taps_nyquist_and_close_to_textbook():
    h = srrc_taps(0.35, 40)
    assert h.size == 401
    assert np.linalg.norm(h) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(h, h[::-1], atol=1e-15)
    g = np.convolve(h, h)
    mid = g.size // 2
    isi = g[mid + 40::40]
    assert np.max(np.abs(isi)) < 1e-12
    assert np.max(np.abs(h - _srrc_textbook(0.35, 40, 10))) < 3e-3
    np.testing.assert_array_equal(srrc_taps(0.35, 40, exact=False), _srrc_textbook(0.35, 40, 10))


def _stopband_db(h, edge):
    f = np.fft.rfftfreq(1 << 16, d=1 / 40.0)
    H = np.abs(np.fft.rfft(h, 1 << 16))
    return 20 * np.log10(np.max(H[f > edge]) / H[0])


@pytest.mark.parametrize("edge", [0.75, 1.0, 1.5])
def test_srrc_stopband_not_worse_than_truncated(edge):
    exact = _stopband_db(srrc_taps(0.35, 40), edge)
    assert exact < -40
    assert exact <= _stopband_db(_srrc_textbook(0.35, 40, 10), edge) + 1.5


@pytest.mark.parametrize("order", [4, 16])
def test_modulate_matched_filter_loopback(order):
    rng = np.random.default_rng(3)
    s = QamStream.random(order, 4000 * int(np.log2(order)), rng)
    sps = 40
    y = matched_filter(qam_modulate(s, FS), s, FS)
    peaks = y[s.span * sps // 2::sps][:s.n_symbols]
    mid = slice(s.span, s.n_symbols - s.span)
    assert np.max(np.abs(peaks[mid] - s.symbols[mid])) < 1e-6


def test_all_zero_payload_is_dc():
    s = QamStream(16, 4e3, 0.35, 24e3, np.zeros(4 * 4000, dtype=np.uint8))
    assert np.all(s.symbols == s.symbols[0])
    bb = qam_modulate(s, FS)
    f = np.fft.fftfreq(bb.size, 1 / FS)
    p = np.abs(np.fft.fft(bb)) ** 2
    assert np.sum(p[np.abs(f) < 50]) / np.sum(p) > 0.99


# ---------------------------------------------------------------- metrics


def test_evm_examples():
    ref = np.tile(constellation(16), 40)
    assert compute_evm(ref, ref) == pytest.approx(0.0, abs=1e-12)
    assert compute_evm(ref + 0.1, ref) == pytest.approx(10.0, abs=1e-9)
    rng = np.random.default_rng(0)
    ref = gray_map(rng.integers(0, 2, 4 * 20000), 16)
    noise = (rng.standard_normal(ref.size) + 1j * rng.standard_normal(ref.size)) * np.sqrt(0.005)
    assert compute_evm(ref + noise, ref) == pytest.approx(10.0, abs=0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(-np.pi, np.pi), st.integers(0, 2 ** 31))
def test_evm_gain_phase_invariant(mag, ph, seed):
    rng = np.random.default_rng(seed)
    ref = gray_map(rng.integers(0, 2, 2 * 500), 4)
    rx = ref + 0.1 * (rng.standard_normal(500) + 1j * rng.standard_normal(500))
    assert compute_evm(mag * np.exp(1j * ph) * rx, ref) == pytest.approx(compute_evm(rx, ref),
                                                                          rel=1e-9)


def test_evm_errors():
    ref = constellation(4)
    with pytest.raises(ValueError):
        compute_evm(ref, ref)
    with pytest.raises(LengthMismatch):
        compute_evm(np.ones(200), np.ones(201))


def test_ber_examples():
    rng = np.random.default_rng(1)
    tx = rng.integers(0, 2, 10_000)
    assert compute_ber(tx, tx) == 0.0
    assert compute_ber(1 - tx, tx) == 1.0
    rx = tx.copy()
    rx[1234] ^= 1
    assert compute_ber(rx, tx) == pytest.approx(1e-4)
    with pytest.raises(LengthMismatch):
        compute_ber(tx[:-1], tx)


def test_analytic_ber_values():
    # Q(1) = 0.158655...
    assert analytic_ber(4, 1.0) == pytest.approx(0.15865525393145707)
    assert analytic_ber(16, 5.0) == pytest.approx(0.75 * 0.15865525393145707)


def test_lock_metric_levels():
    assert lock_metric(constellation(4)) == pytest.approx(1.0)
    assert lock_metric(np.tile(constellation(16), 10)) == pytest.approx(0.68 / 1.32, rel=1e-12)
    rng = np.random.default_rng(0)
    z = rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)
    assert lock_metric(z) < 0.1 < LOCK_THRESHOLD


def test_link_metrics_invariants():
    with pytest.raises(ValueError):
        LinkMetrics(-1.0, 0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        LinkMetrics(1.0, 0.6, 0.0, 0.0)


# ---------------------------------------------------------------- demodulator


def test_pure_noise_lock_failure():
    rng = np.random.default_rng(5)
    s = QamStream.random(16, 8000, rng)
    wf = Waveform(FS, rng.standard_normal(80_000 + 400), {})
    with pytest.raises(LockFailure) as info:
        superhet_demodulate(wf, s)
    sym, bits, _ = info.value.result
    assert sym.size == s.n_symbols
    assert 0.4 < compute_ber(bits, s.payload) < 0.6


@pytest.mark.parametrize("order", [4, 16])
@pytest.mark.parametrize("if_freq", [24e3, 33e3])
def test_noise_free_loopback(order, if_freq):
    sc = link_scenario(order, if_freq)
    (m,) = evaluate_link(sc)
    assert m.ber == 0.0 and m.locked
    assert m.evm <= 0.5


def test_high_snr_loopback_ber_zero():
    # symbol SNR = 1 / (N0 Rs) = 30 dB at unit gain
    sc = link_scenario(16, 24e3, n_bits=10_000, noise=1e-3 / 4e3)
    (m,) = evaluate_link(sc)
    assert m.ber == 0.0
    assert m.evm == pytest.approx(np.sqrt(1e-3) * 100, rel=0.1)


def test_two_user_leakage():
    rng = np.random.default_rng(2)
    s1 = QamStream.random(16, 16_000, rng, if_freq=24e3)
    s2 = QamStream.random(16, 16_000, rng, if_freq=33e3)
    t = np.arange(s1.n_symbols * 40 + 400) / FS
    x1 = np.sqrt(2) * np.real(qam_modulate(s1, FS) * np.exp(2j * np.pi * 24e3 * t))
    x2 = np.sqrt(2) * np.real(qam_modulate(s2, FS) * np.exp(2j * np.pi * 33e3 * t))
    for s, own in ((s1, x1), (s2, x2)):
        alone, _ = superhet_demodulate(Waveform(FS, own, {}), s)
        both, bits = superhet_demodulate(Waveform(FS, x1 + x2, {}), s)
        e_alone, e_both = compute_evm(alone, s.symbols), compute_evm(both, s.symbols)
        assert np.sqrt(max(e_both ** 2 - e_alone ** 2, 0.0)) <= 1.0
        assert compute_ber(bits, s.payload) == 0.0


@pytest.mark.parametrize("order,evm_target,n_bits", [(4, 40.0, 40_000), (16, 15.0, 80_000)])
def test_ber_consistent_with_evm(order, evm_target, n_bits):
    n0 = (evm_target / 100) ** 2 / 4e3
    (m,) = evaluate_link(link_scenario(order, 24e3, n_bits=n_bits, noise=n0, seed=11))
    predicted = analytic_ber(order, 1.0 / (m.evm / 100) ** 2)
    assert predicted / 3 <= m.ber <= 3 * predicted


# ---------------------------------------------------------------- channel


def test_aliasing_risk():
    with pytest.raises(AliasingRisk):
        link_scenario(16, 24e3, sample_rate=80e3)


def test_user_ifs_distinct():
    sc = link_scenario()
    with pytest.raises(ValueError):
        sc.replace(users=sc.users * 2)


def test_spectral_lines_and_gains():
    sc = multiuser_scenario(n_bits=8000, noise_density=0.0)
    wf = channel_apply(sc)
    g = wf.metadata["gains"]
    f = np.fft.rfftfreq(wf.samples.size, 1 / FS)
    p = np.abs(np.fft.rfft(wf.samples)) ** 2
    for name, fif in (("user0", 24e3), ("user1", 33e3)):
        band = np.abs(f - fif) <= 2.7e3
        comp = wf.metadata["components"][name]
        assert np.mean(comp ** 2) == pytest.approx(abs(g[name]) ** 2, rel=0.05)
        assert np.sum(p[band]) > 0.4 * np.sum(p)


def test_channel_deterministic():
    sc = interference_scenario(0.06, n_bits=8000)
    a, b = channel_apply(sc), channel_apply(sc)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert evaluate_link(sc) == evaluate_link(sc)
    c = channel_apply(sc.replace(seed=1))
    assert c.samples.tobytes() != a.samples.tobytes()


def test_t_grid_contract():
    sc = link_scenario(n_bits=800)
    n = sc.n_samples
    wf = channel_apply(sc, np.arange(n) / FS)
    assert wf.samples.size == n
    with pytest.raises(ValueError):
        channel_apply(sc, np.arange(n) / FS * 1.01)


def test_interferer_psd_difference():
    diffs = {}
    for length in (0.04, 0.10):
        wf = channel_apply(interference_scenario(length, n_bits=40_000, noise_density=0.0))
        comp = wf.metadata["components"]["interferer0"]
        diffs[length] = band_psd(comp, FS, 28e3, 5.4e3)
    oracle = (sinc_gain_db(0.04, KU_FREQ_HZ, 75, 300) - sinc_gain_db(0.10, KU_FREQ_HZ, 75, 300))
    assert oracle == pytest.approx(10.9, abs=0.05)
    assert diffs[0.04] - diffs[0.10] == pytest.approx(10.9, abs=0.5)


def test_user_at_null_below_noise_floor():
    lam = LIGHT / KU_FREQ_HZ
    null = np.rad2deg(np.arccos(lam / 0.08))
    sc = link_scenario(16, 24e3, n_bits=8000, noise=2.25e-6, user_deg=null)
    wf = channel_apply(sc)
    assert abs(wf.metadata["gains"]["user0"]) < 1e-3
    comps = wf.metadata["components"]
    own = band_psd(comps["user0"], FS, 24e3, 5.4e3)
    floor = band_psd(comps["noise"], FS, 24e3, 5.4e3)
    assert own < floor - 30


def test_evm_non_increasing_in_gain():
    sc = link_scenario(16, 24e3, n_bits=20_000, noise=2.25e-6, seed=4)
    evms = [evaluate_link(sc.replace(coupling={0: a}))[0].evm for a in (0.3, 0.5, 1.0, 2.0)]
    assert all(b <= a for a, b in zip(evms, evms[1:]))


def test_full_model_matches_linearized():
    sc = interference_scenario(0.08, n_bits=800, noise_density=0.0)
    lin = channel_apply(sc).samples
    full = channel_apply(sc.replace(model="full")).samples
    assert np.sqrt(np.mean((full - lin) ** 2) / np.mean(lin ** 2)) < 0.01


# ---------------------------------------------------------------- campaigns

SWEEP_LENGTHS = (0.04, 0.05, 0.06, 0.07, 0.08, 0.10)
SWEEP_SIRS = (-6, -3, 0, 3, 6)


@pytest.fixture(scope="module")
def sweep():
    base = interference_scenario(n_bits=40_000)
    return run_interference_sweep(base, SWEEP_LENGTHS, SWEEP_SIRS, threads=4, min_bits=40_000)


def test_sweep_table_shape_and_csv(sweep):
    assert len(sweep.rows) == len(SWEEP_LENGTHS) * len(SWEEP_SIRS)
    lines = sweep.to_csv().splitlines()
    assert lines[0] == "cell_len_m,sir_db,evm_pct,ber,rx_psd_db,sir_eff_db"
    assert len(lines) == 31


def test_sweep_sir_trend(sweep):
    for length in SWEEP_LENGTHS:
        ber = sweep.select(cell_len_m=length).column("ber")
        assert all(b <= a for a, b in zip(ber, ber[1:])), (length, ber)


def test_sweep_length_trend_up_to_8cm(sweep):
    for sir in SWEEP_SIRS:
        t = sweep.select(sir_db=float(sir))
        keep = t.column("cell_len_m") <= 0.08
        ber, evm = t.column("ber")[keep], t.column("evm_pct")[keep]
        assert all(b <= a for a, b in zip(ber, ber[1:])), (sir, ber)
        assert all(b < a for a, b in zip(evm, evm[1:])), (sir, evm)


def test_sweep_length_trend_4_to_10cm_at_0db(sweep):
    t = sweep.select(sir_db=0.0)
    ber, evm = t.column("ber"), t.column("evm_pct")
    assert all(b <= a for a, b in zip(ber, ber[1:])), ber
    assert all(b < a for a, b in zip(evm, evm[1:])), evm


def test_sweep_zero_interferer_independent_of_sir():
    base = interference_scenario(n_bits=20_000)
    base = base.replace(interferers=(Interferer(75.0, 28e3, 8e3, 0.0),))
    t = run_interference_sweep(base, [0.06], [-6, 0, 6], min_bits=20_000)
    rows = [m for _, m in t.rows]
    assert rows[0] == rows[1] == rows[2]


def test_sweep_requires_bits():
    with pytest.raises(ValueError):
        run_interference_sweep(interference_scenario(n_bits=8000), [0.08], [0])


@pytest.fixture(scope="module")
def multiuser():
    return run_multiuser(multiuser_scenario(n_bits=20_000), threads=4)


def test_multiuser_trend(multiuser):
    e1 = multiuser.select(user="UE1").column("evm_pct")
    e2 = multiuser.select(user="UE2").column("evm_pct")
    assert all(b <= a for a, b in zip(e1, e1[1:])), e1
    assert all(b >= a for a, b in zip(e2, e2[1:])), e2


def test_multiuser_equal_powers_symmetric(multiuser):
    first = multiuser.select(step=0)
    e1, e2 = first.column("evm_pct")
    assert e1 == pytest.approx(e2, rel=0.05)


def test_multiuser_lo2_off():
    t = run_multiuser(multiuser_scenario(n_bits=20_000), [(6, None)])
    m = t.select(user="UE2").rows[0][1]
    assert not m.locked and m.ber == 0.5
    assert t.select(user="UE1").rows[0][1].locked


def test_multiband_drops():
    t = run_multiband(multiband_scenario(n_bits=20_000), threads=4)
    s, ku = t.select(band=0), t.select(band=1)
    s_psd, ku_psd = s.column("rx_psd_db"), ku.column("rx_psd_db")
    assert s_psd[0] - s_psd[-1] == pytest.approx(6.2, abs=1.0)
    assert ku_psd[0] - ku_psd[-1] == pytest.approx(13.3, abs=1.0)
    for band in (s, ku):
        assert np.argmin(band.column("evm_pct")) == 0
        assert np.argmax(band.column("rx_psd_db")) == 0
    assert t.to_csv().splitlines()[0] == "band,offset_deg,evm_pct,ber,rx_psd_db,sir_eff_db"
