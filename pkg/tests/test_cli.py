import json

import numpy as np
import pytest
import yaml

from rydbeam.aperture import ApertureGeometry, BeamPattern, LoConfiguration, RfTone
from rydbeam.cli import (EXIT_CONFIG, EXIT_NUMERICAL, PRESETS, SCHEMA, build_scenario,
                         load_preset, main, resolve_config)
from rydbeam.comms import interference_scenario, multiband_scenario, multiuser_scenario
from rydbeam.estimation import model_pattern
from rydbeam.quantum import TWO_PI, DopplerSpec, LevelScheme


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_pattern(path):
    return BeamPattern.from_csv(path, normalize=False)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.mark.parametrize("name", PRESETS)
def test_presets_validate(name):
    cfg = resolve_config(name)
    assert cfg == resolve_config(name)
    assert set(cfg) <= set(SCHEMA) and cfg.keys() == load_preset(name).keys()
    assert cfg["aperture"]["length_m"] == 0.08


@pytest.mark.parametrize("name,builder", [("fig3", lambda: interference_scenario(0.08)),
                                          ("fig4", multiuser_scenario),
                                          ("fig5", multiband_scenario)])
def test_link_presets_match_library_scenarios(name, builder):
    a, b = build_scenario(resolve_config(name)), builder()
    assert a.lo_config == b.lo_config
    assert a.interferers == b.interferers
    for u, v in zip(a.users, b.users):
        assert u.direction_deg == v.direction_deg and u.band_index == v.band_index
        assert u.stream.if_freq == v.stream.if_freq
        np.testing.assert_array_equal(u.stream.payload, v.stream.payload)


def test_pattern_single_peak_at_90(tmp_path):
    assert main(["pattern", "--preset", "fig2-ku", "--out", str(tmp_path)]) == 0
    p = read_pattern(tmp_path / "pattern.csv")
    assert p.angles[0] == 20.0 and p.angles[-1] == 160.0
    assert np.allclose(np.diff(p.angles), 2.0)
    assert p.peak_angle == 90.0
    m = manifest(tmp_path)
    assert m["outputs"].keys() == {"pattern.csv"}
    assert m["config"]["aperture"]["length_m"] == 0.08
    text = (tmp_path / "pattern.csv").read_text()
    assert text.startswith("theta_deg,gain\n") and text.endswith("\n")


def test_pattern_multiband_suffixes(tmp_path):
    assert main(["pattern", "--preset", "fig5", "--out", str(tmp_path)]) == 0
    s = read_pattern(tmp_path / "pattern_band0.csv")
    ku = read_pattern(tmp_path / "pattern_band1.csv")
    assert s.peak_angle == pytest.approx(60.0, abs=2.5)
    assert ku.peak_angle == 90.0
    assert set(manifest(tmp_path)["outputs"]) == {"pattern_band0.csv", "pattern_band1.csv"}


def test_pattern_multipeak_preset(tmp_path):
    assert main(["pattern", "--preset", "fig2g", "--out", str(tmp_path)]) == 0
    p = read_pattern(tmp_path / "pattern.csv")
    left = p.angles < 90
    assert p.angles[left][np.argmax(p.gains[left])] == pytest.approx(60, abs=3)
    assert p.angles[~left][np.argmax(p.gains[~left])] == pytest.approx(120, abs=3)


def test_missing_length_names_key(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", {"lo": [{"freq_hz": 15.59e9, "angle_deg": 270.0}]})
    assert main(["pattern", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "length_m" in capsys.readouterr().err


@pytest.mark.parametrize("doc,needle", [
    ({"aperture": {"length_m": 0.08, "lenght_m": 1}}, "aperture.lenght_m"),
    ({"lo": [{"freq_hz": 1e10, "angle_deg": 270, "colour": 1}]}, "lo[0].colour"),
    ({"aperture": {"length_m": "eight"}}, "aperture.length_m"),
    ({"bogus": {}}, "bogus"),
    ({"comms": {"interferers": [{"angle_deg": 75, "if_hz": 2e4, "bw": 1}]}},
     "comms.interferers[0].bw"),
])
def test_unknown_or_mistyped_keys(tmp_path, capsys, doc, needle):
    cfg = write_yaml(tmp_path / "c.yaml", doc)
    assert main(["pattern", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert needle in capsys.readouterr().err


@pytest.mark.parametrize("text", ["a: [1, 2", "- just\n- a list\n"])
def test_malformed_documents(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    assert main(["pattern", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_physically_invalid_values_exit_2(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"aperture": {"length_m": 5.0}})
    assert main(["pattern", "--preset", "fig2-ku", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["pattern", "--preset", "fig2-ku", "--threads", "0",
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["nonsense"]) == EXIT_CONFIG


def test_numerical_error_exit_3(tmp_path, capsys):
    # two co-directed LOs in antiphase cancel along the whole cell
    cfg = write_yaml(tmp_path / "c.yaml", {
        "aperture": {"length_m": 0.08},
        "lo": [{"freq_hz": 15.59e9, "angle_deg": 270.0, "rabi_mhz": 5.0},
               {"freq_hz": 15.59e9, "angle_deg": 270.0, "rabi_mhz": 5.0, "phase_rad": np.pi}],
        "run": {"mode": "multipeak"}})
    assert main(["pattern", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
    assert "AmplitudeNull" in capsys.readouterr().err


def test_spectrum_fit_separation(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"laser": {"omega_rf_mhz": 20.0}})
    assert main(["spectrum", "--config", cfg, "--fit", "--out", str(tmp_path)]) == 0
    fit = manifest(tmp_path)["results"]["fit"]
    assert fit["separation_rad_s"] == pytest.approx(TWO_PI * 20e6, rel=0.1)
    assert (tmp_path / "spectrum.csv").read_text().startswith("delta_c_rad_s,im_chi\n")


def test_spectrum_degenerate_fit_warns(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", {"laser": {"omega_rf_mhz": 0.0}})
    assert main(["spectrum", "--config", cfg, "--fit", "--out", str(tmp_path)]) == 0
    m = manifest(tmp_path)
    assert m["results"]["fit"]["error"] == "DegenerateFit"
    assert any("DegenerateFit" in w for w in m["warnings"])
    assert "warning" in capsys.readouterr().err


def test_spectrum_inverted_bounds(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"run": {"delta_c_start_mhz": 10.0,
                                                   "delta_c_stop_mhz": -10.0}})
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


FIT_LO = {"aperture": {"length_m": 0.08},
          "lo": [{"freq_hz": 15.59e9, "angle_deg": 240.0, "power_dbm": 0.0},
                 {"freq_hz": 15.59e9, "angle_deg": 300.0, "power_dbm": 0.0}],
          "run": {"grid_points": 8}}


def _measured(tmp_path, noise=0.0):
    lo = LoConfiguration((RfTone(TWO_PI * 5e6, 15.59e9, 240.0),
                          RfTone(TWO_PI * 5e6, 15.59e9, 300.0)))
    p = model_pattern(ApertureGeometry(0.08), lo, [0.0, 1.1], LevelScheme(), DopplerSpec(),
                      np.arange(20.0, 161.0, 2.0))
    if noise:
        g = p.gains * (1 + noise * np.random.default_rng(0).standard_normal(p.gains.size))
        p = BeamPattern.from_values(p.angles, np.clip(g, 0, None))
    path = tmp_path / "measured.csv"
    p.to_csv(path)
    return str(path)


def test_fit_round_trip(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", FIT_LO)
    out = tmp_path / "o"
    assert main(["fit", "--config", cfg, "--measured", _measured(tmp_path),
                 "--out", str(out)]) == 0
    res = json.loads((out / "fit.json").read_text())
    assert res["residual"] <= 1e-6
    assert set(res) == {"phases_rad", "residual", "converged", "evaluations"}
    assert (out / "fit_overlay.csv").read_text().startswith("theta_deg,measured,model\n")


def test_fit_noisy_converges(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", FIT_LO)
    out = tmp_path / "o"
    assert main(["fit", "--config", cfg, "--measured", _measured(tmp_path, 0.02),
                 "--out", str(out)]) == 0
    res = json.loads((out / "fit.json").read_text())
    assert res["converged"] is True and res["residual"] > 0


def test_fit_non_monotone_angles(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("theta_deg,gain\n20,0.5\n40,1.0\n30,0.2\n")
    cfg = write_yaml(tmp_path / "c.yaml", FIT_LO)
    assert main(["fit", "--config", cfg, "--measured", str(bad),
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


SMALL_FIG4 = {"comms": {"n_bits": 8000, "lo_power_schedule_dbm": [[6, 6], [8, 4]]}}


def test_link_deterministic_and_manifest_rerun(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", SMALL_FIG4)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["link", "--preset", "fig4", "--config", cfg, "--out", str(a)]) == 0
    assert main(["link", "--preset", "fig4", "--config", cfg, "--out", str(b),
                 "--threads", "2"]) == 0
    assert (a / "link_multiuser.csv").read_bytes() == (b / "link_multiuser.csv").read_bytes()
    assert main(["link", "--config", str(a / "manifest.json"), "--out", str(c)]) == 0
    assert manifest(c)["outputs"] == manifest(a)["outputs"]
    lines = (a / "link_multiuser.csv").read_text().splitlines()
    assert lines[0] == "step,lo1_dbm,lo2_dbm,user,evm_pct,ber,rx_psd_db,sir_eff_db"
    e1, e2 = (float(lines[i].split(",")[4]) for i in (1, 2))
    assert e1 == pytest.approx(e2, rel=0.05)


def test_link_seed_flag(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", SMALL_FIG4)
    assert main(["link", "--preset", "fig4", "--config", cfg, "--seed", "3",
                 "--out", str(tmp_path / "a")]) == 0
    m = manifest(tmp_path / "a")
    assert m["seed"] == 3 and m["config"]["comms"]["seed"] == 3


def test_link_interference_preset_trends(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"comms": {"n_bits": 40000}})
    assert main(["link", "--preset", "fig3", "--config", cfg, "--threads", "4",
                 "--out", str(tmp_path)]) == 0
    rows = [ln.split(",") for ln in (tmp_path / "link_interference.csv").read_text()
            .splitlines()[1:]]
    table = {(float(r[0]), float(r[1])): float(r[3]) for r in rows}
    lengths = sorted({k[0] for k in table})
    sirs = sorted({k[1] for k in table})
    assert len(lengths) == 6 and len(sirs) == 5
    for length in lengths:
        ber = [table[length, s] for s in sirs]
        assert all(b <= a for a, b in zip(ber, ber[1:]))


def test_link_multiband_preset(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"comms": {"n_bits": 8000}})
    assert main(["link", "--preset", "fig5", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "link_multiband.csv").read_text().splitlines()
    assert lines[0].startswith("band,offset_deg,")
    assert len(lines) == 11


def test_link_needs_scenario(tmp_path):
    assert main(["link", "--preset", "fig2-ku", "--out", str(tmp_path)]) == EXIT_CONFIG
