"""Command-line front end: ``rydbeam {pattern,spectrum,fit,link}``.

A run reads a YAML document (optionally layered over a packaged preset),
validates it against a fixed schema whose key names carry units, writes its
outputs atomically into ``--out`` and finishes with ``manifest.json``
holding the resolved configuration, the seed, output checksums and timing.
A manifest can be passed back as ``--config`` to repeat the run.

Exit codes: 0 success (warnings allowed), 2 configuration or input error,
3 numerical failure.
"""
import argparse
import copy
import hashlib
import json
import os
import sys
import time
import warnings
from dataclasses import replace
from importlib import resources

import numpy as np
import yaml
from scipy.constants import atomic_mass, e, physical_constants

from rydbeam import __version__, kernels
from rydbeam._io import atomic_write_text
from rydbeam.aperture import (ApertureGeometry, BandConfig, BeamPattern, LoConfiguration,
                              RfTone, pattern_multiband, pattern_multipeak,
                              pattern_single_peak)
from rydbeam.comms import (Interferer, QamStream, Scenario, User, dbm_to_rabi,
                           run_interference_sweep, run_multiband, run_multiuser)
from rydbeam.comms.experiments import DEFAULT_SCHEDULE
from rydbeam.errors import ConfigError, DegenerateFit, NumericalError
from rydbeam.estimation import eit_spectrum, fit_lo_phases, lorentzian_pair_fit, model_pattern
from rydbeam.quantum import TWO_PI, DopplerSpec, DriveParams, LevelScheme

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
OUT_ENV = "RYDBEAM_OUT"
MANIFEST = "manifest.json"
PRESETS = ("fig2-ku", "fig2-s", "fig2g", "fig3", "fig4", "fig5")
MHZ = TWO_PI * 1e6


def _mhz(v):
    """Angular frequency (rad/s) of a value given as f/2pi in MHz."""
    return TWO_PI * (v * 1e6)
_A0 = physical_constants["Bohr radius"][0]


def _num(v):
    # YAML 1.1 reads exponents without a sign or dot (15.59e9) as strings.
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise TypeError("expected a number") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _numlist(v):
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list of numbers")
    return [_num(x) for x in v]


def _schedule(v):
    if not isinstance(v, list) or not v:
        raise TypeError("expected a list of [lo1_dbm, lo2_dbm] pairs")
    out = []
    for pair in v:
        if not isinstance(pair, list) or len(pair) != 2:
            raise TypeError("expected [lo1_dbm, lo2_dbm] pairs (null switches an LO off)")
        out.append([None if p is None else _num(p) for p in pair])
    return out


def _offsets(v):
    if not isinstance(v, dict) or not v:
        raise TypeError("expected a mapping band -> list of offsets")
    out = {}
    for k, x in v.items():
        if isinstance(k, str) and k.isdigit():
            k = int(k)
        out[_int(k)] = _numlist(x)
    return out


TONE_KEYS = {"freq_hz": _num, "angle_deg": _num, "power_dbm": _num, "rabi_mhz": _num,
             "phase_rad": _num, "band": _int, "coupling_scale": _num}
SIGNAL_KEYS = {"angle_deg": _num, "if_hz": _num, "band": _int, "phase_rad": _num,
               "order": _int}
INTERFERER_KEYS = {"angle_deg": _num, "if_hz": _num, "bandwidth_hz": _num, "power_rel": _num,
                   "band": _int}
SCHEMA = {
    "atom": {"gamma2_mhz": _num, "gamma3_mhz": _num, "gamma4_mhz": _num, "mu12_ea0": _num,
             "mu34_ea0": _num, "lambda_p_m": _num, "lambda_c_m": _num, "density_m3": _num,
             "mass_amu": _num, "temperature_k": _num},
    "laser": {"omega_p_mhz": _num, "omega_c_mhz": _num, "delta_p_mhz": _num,
              "delta_c_mhz": _num, "delta_l_mhz": _num, "omega_rf_mhz": _num,
              "doppler_nodes": _int, "doppler_truncation": _num, "pole_cut": _num},
    "aperture": {"length_m": _num, "spatial_samples": _int, "probe_power_w": _num},
    "lo": [TONE_KEYS],
    "signals": [SIGNAL_KEYS],
    "comms": {"scenario": _str, "order": _int, "symbol_rate_sym_s": _num, "rolloff": _num,
              "n_bits": _int, "noise_density_per_hz": _num, "sample_rate_hz": _num,
              "seed": _int, "rabi_at_0dbm_mhz": _num, "interferers": [INTERFERER_KEYS],
              "lengths_m": _numlist, "sirs_db": _numlist, "lo_power_schedule_dbm": _schedule,
              "misalignment_deg": _offsets, "side": _int, "model": _str, "paired": _bool},
    "run": {"mode": _str, "theta_start_deg": _num, "theta_stop_deg": _num,
            "theta_step_deg": _num, "delta_c_start_mhz": _num, "delta_c_stop_mhz": _num,
            "delta_c_points": _int, "fit": _bool, "grid_points": _int, "budget": _int},
}


def _check(node, schema, where):
    if isinstance(schema, list):
        if not isinstance(node, list):
            raise ConfigError(f"{where}: expected a list")
        return [_check(item, schema[0], f"{where}[{i}]") for i, item in enumerate(node)]
    if not isinstance(node, dict):
        raise ConfigError(f"{where}: expected a mapping")
    out = {}
    for key, value in node.items():
        loc = f"{where}.{key}" if where else str(key)
        if key not in schema:
            raise ConfigError(f"{loc}: unknown key")
        rule = schema[key]
        if isinstance(rule, (dict, list)):
            out[key] = _check(value, rule, loc)
            continue
        try:
            out[key] = rule(value)
        except TypeError as exc:
            raise ConfigError(f"{loc}: {exc}, got {value!r}") from None
    return out


def validate_config(doc):
    """Type-check ``doc`` against the schema; unknown keys are rejected."""
    return _check(doc, SCHEMA, "") if doc else {}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("rydbeam.presets").joinpath(f"{name}.yaml").read_text("utf-8")
    return yaml.safe_load(text)


def load_document(path):
    """YAML config, or the config echoed by a run manifest."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    if isinstance(doc, dict) and doc.get("tool") == "rydbeam" and "config" in doc:
        return doc["config"]
    return doc


def resolve_config(preset=None, config_path=None, seed=None):
    doc = {}
    if preset:
        doc = load_preset(preset)
    if config_path:
        user = load_document(config_path)
        if user is not None and not isinstance(user, dict):
            raise ConfigError(f"{config_path}: top level must be a mapping")
        doc = _merge(doc, user or {})
    doc = validate_config(doc)
    if seed is not None:
        doc.setdefault("comms", {})["seed"] = int(seed)
    return doc


def _require(section, key, where):
    if key not in section:
        raise ConfigError(f"{where}.{key}: required key missing")
    return section[key]


# ---------------------------------------------------------------- builders


def build_scheme(cfg):
    a = cfg.get("atom", {})
    kw = {}
    for key, attr, scale in (("gamma2_mhz", "gamma2", None), ("gamma3_mhz", "gamma3", None),
                             ("gamma4_mhz", "gamma4", None), ("mu12_ea0", "mu12", e * _A0),
                             ("mu34_ea0", "mu34", e * _A0), ("lambda_p_m", "lambda_p", 1.0),
                             ("lambda_c_m", "lambda_c", 1.0), ("density_m3", "n0", 1.0),
                             ("mass_amu", "mass", atomic_mass),
                             ("temperature_k", "t_env", 1.0)):
        if key in a:
            kw[attr] = _mhz(a[key]) if scale is None else a[key] * scale
    return replace(LevelScheme(), **kw)


def build_drive(cfg):
    las = cfg.get("laser", {})
    kw = {}
    for key, attr in (("omega_p_mhz", "omega_p"), ("omega_c_mhz", "omega_c"),
                      ("delta_p_mhz", "delta_p"), ("delta_c_mhz", "delta_c"),
                      ("delta_l_mhz", "delta_l"), ("omega_rf_mhz", "omega_rf")):
        if key in las:
            kw[attr] = _mhz(las[key])
    return DriveParams(**kw)


def build_spec(cfg):
    las = cfg.get("laser", {})
    kw = {}
    for key, attr in (("doppler_nodes", "node_count"), ("doppler_truncation", "truncation"),
                      ("pole_cut", "pole_cut")):
        if key in las:
            kw[attr] = las[key]
    return DopplerSpec(**kw)


def build_geometry(cfg, length=None):
    ap = cfg.get("aperture", {})
    kw = {"length": _require(ap, "length_m", "aperture") if length is None else length}
    if "spatial_samples" in ap:
        kw["spatial_samples"] = ap["spatial_samples"]
    if "probe_power_w" in ap:
        kw["probe_input_power"] = ap["probe_power_w"]
    return ApertureGeometry(**kw)


def _rabi_reference(cfg):
    return _mhz(cfg.get("comms", {}).get("rabi_at_0dbm_mhz", 5.0))


def build_tones(cfg):
    tones = cfg.get("lo")
    if not tones:
        raise ConfigError("lo: at least one LO tone is required")
    ref = _rabi_reference(cfg)
    out = []
    for i, t in enumerate(tones):
        where = f"lo[{i}]"
        if "power_dbm" in t and "rabi_mhz" in t:
            raise ConfigError(f"{where}: give power_dbm or rabi_mhz, not both")
        if "rabi_mhz" in t:
            amp = _mhz(t["rabi_mhz"])
        else:
            amp = float(dbm_to_rabi(t.get("power_dbm", 0.0), ref))
        out.append(RfTone(amp, _require(t, "freq_hz", where), _require(t, "angle_deg", where),
                          phase=t.get("phase_rad", 0.0), band_index=t.get("band", 0)))
    return out


def theta_grid(cfg):
    run = cfg.get("run", {})
    a = run.get("theta_start_deg", 20.0)
    b = run.get("theta_stop_deg", 160.0)
    step = run.get("theta_step_deg", 2.0)
    if not (step > 0 and b > a):
        raise ConfigError("run: theta grid needs theta_stop_deg > theta_start_deg and a "
                          "positive theta_step_deg")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(n), 10)


def build_scenario(cfg):
    """Base link scenario: LO tones, users from ``signals``, comms settings."""
    com = cfg.get("comms", {})
    geo = build_geometry(cfg)
    lo = LoConfiguration(tuple(build_tones(cfg)))
    sigs = cfg.get("signals")
    if not sigs:
        raise ConfigError("signals: at least one user is required")
    seed = com.get("seed", 0)
    n_bits = com.get("n_bits", 40_000)
    users = []
    for i, s in enumerate(sigs):
        where = f"signals[{i}]"
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7, i]))
        stream = QamStream.random(s.get("order", com.get("order", 16)), n_bits, rng,
                                  if_freq=_require(s, "if_hz", where),
                                  symbol_rate=com.get("symbol_rate_sym_s", 4e3),
                                  rolloff=com.get("rolloff", 0.35))
        users.append(User(_require(s, "angle_deg", where), stream, s.get("band", 0),
                          s.get("phase_rad", 0.0)))
    itfs = []
    for i, it in enumerate(com.get("interferers", [])):
        where = f"comms.interferers[{i}]"
        itfs.append(Interferer(_require(it, "angle_deg", where), _require(it, "if_hz", where),
                               it.get("bandwidth_hz", 8e3), it.get("power_rel", 1.0),
                               it.get("band", 0)))
    coupling = {t.get("band", 0): t["coupling_scale"] for t in cfg.get("lo", [])
                if "coupling_scale" in t}
    kw = {}
    if "noise_density_per_hz" in com:
        kw["noise_density"] = com["noise_density_per_hz"]
    if "sample_rate_hz" in com:
        kw["sample_rate"] = com["sample_rate_hz"]
    return Scenario(geo, lo, tuple(users), tuple(itfs), seed=seed, scheme=build_scheme(cfg),
                    drive=build_drive(cfg), spec=build_spec(cfg), coupling=coupling or None,
                    model=com.get("model", "linearized"), **kw)


# ---------------------------------------------------------------- commands


def cmd_pattern(cfg, out, state):
    mode = cfg.get("run", {}).get("mode", "single")
    theta = theta_grid(cfg)
    geo = build_geometry(cfg)
    tones = build_tones(cfg)
    if mode == "single":
        if len(tones) != 1:
            raise ConfigError("run.mode single needs exactly one lo tone")
        pats = {"pattern.csv": pattern_single_peak(geo, tones[0], theta)}
    elif mode == "multipeak":
        cfg_lo = LoConfiguration(tuple(tones))
        pats = {"pattern.csv": pattern_multipeak(geo, cfg_lo, build_scheme(cfg),
                                                 build_spec(cfg), theta,
                                                 drive=build_drive(cfg))}
    elif mode == "multiband":
        bands = [BandConfig(t, cfg["lo"][i].get("coupling_scale", 1.0))
                 for i, t in enumerate(tones)]
        pats = {f"pattern_band{b.band_index}.csv": p
                for b, p in zip(bands, pattern_multiband(geo, bands, theta))}
    else:
        raise ConfigError(f"run.mode: expected single, multipeak or multiband, got {mode!r}")
    for name, p in pats.items():
        p.to_csv(os.path.join(out, name))
        state["outputs"].append(name)
        state["results"][name] = {"peak_deg": p.peak_angle}


def cmd_spectrum(cfg, out, state, fit=False):
    run = cfg.get("run", {})
    a = run.get("delta_c_start_mhz", -40.0)
    b = run.get("delta_c_stop_mhz", 40.0)
    n = run.get("delta_c_points", 801)
    if not b > a:
        raise ConfigError("run.delta_c_stop_mhz must exceed run.delta_c_start_mhz")
    if n < 5:
        raise ConfigError("run.delta_c_points must be >= 5")
    trace = eit_spectrum(build_scheme(cfg), build_drive(cfg), build_spec(cfg),
                         _mhz(np.linspace(a, b, n)))
    rows = "".join(f"{x:.10g},{y:.10g}\n" for x, y in zip(trace.detunings, trace.absorption))
    atomic_write_text(os.path.join(out, "spectrum.csv"), "delta_c_rad_s,im_chi\n" + rows)
    state["outputs"].append("spectrum.csv")
    if fit or run.get("fit", False):
        try:
            sep, res = lorentzian_pair_fit(trace)
            state["results"]["fit"] = {"separation_rad_s": sep, "separation_mhz": sep / MHZ,
                                       "residual": res}
        except DegenerateFit as exc:
            state["results"]["fit"] = {"error": "DegenerateFit", "message": str(exc)}
            state["warnings"].append(f"DegenerateFit: {exc}")


def cmd_fit(cfg, out, state, measured_path):
    if measured_path is None:
        raise ConfigError("fit needs --measured PATH (CSV with header theta_deg,gain)")
    try:
        measured = BeamPattern.from_csv(measured_path)
    except OSError as exc:
        raise ConfigError(f"{measured_path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"{measured_path}: {exc}") from None
    geo = build_geometry(cfg)
    lo = LoConfiguration(tuple(build_tones(cfg)))
    scheme, spec, drive = build_scheme(cfg), build_spec(cfg), build_drive(cfg)
    run = cfg.get("run", {})
    res = fit_lo_phases(measured, geo, lo, scheme, spec, drive=drive,
                        grid_points=run.get("grid_points", 16), budget=run.get("budget", 5000))
    res.to_json(os.path.join(out, "fit.json"))
    model = model_pattern(geo, lo, res.phases_rad, scheme, spec, measured.angles, drive=drive)
    rows = "".join(f"{a:.4f},{m:.9g},{g:.9g}\n"
                   for a, m, g in zip(measured.angles, measured.gains, model.gains))
    atomic_write_text(os.path.join(out, "fit_overlay.csv"), "theta_deg,measured,model\n" + rows)
    state["outputs"] += ["fit.json", "fit_overlay.csv"]
    state["results"]["fit"] = res.to_dict()


def cmd_link(cfg, out, state, scenario=None, threads=1):
    com = cfg.get("comms", {})
    kind = scenario or com.get("scenario")
    if kind is None:
        raise ConfigError("comms.scenario: required key missing (or pass --scenario)")
    base = build_scenario(cfg)
    paired = com.get("paired", True)
    if kind == "interference":
        lengths = com.get("lengths_m", [base.geometry.length])
        sirs = com.get("sirs_db", [0.0])
        table = run_interference_sweep(base, lengths, sirs, threads=threads, paired=paired,
                                       min_bits=min(100_000, base.users[0].stream.payload.size))
    elif kind == "multiuser":
        sched = com.get("lo_power_schedule_dbm", [list(s) for s in DEFAULT_SCHEDULE])
        table = run_multiuser(base, sched, threads=threads, paired=paired,
                              rabi_reference=_rabi_reference(cfg))
    elif kind == "multiband":
        table = run_multiband(base, com.get("misalignment_deg"), side=com.get("side", 1),
                              threads=threads, paired=paired)
    else:
        raise ConfigError(f"comms.scenario: expected interference, multiuser or multiband, "
                          f"got {kind!r}")
    name = f"link_{kind}.csv"
    table.to_csv(os.path.join(out, name))
    state["outputs"].append(name)
    state["results"]["rows"] = len(table.rows)
    state["results"]["locked"] = [bool(m.locked) for _, m in table.rows]


# ---------------------------------------------------------------- entry point


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def build_parser():
    p = argparse.ArgumentParser(prog="rydbeam", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config or a previous manifest.json")
    common.add_argument("--preset", choices=PRESETS, help="packaged base configuration")
    common.add_argument("--out", default=os.environ.get(OUT_ENV, "."),
                        help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--seed", type=int, help="master seed (overrides comms.seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("pattern", parents=[common], help="beam pattern CSV(s)")
    sp = sub.add_parser("spectrum", parents=[common], help="EIT/AT spectrum CSV")
    sp.add_argument("--fit", action="store_true", help="two-Lorentzian fit into the manifest")
    fp = sub.add_parser("fit", parents=[common], help="fit LO phases to a measured pattern")
    fp.add_argument("--measured", help="pattern CSV (theta_deg,gain)")
    lp = sub.add_parser("link", parents=[common], help="link campaign metrics CSV")
    lp.add_argument("--scenario", choices=("interference", "multiuser", "multiband"))
    return p


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    t0 = time.perf_counter()
    state = {"outputs": [], "results": {}, "warnings": []}
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = resolve_config(args.preset, args.config, args.seed)
        os.makedirs(args.out, exist_ok=True)
        kernels.set_threads(args.threads)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "pattern":
                cmd_pattern(cfg, args.out, state)
            elif args.command == "spectrum":
                cmd_spectrum(cfg, args.out, state, fit=args.fit)
            elif args.command == "fit":
                cmd_fit(cfg, args.out, state, args.measured)
            else:
                cmd_link(cfg, args.out, state, args.scenario, args.threads)
        state["warnings"] += [f"{w.category.__name__}: {w.message}" for w in caught]
    except NumericalError as exc:
        print(f"rydbeam: numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"rydbeam: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rydbeam: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        kernels.set_threads(1)
    manifest = {
        "tool": "rydbeam", "version": __version__, "command": args.command,
        "argv": argv, "preset": args.preset,
        "seed": cfg.get("comms", {}).get("seed", 0), "config": cfg,
        "outputs": {name: _sha256(os.path.join(args.out, name)) for name in state["outputs"]},
        "results": state["results"], "warnings": state["warnings"],
        "wall_clock_s": time.perf_counter() - t0,
    }
    atomic_write_text(os.path.join(args.out, MANIFEST),
                      json.dumps(_jsonable(manifest), indent=2) + "\n")
    for w in state["warnings"]:
        print(f"rydbeam: warning: {w}", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
