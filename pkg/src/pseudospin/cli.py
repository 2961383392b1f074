"""Command-line driver: ``simulate run|presets|validate``.

Configs are INI files. Frequencies are in Hz, times in seconds and angles in
degrees. Every run writes ``<output_dir>/<kind>/<timestamp>/`` holding numbered
CSV payloads with JSON sidecars, ``manifest.json`` and ``summary.json``. It
also updates ``<output_dir>/<kind>/latest`` to name the newest timestamp.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, io, oracle, semiclassical as sc, spectroscopy
from .core import (PRESETS, PhysicalParams, ValidationError, from_hz,
                   gamma_from_t2star, preset, rabi_splitting, to_hz, validate)

log = logging.getLogger("pseudospin")

WORKERS_ENV = "PSEUDOSPIN_WORKERS"
KINDS = ("fid", "power_sweep", "n_sweep", "s11_map", "delay_fit", "oracle_compare")

EXIT_OK, EXIT_RUN_FAILURE, EXIT_CONFIG_ERROR = 0, 1, 2

PARAM_KEYS = {"omega_c_hz", "omega_s_hz", "coupling_g_hz", "n_spins", "kappa_int_hz",
              "kappa_ext_hz", "gamma_hz", "omega_frame_hz"}
EXTRA_PARAM_KEYS = {"preset", "collective_g_hz", "t2star_s"}

# section -> {key: default}; None marks a required key
SECTIONS = {
    "fid": {"theta_deg": "90", "amplitude_hz": "", "pulse_duration_s": "200e-9",
            "t_total_s": "30e-6", "output_dt_s": "", "dead_time_s": "3e-6",
            "drive_phase_deg": "0"},
    "power_sweep": {"theta_deg": None, "pulse_duration_s": "200e-9", "t_total_s": "30e-6",
                    "output_dt_s": "", "dead_time_s": "3e-6",
                    "phase_window_s": "12e-6, 20e-6"},
    "n_sweep": {"n_spins": None, "theta_deg": "90", "pulse_duration_s": "200e-9",
                "t_total_s": "30e-6", "output_dt_s": "", "dead_time_s": "3e-6",
                "window": "rectangular"},
    "s11_map": {"spin_offset_hz": "-2e6:2e6:81", "freq_offset_hz": "-1.5e6:1.5e6:1501",
                "g_factor": str(spectroscopy.G_ELECTRON)},
    "delay_fit": {"theta_deg": "150:177:10", "baseline_deg": "90",
                  "pulse_duration_s": "200e-9", "t_total_s": "30e-6", "output_dt_s": "",
                  "dead_time_s": "3e-6"},
    "oracle_compare": {"n_spins": "2, 4, 8, 16", "theta_deg": "90",
                       "collective_g_hz": "290e3", "periods": "1.5", "samples": "400"},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    params: PhysicalParams
    settings: dict
    output_dir: Path
    workers: int
    source: Optional[Path] = None
    notices: list = field(default_factory=list)


# ---------------------------------------------------------------- config parsing

def _line_of(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return n
    return None


def _where(text, section, key):
    line = _line_of(text, section, key)
    return f"[{section}] {key}" + (f" (line {line})" if line else "")


def parse_grid(value: str) -> np.ndarray:
    """``start:stop:count`` (inclusive linear grid) or a comma-separated list."""
    value = value.strip()
    if ":" in value:
        parts = value.split(":")
        if len(parts) != 3:
            raise ValueError("grid must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be positive")
        return np.linspace(start, stop, count)
    items = [v for v in value.replace(",", " ").split() if v]
    if not items:
        raise ValueError("empty list")
    return np.array([float(v) for v in items])


def parse_log_grid(value: str) -> np.ndarray:
    """Like :func:`parse_grid` but ``start:stop:count`` is logarithmically spaced."""
    if ":" in value:
        parts = value.split(":")
        if len(parts) != 3:
            raise ValueError("grid must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if start <= 0 or stop <= 0 or count < 1:
            raise ValueError("log grid needs positive bounds and count")
        return np.geomspace(start, stop, count)
    return parse_grid(value)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


def _build_params(cp, text, notices) -> PhysicalParams:
    if not cp.has_section("params"):
        raise ConfigError("missing [params] section")
    sec = cp["params"]
    unknown = set(sec) - PARAM_KEYS - EXTRA_PARAM_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{_where(text, 'params', key)}: unknown key")
    values = {}
    if "preset" in sec:
        name = sec["preset"].strip()
        if name not in PRESETS:
            raise ConfigError(f"{_where(text, 'params', 'preset')}: unknown preset {name!r}")
        values = preset(name).to_hz_dict()
    explicit = {}
    for key in PARAM_KEYS | {"collective_g_hz", "t2star_s"}:
        if key in sec:
            try:
                explicit[key] = float(sec[key])
            except ValueError:
                raise ConfigError(f"{_where(text, 'params', key)}: not a number: "
                                  f"{sec[key]!r}") from None
    for key in PARAM_KEYS & explicit.keys():
        if values and key in values:
            notices.append(f"params.{key} overrides preset value {values[key]!r}")
        values[key] = explicit[key]
    if "t2star_s" in explicit:
        if "gamma_hz" in explicit:
            raise ConfigError(f"{_where(text, 'params', 't2star_s')}: give gamma_hz or "
                              "t2star_s, not both")
        if explicit["t2star_s"] <= 0:
            raise ConfigError(f"{_where(text, 'params', 't2star_s')}: must be positive")
        values["gamma_hz"] = to_hz(gamma_from_t2star(explicit["t2star_s"]))
    if "omega_frame_hz" not in values and "omega_c_hz" in values:
        values["omega_frame_hz"] = values["omega_c_hz"]
    if "collective_g_hz" in explicit:
        if "coupling_g_hz" in explicit:
            raise ConfigError(f"{_where(text, 'params', 'collective_g_hz')}: give "
                              "coupling_g_hz or collective_g_hz, not both")
        if "n_spins" not in values or values["n_spins"] <= 0:
            raise ConfigError(f"{_where(text, 'params', 'collective_g_hz')}: needs n_spins")
        values["coupling_g_hz"] = explicit["collective_g_hz"] / math.sqrt(values["n_spins"])
    missing = (PARAM_KEYS - {"omega_frame_hz"}) - values.keys()
    if missing:
        raise ConfigError(f"[params]: missing {', '.join(sorted(missing))} (or set preset)")
    try:
        params = PhysicalParams.from_hz_dict(values)
        validate(params)
    except ValidationError as exc:
        key = exc.field if exc.field == "n_spins" else f"{exc.field}_hz"
        raise ConfigError(f"{_where(text, 'params', key)}: {exc}") from None
    return params


def load_config(path, workers: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    exp = cp["experiment"]
    unknown = set(exp) - {"kind", "output_dir", "workers"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{_where(text, 'experiment', key)}: unknown key")
    kind = exp.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"{_where(text, 'experiment', 'kind')}: must be one of "
                          f"{', '.join(KINDS)}, got {kind!r}")
    others = [s for s in cp.sections() if s in SECTIONS and s != kind]
    if others:
        raise ConfigError(f"[{others[0]}]: section does not belong to kind {kind!r}")
    stray = [s for s in cp.sections() if s not in SECTIONS and s not in ("experiment", "params")]
    if stray:
        raise ConfigError(f"[{stray[0]}]: unknown section")
    notices: list = []
    params = _build_params(cp, text, notices)
    spec = SECTIONS[kind]
    given = cp[kind] if cp.has_section(kind) else {}
    unknown = set(given) - spec.keys()
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{_where(text, kind, key)}: unknown key")
    settings = {}
    for key, default in spec.items():
        raw = given.get(key, default) if given else default
        if raw is None:
            raise ConfigError(f"[{kind}] {key}: required")
        try:
            settings[key] = _convert(kind, key, raw)
        except ValueError as exc:
            raise ConfigError(f"{_where(text, kind, key)}: {exc}") from None
    if workers is None:
        if "workers" in exp:
            try:
                workers = int(exp["workers"])
            except ValueError:
                raise ConfigError(f"{_where(text, 'experiment', 'workers')}: not an integer") \
                    from None
        else:
            workers = default_workers()
    if workers < 1:
        raise ConfigError("[experiment] workers: must be >= 1")
    out = Path(exp.get("output_dir", "output"))
    if not out.is_absolute():
        out = Path(os.path.normpath(path.parent / out))
    return ExperimentConfig(kind, params, settings, out, workers, path, notices)


def _convert(kind, key, raw):
    raw = raw.strip()
    if key == "window":
        if raw not in ("rectangular", "hann"):
            raise ValueError("must be rectangular or hann")
        return raw
    if key == "phase_window_s":
        w = parse_grid(raw)
        if w.size != 2 or not w[1] > w[0]:
            raise ValueError("needs two increasing times")
        return (float(w[0]), float(w[1]))
    if key == "n_spins" and kind == "n_sweep":
        grid = parse_log_grid(raw)
        if np.any(grid <= 0):
            raise ValueError("spin numbers must be positive")
        return grid
    if key in ("theta_deg", "spin_offset_hz", "freq_offset_hz", "n_spins"):
        grid = parse_grid(raw)
        if key == "theta_deg" and np.any(grid <= 0):
            raise ValueError("angles must be positive")
        if key == "n_spins" and np.any((grid < 1) | (grid != np.round(grid))):
            raise ValueError("oracle spin numbers must be positive integers")
        if kind in ("fid",) and key == "theta_deg":
            if grid.size != 1:
                raise ValueError("expects a single angle")
            return float(grid[0])
        return grid
    if key in ("samples",):
        v = int(raw)
        if v < 8:
            raise ValueError("must be >= 8")
        return v
    if raw == "":
        return None
    v = float(raw)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    if key in ("baseline_deg", "drive_phase_deg"):
        return v
    if v < 0 or (v == 0 and key not in ("amplitude_hz", "dead_time_s")):
        raise ValueError("must be positive")
    return v


# ---------------------------------------------------------------- runs

@dataclass
class RunResult:
    artifacts: dict = field(default_factory=dict)   # name -> bytes
    sidecars: dict = field(default_factory=dict)    # name -> json-able
    summary: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def add_trace(self, index: int, trace, extra: Optional[dict] = None):
        data = trace.csv_bytes()
        self.artifacts[f"{index}.csv"] = data
        meta = trace.metadata_dict(io.sha256(data))
        if extra:
            meta.update(extra)
        self.sidecars[f"{index}.json"] = meta


def _output_dt(cfg_dt, params):
    return cfg_dt if cfg_dt else sc.default_output_dt(params)


def _run_fid(cfg: ExperimentConfig) -> RunResult:
    s, p = cfg.settings, cfg.params
    res = RunResult()
    phase = math.radians(s["drive_phase_deg"])
    if s["amplitude_hz"] is not None:
        amp = from_hz(s["amplitude_hz"])
        theta = None
    else:
        theta = math.radians(s["theta_deg"])
        amp = sc.calibrate_drive(p, theta, s["pulse_duration_s"], phase)
    drive = sc.DriveEnvelope.rectangular(amp, s["pulse_duration_s"], phase)
    exp = sc.FidExperiment(p, drive, s["t_total_s"], _output_dt(s["output_dt_s"], p),
                           s["dead_time_s"])
    trace = sc.run_fid(exp)
    res.add_trace(0, trace)
    summary = {"drive_amplitude_hz": to_hz(amp), "rabi_splitting_hz": to_hz(rabi_splitting(p))}
    if amp == 0:
        summary["degenerate"] = "zero drive: the system stays in its ground state"
    else:
        try:
            summary["tip_angle_deg"] = math.degrees(sc.tip_angle(trace))
        except sc.TipAngleError as exc:
            summary["tip_angle_deg"] = None
            summary["tip_angle_note"] = str(exc)
        spec = analysis.fid_fft(trace)
        res.artifacts["1.csv"] = spec.csv_bytes()
        res.sidecars["1.json"] = {**spec.to_dict(), "content_sha256": io.sha256(res.artifacts["1.csv"])}
        try:
            summary["splitting_hz"] = analysis.peak_separation(spec)
        except analysis.AnalysisError as exc:
            summary["splitting_hz"] = None
            summary["splitting_note"] = str(exc)
        summary["revivals"] = analysis.count_revivals(trace)
    if theta is not None:
        summary["target_theta_deg"] = s["theta_deg"]
    res.summary = summary
    return res


def _run_power_sweep(cfg: ExperimentConfig) -> RunResult:
    s, p = cfg.settings, cfg.params
    res = RunResult()
    thetas = np.radians(s["theta_deg"])
    sweep = sc.power_sweep(p, thetas, s["pulse_duration_s"], s["t_total_s"],
                           _output_dt(s["output_dt_s"], p), s["dead_time_s"], cfg.workers)
    phases = {}
    for k, trace in enumerate(sweep.traces):
        if trace is None:
            res.failures[f"{k}.csv"] = sweep.failures[k]
            continue
        res.add_trace(k, trace)
        try:
            phases[k] = analysis.emission_phase(trace, s["phase_window_s"])
        except (analysis.AnalysisError, ValueError) as exc:
            res.failures[f"{k}.phase"] = str(exc)
    grid = sweep.in_phase_map()
    k_map = len(sweep.traces)
    ok = [tr for tr in sweep.traces if tr is not None]
    if ok:
        res.artifacts[f"{k_map}.csv"] = io.matrix_csv_bytes(np.nan_to_num(grid))
        res.sidecars[f"{k_map}.json"] = {
            "rows": "theta_deg", "columns": "t_s", "quantity": "in_phase_a",
            "theta_deg": list(s["theta_deg"]), "t_s": ok[0].t,
            "content_sha256": io.sha256(res.artifacts[f"{k_map}.csv"])}
    deg = s["theta_deg"]
    summary = {"theta_deg": list(deg),
               "emission_phase_rad": [phases.get(k) for k in range(len(deg))],
               "drive_amplitude_hz": [None if a is None else to_hz(a) for a in sweep.amplitudes],
               "phase_window_s": list(s["phase_window_s"])}
    below = [k for k in phases if deg[k] < 180.0]
    above = [k for k in phases if deg[k] > 180.0]
    if below and above:
        kb = max(below, key=lambda k: deg[k])
        ka = min(above, key=lambda k: deg[k])
        summary["phase_discontinuity_rad"] = analysis.circular_difference(phases[ka], phases[kb])
        summary["phase_discontinuity_between_deg"] = [deg[kb], deg[ka]]
    res.summary = summary
    return res


def _n_point(args):
    params, theta, pulse, t_total, dt, dead, window = args
    try:
        trace = sc.fid_at_angle(params, theta, t_total, dt or sc.default_output_dt(params),
                                pulse, dead)
    except (sc.CalibrationError, sc.SimulationError, sc.TipAngleError) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"
    try:
        sep = analysis.peak_separation(analysis.fid_fft(trace, window))
    except analysis.AnalysisError as exc:
        return trace, None, str(exc)
    return trace, sep, None


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _run_n_sweep(cfg: ExperimentConfig) -> RunResult:
    s, p = cfg.settings, cfg.params
    res = RunResult()
    ns = s["n_spins"]
    theta = math.radians(float(np.atleast_1d(s["theta_deg"])[0]))
    jobs = [(p.replace(n_spins=float(n)), theta, s["pulse_duration_s"], s["t_total_s"],
             s["output_dt_s"], s["dead_time_s"], s["window"]) for n in ns]
    seps = []
    for k, (trace, sep, err) in enumerate(_map(_n_point, jobs, cfg.workers)):
        if trace is not None:
            res.add_trace(k, trace, {"n_spins": float(ns[k])})
        if err is not None:
            res.failures[f"{k}.csv"] = err
        seps.append(sep)
    summary = {"n_spins": list(ns), "splitting_hz": seps,
               "expected_splitting_hz": [to_hz(rabi_splitting(p.replace(n_spins=float(n))))
                                         for n in ns]}
    good = [k for k, v in enumerate(seps) if v is not None]
    if len(good) >= 2:
        fit = analysis.fit_power_law(ns[good], np.array([seps[k] for k in good]))
        summary["fitted_exponent"] = fit["exponent"]
        summary["fitted_exponent_stderr"] = float(fit.stderr[0])
        summary["fit_points"] = len(good)
    res.summary = summary
    return res


def _run_s11_map(cfg: ExperimentConfig) -> RunResult:
    s, p = cfg.settings, cfg.params
    res = RunResult()
    ws = p.omega_c + from_hz(s["spin_offset_hz"])
    freq = to_hz(p.omega_c) + s["freq_offset_hz"]
    cmap = spectroscopy.avoided_crossing_map(p, ws, freq, s["g_factor"])
    res.artifacts["0.csv"] = io.matrix_csv_bytes(cmap.abs_s11)
    res.sidecars["0.json"] = {"rows": "omega_s", "columns": "freq_hz",
                              "omega_s_hz": to_hz(ws), "field_tesla": cmap.field_tesla,
                              "freq_hz": freq, "g_factor": s["g_factor"],
                              "params": p.to_hz_dict(),
                              "content_sha256": io.sha256(res.artifacts["0.csv"])}
    resonant = p.replace(omega_s=p.omega_c)
    spec = spectroscopy.s11_spectrum(resonant, freq)
    res.artifacts["1.csv"] = spec.csv_bytes()
    res.sidecars["1.json"] = {"params": resonant.to_hz_dict(),
                              "content_sha256": io.sha256(res.artifacts["1.csv"])}
    pair = spectroscopy.polariton_modes(resonant)
    summary = {"polariton_splitting_hz": to_hz(pair.splitting),
               "rabi_splitting_hz": to_hz(rabi_splitting(p))}
    dips = spectroscopy.find_dips(spec)
    if len(dips) == 2:
        summary["dip_separation_hz"] = abs(dips[1].freq_hz - dips[0].freq_hz)
        summary["dip_fwhm_hz"] = [d.fwhm_hz for d in dips]
    else:
        res.failures["1.csv"] = "fewer than two dips on resonance"
    res.summary = summary
    return res


def _run_delay_fit(cfg: ExperimentConfig) -> RunResult:
    s, p = cfg.settings, cfg.params
    res = RunResult()
    degs = np.concatenate([[s["baseline_deg"]], s["theta_deg"]])
    sweep = sc.power_sweep(p, np.radians(degs), s["pulse_duration_s"], s["t_total_s"],
                           _output_dt(s["output_dt_s"], p), s["dead_time_s"], cfg.workers)
    for k, trace in enumerate(sweep.traces):
        if trace is None:
            res.failures[f"{k}.csv"] = sweep.failures[k]
        else:
            res.add_trace(k, trace)
    base = sweep.traces[0]
    delays = {}
    if base is not None:
        for k in range(1, degs.size):
            if sweep.traces[k] is None:
                continue
            try:
                delays[k] = analysis.delay_time(sweep.traces[k], base)
            except analysis.AnalysisError as exc:
                res.failures[f"{k}.delay"] = str(exc)
    summary = {"baseline_deg": float(degs[0]), "theta_deg": list(degs[1:]),
               "delay_s": [delays.get(k) for k in range(1, degs.size)]}
    keys = sorted(delays)
    if len(keys) >= 4:
        try:
            fit = analysis.fit_delay_model(np.radians(degs[keys]), [delays[k] for k in keys])
            summary["fitted_gamma_per_s"] = fit["gamma"]
            summary["fitted_gamma_over_2pi_hz"] = fit.extra["gamma_over_2pi_hz"]
            summary["fitted_t0_s"] = fit["t0"]
            summary["r_squared"] = fit.r_squared
            res.artifacts[f"{degs.size}.csv"] = io.csv_bytes(
                ["theta_deg", "delay_s", "model_s"],
                [degs[keys], [delays[k] for k in keys],
                 analysis.delay_model(np.radians(degs[keys]), fit["gamma"], fit["t0"])])
            res.sidecars[f"{degs.size}.json"] = {
                **fit.to_dict(), "content_sha256": io.sha256(res.artifacts[f"{degs.size}.csv"])}
        except (analysis.FitError, ValueError) as exc:
            res.failures["fit"] = str(exc)
    else:
        res.failures["fit"] = "fewer than 4 delays available"
    res.summary = summary
    return res


def _oracle_point(args):
    n, theta, G, periods, samples = args
    c = oracle.compare_with_semiclassical(n, theta, G, periods, samples)
    return c.semiclassical, c.exact, c.deviation, c.extremum_time


def _run_oracle_compare(cfg: ExperimentConfig) -> RunResult:
    s = cfg.settings
    res = RunResult()
    ns = [int(n) for n in s["n_spins"]]
    theta = math.radians(float(np.atleast_1d(s["theta_deg"])[0]))
    G = from_hz(s["collective_g_hz"])
    jobs = [(n, theta, G, s["periods"], s["samples"]) for n in ns]
    devs, times = [], []
    for k, out in enumerate(_map(_oracle_point, jobs, cfg.workers)):
        trace, qtrace, dev, t_ext = out
        res.add_trace(2 * k, trace, {"n_spins": ns[k], "oracle": False})
        res.add_trace(2 * k + 1, qtrace, {"n_spins": ns[k], "oracle": True})
        devs.append(dev)
        times.append(t_ext)
    res.summary = {"n_spins": ns, "relative_deviation": devs, "extremum_time_s": times,
                   "monotone_decrease": bool(all(b < a for a, b in zip(devs, devs[1:])))}
    return res


RUNNERS = {"fid": _run_fid, "power_sweep": _run_power_sweep, "n_sweep": _run_n_sweep,
           "s11_map": _run_s11_map, "delay_fit": _run_delay_fit,
           "oracle_compare": _run_oracle_compare}


def _timestamp() -> str:
    return time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())


def execute(cfg: ExperimentConfig, tag: Optional[str] = None):
    """Run a parsed config; returns (exit code, run directory)."""
    base = cfg.output_dir / cfg.kind
    stamp = tag or _timestamp()
    run_dir = base / stamp
    n = 1
    while run_dir.exists():
        run_dir = base / f"{stamp}-{n}"
        n += 1
    run_dir.mkdir(parents=True)
    for note in cfg.notices:
        log.info(note)
    started = time.perf_counter()
    try:
        res = RUNNERS[cfg.kind](cfg)
    except Exception as exc:  # a whole-run failure still leaves a manifest
        log.error("run failed: %s", exc)
        res = RunResult(failures={"run": f"{type(exc).__name__}: {exc}"})
    outputs = []
    for name in sorted(res.artifacts, key=_natural):
        h = io.write_bytes(run_dir / name, res.artifacts[name])
        outputs.append({"path": name, "sha256": h})
    for name in sorted(res.sidecars, key=_natural):
        h = io.write_json(run_dir / name, res.sidecars[name])
        outputs.append({"path": name, "sha256": h})
    outputs.sort(key=lambda o: _natural(o["path"]))
    manifest = {"kind": cfg.kind, "params": cfg.params.to_hz_dict(),
                "settings": cfg.settings, "outputs": outputs,
                "failures": dict(sorted(res.failures.items()))}
    io.write_json(run_dir / "manifest.json", manifest)
    summary = {"kind": cfg.kind, "run": run_dir.name, "ok": not res.failures,
               "n_failures": len(res.failures), "notices": cfg.notices,
               "workers": cfg.workers, "elapsed_s": time.perf_counter() - started,
               **res.summary}
    io.write_json(run_dir / "summary.json", summary)
    (base / "latest").write_text(run_dir.name + "\n")
    return (EXIT_RUN_FAILURE if res.failures else EXIT_OK), run_dir


def _natural(name: str):
    stem, _, ext = name.partition(".")
    return (0, int(stem), ext) if stem.isdigit() else (1, stem, ext)


# ---------------------------------------------------------------- entry points

def list_presets(stream=None) -> str:
    lines = []
    for name, (factory, notes) in PRESETS.items():
        lines.append(f"{name}")
        for key, value in factory().to_hz_dict().items():
            lines.append(f"  {key:<16} {value:<22.10g} # {notes.get(key, '')}")
    text = "\n".join(lines) + "\n"
    (stream or sys.stdout).write(text)
    return text


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="simulate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default: config, then ${WORKERS_ENV}, then 1)")
    p_run.add_argument("--tag", default=None, help="run directory name instead of a timestamp")
    sub.add_parser("presets", help="list parameter presets")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "presets":
        list_presets()
        return EXIT_OK
    try:
        cfg = load_config(args.config, getattr(args, "workers", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    if args.command == "validate":
        flags = validate(cfg.params)
        print(f"ok: kind={cfg.kind} strong_coupling={flags['strong_coupling']} "
              f"high_cooperativity={flags['high_cooperativity']}")
        for note in cfg.notices:
            print(f"notice: {note}")
        return EXIT_OK
    code, run_dir = execute(cfg, args.tag)
    print(run_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
