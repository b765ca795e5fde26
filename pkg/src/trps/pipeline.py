"""Scenario orchestration: trajectory -> correlations -> spectra -> files."""

from __future__ import annotations

import logging
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import ScenarioConfig, dumps
from .correlations import CorrelationTrace, correlation_future, correlation_past, default_tau_step_ps, rate_eigenvalues
from .errors import InvariantViolation, NoPeaks
from .model import HBAR, simulate
from .peaks import analyze_peaks, oscillation_period
from .probe import discrepancy_report, fano_probe, format_report
from .spectrum import (
    SpectrometerParams,
    default_nu_grid,
    energy_band,
    energy_integrated_intensity,
    integration_horizon_ps,
    sampling_step_limit_ps,
    time_integrated_direct,
    time_integrated_spectrum,
    tls_time_integrated,
    tls_trps,
    trps,
)

log = logging.getLogger(__name__)

TRUNCATION_TOL = 1e-8
MANIFEST = "manifest.txt"


@dataclass
class Manifest:
    """Files emitted by one run, relative to the output root."""

    root: Path
    files: list = field(default_factory=list)
    plots: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def hashes(self) -> dict:
        return {f: io.sha256(self.root / f) for f in self.files}


class _Writer:
    """Collects files written under ``<tmp>/<scenario>`` and their plot specs."""

    def __init__(self, base: Path, scenario: str):
        self.base = base
        self.scenario = scenario
        self.dir = base / scenario
        self.dir.mkdir(parents=True)
        self.files = []
        self.plots = []

    def path(self, name: str) -> Path:
        self.files.append(f"{self.scenario}/{name}")
        return self.dir / name

    def plot(self, name: str, spec: dict) -> None:
        self.plots.append((f"{self.scenario}/{name}.plot", spec))


def _gs_tag(gs: float) -> str:
    return f"gs{gs:g}"


def _trajectory_step(cfg: ScenarioConfig, gs: float) -> float:
    if cfg.grids.trajectory_step_ps is not None:
        return cfg.grids.trajectory_step_ps
    p = cfg.params
    limit = sampling_step_limit_ps(p, gs)
    prop = 0.5 / p.gamma_max * HBAR if p.gamma_max > 0 else np.inf
    return float(min(limit, 0.99 * prop))


def _window_ps(cfg: ScenarioConfig, gs: float):
    """Spectrogram window; returns (t_max, truncated)."""
    if cfg.grids.t_max_ps is not None:
        return cfg.grids.t_max_ps, False
    horizon = integration_horizon_ps(cfg.params, gs)
    period = cfg.params.rabi_period_ps
    cap = max(20 * period if np.isfinite(period) else 0.0, 20 * HBAR / gs)
    return (horizon, False) if horizon <= cap else (cap, True)


def _time_axis(t_max, h, count):
    n = int(np.ceil(t_max / h - 1e-9))
    times = np.arange(n + 1) * h
    idx = np.unique(np.rint(np.linspace(0, n, min(count, n + 1))).astype(int))
    return times, times[idx]


def _nu_grid(cfg: ScenarioConfig, gs: float):
    p = cfg.params
    if cfg.grids.nu_halfwidth_ueV is None:
        return default_nu_grid(p, gs, cfg.grids.nu_count)
    c = 0.5 * (p.omega_21 + p.omega_c)
    w = cfg.grids.nu_halfwidth_ueV
    return np.linspace(c - w, c + w, cfg.grids.nu_count)


def _params_meta(cfg: ScenarioConfig) -> dict:
    meta = {"scenario": cfg.name}
    for k, v in vars(cfg.params).items():
        meta[f"params.{k}"] = repr(float(v))
    meta["fano_ordering"] = cfg.outputs.fano_ordering
    meta["truncation"] = cfg.outputs.truncation
    return meta


def _heatmap(data, title):
    return {"kind": "heatmap", "data": data, "x": "nu_ueV", "y": "t_ps", "z": "S", "normalize": "max",
            "title": title}


def _lines(data, x, ys, title, xlabel, ylabel):
    return {"kind": "lines", "data": data, "x": x, "y": ", ".join(ys), "title": title,
            "xlabel": xlabel, "ylabel": ylabel}


def _write_trajectory(w: _Writer, cfg, traj, summary):
    p = cfg.params
    io.write_table(
        w.path("trajectory.csv"),
        ["t_ps", "n_cav", "n_tls", "coh_re", "coh_im", "source_ueV"],
        [traj.times, traj.n_cav.real, traj.n_tls.real, traj.coh.real, traj.coh.imag, traj.source(p)],
    )
    w.plot("trajectory", _lines(f"{w.scenario}/trajectory.csv", "t_ps", ["n_cav", "n_tls"],
                                "expectation values", "t (ps)", "population"))
    meta = _params_meta(cfg)
    meta["rabi_period_ps"] = repr(p.rabi_period_ps)
    try:
        measured = oscillation_period(traj.times, traj.n_cav.real)
        meta["n_cav_period_ps"] = repr(measured)
        summary["n_cav_period_ps"] = measured
    except NoPeaks:
        meta["n_cav_period_ps"] = "nan"
    summary["rabi_period_ps"] = p.rabi_period_ps
    io.write_meta(w.path("trajectory.meta"), meta)


def _write_correlations(w: _Writer, cfg, traj):
    o, g = cfg.outputs, cfg.grids
    step = g.tau_step_ps or default_tau_step_ps(cfg.params)
    tau_max = g.tau_max_ps or (max(o.correlation_times_ps) + cfg.params.rabi_period_ps
                               if np.isfinite(cfg.params.rabi_period_ps) else max(o.correlation_times_ps) * 2)
    tau = np.arange(int(np.ceil(tau_max / step)) + 1) * step
    for pair in o.correlation_pairs:
        mu, mup = pair.split("-")
        for k, s in enumerate(o.correlation_times_ps):
            past = correlation_past(cfg.params, traj, s, tau, mu, mup)
            future = correlation_future(cfg.params, traj, s, tau, mu, mup)
            trace = CorrelationTrace.concatenate(past, future)
            name = f"correlation_{pair}_s{k}"
            trace.to_csv(w.path(f"{name}.csv"))
            meta = _params_meta(cfg)
            meta.update({"product": "correlation", "s_ps": repr(float(s)), "mu": mu, "mu_prime": mup,
                         "convention": "<O_mu^dag(s + tau') O_mu'(s)>"})
            io.write_meta(w.path(f"{name}.meta"), meta)
            w.plot(name, _lines(f"{w.scenario}/{name}.csv", "tau_prime_ps", ["re", "im"],
                                f"correlation {pair} at s = {s:.4g} ps", "tau' (ps)", "correlation"))


def _peak_rows(nu, values, prominence):
    rows = []
    for row in values:
        try:
            r = analyze_peaks(nu, row, prominence)
            sep = r.doublet_separation
            rows.append((r.count, r.main.position, np.nan if sep is None else sep))
        except NoPeaks:
            rows.append((0, np.nan, np.nan))
    return np.array(rows, dtype=float).reshape(-1, 3)


def _write_spectra(w: _Writer, cfg, gs, summary):
    o = cfg.outputs
    p = cfg.params
    sp = SpectrometerParams(gs)
    tag = _gs_tag(gs)
    h = _trajectory_step(cfg, gs)
    t_max, truncated = _window_ps(cfg, gs)
    times, t_out = _time_axis(t_max, h, cfg.grids.t_out_count)
    _, traj = simulate(p, times, o.truncation, o.fano_ordering, cfg.populations_dict())
    nu = _nu_grid(cfg, gs)
    wants = set(o.products)
    for ch in o.channels:
        base = f"{ch}_{tag}"
        if "spectrogram" in wants or "peaks" in wants:
            spec = trps(p, sp, traj, nu, t_out, method=o.method, workers=o.workers, channel=ch)
            spec.extra.update({"window_truncated": truncated, "trajectory_step_ps": repr(h)})
            if "spectrogram" in wants:
                spec.to_csv(w.path(f"spectrogram_{base}.csv"))
                spec.to_matrix_csv(w.path(f"spectrogram_{base}_matrix.csv"))
                spec.write_meta(w.path(f"spectrogram_{base}.meta"))
                w.plot(f"spectrogram_{base}", _heatmap(f"{w.scenario}/spectrogram_{base}_matrix.csv",
                                                       f"S(nu, t), {ch}, Gamma_s = {gs:g} ueV"))
            if "peaks" in wants:
                rows = _peak_rows(nu, spec.values, o.peak_prominence)
                io.write_table(w.path(f"peaks_t_{base}.csv"), ["t_ps", "n_peaks", "main_ueV", "doublet_separation_ueV"],
                               [t_out, rows[:, 0], rows[:, 1], rows[:, 2]])
        if "time_integrated" in wants or "peaks" in wants:
            if traj.generator is not None:
                ti = time_integrated_direct(p, sp, nu, traj.generator, traj.vector()[0], channel=ch)
            else:
                full = trps(p, sp, traj, nu, traj.times, method=o.method, workers=o.workers, channel=ch)
                ti = time_integrated_spectrum(full)
            if "time_integrated" in wants:
                cols, head = [nu, ti], ["nu_ueV", "S_time_integrated"]
                if "tls_reference" in wants:
                    cols.append(tls_time_integrated(p, sp, nu))
                    head.append("tls_lorentzian")
                io.write_table(w.path(f"time_integrated_{base}.csv"), head, cols)
                w.plot(f"time_integrated_{base}", _lines(f"{w.scenario}/time_integrated_{base}.csv", "nu_ueV",
                                                         head[1:], f"time-integrated, {ch}, Gamma_s = {gs:g} ueV",
                                                         "nu (ueV)", "intensity"))
            if "peaks" in wants:
                try:
                    r = analyze_peaks(nu, ti, o.peak_prominence)
                    pk = r.peaks
                    summary[f"ti_doublet_separation_{base}"] = r.doublet_separation
                except NoPeaks:
                    pk = ()
                io.write_table(w.path(f"peaks_ti_{base}.csv"), ["position_ueV", "height", "prominence"],
                               [[x.position for x in pk], [x.height for x in pk], [x.prominence for x in pk]])
        if "energy_integrated" in wants:
            c = 0.5 * (p.omega_21 + p.omega_c)
            span = 12 * energy_band(p, gs)
            wide = np.linspace(c - span, c + span, cfg.grids.energy_nu_count)
            spec_w = trps(p, sp, traj, wide, t_out, method=o.method, workers=o.workers, channel=ch)
            ei = energy_integrated_intensity(spec_w, tail=traj.generator is not None,
                                             generator=traj.generator, y0=traj.vector()[0],
                                             truncation=o.truncation, fano_ordering=o.fano_ordering,
                                             populations=cfg.populations_dict())
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(ei.reference > 0, np.abs(ei.quadrature - ei.reference) / ei.reference, 0.0)
            io.write_table(w.path(f"energy_integrated_{base}.csv"),
                           ["t_ps", "quadrature_ueV", "reference_ueV", "relative_error"],
                           [t_out, ei.quadrature, ei.reference, rel])
            summary[f"energy_identity_max_rel_{base}"] = float(rel.max())
            w.plot(f"energy_integrated_{base}", _lines(f"{w.scenario}/energy_integrated_{base}.csv", "t_ps",
                                                       ["quadrature_ueV", "reference_ueV"],
                                                       f"energy-integrated, {ch}, Gamma_s = {gs:g} ueV",
                                                       "t (ps)", "intensity (ueV)"))
        if "tls_reference" in wants:
            ref = tls_trps(p, sp, nu, t_out)
            ref.to_matrix_csv(w.path(f"tls_reference_{tag}_matrix.csv"))
            if "spectrogram" in wants:
                dev = np.abs(spec.values - ref.values).max() / np.abs(ref.values).max()
                summary[f"tls_oracle_max_rel_{base}"] = float(dev)


def _write_fano(w: _Writer, cfg):
    nu = _nu_grid(cfg, max(cfg.gamma_s))
    g = cfg.params.g_mag
    phases = cfg.outputs.fano_phases_rad
    for gs in cfg.gamma_s:
        tag = _gs_tag(gs)
        cols, head = [nu], ["nu_ueV"]
        probes = [fano_probe(g, gs, phi, nu) for phi in phases]
        for k, f in enumerate(probes):
            cols += [f.values.real, f.values.imag, f.intensity]
            head += [f"re_phi{k}", f"im_phi{k}", f"abs2_phi{k}"]
        io.write_table(w.path(f"fano_probe_{tag}.csv"), head, cols)
        meta = {"product": "fano_probe", "g_mag_ueV": repr(g), "gamma_s_ueV": repr(gs)}
        meta.update({f"phi{k}_rad": repr(float(phi)) for k, phi in enumerate(phases)})
        io.write_meta(w.path(f"fano_probe_{tag}.meta"), meta)
        w.plot(f"fano_probe_{tag}", _lines(f"{w.scenario}/fano_probe_{tag}.csv", "nu_ueV",
                                           [f"abs2_phi{k}" for k in range(len(phases))],
                                           f"|F_phi|^2, Gamma_s = {gs:g} ueV", "nu (ueV)", "|F|^2"))
        rows = discrepancy_report(g, gs, phases, nu, quadrature=probes)
        (w.path(f"fano_discrepancy_{tag}.csv")).write_text(format_report(rows), encoding="utf-8", newline="\n")


def _check_truncation(cfg, traj):
    o = cfg.outputs
    if o.truncation != "n1":
        return 0.0
    _, other = simulate(cfg.params, traj.times, "n2", o.fano_ordering, cfg.populations_dict())
    delta = float(np.abs(other.vector() - traj.vector()).max())
    if delta >= TRUNCATION_TOL:
        raise InvariantViolation(f"n2 truncation changes expectations by {delta:.3e}")
    return delta


def _execute(cfg: ScenarioConfig, w: _Writer) -> dict:
    o = cfg.outputs
    summary = {}
    wants = set(o.products)
    needs_traj = wants - {"fano_probe"}
    if needs_traj:
        h = min(_trajectory_step(cfg, gs) for gs in cfg.gamma_s)
        if "correlations" in wants and cfg.grids.tau_step_ps is None:
            h = min(h, default_tau_step_ps(cfg.params))
        t_max = max(_window_ps(cfg, gs)[0] for gs in cfg.gamma_s)
        if o.correlation_times_ps:
            t_max = max(t_max, max(o.correlation_times_ps))
        times, _ = _time_axis(t_max, h, 2)
        _, traj = simulate(cfg.params, times, o.truncation, o.fano_ordering, cfg.populations_dict())
        summary["truncation_delta"] = _check_truncation(cfg, traj)
        if "trajectory" in wants:
            _write_trajectory(w, cfg, traj, summary)
        if "correlations" in wants:
            _write_correlations(w, cfg, traj)
        if wants & {"spectrogram", "time_integrated", "energy_integrated", "peaks", "tls_reference"}:
            rates = rate_eigenvalues(cfg.params)
            summary["splitting_ueV"] = float(rates.splitting)
            for gs in cfg.gamma_s:
                _write_spectra(w, cfg, gs, summary)
    if "fano_probe" in wants:
        _write_fano(w, cfg)
    (w.path("config.ini")).write_text(dumps(cfg), encoding="utf-8", newline="\n")
    io.write_meta(w.path("summary.meta"), {k: repr(v) for k, v in sorted(summary.items())})
    return summary


def emit_plot_scripts(manifest: Manifest) -> list:
    """Write the declarative ``.plot`` files; every referenced file must exist."""
    written = []
    if not manifest.plots:
        log.warning("manifest lists no plottable products; no plot files written")
        return written
    for rel, spec in manifest.plots:
        data = manifest.root / spec["data"]
        if not data.is_file():
            raise FileNotFoundError(f"plot {rel} references missing file {spec['data']}")
        text = "".join(f"{k} = {v}\n" for k, v in spec.items())
        (manifest.root / rel).write_text(text, encoding="utf-8", newline="\n")
        written.append(rel)
    return written


def write_manifest(root: Path) -> Path:
    """sha256 of every file under ``root`` except the manifest itself, sorted by path."""
    root = Path(root)
    lines = []
    for f in sorted(p for p in root.rglob("*") if p.is_file() and p.name != MANIFEST):
        rel = f.relative_to(root).as_posix()
        if rel.startswith("."):
            continue
        lines.append(f"{io.sha256(f)}  {rel}")
    path = root / MANIFEST
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8", newline="\n")
    return path


def run_scenario(cfg: ScenarioConfig, output_dir) -> Manifest:
    """Run one scenario into ``output_dir/<name>``, replacing an earlier run.

    Everything is written to a temporary sibling first, so a failure leaves
    no partial output behind.
    """
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{cfg.name}-", dir=root))
    try:
        w = _Writer(tmp, cfg.name)
        summary = _execute(cfg, w)
        staged = Manifest(tmp, list(w.files), list(w.plots), summary)
        staged.files += emit_plot_scripts(staged)
        final = root / cfg.name
        if final.exists():
            shutil.rmtree(final)
        (tmp / cfg.name).rename(final)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    write_manifest(root)
    return Manifest(root, sorted(staged.files), staged.plots, summary)
