"""Scenario configuration: sectioned ``key = value`` files and built-in presets.

Keys carry their unit in the name (``kappa_ueV``, ``t_max_ps``).  A value may
repeat the unit as a suffix (``50 ueV``, ``50 µeV``, ``20.68 ps``); any other
suffix is rejected.  Lists are comma separated.  Optional grid entries accept
``auto``, which lets the run derive them from the parameters.
"""

from __future__ import annotations

import configparser
import dataclasses
import io as _io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import DEFAULT_FANO_ORDERING, FANO_ORDERINGS, HBAR, TRUNCATIONS, SystemParams
from .spectrum import SPECTRAL_CHANNELS

PRODUCTS = (
    "trajectory",
    "spectrogram",
    "time_integrated",
    "energy_integrated",
    "correlations",
    "peaks",
    "tls_reference",
    "fano_probe",
)
METHODS = ("auto", "exact", "trapezoid")
POPULATION_LABELS = ("g0", "g1", "e0", "e1", "g2", "e2")

# config key -> (SystemParams field, unit, lower, upper)
_PARAM_KEYS = {
    "g_mag_ueV": ("g_mag", "ueV", 0.0, np.inf),
    "g_phase_rad": ("g_phase", None, -np.inf, np.inf),
    "kappa_ueV": ("kappa", "ueV", 0.0, np.inf),
    "gamma_ueV": ("gamma", "ueV", 0.0, np.inf),
    "gamma_ph_ueV": ("gamma_ph", "ueV", 0.0, np.inf),
    "eta": ("eta", None, 0.0, 1.0),
    "theta_rad": ("theta", None, -np.inf, np.inf),
    "omega_21_ueV": ("omega_21", "ueV", -np.inf, np.inf),
    "omega_c_ueV": ("omega_c", "ueV", -np.inf, np.inf),
}


@dataclass(frozen=True)
class GridConfig:
    trajectory_step_ps: Optional[float] = None
    t_max_ps: Optional[float] = None
    t_out_count: int = 241
    nu_count: int = 601
    nu_halfwidth_ueV: Optional[float] = None
    energy_nu_count: int = 4001
    tau_step_ps: Optional[float] = None
    tau_max_ps: Optional[float] = None


@dataclass(frozen=True)
class OutputConfig:
    products: tuple = ("trajectory", "spectrogram", "time_integrated", "energy_integrated", "peaks")
    channels: tuple = ("total",)
    correlation_times_ps: tuple = ()
    correlation_pairs: tuple = ("a-a",)
    fano_phases_rad: tuple = (0.0, -np.pi / 4, -np.pi / 2)
    peak_prominence: float = 1e-3
    method: str = "auto"
    workers: int = 1
    truncation: str = "n1"
    fano_ordering: str = DEFAULT_FANO_ORDERING


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    params: SystemParams = field(default_factory=SystemParams)
    gamma_s: tuple = (5.0,)
    grids: GridConfig = field(default_factory=GridConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    populations: tuple = (("e0", 1.0),)
    preset: Optional[str] = None

    def populations_dict(self) -> dict:
        return dict(self.populations)


# -- parsing helpers ----------------------------------------------------------


def _strip_unit(key, raw, unit):
    text = raw.strip()
    for suffix in ("µeV", "ueV", "ps"):
        if text.endswith(suffix):
            found = "ueV" if suffix == "µeV" else suffix
            if found != unit:
                raise ConfigError(key, f"unit {suffix!r} not allowed here (expected {unit or 'no unit'})")
            return text[: -len(suffix)].strip()
    return text


def _float(key, raw, unit=None, lo=-np.inf, hi=np.inf, lo_open=False):
    text = _strip_unit(key, raw, unit)
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if not np.isfinite(value):
        raise ConfigError(key, "must be finite")
    if value < lo or value > hi or (lo_open and value == lo):
        left = "(" if lo_open else "["
        raise ConfigError(key, f"{value} outside accepted range {left}{lo}, {hi}]")
    return value


def _optional_float(key, raw, unit, lo_open=True):
    if raw.strip().lower() in ("auto", ""):
        return None
    return _float(key, raw, unit, 0.0, np.inf, lo_open=lo_open)


def _int(key, raw, lo, hi=10**7):
    try:
        value = int(raw.strip())
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if not lo <= value <= hi:
        raise ConfigError(key, f"{value} outside accepted range [{lo}, {hi}]")
    return value


def _list(raw):
    return tuple(x.strip() for x in raw.split(",") if x.strip())


def _choice(key, raw, allowed):
    value = raw.strip()
    if value not in allowed:
        raise ConfigError(key, f"{value!r} not one of {', '.join(allowed)}")
    return value


def _fmt(x) -> str:
    return repr(float(x))


def _fmt_opt(x) -> str:
    return "auto" if x is None else repr(float(x))


# -- text <-> config ----------------------------------------------------------


_SECTIONS = {
    "scenario": {"name", "preset"},
    "params": set(_PARAM_KEYS),
    "spectrometer": {"gamma_s_ueV"},
    "grids": {f.name for f in dataclasses.fields(GridConfig)},
    "outputs": {f.name for f in dataclasses.fields(OutputConfig)},
    "initial": set(POPULATION_LABELS),
}


def to_sections(cfg: ScenarioConfig) -> dict:
    """Nested dict of strings, the exact content written by ``dumps``."""
    g, o = cfg.grids, cfg.outputs
    sec = {
        "scenario": {"name": cfg.name},
        "params": {k: _fmt(getattr(cfg.params, f)) for k, (f, *_rest) in _PARAM_KEYS.items()},
        "spectrometer": {"gamma_s_ueV": ", ".join(_fmt(x) for x in cfg.gamma_s)},
        "grids": {
            "trajectory_step_ps": _fmt_opt(g.trajectory_step_ps),
            "t_max_ps": _fmt_opt(g.t_max_ps),
            "t_out_count": str(g.t_out_count),
            "nu_count": str(g.nu_count),
            "nu_halfwidth_ueV": _fmt_opt(g.nu_halfwidth_ueV),
            "energy_nu_count": str(g.energy_nu_count),
            "tau_step_ps": _fmt_opt(g.tau_step_ps),
            "tau_max_ps": _fmt_opt(g.tau_max_ps),
        },
        "outputs": {
            "products": ", ".join(o.products),
            "channels": ", ".join(o.channels),
            "correlation_times_ps": ", ".join(_fmt(x) for x in o.correlation_times_ps),
            "correlation_pairs": ", ".join(o.correlation_pairs),
            "fano_phases_rad": ", ".join(_fmt(x) for x in o.fano_phases_rad),
            "peak_prominence": _fmt(o.peak_prominence),
            "method": o.method,
            "workers": str(o.workers),
            "truncation": o.truncation,
            "fano_ordering": o.fano_ordering,
        },
        "initial": {k: _fmt(v) for k, v in cfg.populations},
    }
    if cfg.preset is not None:
        sec["scenario"]["preset"] = cfg.preset
    return sec


def from_sections(sec: dict) -> ScenarioConfig:
    """Validate a nested string dict; errors name the ``section.key`` path."""
    for name, body in sec.items():
        if name not in _SECTIONS:
            raise ConfigError(name, f"unknown section; expected one of {', '.join(_SECTIONS)}")
        for key in body:
            if key not in _SECTIONS[name]:
                raise ConfigError(f"{name}.{key}", "unknown key")

    def get(section, key, default=None):
        body = sec.get(section, {})
        if key in body:
            return body[key]
        if default is None:
            raise ConfigError(f"{section}.{key}", "missing")
        return default

    scen = sec.get("scenario", {})
    name = scen.get("name", "").strip()
    if not name or any(c in name for c in "/\\") or name.startswith("."):
        raise ConfigError("scenario.name", "must be a non-empty plain directory name")

    values = {}
    defaults = SystemParams()
    for key, (fname, unit, lo, hi) in _PARAM_KEYS.items():
        raw = get("params", key, _fmt(getattr(defaults, fname)))
        values[fname] = _float(f"params.{key}", raw, unit, lo, hi)
    params = SystemParams(**values)

    gs_raw = _list(get("spectrometer", "gamma_s_ueV", "5.0"))
    if not gs_raw:
        raise ConfigError("spectrometer.gamma_s_ueV", "needs at least one value")
    gamma_s = tuple(_float("spectrometer.gamma_s_ueV", x, "ueV", 0.0, np.inf, lo_open=True) for x in gs_raw)

    gd = GridConfig()
    gk = lambda k: f"grids.{k}"  # noqa: E731
    grids = GridConfig(
        trajectory_step_ps=_optional_float(gk("trajectory_step_ps"), get("grids", "trajectory_step_ps", "auto"), "ps"),
        t_max_ps=_optional_float(gk("t_max_ps"), get("grids", "t_max_ps", "auto"), "ps"),
        t_out_count=_int(gk("t_out_count"), get("grids", "t_out_count", str(gd.t_out_count)), 2),
        nu_count=_int(gk("nu_count"), get("grids", "nu_count", str(gd.nu_count)), 3),
        nu_halfwidth_ueV=_optional_float(gk("nu_halfwidth_ueV"), get("grids", "nu_halfwidth_ueV", "auto"), "ueV"),
        energy_nu_count=_int(gk("energy_nu_count"), get("grids", "energy_nu_count", str(gd.energy_nu_count)), 3),
        tau_step_ps=_optional_float(gk("tau_step_ps"), get("grids", "tau_step_ps", "auto"), "ps"),
        tau_max_ps=_optional_float(gk("tau_max_ps"), get("grids", "tau_max_ps", "auto"), "ps"),
    )

    od = OutputConfig()
    ok = lambda k: f"outputs.{k}"  # noqa: E731
    products = _list(get("outputs", "products", ", ".join(od.products)))
    for p in products:
        _choice(ok("products"), p, PRODUCTS)
    channels = _list(get("outputs", "channels", ", ".join(od.channels)))
    for c in channels:
        _choice(ok("channels"), c, SPECTRAL_CHANNELS)
    pairs = _list(get("outputs", "correlation_pairs", ", ".join(od.correlation_pairs)))
    for pair in pairs:
        parts = pair.split("-")
        if len(parts) != 2 or any(x not in ("a", "sigma") for x in parts):
            raise ConfigError(ok("correlation_pairs"), f"{pair!r} must look like a-a or sigma-a")
    times_raw = _list(get("outputs", "correlation_times_ps", ""))
    corr_times = tuple(_float(ok("correlation_times_ps"), x, "ps", 0.0) for x in times_raw)
    if "correlations" in products and not corr_times:
        raise ConfigError(ok("correlation_times_ps"), "required when products include correlations")
    phases = tuple(_float(ok("fano_phases_rad"), x) for x in _list(get("outputs", "fano_phases_rad", ", ".join(map(_fmt, od.fano_phases_rad)))))
    outputs = OutputConfig(
        products=products,
        channels=channels or od.channels,
        correlation_times_ps=corr_times,
        correlation_pairs=pairs,
        fano_phases_rad=phases,
        peak_prominence=_float(ok("peak_prominence"), get("outputs", "peak_prominence", _fmt(od.peak_prominence)), None, 0.0, 1.0, lo_open=True),
        method=_choice(ok("method"), get("outputs", "method", od.method), METHODS),
        workers=_int(ok("workers"), get("outputs", "workers", str(od.workers)), 1, 256),
        truncation=_choice(ok("truncation"), get("outputs", "truncation", od.truncation), tuple(TRUNCATIONS)),
        fano_ordering=_choice(ok("fano_ordering"), get("outputs", "fano_ordering", od.fano_ordering), FANO_ORDERINGS),
    )

    init = sec.get("initial") or {"e0": "1.0"}
    pops = tuple((k, _float(f"initial.{k}", v, None, 0.0, 1.0)) for k, v in init.items())
    if abs(sum(v for _, v in pops) - 1.0) > 1e-10:
        raise ConfigError("initial", "populations must sum to 1")
    n_max = TRUNCATIONS[outputs.truncation]
    for k, _ in pops:
        if int(k[1:]) > n_max:
            raise ConfigError(f"initial.{k}", f"photon number exceeds truncation {outputs.truncation}")

    preset = scen.get("preset")
    return ScenarioConfig(name, params, gamma_s, grids, outputs, pops, preset.strip() if preset else None)


def dumps(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_dict(to_sections(cfg))
    buf = _io.StringIO()
    parser.write(buf)
    return buf.getvalue().rstrip("\n") + "\n"


def loads(text: str) -> ScenarioConfig:
    return from_sections(_parse(text))


def _parse(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    return {s: dict(parser[s]) for s in parser.sections()}


def apply_overrides(sections: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings to a nested dict (copied)."""
    out = {k: dict(v) for k, v in sections.items()}
    for item in overrides or ():
        path, sep, value = item.partition("=")
        section, dot, key = path.strip().partition(".")
        if not sep or not dot or not key:
            raise ConfigError(item, "override must look like section.key=value")
        out.setdefault(section, {})[key] = value.strip()
    return out


def load_config(source, overrides=()) -> ScenarioConfig:
    """Load a preset by name or a config file by path, then apply overrides."""
    source = str(source)
    if source in PRESETS:
        sections = to_sections(PRESETS[source])
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError("config", f"{source!r} is neither a preset nor a readable file")
        sections = _parse(path.read_text(encoding="utf-8"))
    return from_sections(apply_overrides(sections, overrides))


# -- presets ------------------------------------------------------------------

_FIG1 = SystemParams(g_mag=100.0, kappa=50.0, gamma=0.05, gamma_ph=0.0, eta=0.0)
_FIG1_PERIOD = 2 * np.pi * HBAR / (2 * _FIG1.g_mag)
_FIG3 = SystemParams(g_mag=1.0, kappa=50.0, gamma=0.05, gamma_ph=30.0, eta=1.0, theta=np.pi / 2,
                     omega_21=-70.0, omega_c=0.0)
_TLS = SystemParams(g_mag=0.0, kappa=0.0, gamma=50.0, gamma_ph=0.0, eta=0.0)

_SPECTRA = ("trajectory", "spectrogram", "time_integrated", "energy_integrated", "peaks")


def _fig1(gs):
    return ScenarioConfig(
        f"fig1_res{gs:g}", _FIG1, (float(gs),),
        outputs=OutputConfig(products=_SPECTRA, channels=("cavity", "tls")),
        preset=f"fig1_res{gs:g}",
    )


PRESETS = {
    "fig1_res5": _fig1(5),
    "fig1_res150": _fig1(150),
    "fig1_res500": _fig1(500),
    "fig2_correlations": ScenarioConfig(
        "fig2_correlations", _FIG1, (5.0,),
        outputs=OutputConfig(
            products=("trajectory", "spectrogram", "energy_integrated", "correlations", "peaks"),
            channels=("cavity",),
            correlation_times_ps=tuple(float(k * _FIG1_PERIOD) for k in (0.5, 1.0, 2.0, 3.0)),
        ),
        preset="fig2_correlations",
    ),
    "fig3_fano": ScenarioConfig(
        "fig3_fano", _FIG3, (5.0, 50.0, 500.0),
        outputs=OutputConfig(products=_SPECTRA, channels=("total",)),
        preset="fig3_fano",
    ),
    "figS4_tls": ScenarioConfig(
        "figS4_tls", _TLS, (5.0, 50.0, 500.0),
        outputs=OutputConfig(products=_SPECTRA + ("tls_reference",), channels=("tls",)),
        preset="figS4_tls",
    ),
    "figS5_fphi": ScenarioConfig(
        "figS5_fphi", SystemParams(g_mag=100.0), (50.0, 150.0, 500.0),
        grids=GridConfig(nu_halfwidth_ueV=600.0),
        outputs=OutputConfig(
            products=("fano_probe",),
            fano_phases_rad=(0.0, -np.pi / 4, -np.pi / 2, -3 * np.pi / 4, -np.pi),
        ),
        preset="figS5_fphi",
    ),
}
