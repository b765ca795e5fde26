"""One-sided Fourier probe F_phi(nu) = int_0^inf cos(|g| tau + phi) e^{i nu tau - Gamma_s tau / 2} dtau.

All energies in ueV and tau in natural units, so F carries ueV^-1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import NoPeaks
from .peaks import analyze_peaks


@dataclass
class FanoProbe:
    nu: np.ndarray
    values: np.ndarray
    g_mag: float
    gamma_s: float
    phi: float

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def doublet_separation(self):
        """Separation of the two tallest maxima of |F|^2, or 0 for a single peak."""
        sep = analyze_peaks(self.nu, self.intensity).doublet_separation
        return 0.0 if sep is None else sep


def _check(gamma_s):
    if not np.isfinite(gamma_s) or gamma_s <= 0:
        raise ValueError(f"gamma_s must be > 0, got {gamma_s}")


def fano_closed_form(g_mag, gamma_s, phi, nu_grid) -> np.ndarray:
    """Sum of the two complex poles at nu = -|g| and nu = +|g|, half-width Gamma_s/2."""
    _check(gamma_s)
    nu = np.asarray(nu_grid, dtype=float)
    h = 0.5 * gamma_s
    return 0.5 * (np.exp(1j * phi) / (h - 1j * (nu + g_mag)) + np.exp(-1j * phi) / (h - 1j * (nu - g_mag)))


def fano_printed(g_mag, gamma_s, phi, nu_grid) -> np.ndarray:
    """Real-Lorentzian form with width Gamma_s, kept only for comparison."""
    _check(gamma_s)
    nu = np.asarray(nu_grid, dtype=float)
    return (np.exp(1j * phi) * gamma_s / ((nu + g_mag) ** 2 + gamma_s**2)
            + np.exp(-1j * phi) * gamma_s / ((nu - g_mag) ** 2 + gamma_s**2))


def _quadrature_point(g_mag, gamma_s, phi, nu, rtol):
    # the envelope is below 1e-20 of its start beyond this point
    upper = 2 * 46.0 / gamma_s

    def f(tau):
        return np.cos(g_mag * tau + phi) * np.exp(-0.5 * gamma_s * tau)

    kw = dict(epsabs=1e-15, epsrel=rtol, limit=1000)
    re = quad(f, 0, upper, weight="cos", wvar=nu, **kw)[0]
    im = quad(f, 0, upper, weight="sin", wvar=nu, **kw)[0]
    return re + 1j * im


def fano_probe(g_mag, gamma_s, phi, nu_grid, method: str = "quadrature", rtol: float = 1e-12) -> FanoProbe:
    """Evaluate F_phi on ``nu_grid``.

    ``method`` is "quadrature" (adaptive oscillatory quadrature of the
    definition), "closed_form" or "printed".
    """
    _check(gamma_s)
    nu = np.asarray(nu_grid, dtype=float)
    if method == "quadrature":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            vals = np.array([_quadrature_point(g_mag, gamma_s, phi, v, rtol) for v in nu])
    elif method == "closed_form":
        vals = fano_closed_form(g_mag, gamma_s, phi, nu)
    elif method == "printed":
        vals = fano_printed(g_mag, gamma_s, phi, nu)
    else:
        raise ValueError(f"unknown method {method!r}")
    return FanoProbe(nu, vals, g_mag, gamma_s, phi)


def discrepancy_report(g_mag, gamma_s, phis, nu_grid, quadrature=None) -> list[dict]:
    """Compare quadrature, the two-pole closed form and the printed form per phase.

    ``quadrature`` may hold already computed probes, one per phase.
    """
    rows = []
    for k, phi in enumerate(phis):
        q = fano_probe(g_mag, gamma_s, phi, nu_grid) if quadrature is None else quadrature[k]
        c = fano_probe(g_mag, gamma_s, phi, nu_grid, method="closed_form")
        p = fano_probe(g_mag, gamma_s, phi, nu_grid, method="printed")
        scale = np.abs(q.values).max()
        row = {
            "phi": float(phi),
            "closed_form_max_abs_dev": float(np.abs(c.values - q.values).max()),
            "printed_max_rel_dev": float(np.abs(p.values - q.values).max() / scale),
            "separation_quadrature": q.doublet_separation(),
        }
        try:
            row["separation_printed"] = p.doublet_separation()
        except NoPeaks:
            row["separation_printed"] = float("nan")
        rows.append(row)
    return rows


def format_report(rows) -> str:
    keys = list(rows[0])
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join(f"{r[k]:.12e}" for k in keys))
    return "\n".join(lines) + "\n"
