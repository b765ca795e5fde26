"""Quantum-regression coefficients and causally masked two-time correlations.

Channels are indexed mu in {sigma, a} -> {0, 1} with O_sigma = sigma_-,
O_a = a; the operator basis is A_1 = sigma_-, A_2 = a (index 0, 1).  A
coefficient array ``C[..., mu', i]`` holds C_{mu',i}(tau).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateRates, OutOfTrajectory
from .model import (
    DEFAULT_FANO_ORDERING,
    HBAR,
    ExpectationTrajectory,
    SystemParams,
    build_liouvillian,
    to_natural,
)

CHANNELS = {"sigma": 0, "a": 1}
DEGENERACY_GAP = 1e-12  # ueV


@dataclass(frozen=True)
class RateEigenvalues:
    gamma_plus: complex
    gamma_minus: complex
    branch: str = "principal"

    @property
    def gap(self) -> complex:
        return self.gamma_plus - self.gamma_minus

    @property
    def splitting(self) -> float:
        """|Im(gamma_+ - gamma_-)|, the vacuum Rabi splitting in ueV."""
        return abs(self.gap.imag)


def rate_eigenvalues(params: SystemParams) -> RateEigenvalues:
    """Closed-form decay/oscillation rates of the coherence sector (ueV)."""
    center = -0.5 * (params.gamma_tot + 1j * (params.omega_21 + params.omega_c))
    disc = (
        0.5 * (params.kappa - params.gamma) - params.gamma_ph + 1j * params.omega_c21
    ) ** 2 - 4 * np.conj(params.g_plus) * params.g_minus
    root = np.sqrt(complex(disc))
    return RateEigenvalues(center + 0.5 * root, center - 0.5 * root)


def _channel(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    try:
        return CHANNELS[name]
    except KeyError:
        raise ValueError(f"unknown channel {name!r}; expected 'sigma' or 'a'") from None


@dataclass(frozen=True)
class CoefficientSet:
    """C_{mu',i}(tau) = sum_pm A_pm[mu', i] exp(gamma_pm tau) (+ B tau exp(gamma tau)).

    The second term is only used at the exceptional point gamma_+ = gamma_-,
    where ``degenerate`` is True and the closed forms are replaced by their
    limit.
    """

    rates: RateEigenvalues
    amp_plus: np.ndarray
    amp_minus: np.ndarray
    amp_linear: np.ndarray
    degenerate: bool = False

    def __call__(self, tau_ps) -> np.ndarray:
        tau = to_natural(tau_ps)[..., None, None]
        gp, gm = self.rates.gamma_plus, self.rates.gamma_minus
        out = self.amp_plus * np.exp(gp * tau) + self.amp_minus * np.exp(gm * tau)
        if self.degenerate:
            out = out + self.amp_linear * tau * np.exp(gp * tau)
        return out

    def c_sigma_1(self, tau_ps):
        return self(tau_ps)[..., 0, 0]

    def c_sigma_2(self, tau_ps):
        return self(tau_ps)[..., 0, 1]

    def c_a_1(self, tau_ps):
        return self(tau_ps)[..., 1, 0]

    def c_a_2(self, tau_ps):
        return self(tau_ps)[..., 1, 1]


def coefficient_set(params: SystemParams, allow_degenerate: bool = False) -> CoefficientSet:
    rates = rate_eigenvalues(params)
    gp, gm = rates.gamma_plus, rates.gamma_minus
    shift = np.array(
        [
            1j * params.omega_c + 0.5 * params.kappa,
            1j * params.omega_21 + 0.5 * params.gamma + params.gamma_ph,
        ]
    )
    off = np.array([-1j * params.g_minus, -1j * np.conj(params.g_plus)])
    gap = gp - gm
    if abs(gap) < DEGENERACY_GAP:
        if not allow_degenerate:
            raise DegenerateRates(f"|gamma_+ - gamma_-| = {abs(gap):.3e} ueV")
        g0 = 0.5 * (gp + gm)
        rates = RateEigenvalues(g0, g0, rates.branch)
        # (x e^{g+ t} - y e^{g- t}) / (g+ - g-) -> e^{g t} + (g + shift) t e^{g t}
        amp_plus = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex)
        amp_linear = np.array([[g0 + shift[0], off[0]], [off[1], g0 + shift[1]]])
        return CoefficientSet(rates, amp_plus, np.zeros((2, 2), complex), amp_linear, True)
    amp_plus = np.array([[gp + shift[0], off[0]], [off[1], gp + shift[1]]]) / gap
    amp_minus = -np.array([[gm + shift[0], off[0]], [off[1], gm + shift[1]]]) / gap
    return CoefficientSet(rates, amp_plus, amp_minus, np.zeros((2, 2), complex), False)


def coefficient_oracle(
    params: SystemParams,
    tau_ps,
    truncation: str = "n1",
    fano_ordering: str = DEFAULT_FANO_ORDERING,
) -> np.ndarray:
    """C_{mu',i}(tau) read off exp(L^dag tau) applied to sigma_+ and a^dag.

    The Heisenberg-evolved O_{mu'} is (exp(L^dag tau) O^dag_{mu'})^dag; its
    <g,0|.|e,0> and <g,0|.|g,1> elements are the sigma_- and a coefficients.
    """
    liou = build_liouvillian(params, truncation, fano_ordering)
    b = liou.basis
    d = b.dim
    g0, e0, g1 = b.index("g", 0), b.index("e", 0), b.index("g", 1)
    ops = [b.sm.conj().T, b.a.conj().T]
    tau = np.atleast_1d(to_natural(tau_ps))
    out = np.empty(tau.shape + (2, 2), dtype=complex)
    for k, t in enumerate(tau):
        prop = expm(liou.L_adj * t)
        for mu, op in enumerate(ops):
            x = (prop @ op.reshape(d * d)).reshape(d, d)
            heis = x.conj().T
            out[k, mu, 0] = heis[g0, e0]
            out[k, mu, 1] = heis[g0, g1]
    return out.reshape(np.shape(tau_ps) + (2, 2))


@dataclass
class CorrelationTrace:
    """<O_mu^dag(s + tau') O_mu'(s)> sampled on signed lags tau' (ps)."""

    s: float
    tau_prime: np.ndarray
    values: np.ndarray
    window_mask: np.ndarray
    mu: str = "a"
    mu_prime: str = "a"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_prime_ps", "re", "im", "in_causal_window"])
            for tp, v, m in zip(self.tau_prime, self.values, self.window_mask):
                w.writerow([f"{tp:.12e}", f"{v.real:.12e}", f"{v.imag:.12e}", int(m)])

    @classmethod
    def concatenate(cls, past: "CorrelationTrace", future: "CorrelationTrace") -> "CorrelationTrace":
        """Join a past trace and a future trace at the same s (tau' = 0 kept once)."""
        keep = future.tau_prime > 0
        return cls(
            past.s,
            np.concatenate([past.tau_prime, future.tau_prime[keep]]),
            np.concatenate([past.values, future.values[keep]]),
            np.concatenate([past.window_mask, future.window_mask[keep]]),
            past.mu,
            past.mu_prime,
        )


def _contract(coeffs: np.ndarray, y: np.ndarray, mu: int, mu_prime: int) -> np.ndarray:
    """sum_i C_{mu',i} <O_mu^dag A_i> with y in (sigma,1),(sigma,2),(a,1),(a,2) order."""
    y = y.reshape(y.shape[:-1] + (2, 2))
    return np.sum(coeffs[..., mu_prime, :] * y[..., mu, :], axis=-1)


def qrt_future(params, traj: ExpectationTrajectory, s_ps: float, tau_ps, mu="a", mu_prime="a", coeffs=None):
    """<O_mu^dag(s) O_mu'(s + tau)> for tau >= 0."""
    mu, mu_prime = _channel(mu), _channel(mu_prime)
    tau_ps = np.asarray(tau_ps, dtype=float)
    if np.any(tau_ps < 0):
        raise ValueError("future lags must be >= 0")
    if s_ps < 0:
        raise ValueError("s must be >= 0")
    if s_ps > traj.times[-1] + 1e-9 * traj.step_ps:
        raise OutOfTrajectory(f"s = {s_ps} ps beyond trajectory end {traj.times[-1]} ps")
    coeffs = coefficient_set(params, allow_degenerate=True) if coeffs is None else coeffs
    y = traj.at(np.array([s_ps]))[0]
    return _contract(coeffs(tau_ps), y, mu, mu_prime)


def qrt_past(params, traj: ExpectationTrajectory, s_ps: float, tau_ps, mu="a", mu_prime="a", coeffs=None):
    """<O_mu^dag(s - tau) O_mu'(s)> for tau >= 0; zero once s - tau < 0."""
    mu, mu_prime = _channel(mu), _channel(mu_prime)
    tau_ps = np.asarray(tau_ps, dtype=float)
    if np.any(tau_ps < 0):
        raise ValueError("past lags must be >= 0")
    if s_ps < 0:
        raise ValueError("s must be >= 0")
    if s_ps > traj.times[-1] + 1e-9 * traj.step_ps:
        raise OutOfTrajectory(f"s = {s_ps} ps beyond trajectory end {traj.times[-1]} ps")
    coeffs = coefficient_set(params, allow_degenerate=True) if coeffs is None else coeffs
    earlier = s_ps - tau_ps
    causal = earlier >= -1e-12 * max(s_ps, 1.0)
    out = np.zeros(tau_ps.shape, dtype=complex)
    if np.any(causal):
        y = traj.at(np.clip(earlier[causal], traj.times[0], None))
        out[causal] = _contract(coeffs(tau_ps[causal]), y, mu, mu_prime)
    return out


def correlation_future(params, traj, s_ps, tau_grid_ps, mu="a", mu_prime="a") -> CorrelationTrace:
    """Trace <O_mu^dag(s + tau') O_mu'(s)> for tau' = tau >= 0.

    Uses <O_mu^dag(s + tau) O_mu'(s)> = conj <O_mu'^dag(s) O_mu(s + tau)>,
    which the regression coefficients give directly.
    """
    tau = np.asarray(tau_grid_ps, dtype=float)
    vals = np.conj(qrt_future(params, traj, s_ps, tau, mu_prime, mu))
    return CorrelationTrace(float(s_ps), tau, vals, np.zeros(tau.shape, dtype=bool), str(mu), str(mu_prime))


def correlation_past(params, traj, s_ps, tau_grid_ps, mu="a", mu_prime="a") -> CorrelationTrace:
    """Trace <O_mu^dag(s + tau') O_mu'(s)> on tau' = -tau <= 0, sorted ascending."""
    tau = np.sort(np.asarray(tau_grid_ps, dtype=float))[::-1]
    vals = qrt_past(params, traj, s_ps, tau, mu, mu_prime)
    tp = -tau
    mask = (tp > -s_ps) & (tp < 0)
    return CorrelationTrace(float(s_ps), tp, vals, mask, str(mu), str(mu_prime))


def default_tau_step_ps(params: SystemParams) -> float:
    """min(0.02 * 2pi / splitting, 0.1 / Gamma_tot) converted to ps."""
    rates = rate_eigenvalues(params)
    limits = []
    if rates.splitting > 0:
        limits.append(0.02 * 2 * np.pi / rates.splitting)
    if params.gamma_tot > 0:
        limits.append(0.1 / params.gamma_tot)
    if not limits:
        raise ValueError("parameters define no time scale")
    return float(min(limits) * HBAR)


def qrt_brute_force(
    params: SystemParams,
    s_ps: float,
    tau_ps,
    mu="a",
    mu_prime="a",
    direction: str = "past",
    truncation: str = "n1",
    fano_ordering: str = DEFAULT_FANO_ORDERING,
    populations: Optional[dict] = None,
) -> np.ndarray:
    """Two-time correlation by direct regression on the full density matrix.

    future: Tr[O_mu' exp(L tau)(rho_s O_mu^dag)];
    past:   Tr[O_mu' exp(L tau)(rho_{s-tau} O_mu^dag)], zero for tau > s.
    Independent of the analytic coefficients; used as a test oracle.
    """
    from .model import initial_state

    mu, mu_prime = _channel(mu), _channel(mu_prime)
    liou = build_liouvillian(params, truncation, fano_ordering)
    b = liou.basis
    d = b.dim
    ops = [b.sm, b.a]
    o_mu_dag = ops[mu].conj().T
    o_mup = ops[mu_prime]
    rho0 = initial_state(b, populations).reshape(d * d)
    s = float(to_natural(s_ps))
    out = []
    for t in np.atleast_1d(to_natural(tau_ps)):
        start = s if direction == "future" else s - t
        if start < 0:
            out.append(0.0)
            continue
        rho_start = (expm(liou.L * start) @ rho0).reshape(d, d)
        x = (expm(liou.L * t) @ (rho_start @ o_mu_dag).reshape(d * d)).reshape(d, d)
        out.append(np.trace(o_mup @ x))
    return np.array(out, dtype=complex).reshape(np.shape(tau_ps))
