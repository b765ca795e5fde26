"""Time-resolved physical spectrum S(nu, t, Gamma_s) and its reductions.

S is returned in natural units (hbar = 1): with nu in ueV and t in ueV^-1 it
is dimensionless, so that the energy integral over nu is an emission rate in
ueV and the time integral (over natural time) is a lineshape in ueV^-1.
Divide a rate in ueV by HBAR to get photons per ps.

The main engine writes

    S(nu, t) = Re Gamma_s * sum_terms int_0^t ds' (W . y(s')) k_T(t - s'),

where y(s') is the expectation vector <O_mu^dag A_i>_{s'}, W folds the channel
weights into the regression amplitudes and k_T is the divided difference
(e^{p v} - e^{q v}) / (p - q), p = i nu + gamma_pm - Gamma_s/2, q = -Gamma_s.
This is the per-pole kernel, Gamma_s k_T = C_pm.  Augmenting the 4x4
expectation generator with the kernel's 2x2 (or 3x3 at the exceptional point)
upper-triangular generator gives exact step maps, so the s' integral carries
no quadrature error and the removable singularity at p = q never appears.
"""

from __future__ import annotations

import warnings

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.linalg import expm
from scipy.special import sici

from . import io
from .correlations import coefficient_set, rate_eigenvalues
from .errors import GridTooNarrow, InvariantViolation, NotConverged, TrajectoryTooCoarse
from .model import (
    DEFAULT_FANO_ORDERING,
    HBAR,
    ExpectationTrajectory,
    SystemParams,
    build_liouvillian,
    expectation_generator,
    initial_state,
    to_natural,
    uniform_step,
)

NONNEG_TOL = 1e-6


@dataclass(frozen=True)
class SpectrometerParams:
    gamma_s: float

    def __post_init__(self):
        if not np.isfinite(self.gamma_s) or self.gamma_s <= 0:
            raise ValueError(f"gamma_s must be > 0, got {self.gamma_s}")


SPECTRAL_CHANNELS = ("total", "cavity", "tls")


def channel_weights(params: SystemParams, channel: str = "total") -> np.ndarray:
    """chi[mu, mu'] for (sigma, a): [[gamma, gamma_F], [gamma_F*, kappa]] / pi.

    ``channel="cavity"`` or ``"tls"`` keeps only that diagonal entry, which
    gives the emission through one channel without interference.
    """
    gf = params.gamma_f
    chi = np.array([[params.gamma, gf], [np.conj(gf), params.kappa]], dtype=complex) / np.pi
    if channel == "total":
        return chi
    if channel == "cavity":
        return np.diag([0, chi[1, 1]])
    if channel == "tls":
        return np.diag([chi[0, 0], 0])
    raise ValueError(f"unknown channel {channel!r}; expected one of {SPECTRAL_CHANNELS}")


def _divdiff_exp(p, q, s):
    """(e^{p s} - e^{q s}) / (p - q), stable as p -> q."""
    p, q, s = np.broadcast_arrays(np.asarray(p, complex), np.asarray(q, complex), np.asarray(s, float))
    d = p - q
    x = d * s
    small = np.abs(x) < 1e-3
    eq = np.exp(q * s)
    series = eq * s * (1 + x / 2 + x**2 / 6 + x**3 / 24 + x**4 / 120)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (np.exp(p * s) - eq) / d
    return np.where(small, series, direct)


def _divdiff_exp2(p, q, s):
    """d/dp of _divdiff_exp, i.e. the divided difference on (p, p, q)."""
    p, q, s = np.broadcast_arrays(np.asarray(p, complex), np.asarray(q, complex), np.asarray(s, float))
    d = p - q
    x = d * s
    small = np.abs(x) < 1e-3
    eq = np.exp(q * s)
    series = eq * s**2 * (0.5 + x / 3 + x**2 / 8 + x**3 / 30 + x**4 / 144)
    with np.errstate(divide="ignore", invalid="ignore"):
        ep = np.exp(p * s)
        direct = s * ep / d - (ep - eq) / d**2
    return np.where(small, series, direct)


@dataclass(frozen=True)
class SpectralKernelSet:
    """Closed-form kernel integrals; ``nu`` in ueV, ``s_pp_ps`` in ps."""

    params: SystemParams
    spectrometer: SpectrometerParams
    coeffs: object

    def primitive(self, sign: int, nu, s_pp_ps):
        """Gamma_s (e^{(i nu + gamma_pm - Gamma_s/2) s} - e^{-Gamma_s s}) / (i nu + gamma_pm + Gamma_s/2)."""
        gs = self.spectrometer.gamma_s
        rate = self.coeffs.rates.gamma_plus if sign > 0 else self.coeffs.rates.gamma_minus
        p = 1j * np.asarray(nu, dtype=float) + rate - 0.5 * gs
        return gs * _divdiff_exp(p, -gs, to_natural(s_pp_ps))

    def __call__(self, nu, s_pp_ps) -> np.ndarray:
        """Kernel array K[..., mu', i] for C_{mu', i}."""
        c = self.coeffs
        kp = self.primitive(+1, nu, s_pp_ps)[..., None, None]
        km = self.primitive(-1, nu, s_pp_ps)[..., None, None]
        out = c.amp_plus * kp + c.amp_minus * km
        if c.degenerate:
            gs = self.spectrometer.gamma_s
            p = 1j * np.asarray(nu, dtype=float) + c.rates.gamma_plus - 0.5 * gs
            k1 = gs * _divdiff_exp2(p, -gs, to_natural(s_pp_ps))
            out = out + c.amp_linear * k1[..., None, None]
        return out


def spectral_kernels(params, spectrometer, allow_degenerate: bool = False) -> SpectralKernelSet:
    return SpectralKernelSet(params, spectrometer, coefficient_set(params, allow_degenerate))


def kernel_quadrature(params: SystemParams, spectrometer: SpectrometerParams, nu: float, s_pp_ps: float,
                      coeffs=None, rtol: float = 1e-12) -> np.ndarray:
    """Adaptive quadrature of Gamma_s int_0^{s''} C(tau) e^{(i nu + Gamma_s/2) tau - Gamma_s s''} dtau.

    Independent check of the closed-form kernels; returns the 2x2 array
    indexed like SpectralKernelSet.__call__.
    """
    if coeffs is None:
        coeffs = coefficient_set(params, allow_degenerate=True)
    gs = spectrometer.gamma_s
    s_pp = float(to_natural(s_pp_ps))
    out = np.zeros((2, 2), dtype=complex)
    if s_pp == 0:
        return out

    def integrand(tau, m, i, part):
        v = coeffs(tau * HBAR)[m, i] * np.exp((1j * nu + 0.5 * gs) * tau - gs * s_pp)
        return v.real if part == 0 else v.imag

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for m in range(2):
            for i in range(2):
                re = quad(integrand, 0, s_pp, args=(m, i, 0), epsabs=0, epsrel=rtol, limit=2000)[0]
                im = quad(integrand, 0, s_pp, args=(m, i, 1), epsabs=0, epsrel=rtol, limit=2000)[0]
                out[m, i] = gs * (re + 1j * im)
    return out


@dataclass
class Spectrogram:
    """S(nu, t, Gamma_s); ``values`` has shape (len(t), len(nu))."""

    nu: np.ndarray
    t: np.ndarray
    values: np.ndarray
    params: SystemParams
    spectrometer: SpectrometerParams
    label: str = "total"
    extra: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        meta = {"product": "spectrogram", "label": self.label, "units_nu": "ueV", "units_t": "ps",
                "units_S": "natural (hbar = 1)"}
        for k, v in vars(self.params).items():
            meta[f"params.{k}"] = repr(float(v))
        meta["spectrometer.gamma_s"] = repr(float(self.spectrometer.gamma_s))
        meta["nu.n"] = str(self.nu.size)
        meta["t.n"] = str(self.t.size)
        meta.update({k: str(v) for k, v in self.extra.items()})
        return meta

    def to_csv(self, path) -> None:
        tt, nn = np.meshgrid(self.t, self.nu, indexing="ij")
        io.write_table(path, ["nu_ueV", "t_ps", "S"], [nn.ravel(), tt.ravel(), self.values.ravel()])

    def to_matrix_csv(self, path) -> None:
        io.write_matrix(path, self.t, self.nu, self.values)

    def write_meta(self, path) -> None:
        io.write_meta(path, self.metadata())


def sampling_step_limit_ps(params: SystemParams, gamma_s: float) -> float:
    """Largest allowed s' step: min(0.02 * 2pi / splitting, 0.1 / max(Gamma_tot, Gamma_s))."""
    limits = [0.1 / max(params.gamma_tot, gamma_s)]
    split = rate_eigenvalues(params).splitting
    if split > 0:
        limits.append(0.02 * 2 * np.pi / split)
    return float(min(limits) * HBAR)


def default_nu_grid(params: SystemParams, gamma_s: float, n: int = 601, halfwidth_factor: float = 3.0):
    center = 0.5 * (params.omega_21 + params.omega_c)
    band = max(2 * params.g_mag, abs(params.omega_c21) + params.gamma_tot, 2 * gamma_s)
    return np.linspace(center - halfwidth_factor * band, center + halfwidth_factor * band, n)


def energy_band(params: SystemParams, gamma_s: float) -> float:
    return max(gamma_s, params.gamma_tot, 2 * params.g_mag, abs(params.omega_c21))


def _slowest_decay(params, generator=None) -> float:
    if generator is None:
        generator = expectation_generator(build_liouvillian(params))
    rates = -np.linalg.eigvals(generator).real
    rates = rates[rates > 1e-12]
    if rates.size == 0:
        raise NotConverged("no decaying mode; the emission never ends")
    return float(rates.min())


def integration_horizon_ps(params: SystemParams, gamma_s: float, rel: float = 1e-6, generator=None) -> float:
    """Time after which both the source term and the filter memory are below ``rel``."""
    t_src = np.log(1 / rel) / _slowest_decay(params, generator)
    return float((t_src + np.log(1 / rel) / gamma_s) * HBAR)


def _align(traj_times, t_grid_ps):
    h = uniform_step(traj_times)
    t_grid_ps = np.asarray(t_grid_ps, dtype=float)
    if abs(traj_times[0]) > 1e-12 * h:
        raise ValueError("trajectory must start at t = 0")
    pos = (t_grid_ps - traj_times[0]) / h
    idx = np.rint(pos).astype(int)
    if np.any(np.abs(pos - idx) > 1e-6) or np.any(idx < 0) or np.any(idx >= traj_times.size):
        raise ValueError("t_grid must lie on the trajectory grid and inside it")
    return idx


def _engine_terms(params, coeffs, channel="total"):
    """[(W (4,), p_rate, order)] with W = chi @ amplitude flattened in y order."""
    chi = channel_weights(params, channel)
    if coeffs.degenerate:
        g0 = coeffs.rates.gamma_plus
        return [((chi @ coeffs.amp_plus).ravel(), g0, 2), ((chi @ coeffs.amp_linear).ravel(), g0, 3)]
    return [
        ((chi @ coeffs.amp_plus).ravel(), coeffs.rates.gamma_plus, 2),
        ((chi @ coeffs.amp_minus).ravel(), coeffs.rates.gamma_minus, 2),
    ]


def _augmented_generators(M, terms, nu, gamma_s):
    """Stacked (n, D, D) generators of [y; w_terms] for each nu."""
    n = nu.size
    dw = sum(order for _, _, order in terms)
    D = 4 + dw
    G = np.zeros((n, D, D), dtype=complex)
    G[:, :4, :4] = M
    offsets = []
    o = 4
    for W, rate, order in terms:
        p = 1j * nu + rate - 0.5 * gamma_s
        for j in range(order - 1):
            G[:, o + j, o + j] = p
            G[:, o + j, o + j + 1] = 1.0
        G[:, o + order - 1, o + order - 1] = -gamma_s
        G[:, o + order - 1, :4] = W
        offsets.append(o - 4)
        o += order
    return G, offsets


def _exact_chunk(M, terms, y, h, t_idx, nu, gamma_s):
    G, offsets = _augmented_generators(M, terms, nu, gamma_s)
    E = expm(G * h)
    # (4, dw * n) so that one trajectory sample drives a contiguous (dw, n) slab
    p_wy = np.ascontiguousarray(np.moveaxis(E[:, 4:, :4], 0, -1).transpose(1, 0, 2)).reshape(4, -1)
    # e^{T h} is block diagonal and upper triangular; step only through those entries
    p_ww = np.ascontiguousarray(np.moveaxis(E[:, 4:, 4:], 0, -1))
    pairs, o = [], 0
    for _, _, order in terms:
        pairs += [(o + j, o + b) for j in range(order) for b in range(j, order)]
        o += order
    n, dw = nu.size, E.shape[1] - 4
    w = np.zeros((dw, n), dtype=complex)
    out = np.zeros((t_idx.size, n))
    want = {int(k): j for j, k in enumerate(t_idx)}
    last = int(t_idx.max()) if t_idx.size else 0
    block = 512
    for start in range(0, last, block):
        stop = min(start + block, last)
        drive = (y[start:stop] @ p_wy).reshape(stop - start, dw, n)
        for k in range(start, stop):
            new = drive[k - start]
            for j, b in pairs:
                new[j] += p_ww[j, b] * w[b]
            w = new
            if k + 1 in want:
                out[want[k + 1]] = gamma_s * sum(w[o].real for o in offsets)
    return out


def _trapezoid_chunk(kernels, chi, y, h_ps, times, t_idx, nu):
    V = np.einsum("mp,kmi->kpi", chi, y.reshape(-1, 2, 2))
    out = np.zeros((t_idx.size, nu.size))
    for j, K in enumerate(t_idx):
        if K == 0:
            continue
        s_pp = times[K] - times[: K + 1]
        kern = kernels(nu[:, None], s_pp[None, :])
        integrand = np.einsum("kpi,nkpi->nk", V[: K + 1], kern)
        wts = np.full(K + 1, h_ps)
        wts[0] = wts[-1] = 0.5 * h_ps
        out[j] = (integrand @ to_natural(wts)).real
    return out


def check_sampling(params: SystemParams, gamma_s: float, h_ps: float) -> None:
    limit = sampling_step_limit_ps(params, gamma_s)
    if h_ps > limit * (1 + 1e-9):
        raise TrajectoryTooCoarse(f"trajectory step {h_ps:.4g} ps exceeds the sampling limit {limit:.4g} ps")


def check_nonnegative(values, tol: float = NONNEG_TOL) -> None:
    vmax = float(np.max(values)) if np.size(values) else 0.0
    vmin = float(np.min(values)) if np.size(values) else 0.0
    if vmax > 0 and vmin < -tol * vmax:
        raise InvariantViolation(f"spectrum negative beyond tolerance: min {vmin:.3e}, max {vmax:.3e}")


def trps(
    params: SystemParams,
    spectrometer: SpectrometerParams,
    traj: ExpectationTrajectory,
    nu_grid,
    t_grid,
    method: str = "auto",
    workers: int = 1,
    check: bool = True,
    channel: str = "total",
) -> Spectrogram:
    """Time-resolved physical spectrum on (t_grid ps) x (nu_grid ueV).

    ``t_grid`` must be a subset of the trajectory grid, which starts at 0.
    ``method="exact"`` integrates each trajectory step exactly through the
    expectation generator attached to ``traj``; ``method="trapezoid"`` applies
    the trapezoidal rule to the closed-form kernels; ``"auto"`` picks exact
    when the trajectory carries a generator.  Both split nu into ``workers`` independent
    chunks, so the result does not depend on the worker count.
    """
    nu = np.asarray(nu_grid, dtype=float)
    h_ps = traj.step_ps
    check_sampling(params, spectrometer.gamma_s, h_ps)
    t_idx = _align(traj.times, t_grid)
    y = traj.vector()
    gs = spectrometer.gamma_s
    chunks = np.array_split(np.arange(nu.size), max(1, min(workers, nu.size)))

    if method == "auto":
        method = "exact" if traj.generator is not None else "trapezoid"
    if method == "exact":
        M = traj.generator
        if M is None:
            raise ValueError("trajectory has no closed expectation generator; use method='trapezoid'")
        terms = _engine_terms(params, coefficient_set(params, allow_degenerate=True), channel)
        h = float(to_natural(h_ps))

        def run(ix):
            return _exact_chunk(M, terms, y, h, t_idx, nu[ix], gs)

    elif method == "trapezoid":
        kernels = spectral_kernels(params, spectrometer, allow_degenerate=True)
        chi = channel_weights(params, channel)

        def run(ix):
            return _trapezoid_chunk(kernels, chi, y, h_ps, traj.times, t_idx, nu[ix])

    else:
        raise ValueError(f"unknown method {method!r}")

    if len(chunks) == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    values = np.concatenate(parts, axis=1)
    if check:
        check_nonnegative(values)
    return Spectrogram(nu, np.asarray(t_grid, dtype=float), values, params, spectrometer, label=channel,
                       extra={"method": method})


def time_integrated_spectrum(spectrogram: Spectrogram, tail_tol: float = 1e-6) -> np.ndarray:
    """Trapezoidal t-integral (natural time) of a spectrogram; ueV^-1."""
    vals = spectrogram.values
    peak = np.max(np.abs(vals))
    if peak > 0 and np.max(np.abs(vals[-1])) > tail_tol * peak:
        raise NotConverged(
            f"spectrum at t = {spectrogram.t[-1]:.4g} ps is still {np.max(np.abs(vals[-1])) / peak:.2e} of its peak"
        )
    return np.trapezoid(vals, to_natural(spectrogram.t), axis=0)


def time_integrated_direct(params: SystemParams, spectrometer: SpectrometerParams, nu_grid,
                           generator=None, y0=None, channel: str = "total") -> np.ndarray:
    """Closed-form int_0^inf dt S(nu, t), from the expectation generator.

    With Y = int_0^inf y ds = -M^{-1} y0, each pole contributes
    Re (W . Y) * Gamma_s * (-T^{-1})[0, -1].
    """
    nu = np.asarray(nu_grid, dtype=float)
    gs = spectrometer.gamma_s
    if generator is None:
        generator = expectation_generator(build_liouvillian(params))
    if y0 is None:
        y0 = np.array([1, 0, 0, 0], dtype=complex)
    Y = -np.linalg.lstsq(generator, y0, rcond=None)[0]
    terms = _engine_terms(params, coefficient_set(params, allow_degenerate=True), channel)
    total = np.zeros(nu.size, dtype=complex)
    for W, rate, order in terms:
        p = 1j * nu + rate - 0.5 * gs
        if order == 2:
            tail = 1 / (p * -gs)  # -T^{-1}[0,1] for T = [[p, 1], [0, q]]
        else:
            tail = -1 / (p**2 * -gs)
        total += (W @ Y) * gs * tail
    return total.real


@dataclass
class EnergyIntegrated:
    t: np.ndarray
    quadrature: np.ndarray
    reference: np.ndarray

    def max_relative_error(self, floor: float = 0.0) -> float:
        mask = np.abs(self.reference) > floor
        return float(np.max(np.abs(self.quadrature[mask] - self.reference[mask]) / np.abs(self.reference[mask])))


def convolution_reference(params: SystemParams, spectrometer: SpectrometerParams, t_ps,
                          truncation="n1", fano_ordering=DEFAULT_FANO_ORDERING, populations=None,
                          channel: str = "total"):
    """int_0^t ds (kappa n_cav + gamma n_tls + 2 Re[gamma_F coh])(s) Gamma_s e^{-Gamma_s (t - s)}.

    Evaluated by propagating the density matrix together with the filtered
    intensity J, dJ/dt = Gamma_s (source - J), through one augmented
    matrix exponential of the full Liouvillian.
    """
    liou = build_liouvillian(params, truncation, fano_ordering)
    b = liou.basis
    d = b.dim
    ops = b.observables()
    gf = params.gamma_f
    if channel == "cavity":
        src = params.kappa * ops["n_cav"]
    elif channel == "tls":
        src = params.gamma * ops["n_tls"]
    else:
        src = params.kappa * ops["n_cav"] + params.gamma * ops["n_tls"] + gf * ops["coh"] + np.conj(gf) * ops["coh_conj_pair"]
    gs = spectrometer.gamma_s
    G = np.zeros((d * d + 1, d * d + 1), dtype=complex)
    G[: d * d, : d * d] = liou.L
    G[d * d, : d * d] = gs * src.T.reshape(d * d)  # Tr[src rho] = sum_ij src_ij rho_ji
    G[d * d, d * d] = -gs
    z0 = np.zeros(d * d + 1, dtype=complex)
    z0[: d * d] = initial_state(b, populations).reshape(d * d)
    t = to_natural(t_ps)
    out = np.empty(t.size)
    for k, tk in enumerate(np.ravel(t)):
        out[k] = (expm(G * tk) @ z0)[-1].real
    return out.reshape(np.shape(t_ps))


def tail_coefficients(params: SystemParams, spectrometer: SpectrometerParams, t_ps, generator=None, y0=None,
                      center: float = 0.0, channel: str = "total"):
    """Large-|nu| asymptote S ~ (A(t) + Re[B(t) e^{i v t}]) / v^2, v = nu - center.

    Integrating each pole's kernel by parts gives
    A = Gamma_s (source(t)/pi - Re sum W.F_q (gamma_pm + Gamma_s/2)) and
    B = -Gamma_s sum (W.y(0)) e^{(gamma_pm - Gamma_s/2) t}, where F_q is the
    expectation vector low-passed at rate Gamma_s.  Returns (A, B).
    """
    coeffs = coefficient_set(params, allow_degenerate=True)
    if coeffs.degenerate:
        raise ValueError("tail asymptote is only implemented for distinct rates")
    gs = spectrometer.gamma_s
    if generator is None:
        generator = expectation_generator(build_liouvillian(params))
    if y0 is None:
        y0 = np.array([1, 0, 0, 0], dtype=complex)
    t = np.atleast_1d(to_natural(t_ps))
    terms = _engine_terms(params, coeffs, channel)
    A = np.zeros(t.size)
    B = np.zeros(t.size, dtype=complex)
    chi_src = sum(W for W, _, _ in terms)
    for k, tk in enumerate(t):
        G = np.zeros((4 + len(terms), 4 + len(terms)), dtype=complex)
        G[:4, :4] = generator
        for j, (W, _, _) in enumerate(terms):
            G[4 + j, :4] = W
            G[4 + j, 4 + j] = -gs
        z = expm(G * tk) @ np.concatenate([y0, np.zeros(len(terms))])
        acc = (chi_src @ z[:4]).real
        for j, (W, rate, _) in enumerate(terms):
            rate = rate + 1j * center
            acc -= (z[4 + j] * (rate + 0.5 * gs)).real
            B[k] -= (W @ y0) * np.exp((rate - 0.5 * gs) * tk)
        A[k] = gs * acc
    return A, gs * B


def _tail_integral(A, B, t_nat, nu_lo, nu_hi):
    """int over nu < nu_lo and nu > nu_hi of (A + Re[B e^{i nu t}]) / nu^2 (nu_lo < 0 < nu_hi)."""
    if not nu_lo < 0 < nu_hi:
        raise GridTooNarrow("nu grid must straddle its centre")

    out = A * (1 / nu_hi + 1 / abs(nu_lo))
    for edge, sign in ((nu_hi, 1), (abs(nu_lo), -1)):
        X = edge * t_nat
        with np.errstate(divide="ignore", invalid="ignore"):
            si, ci = sici(X)
            # int_X^inf e^{i x} / x^2 dx, times t to return to nu
            f = np.exp(1j * X) / X - 1j * ci - (np.pi / 2 - si)
            val = np.where(X > 0, t_nat * f, 1 / edge)
        if sign < 0:
            val = np.conj(val)
        out = out + (B * val).real
    return out


def energy_integrated_intensity(spectrogram: Spectrogram, reference: bool = True, tail: bool = True,
                                generator=None, y0=None, **ref_kwargs) -> EnergyIntegrated:
    """nu-quadrature of S (ueV) next to the analytic convolution reference.

    With ``tail=True`` the trapezoid over the grid is completed by the exact
    integral of the 1/nu^2 asymptote beyond both grid edges; without it,
    early times (t < ~1/nu_max) lose a visible fraction of the intensity.
    """
    p, gs = spectrogram.params, spectrogram.spectrometer.gamma_s
    nu = spectrogram.nu
    center = 0.5 * (p.omega_21 + p.omega_c)
    need = 12 * energy_band(p, gs)
    if nu.min() > center - need or nu.max() < center + need:
        raise GridTooNarrow(
            f"nu grid [{nu.min():.4g}, {nu.max():.4g}] ueV must cover center +/- {need:.4g} ueV"
        )
    quad = np.trapezoid(spectrogram.values, nu, axis=1)
    if tail:
        A, B = tail_coefficients(p, spectrogram.spectrometer, spectrogram.t, generator, y0, center, spectrogram.label)
        quad = quad + _tail_integral(A, B, to_natural(spectrogram.t), nu.min() - center, nu.max() - center)
    ref = None
    if reference:
        ref = convolution_reference(p, spectrogram.spectrometer, spectrogram.t, channel=spectrogram.label, **ref_kwargs)
    return EnergyIntegrated(spectrogram.t, quad, ref)


# -- emitter without cavity ---------------------------------------------------


def _tls_divided(x, c, t):
    """(phi(x) - phi(c)) / (x - c) with phi(u) = (e^{u t} - 1)/u, via a 3x3 exponential."""
    x, c, t = np.broadcast_arrays(np.asarray(x, complex), np.asarray(c, complex), np.asarray(t, float))
    T = np.zeros(x.shape + (3, 3), dtype=complex)
    T[..., 0, 0] = x
    T[..., 1, 1] = c
    T[..., 0, 1] = 1
    T[..., 1, 2] = 1
    return expm(T * t[..., None, None])[..., 0, 2]


def tls_trps(params: SystemParams, spectrometer: SpectrometerParams, nu_grid, t_ps) -> Spectrogram:
    """Closed-form spectrum of the initially excited emitter alone (g, kappa ignored).

    S = gamma/pi Re[Gamma_s e^{-gamma t} (phi(x) - phi(c)) / (x - c)], with
    phi(u) = (e^{u t} - 1)/u, x = i (nu - omega_21) + gamma/2 - gamma_ph - Gamma_s/2
    and c = gamma - Gamma_s.  Near x = c the quotient is evaluated as a
    divided difference instead.
    """
    nu = np.asarray(nu_grid, dtype=float)
    t = to_natural(t_ps)
    gam, gph, gs = params.gamma, params.gamma_ph, spectrometer.gamma_s
    D = nu[None, :] - params.omega_21
    tt = np.broadcast_to(t[:, None], (t.size, nu.size))
    x = np.broadcast_to(1j * D + 0.5 * gam - gph - 0.5 * gs, tt.shape)
    c = gam - gs
    z = x - c

    def phi(u):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.expm1(u * tt) / u
        return np.where(np.abs(u * tt) < 1e-12, tt, val)

    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = (phi(x) - phi(c + 0 * x)) / z
    unstable = np.abs(z * tt) < 1e-2
    if np.any(unstable):
        quotient[unstable] = _tls_divided(x[unstable], c, tt[unstable])
    values = (gam / np.pi) * (gs * np.exp(-gam * tt) * quotient).real
    return Spectrogram(nu, np.asarray(t_ps, dtype=float), values, params, spectrometer, label="tls",
                       extra={"method": "closed_form"})


def tls_time_integrated(params: SystemParams, spectrometer: SpectrometerParams, nu_grid) -> np.ndarray:
    """Lorentzian with HWHM (gamma + Gamma_s)/2 + gamma_ph centred on omega_21."""
    w = 0.5 * (params.gamma + spectrometer.gamma_s) + params.gamma_ph
    d = np.asarray(nu_grid, dtype=float) - params.omega_21
    return w / (np.pi * (d**2 + w**2))


def tls_energy_integrated(params: SystemParams, spectrometer: SpectrometerParams, t_ps) -> np.ndarray:
    """gamma e^{-gamma t} convolved with Gamma_s e^{-Gamma_s t}; no gamma_ph dependence."""
    t = to_natural(t_ps)
    g, gs = params.gamma, spectrometer.gamma_s
    return g * gs * t * np.exp(-g * t) * _exprel((g - gs) * t)


def _exprel(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(x) < 1e-12, 1.0, np.expm1(x) / x)
