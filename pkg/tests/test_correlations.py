import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from trps.correlations import (
    CorrelationTrace,
    coefficient_oracle,
    coefficient_set,
    correlation_future,
    correlation_past,
    default_tau_step_ps,
    qrt_brute_force,
    qrt_future,
    qrt_past,
    rate_eigenvalues,
)
from trps.errors import DegenerateRates, OutOfTrajectory
from trps.model import HBAR, SystemParams, simulate


def test_fig1_rates(fig1):
    r = rate_eigenvalues(fig1)
    assert r.gamma_plus.real == pytest.approx(-12.5125, abs=1e-9)
    assert abs(r.gamma_plus.imag) == pytest.approx(99.2172, abs=1e-4)
    assert r.gamma_minus == pytest.approx(np.conj(r.gamma_plus))
    assert r.splitting == pytest.approx(198.434, abs=1e-3)


@pytest.mark.parametrize("name", ["fig1", "fig3"])
def test_coefficients_match_superoperator_oracle(name, request):
    p = request.getfixturevalue(name)
    tau = np.linspace(0, 200, 200)
    dev = np.abs(coefficient_set(p)(tau) - coefficient_oracle(p, tau)).max()
    assert dev < 1e-8


@given(
    g=st.floats(0.0, 150.0),
    kappa=st.floats(0.0, 150.0),
    gamma=st.floats(0.0, 50.0),
    gamma_ph=st.floats(0.0, 30.0),
    eta=st.floats(0.0, 1.0),
    theta=st.floats(-np.pi, np.pi),
    det=st.floats(-100.0, 100.0),
)
def test_coefficients_match_oracle_random(g, kappa, gamma, gamma_ph, eta, theta, det):
    p = SystemParams(g_mag=g, kappa=kappa, gamma=gamma, gamma_ph=gamma_ph, eta=eta, theta=theta, omega_21=det)
    tau = np.linspace(0, 30, 13)
    try:
        c = coefficient_set(p)
    except DegenerateRates:
        c = coefficient_set(p, allow_degenerate=True)
    # near the exceptional point the two-exponential form loses digits
    gap = abs(c.rates.gap) if not c.degenerate else 1.0
    tol = 1e-8 * max(1.0, 1e2 / max(gap, 1e-3))
    assert np.abs(c(tau) - coefficient_oracle(p, tau)).max() < tol


@pytest.mark.parametrize("name", ["fig1", "fig3"])
def test_coefficients_start_at_identity(name, request):
    c = coefficient_set(request.getfixturevalue(name))
    assert np.allclose(c(0.0), np.eye(2), atol=1e-14)
    assert c.c_sigma_1(0.0) == pytest.approx(1.0)
    assert c.c_a_2(0.0) == pytest.approx(1.0)
    assert abs(c.c_sigma_2(0.0)) < 1e-14 and abs(c.c_a_1(0.0)) < 1e-14


def test_exceptional_point(fig1):
    # resonant, no Fano, no dephasing: the rates merge at |g| = (kappa - gamma) / 4
    p = fig1.replace(g_mag=(fig1.kappa - fig1.gamma) / 4)
    with pytest.raises(DegenerateRates):
        coefficient_set(p)
    c = coefficient_set(p, allow_degenerate=True)
    assert c.degenerate
    tau = np.linspace(0, 50, 60)
    assert np.abs(c(tau) - coefficient_oracle(p, tau)).max() < 1e-8


def test_degenerate_limit_is_continuous(fig1):
    g0 = (fig1.kappa - fig1.gamma) / 4
    tau = np.linspace(0, 20, 30)
    exact = coefficient_set(fig1.replace(g_mag=g0), allow_degenerate=True)(tau)
    near = coefficient_set(fig1.replace(g_mag=g0 * (1 + 1e-6)))(tau)
    assert np.abs(exact - near).max() < 1e-4


@pytest.fixture(scope="module")
def fig1_traj(fig1):
    _, traj = simulate(fig1, np.arange(0, 60.001, 0.05))
    return traj


@pytest.mark.parametrize("s", [0.0, 5.0, 20.0])
@pytest.mark.parametrize("pair", [("a", "a"), ("sigma", "a"), ("a", "sigma"), ("sigma", "sigma")])
def test_regression_matches_brute_force(fig1, fig1_traj, s, pair):
    tau = np.linspace(0, 30, 16)
    fut = qrt_future(fig1, fig1_traj, s, tau, *pair)
    past = qrt_past(fig1, fig1_traj, s, tau, *pair)
    assert np.abs(fut - qrt_brute_force(fig1, s, tau, *pair, direction="future")).max() < 1e-10
    assert np.abs(past - qrt_brute_force(fig1, s, tau, *pair, direction="past")).max() < 1e-10


def test_regression_with_fano(fig3):
    _, traj = simulate(fig3, np.arange(0, 40.001, 0.05))
    tau = np.linspace(0, 30, 11)
    for direction, fn in (("future", qrt_future), ("past", qrt_past)):
        got = fn(fig3, traj, 17.3, tau, "a", "sigma")
        ref = qrt_brute_force(fig3, 17.3, tau, "a", "sigma", direction=direction)
        assert np.abs(got - ref).max() < 1e-10


def test_past_correlation_vanishes_outside_causal_window(fig1, fig1_traj):
    s = 10.0
    trace = correlation_past(fig1, fig1_traj, s, np.linspace(0, 30, 301))
    outside = trace.tau_prime < -s
    assert np.all(trace.values[outside] == 0)
    assert np.all(trace.window_mask == ((trace.tau_prime > -s) & (trace.tau_prime < 0)))
    assert np.all(np.diff(trace.tau_prime) > 0)


def test_equal_time_value_is_cavity_population(fig1, fig1_traj):
    s = 7.5
    n = fig1_traj.at(np.array([s]))[0, 3]
    assert correlation_future(fig1, fig1_traj, s, [0.0]).values[0] == pytest.approx(n, abs=1e-14)
    assert correlation_past(fig1, fig1_traj, s, [0.0]).values[0] == pytest.approx(n, abs=1e-14)


def test_lag_validation(fig1, fig1_traj):
    with pytest.raises(ValueError):
        qrt_future(fig1, fig1_traj, 1.0, [-0.1])
    with pytest.raises(ValueError):
        qrt_past(fig1, fig1_traj, -1.0, [0.1])
    with pytest.raises(OutOfTrajectory):
        qrt_future(fig1, fig1_traj, 100.0, [0.1])
    with pytest.raises(ValueError, match="channel"):
        qrt_future(fig1, fig1_traj, 1.0, [0.1], "b")


def _damped(t, amp, omega, phase, decay):
    return amp * np.exp(-decay * t) * np.cos(omega * t + phase)


def _fit_oscillation(t, y, omega0):
    amp0 = np.abs(y).max()
    popt, _ = curve_fit(_damped, t, y, p0=[amp0, omega0, 0.0, 0.0], maxfev=20000)
    return popt


def test_past_and_future_oscillate_at_half_the_splitting(fig1, fig1_traj):
    """Both halves of Re G oscillate at |Im(g+ - g-)|/2 per unit lag, with different phases."""
    s = 20.0
    omega = rate_eigenvalues(fig1).splitting / 2 / HBAR  # rad/ps
    tau = np.arange(0, 20.0, 0.02)
    fut = correlation_future(fig1, fig1_traj, s, tau)
    past = correlation_past(fig1, fig1_traj, s, tau)
    f = _fit_oscillation(tau, fut.values.real, omega)
    p = _fit_oscillation(tau, past.values[::-1].real, omega)
    assert abs(f[1]) == pytest.approx(omega, rel=0.01)
    assert abs(p[1]) == pytest.approx(omega, rel=0.01)
    phase_f = np.angle(np.sign(f[0]) * np.exp(1j * np.sign(f[1]) * f[2]))
    phase_p = np.angle(np.sign(p[0]) * np.exp(1j * np.sign(p[1]) * p[2]))
    assert abs(np.angle(np.exp(1j * (phase_f - phase_p)))) > 0.1


def test_concatenate_and_csv(tmp_path, fig1, fig1_traj):
    tau = np.linspace(0, 5, 11)
    joined = CorrelationTrace.concatenate(
        correlation_past(fig1, fig1_traj, 3.0, tau), correlation_future(fig1, fig1_traj, 3.0, tau)
    )
    assert joined.tau_prime.size == 21
    assert np.all(np.diff(joined.tau_prime) > 0)
    path = tmp_path / "c.csv"
    joined.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["tau_prime_ps", "re", "im", "in_causal_window"]
    back = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows[1:]])
    assert np.allclose(back[:, 0], joined.tau_prime, rtol=1e-11, atol=0)
    assert np.allclose(back[:, 1] + 1j * back[:, 2], joined.values, rtol=1e-11, atol=1e-300)
    assert [int(r[3]) for r in rows[1:]] == list(joined.window_mask.astype(int))


def test_default_tau_step(fig1):
    h = default_tau_step_ps(fig1)
    period = 2 * np.pi * HBAR / rate_eigenvalues(fig1).splitting
    assert h == pytest.approx(0.02 * period, rel=1e-12)
    with pytest.raises(ValueError):
        default_tau_step_ps(SystemParams(g_mag=0, kappa=0, gamma=0))


@pytest.mark.parametrize("name", ["fig1", "fig3"])
def test_rate_sum_rule(name, request):
    p = request.getfixturevalue(name)
    r = rate_eigenvalues(p)
    expected = -(p.gamma_tot + 1j * (p.omega_21 + p.omega_c))
    assert abs(r.gamma_plus + r.gamma_minus - expected) <= 1e-10 * abs(expected)
    assert r.gamma_plus.real < 0 and r.gamma_minus.real < 0


def test_emitter_only_correlations(tls):
    p = tls.replace(omega_21=30.0, gamma_ph=30.0)
    _, traj = simulate(p, np.arange(0, 40, 0.01))
    s = 5.0
    tau = np.linspace(0, s, 11)
    decay = np.exp(-(0.5 * p.gamma + p.gamma_ph + 1j * p.omega_21) * tau / HBAR)
    fut = qrt_future(p, traj, s, tau, "sigma", "sigma")
    past = qrt_past(p, traj, s, tau, "sigma", "sigma")
    assert np.abs(fut - np.exp(-p.gamma * s / HBAR) * decay).max() < 1e-10
    assert np.abs(past - np.exp(-p.gamma * (s - tau) / HBAR) * decay).max() < 1e-10


def test_coefficient_frequency(fig1):
    h = 0.01
    tau = np.arange(2**14) * h
    c = coefficient_set(fig1).c_a_2(tau)
    spec = np.abs(np.fft.fft(c))
    freqs = 2 * np.pi * np.fft.fftfreq(tau.size, h) * HBAR  # ueV
    half = rate_eigenvalues(fig1).splitting / 2
    assert abs(abs(freqs[np.argmax(spec)]) - half) <= freqs[1]


def test_past_and_future_are_not_mirror_images(fig1, fig1_traj):
    tau = np.arange(0, 10, 0.05)
    fut = correlation_future(fig1, fig1_traj, 10.0, tau).values
    past = correlation_past(fig1, fig1_traj, 10.0, tau).values[::-1]
    assert np.abs(fut - np.conj(past)).max() > 1e-9
