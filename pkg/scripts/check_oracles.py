"""Print the deviation of each analytic result from its independent reference.

Covers the coefficient functions, the spectral kernels, the emitter closed
form and the one-sided Fourier probe; each line is ``name  max deviation``.
"""

import numpy as np

from trps.config import PRESETS
from trps.correlations import coefficient_oracle, coefficient_set
from trps.model import simulate
from trps.probe import fano_closed_form, fano_probe
from trps.spectrum import (
    SpectrometerParams,
    integration_horizon_ps,
    kernel_quadrature,
    sampling_step_limit_ps,
    spectral_kernels,
    tls_trps,
    trps,
)


def coefficients():
    tau = np.linspace(0, 200, 400)
    for name in ("fig1_res5", "fig3_fano"):
        p = PRESETS[name].params
        yield f"coefficients[{name}]", np.abs(coefficient_set(p)(tau) - coefficient_oracle(p, tau)).max()


def kernels():
    rng = np.random.default_rng(0)
    for name in ("fig1_res5", "fig3_fano"):
        p = PRESETS[name].params
        for gs in (5.0, 150.0, 500.0):
            sp = SpectrometerParams(gs)
            k = spectral_kernels(p, sp)
            dev = 0.0
            for nu, s in zip(rng.uniform(-400, 400, 8), rng.uniform(0, 100, 8)):
                q = kernel_quadrature(p, sp, nu, s)
                dev = max(dev, np.abs(k(nu, s) - q).max() / np.abs(q).max())
            yield f"kernels[{name}, gs={gs:g}] (rel)", dev


def emitter():
    p = PRESETS["figS4_tls"].params
    for gs in (5.0, 50.0, 500.0):
        h = sampling_step_limit_ps(p, gs)
        times = np.arange(int(min(integration_horizon_ps(p, gs), 60.0) / h) + 1) * h
        _, traj = simulate(p, times)
        nu = np.linspace(-1500, 1500, 201)
        sp = SpectrometerParams(gs)
        ref = tls_trps(p, sp, nu, times).values
        got = trps(p, sp, traj, nu, times, channel="tls").values
        yield f"emitter[gs={gs:g}] (rel)", np.abs(got - ref).max() / ref.max()


def probe():
    nu = np.linspace(-600, 600, 241)
    for gs in (50.0, 150.0, 500.0):
        for phi in (0.0, -np.pi / 4, -np.pi / 2):
            q = fano_probe(100.0, gs, phi, nu).values
            yield f"probe[gs={gs:g}, phi={phi:.3f}] (rel)", np.abs(q - fano_closed_form(100.0, gs, phi, nu)).max() / np.abs(q).max()


if __name__ == "__main__":
    for check in (coefficients, kernels, emitter, probe):
        for name, dev in check():
            print(f"{name:40s} {dev:.2e}")
