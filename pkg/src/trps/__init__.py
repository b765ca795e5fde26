"""Time-resolved physical spectra of an emitter coupled to a lossy cavity."""

from .correlations import (
    CorrelationTrace,
    coefficient_oracle,
    coefficient_set,
    correlation_future,
    correlation_past,
    rate_eigenvalues,
)
from .model import HBAR, SystemParams, build_liouvillian, propagate, simulate
from .spectrum import (
    Spectrogram,
    SpectrometerParams,
    energy_integrated_intensity,
    spectral_kernels,
    time_integrated_direct,
    time_integrated_spectrum,
    tls_trps,
    trps,
)

__all__ = [
    "HBAR",
    "CorrelationTrace",
    "Spectrogram",
    "SpectrometerParams",
    "SystemParams",
    "build_liouvillian",
    "coefficient_oracle",
    "coefficient_set",
    "correlation_future",
    "correlation_past",
    "energy_integrated_intensity",
    "propagate",
    "rate_eigenvalues",
    "simulate",
    "spectral_kernels",
    "time_integrated_direct",
    "time_integrated_spectrum",
    "tls_trps",
    "trps",
]
