"""Peak finding on spectra sampled over a uniform nu grid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import find_peaks

from .errors import NoPeaks


@dataclass(frozen=True)
class Peak:
    position: float
    height: float
    prominence: float


@dataclass(frozen=True)
class PeakReport:
    peaks: tuple
    step: float

    @property
    def main(self) -> Peak:
        return max(self.peaks, key=lambda p: p.height)

    @property
    def count(self) -> int:
        return len(self.peaks)

    @property
    def doublet_separation(self) -> Optional[float]:
        """Distance between the two tallest peaks, or None for a single peak."""
        if len(self.peaks) < 2:
            return None
        a, b = sorted(self.peaks, key=lambda p: p.height, reverse=True)[:2]
        return abs(a.position - b.position)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.peaks])


def _refine(nu, values, k, step):
    if k == 0 or k == len(values) - 1:
        return nu[k], values[k]
    ym, y0, yp = values[k - 1], values[k], values[k + 1]
    denom = ym - 2 * y0 + yp
    if denom >= 0:
        return nu[k], y0
    off = 0.5 * (ym - yp) / denom
    return nu[k] + off * step, y0 - 0.25 * (ym - yp) * off


def analyze_peaks(nu, values, rel_prominence: float = 1e-3, window=None, refine: bool = True) -> PeakReport:
    """Local maxima whose prominence exceeds ``rel_prominence`` times the series maximum.

    ``window=(lo, hi)`` restricts the search to that nu band.  Positions are
    refined by a parabola through the three samples around each maximum.
    """
    nu = np.asarray(nu, dtype=float)
    values = np.asarray(values, dtype=float)
    if nu.size < 3:
        raise ValueError("need at least three samples")
    step = (nu[-1] - nu[0]) / (nu.size - 1)
    if not np.allclose(np.diff(nu), step, rtol=1e-6, atol=0):
        raise ValueError("nu grid must be uniform")
    if window is not None:
        keep = (nu >= window[0]) & (nu <= window[1])
        nu, values = nu[keep], values[keep]
    span = values.max() - values.min() if values.size else 0.0
    if values.size < 3 or span <= 0:
        raise NoPeaks("series is flat")
    # pad so that maxima on the window edge are not reported
    padded = np.concatenate([[-np.inf], values, [-np.inf]])
    idx, props = find_peaks(padded, prominence=rel_prominence * np.abs(values).max())
    idx = idx - 1
    inner = (idx > 0) & (idx < values.size - 1)
    # the padding makes the global maximum infinitely prominent; measure it from the series floor
    idx, prom = idx[inner], np.minimum(props["prominences"][inner], values[idx[inner]] - values.min())
    if idx.size == 0:
        raise NoPeaks("no interior maximum above the prominence threshold")
    peaks = []
    for k, pr in zip(idx, prom):
        x, y = _refine(nu, values, k, step) if refine else (nu[k], values[k])
        peaks.append(Peak(float(x), float(y), float(pr)))
    return PeakReport(tuple(peaks), float(step))


def is_unimodal(nu, values, window=None, rel_prominence: float = 1e-3) -> bool:
    return analyze_peaks(nu, values, rel_prominence, window).count == 1


def satellite_spacing(nu, values, n: int = 3, rel_prominence: float = 1e-3) -> float:
    """Mean gap between the first ``n`` satellites on each side of the main peak."""
    report = analyze_peaks(nu, values, rel_prominence)
    main = report.main.position
    pos = report.positions()
    gaps = []
    for side in (pos[pos > main] - main, main - pos[pos < main]):
        sats = np.sort(side)[:n]
        if sats.size < n:
            raise NoPeaks(f"fewer than {n} satellites on one side of the main peak")
        gaps.extend(np.diff(sats))
    return float(np.mean(gaps))


def oscillation_period(times, series, rel_prominence: float = 1e-3) -> float:
    """Mean spacing of successive refined maxima of a uniformly sampled series."""
    times = np.asarray(times, dtype=float)
    report = analyze_peaks(times, series, rel_prominence)
    pos = np.sort(report.positions())
    if pos.size < 2:
        raise NoPeaks("need at least two maxima to estimate a period")
    return float(np.mean(np.diff(pos)))
