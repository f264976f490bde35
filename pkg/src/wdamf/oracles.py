"""Closed-form references: matched filtering, ISRJ false targets and the
piecewise cumulative waveform coherence functions (CWCFs) of an LFM pulse.

The CWCF of a pulse component at lag ``t`` is the running integral over the
waveform domain ``mu in [-T/2, T/2]`` of ``x(t - mu) h(mu)``. For an LFM chirp
every gated piece has the closed form

    c(rho) = (rho - alpha) * exp(j pi k t (t - rho - alpha)) * Sa(pi k t (rho - alpha))

on ``[alpha, beta]``, is zero before ``alpha`` and saturates at ``c(beta)``
afterwards. Amplitudes are unit; callers scale by A_s or A_j.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signals import ComplexSeries, JammerParams, WaveformParams

_SA_SERIES_CUTOFF = 1e-8


def sa(x):
    """``sin(x) / x`` with the removable singularity filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SA_SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)


def matched_filter(x: ComplexSeries, h: ComplexSeries) -> ComplexSeries:
    """Riemann-normalised matched filter ``x_o(t) = sum_m x(t - mu_m) h(mu_m) dmu``.

    The output sample ``q`` sits at lag ``x.start_time + h.start_time + q / fs``,
    so filtering a chirp with its own reference peaks at lag 0 with value ~T.
    """
    if not math.isclose(x.sample_rate, h.sample_rate, rel_tol=1e-12):
        raise ValueError(
            f"sample-rate mismatch: signal {x.sample_rate} Hz, filter {h.sample_rate} Hz"
        )
    out = np.convolve(x.samples, h.samples) * x.dt
    return ComplexSeries(out, x.sample_rate, x.start_time + h.start_time)


def upsampled_peak(x: ComplexSeries, lag: float, half_width: float,
                   factor: int = 16) -> tuple[float, complex]:
    """Location and value of the largest ``|x|`` within ``lag +- half_width``
    after band-limited (zero-padded FFT) interpolation by ``factor``.

    Peaks that fall between grid samples are otherwise under-read by up to the
    mainlobe loss at half a sample.
    """
    n = len(x)
    spec = np.fft.fft(x.samples)
    m = n * factor
    padded = np.zeros(m, dtype=complex)
    half = (n + 1) // 2
    padded[:half] = spec[:half]
    padded[m - (n - half):] = spec[half:]
    fine = np.fft.ifft(padded) * factor
    times = x.start_time + np.arange(m) / (x.sample_rate * factor)
    sel = np.flatnonzero(np.abs(times - lag) <= half_width)
    if sel.size == 0:
        raise ValueError("search window does not overlap the series")
    i = sel[np.abs(fine[sel]).argmax()]
    return float(times[i]), complex(fine[i])


@dataclass(frozen=True)
class FalseTargetPrediction:
    order: int
    lag: float
    amplitude_factor: float


def predict_false_targets(p: WaveformParams, j: JammerParams,
                          n_max: int) -> list[FalseTargetPrediction]:
    """Ghost peaks of an ISRJ-only matched-filter output, relative to the
    full-pulse peak: lag ``-n f_J / k`` with gain ``f_J T_j Sa(n pi f_J T_j)``."""
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    fj, eps = j.sampling_frequency, j.duty
    return [
        FalseTargetPrediction(n, -n * fj / p.chirp_rate, float(eps * sa(n * np.pi * eps)))
        for n in range(-n_max, n_max + 1)
    ]


@dataclass(frozen=True)
class CwcfPiece:
    """One gated LFM integral: zero, then active on ``[alpha, beta]``, then saturated."""

    alpha: float
    beta: float
    lag: float
    chirp_rate: float

    @property
    def sa_scale(self) -> float:
        """Angular rate of the Sa argument, ``pi k t``."""
        return math.pi * self.chirp_rate * self.lag

    def active(self, rho):
        rho = np.asarray(rho, dtype=float)
        d = rho - self.alpha
        if self.lag == 0.0:
            return d.astype(complex)
        w = self.sa_scale
        c1 = d * np.exp(1j * w * (self.lag - rho - self.alpha))
        return c1 * sa(w * d)

    @property
    def saturation(self) -> complex:
        return complex(self.active(self.beta))

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        clipped = np.clip(rho, self.alpha, self.beta)
        return np.where(rho < self.alpha, 0.0, self.active(clipped))

    def kind(self, rho: float) -> str:
        if rho < self.alpha:
            return "zero"
        return "active" if rho <= self.beta else "saturated"


@dataclass(frozen=True)
class PiecewiseCwcf:
    """Sum of gated pieces over the waveform domain ``[lo, hi]``."""

    pieces: tuple[CwcfPiece, ...]
    lo: float
    hi: float

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return [(pc.alpha, pc.beta) for pc in self.pieces]

    def endpoint(self) -> complex:
        return complex(sum(pc.saturation for pc in self.pieces))


def evaluate_piecewise(c: PiecewiseCwcf, rho):
    """Evaluate a piecewise CWCF at ``rho`` (scalar or array)."""
    r = np.asarray(rho, dtype=float)
    tol = 1e-12 * (c.hi - c.lo)
    if np.any(r < c.lo - tol) or np.any(r > c.hi + tol):
        raise ValueError(f"rho outside the waveform domain [{c.lo}, {c.hi}]")
    total = np.zeros(r.shape, dtype=complex)
    for pc in c.pieces:
        total = total + pc(r)
    return total[()] if total.ndim == 0 else total


def analytic_cwcf_echo(p: WaveformParams, t: float) -> PiecewiseCwcf:
    """CWCF of the unit echo ``s`` at lag ``t`` (all-zero when ``|t| > T``)."""
    T = p.pulse_width
    lo, hi = -T / 2, T / 2
    alpha = max(lo, -T / 2 + t)
    beta = min(hi, T / 2 + t)
    pieces = (CwcfPiece(alpha, beta, t, p.chirp_rate),) if alpha < beta else ()
    return PiecewiseCwcf(pieces, lo, hi)


def analytic_cwcf_jam(p: WaveformParams, j: JammerParams, t: float) -> PiecewiseCwcf:
    """CWCF of the unit ISRJ signal at lag ``t``: one piece per slice whose
    window ``[alpha_n, beta_n]`` is non-empty, summed (staircase accumulation)."""
    T, TJ, Tj = p.pulse_width, j.period, j.slice_width
    lo, hi = -T / 2, T / 2
    a0 = max(lo, -T / 2 + t)
    b0 = min(hi, T / 2 + t)
    pieces = []
    if a0 < b0:
        # slice n covers [n T_J + t - T_j/2, n T_J + t + T_j/2]; keep those hitting [a0, b0]
        n_lo = math.floor((a0 - t - Tj / 2) / TJ) - 1
        n_hi = math.ceil((b0 - t + Tj / 2) / TJ) + 1
        for n in range(n_lo, n_hi + 1):
            alpha = max(a0, -Tj / 2 + n * TJ + t)
            beta = min(b0, Tj / 2 + n * TJ + t)
            if alpha < beta:
                pieces.append(CwcfPiece(alpha, beta, t, p.chirp_rate))
    return PiecewiseCwcf(tuple(pieces), lo, hi)


def dump_trace_csv(path: str | Path, rho: np.ndarray, values: np.ndarray) -> None:
    """Write ``rho, re, im, abs`` rows of an analytic trace for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho_us", "re", "im", "abs"])
        for r, v in zip(rho, values):
            w.writerow([repr(float(r) * 1e6), repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v)))])
