"""Waveform, jammer and scene synthesis on a common sample grid.

All signals live on the global grid ``t_n = n / fs``. Pulse-local quantities
(the transmitted chirp and the interrupted-sampling mask) use the symmetric
support ``[-T/2, T/2)`` so that sample ``N // 2`` sits exactly at ``t = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8

# Tolerance (in samples) used when comparing grid positions with slice edges.
_GRID_TOL = 1e-9


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Streams with different keys never overlap and do not depend on the order
    in which they are created, so per-trial and per-lag randomness is the same
    for serial and parallel execution.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


# Stream identifiers for substream(); fixed so results stay reproducible.
STREAM_NOISE = 0
STREAM_COMPENSATION = 1


@dataclass(frozen=True)
class ComplexSeries:
    """Uniformly sampled complex baseband sequence."""

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    @property
    def start_index(self) -> int:
        """Index of the first sample on the global grid."""
        return int(round(self.start_time * self.sample_rate))

    def with_samples(self, samples: np.ndarray) -> "ComplexSeries":
        return ComplexSeries(samples, self.sample_rate, self.start_time)


@dataclass(frozen=True)
class WaveformParams:
    """LFM pulse: width ``T`` (s), bandwidth ``B`` (Hz), sample rate ``fs`` (Hz)."""

    pulse_width: float
    bandwidth: float
    sample_rate: float

    def __post_init__(self):
        if not self.pulse_width > 0:
            raise ValueError(f"pulse_width must be positive, got {self.pulse_width}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.sample_rate < 2 * self.bandwidth:
            raise ValueError(
                f"sample_rate {self.sample_rate} < 2 * bandwidth {2 * self.bandwidth}"
            )

    @property
    def chirp_rate(self) -> float:
        return self.bandwidth / self.pulse_width

    @property
    def n_samples(self) -> int:
        return int(round(self.pulse_width * self.sample_rate))

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    def pulse_times(self) -> np.ndarray:
        """Sample times of the pulse support ``[-T/2, T/2)``."""
        n = self.n_samples
        return (np.arange(n) - n // 2) / self.sample_rate

    def mainlobe_width(self) -> float:
        """-3 dB width of the compressed pulse (seconds)."""
        return 0.886 / self.bandwidth


def _doppler(velocity: float, carrier: float) -> float:
    if velocity != 0.0 and carrier <= 0.0:
        raise ValueError("a non-zero radial velocity needs a positive carrier_frequency")
    return 2.0 * velocity * carrier / SPEED_OF_LIGHT


@dataclass(frozen=True)
class TargetParams:
    delay: float
    amplitude: complex = 1.0
    velocity: float = 0.0
    carrier_frequency: float = 0.0

    def __post_init__(self):
        if not abs(self.amplitude) > 0:
            raise ValueError("target amplitude must be non-zero")
        _doppler(self.velocity, self.carrier_frequency)

    @property
    def doppler(self) -> float:
        return _doppler(self.velocity, self.carrier_frequency)


@dataclass(frozen=True)
class JammerParams:
    """Self-defensive interrupted-sampling repeater.

    ``period`` is the interrupted-sampling period T_J and ``duty`` the ratio of
    slice width to period. Slices are retransmitted without internal latency;
    any repeater delay is part of ``delay``.
    """

    period: float
    duty: float
    delay: float
    amplitude: complex = 1.0
    velocity: float = 0.0
    carrier_frequency: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"jammer period must be positive, got {self.period}")
        if not 0.0 < self.duty <= 0.5:
            raise ValueError(f"jammer duty must be in (0, 0.5], got {self.duty}")
        _doppler(self.velocity, self.carrier_frequency)

    @property
    def slice_width(self) -> float:
        return self.duty * self.period

    @property
    def sampling_frequency(self) -> float:
        return 1.0 / self.period

    @property
    def doppler(self) -> float:
        return _doppler(self.velocity, self.carrier_frequency)


@dataclass(frozen=True)
class NoiseParams:
    """Complex AWGN at ``snr_db`` per sample relative to an echo of amplitude
    ``signal_amplitude``; ``snr_db=None`` (or ``inf``) means noiseless.
    """

    snr_db: float | None = None
    seed: int = 0
    signal_amplitude: float = 1.0

    @property
    def variance(self) -> float:
        if self.snr_db is None or (math.isinf(self.snr_db) and self.snr_db > 0):
            return 0.0
        return abs(self.signal_amplitude) ** 2 * 10.0 ** (-self.snr_db / 10.0)


def sjr_to_amplitude(sjr_db: float, duty: float = 1.0, convention: str = "energy",
                     target_amplitude: float = 1.0) -> float:
    """Jammer amplitude that realises ``sjr_db`` against the echo.

    ``"amplitude"``: SJR = 20 log10(A_s / A_j).
    ``"energy"``: SJR = 10 log10(E_s / E_j), where the repeater only radiates a
    fraction ``duty`` of the pulse, so E_j = duty * A_j**2 * T.
    """
    if convention == "amplitude":
        return target_amplitude * 10.0 ** (-sjr_db / 20.0)
    if convention == "energy":
        return target_amplitude * 10.0 ** (-sjr_db / 20.0) / math.sqrt(duty)
    raise ValueError(f"unknown SJR convention {convention!r}")


def lfm_waveform(p: WaveformParams) -> ComplexSeries:
    """Unit-modulus chirp ``exp(j pi k t^2)`` on ``[-T/2, T/2)``."""
    t = p.pulse_times()
    return ComplexSeries(np.exp(1j * np.pi * p.chirp_rate * t * t), p.sample_rate, t[0])


def matched_filter_ref(p: WaveformParams) -> ComplexSeries:
    """Matched-filter impulse response ``exp(-j pi k t^2)`` on ``[-T/2, T/2)``."""
    s = lfm_waveform(p)
    return s.with_samples(np.conj(s.samples))


def slice_mask(times: np.ndarray, j: JammerParams, sample_rate: float) -> np.ndarray:
    """Boolean mask of pulse-local ``times`` covered by a repeater slice.

    Slice ``n`` spans ``[n T_J - T_s/2, n T_J + T_s/2)`` with ``n = 0`` centred
    on the pulse centre.
    """
    u = np.asarray(times) * sample_rate
    period = j.period * sample_rate
    half = 0.5 * j.slice_width * sample_rate
    n = np.round(u / period)
    offset = u - n * period
    return (offset >= -half - _GRID_TOL) & (offset < half - _GRID_TOL)


def interrupted_sample(s: ComplexSeries, j: JammerParams) -> ComplexSeries:
    """Gate a pulse with the repeater's sampling function."""
    mask = slice_mask(s.times, j, s.sample_rate)
    return s.with_samples(np.where(mask, s.samples, 0.0))


def complex_awgn(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    """Circular complex Gaussian noise, each quadrature with ``variance / 2``."""
    if variance == 0.0:
        return np.zeros(n, dtype=np.complex128)
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def _place(out: np.ndarray, n_start: int, pulse: np.ndarray, delay: float, fs: float,
           doppler: float, what: str) -> None:
    n = pulse.size
    first = int(round(delay * fs)) - n // 2 - n_start
    if first < 0 or first + n > out.size:
        raise ValueError(f"{what} at delay {delay:g} s does not fit in the scene window")
    idx = np.arange(first, first + n)
    if doppler:
        t = (idx + n_start) / fs
        pulse = pulse * np.exp(2j * np.pi * doppler * t)
    out[first:first + n] += pulse


def synthesize_scene(p: WaveformParams, targets: Sequence[TargetParams],
                     jammers: Sequence[JammerParams], noise: NoiseParams,
                     window: tuple[float, float]) -> ComplexSeries:
    """Received signal: delayed echoes + delayed ISRJ + complex AWGN.

    Delays are quantized to the nearest sample. A component whose support is not
    fully inside ``window`` raises ``ValueError``.
    """
    fs = p.sample_rate
    n_start = int(round(window[0] * fs))
    n_stop = int(round(window[1] * fs))
    if n_stop <= n_start:
        raise ValueError("scene window is empty")
    out = np.zeros(n_stop - n_start, dtype=np.complex128)

    s = lfm_waveform(p)
    for tg in targets:
        _place(out, n_start, tg.amplitude * s.samples, tg.delay, fs, tg.doppler, "target")
    for jm in jammers:
        jam = interrupted_sample(s, jm).samples
        _place(out, n_start, jm.amplitude * jam, jm.delay, fs, jm.doppler, "jammer")

    out += complex_awgn(substream(noise.seed, STREAM_NOISE), out.size, noise.variance)
    return ComplexSeries(out, fs, n_start / fs)
