"""Scenario execution, peak-level extraction and Monte-Carlo sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import ImmConfig, WdamfResult, estimate_noise_variance, wd_amf
from .oracles import matched_filter, predict_false_targets
from .signals import (
    SPEED_OF_LIGHT,
    ComplexSeries,
    JammerParams,
    NoiseParams,
    TargetParams,
    WaveformParams,
    matched_filter_ref,
    sjr_to_amplitude,
    synthesize_scene,
)

PEAK_FLOOR_DB = -300.0

# gap (seconds) between the last signal-affected lag and the noise region
_NOISE_MARGIN = 1e-6


def range_to_delay(range_m: float) -> float:
    return 2.0 * range_m / SPEED_OF_LIGHT


@dataclass(frozen=True)
class TargetSpec:
    delay: float
    velocity: float = 0.0
    amplitude: float = 1.0


@dataclass(frozen=True)
class JammerSpec:
    """Repeater description; ``sjr_db`` (when set) overrides ``amplitude``."""

    period: float
    duty: float
    delay: float
    velocity: float = 0.0
    amplitude: float | None = None
    sjr_db: float | None = None
    sjr_convention: str = "energy"

    def __post_init__(self):
        if (self.amplitude is None) == (self.sjr_db is None):
            raise ValueError("a jammer needs exactly one of amplitude / sjr_db")
        if self.sjr_convention not in ("energy", "amplitude"):
            raise ValueError(f"unknown sjr_convention {self.sjr_convention!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    waveform: WaveformParams
    targets: tuple[TargetSpec, ...] = ()
    jammers: tuple[JammerSpec, ...] = ()
    snr_db: float | None = 0.0
    seed: int = 0
    carrier_frequency: float = 0.0
    noise_span: float = 20e-6
    n_max: int | None = None

    def target_params(self) -> list[TargetParams]:
        return [TargetParams(t.delay, t.amplitude, t.velocity, self.carrier_frequency)
                for t in self.targets]

    def jammer_params(self) -> list[JammerParams]:
        ref = self.targets[0].amplitude if self.targets else 1.0
        out = []
        for j in self.jammers:
            amp = j.amplitude
            if j.sjr_db is not None:
                amp = sjr_to_amplitude(j.sjr_db, j.duty, j.sjr_convention, ref)
            out.append(JammerParams(j.period, j.duty, j.delay, amp, j.velocity,
                                    self.carrier_frequency))
        return out

    def noise_params(self, seed: int | None = None) -> NoiseParams:
        ref = self.targets[0].amplitude if self.targets else 1.0
        return NoiseParams(self.snr_db, self.seed if seed is None else seed, ref)

    def with_variable(self, name: str, value: float) -> "ScenarioConfig":
        """Copy with one sweep variable changed (applied to every jammer)."""
        if name == "snr_db":
            return replace(self, snr_db=value)
        if name == "sjr_db":
            js = tuple(replace(j, sjr_db=value, amplitude=None) for j in self.jammers)
            return replace(self, jammers=js)
        if name == "T_J":
            return replace(self, jammers=tuple(replace(j, period=value) for j in self.jammers))
        if name == "duty":
            return replace(self, jammers=tuple(replace(j, duty=value) for j in self.jammers))
        raise ValueError(f"unknown sweep variable {name!r}")

    # geometry ------------------------------------------------------------

    def _delays(self) -> list[float]:
        return [t.delay for t in self.targets] + [j.delay for j in self.jammers] or [0.0]

    def noise_lag_start(self) -> float:
        return max(self._delays()) + self.waveform.pulse_width + _NOISE_MARGIN

    def scene_window(self) -> tuple[float, float]:
        T = self.waveform.pulse_width
        lo = min(self._delays()) - 1.5 * T
        hi = self.noise_lag_start() + self.noise_span + 0.5 * T + self.waveform.dt
        return lo, hi

    def guard_window(self) -> tuple[float, float]:
        """Signal-free stretch of the received signal (for noise estimation)."""
        lo, hi = self.scene_window()
        return max(self._delays()) + 0.5 * self.waveform.pulse_width + _NOISE_MARGIN, hi

    def profile_lags(self) -> np.ndarray:
        fs = self.waveform.sample_rate
        T = self.waveform.pulse_width
        lo = min(self._delays()) - T
        hi = self.noise_lag_start() + self.noise_span
        return np.arange(int(math.ceil(lo * fs)), int(math.floor(hi * fs)))


@dataclass(frozen=True)
class LagRegions:
    """Global lag indices of the target, interference and noise regions."""

    target: np.ndarray
    interference: np.ndarray
    noise: np.ndarray

    def union(self) -> np.ndarray:
        return np.unique(np.concatenate([self.target, self.interference, self.noise]))


def _half_window(p: WaveformParams) -> int:
    # lags within one sample plus half the -3 dB mainlobe of the nominal position
    return int(math.floor(1.0 + 0.5 * p.mainlobe_width() * p.sample_rate + 1e-9))


def mainlobe_orders(duty: float) -> int:
    """Largest false-target order strictly inside the first null of the Sa envelope."""
    return int(math.ceil(1.0 / duty - 1e-9)) - 1


def lag_regions(cfg: ScenarioConfig) -> LagRegions:
    """Measurement windows.

    Target: true delay (shifted by the LFM range-Doppler coupling) +- one sample
    +- half the -3 dB mainlobe. Interference: the same window around every
    predicted false target of every jammer (orders inside the first Sa null),
    excluding target windows. Noise: a stretch of lags whose filter span holds
    no signal at all.
    """
    p = cfg.waveform
    fs, k = p.sample_rate, p.chirp_rate
    hw = _half_window(p)
    offs = np.arange(-hw, hw + 1)

    tgt = [int(round((t.delay - tp.doppler / k) * fs)) + offs
           for t, tp in zip(cfg.targets, cfg.target_params())]
    target = np.unique(np.concatenate(tgt)) if tgt else np.zeros(0, np.int64)

    jam = []
    for jp in cfg.jammer_params():
        n_max = cfg.n_max if cfg.n_max is not None else mainlobe_orders(jp.duty)
        for ft in predict_false_targets(p, jp, n_max):
            c = int(round((jp.delay + ft.lag - jp.doppler / k) * fs))
            jam.append(c + offs)
    interference = np.unique(np.concatenate(jam)) if jam else np.zeros(0, np.int64)
    interference = np.setdiff1d(interference, target)

    n0 = int(math.ceil(cfg.noise_lag_start() * fs))
    noise = np.arange(n0, n0 + int(round(cfg.noise_span * fs)))
    return LagRegions(target.astype(np.int64), interference.astype(np.int64), noise)


@dataclass(frozen=True)
class PeakReport:
    """Peak levels (dB re the jam-free noiseless MF target peak)."""

    lambda_s_db: float
    lambda_j_db: float
    lambda_n_db: float

    def as_row(self) -> list[float]:
        return [self.lambda_s_db, self.lambda_j_db, self.lambda_n_db]


def _peak_power(values: dict, lags: np.ndarray) -> float:
    if lags.size == 0:
        return 0.0
    return float(max(abs(values[int(l)]) ** 2 for l in lags))


def _db(power: float) -> float:
    return 10.0 * math.log10(power) if power > 0 else PEAK_FLOOR_DB


def peak_powers(lag_indices: np.ndarray, output: np.ndarray, regions: LagRegions,
                reference: float) -> tuple[float, float, float]:
    """Linear peak powers in the three regions, normalised by ``reference``."""
    values = dict(zip(np.asarray(lag_indices).tolist(), output))
    r2 = reference * reference
    return (_peak_power(values, regions.target) / r2,
            _peak_power(values, regions.interference) / r2,
            _peak_power(values, regions.noise) / r2)


def report_from_powers(powers: Sequence[float]) -> PeakReport:
    return PeakReport(*(_db(p) for p in powers))


def reference_peak(cfg: ScenarioConfig) -> float:
    """Noiseless, jam-free MF target peak (pulse width when there is no target)."""
    if not cfg.targets:
        return cfg.waveform.pulse_width
    p = cfg.waveform
    x = synthesize_scene(p, cfg.target_params(), [], NoiseParams(None), cfg.scene_window())
    mf = matched_filter(x, matched_filter_ref(p))
    regions = lag_regions(cfg)
    idx = np.round(mf.times * p.sample_rate).astype(np.int64)
    sel = np.isin(idx, regions.target)
    return float(np.abs(mf.samples[sel]).max())


@dataclass
class TrialResult:
    lag_indices: np.ndarray
    mf_output: np.ndarray
    wdamf_output: np.ndarray
    mf_powers: tuple[float, float, float]
    wdamf_powers: tuple[float, float, float]
    sample_rate: float
    wdamf: WdamfResult = field(repr=False, default=None)

    @property
    def mf_report(self) -> PeakReport:
        return report_from_powers(self.mf_powers)

    @property
    def wdamf_report(self) -> PeakReport:
        return report_from_powers(self.wdamf_powers)

    @property
    def lags(self) -> np.ndarray:
        return self.lag_indices / self.sample_rate


def synthesize(cfg: ScenarioConfig, seed: int) -> ComplexSeries:
    return synthesize_scene(cfg.waveform, cfg.target_params(), cfg.jammer_params(),
                            cfg.noise_params(seed), cfg.scene_window())


def run_trial(cfg: ScenarioConfig, seed: int, imm: ImmConfig | None = None,
              full_profile: bool = False, reference: float | None = None) -> TrialResult:
    """One Monte-Carlo realisation through both the MF and WD-AMF branches.

    With ``full_profile`` the outputs cover every lag of the profile range;
    otherwise only the measurement regions are filtered (per-lag processing is
    independent, so the values coincide).
    """
    imm = imm or ImmConfig()
    p = cfg.waveform
    x = synthesize(cfg, seed)
    h = matched_filter_ref(p)
    regions = lag_regions(cfg)
    lags = cfg.profile_lags() if full_profile else regions.union()
    if full_profile:
        lags = np.union1d(lags, regions.union())

    if imm.sigma_mode == "known":
        sigma2 = cfg.noise_params(seed).variance
    else:
        sigma2 = estimate_noise_variance(x, cfg.guard_window())

    mf = matched_filter(x, h)
    first = int(round(mf.start_time * p.sample_rate))
    mf_out = mf.samples[lags - first]
    wd = wd_amf(x, h, imm, sigma2, lags, seed=seed)

    ref = reference if reference is not None else reference_peak(cfg)
    return TrialResult(
        lags, mf_out, wd.output,
        peak_powers(lags, mf_out, regions, ref),
        peak_powers(lags, wd.output, regions, ref),
        p.sample_rate, wd,
    )


def trial_seed(master: int, point: int, trial: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=(int(point), int(trial)))
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple[float, ...]
    trials: int
    base: ScenarioConfig
    master_seed: int = 0

    def __post_init__(self):
        if not self.grid:
            raise ValueError("sweep grid is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.variable not in ("snr_db", "sjr_db", "T_J", "duty"):
            raise ValueError(f"unknown sweep variable {self.variable!r}")


@dataclass(frozen=True)
class SweepRow:
    value: float
    wdamf: PeakReport
    mf: PeakReport


class SweepError(RuntimeError):
    pass


def mean_report(powers: Sequence[Sequence[float]]) -> PeakReport:
    """dB of the mean linear peak power over trials."""
    arr = np.asarray(powers, dtype=float)
    return report_from_powers(arr.mean(axis=0))


def run_point(cfg: ScenarioConfig, seeds: Sequence[int], imm: ImmConfig | None = None,
              workers: int = 1) -> tuple[PeakReport, PeakReport]:
    """Average WD-AMF and MF peak levels over ``seeds``."""
    ref = reference_peak(cfg)

    def one(s):
        r = run_trial(cfg, s, imm, reference=ref)
        return r.wdamf_powers, r.mf_powers

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(one, seeds))
    else:
        res = [one(s) for s in seeds]
    return mean_report([r[0] for r in res]), mean_report([r[1] for r in res])


def run_sweep(spec: SweepSpec, imm: ImmConfig | None = None,
              workers: int = 1) -> list[SweepRow]:
    rows = []
    for i, value in enumerate(spec.grid):
        cfg = spec.base.with_variable(spec.variable, value)
        seeds = [trial_seed(spec.master_seed, i, k) for k in range(spec.trials)]
        try:
            wd, mf = run_point(cfg, seeds, imm, workers)
        except Exception as exc:
            raise SweepError(f"sweep point {spec.variable}={value} failed: {exc}") from exc
        rows.append(SweepRow(float(value), wd, mf))
    return rows


# ---------------------------------------------------------------------------
# reference scenarios


def construction_scenario(sjr_db: float = -15.0, snr_db: float | None = 0.0,
                          period: float = 20e-6, duty: float = 0.2,
                          seed: int = 0) -> ScenarioConfig:
    """Single target, single repeater 40 us behind it."""
    return ScenarioConfig(
        WaveformParams(100e-6, 6e6, 15e6),
        (TargetSpec(0.0),),
        (JammerSpec(period, duty, 40e-6, sjr_db=sjr_db),),
        snr_db=snr_db, seed=seed,
    )


def multi_jammer_scenario(sjr_db: float = -20.0, snr_db: float | None = 0.0,
                          seed: int = 0) -> ScenarioConfig:
    """Moving target at 60 km with repeaters at 54 km and 120 km."""
    return ScenarioConfig(
        WaveformParams(100e-6, 6e6, 15e6),
        (TargetSpec(range_to_delay(60e3), 300.0),),
        (JammerSpec(10e-6, 0.25, range_to_delay(54e3), -300.0, sjr_db=sjr_db),
         JammerSpec(10e-6, 0.25, range_to_delay(120e3), 300.0, sjr_db=sjr_db)),
        snr_db=snr_db, seed=seed, carrier_frequency=2e9,
    )
