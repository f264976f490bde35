"""YAML run configuration.

Keys carry their units as suffixes. Every section is optional except
``waveform``; unknown keys are rejected. Example::

    waveform: {T_us: 100, B_MHz: 6, fs_MHz: 15, carrier_GHz: 0}
    targets:
      - {delay_us: 0, velocity_mps: 0, amplitude: 1}
    jammers:
      - {TJ_us: 20, duty: 0.2, delay_us: 40, velocity_mps: 0, sjr_db: -15}
    noise: {snr_db: 0, seed: 0, noise_span_us: 20}
    wdamf: {p0: 0.01, K: 3, gamma_samples: 5, sigma_mode: known}
    sweep: {variable: snr_db, grid: [-10, -5, 0], trials: 50}

``targets[]`` and ``jammers[]`` take either ``delay_us`` or ``range_km``
(two-way delay ``2 d / c``). A jammer takes either ``sjr_db`` (converted with
``sjr_convention``, default ``energy``, relative to the first target's
amplitude) or a raw ``amplitude``. ``noise.snr_db`` is per sample relative to
the first target's amplitude; ``null`` means noiseless.

``wdamf`` defaults: p0 0.01, K 3, gamma_samples 5, diag_eps 1e-6,
sigma_mode known, and ``process_noise`` with q_slope 1e-3,
q_slope_signal 1e-4, q_level 1e-8, r_rel 1e-6, v0_scale 1 (see ImmConfig).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .core import ImmConfig
from .harness import JammerSpec, ScenarioConfig, SweepSpec, TargetSpec, range_to_delay
from .signals import WaveformParams

SWEEP_VARIABLES = {"snr_db": ("snr_db", 1.0), "sjr_db": ("sjr_db", 1.0),
                   "TJ_us": ("T_J", 1e-6), "duty": ("duty", 1.0)}
_PROCESS_NOISE_KEYS = ("q_slope", "q_slope_signal", "q_level", "r_rel", "v0_scale")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _number(where: str, value: Any, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return int(value) if integer else value


def _mapping(where: str, value: Any, allowed: tuple[str, ...]) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(value).__name__}")
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")
    return value


def _one_of(where: str, d: dict, a: str, b: str) -> tuple[str, Any]:
    if (a in d) == (b in d):
        raise ConfigError(f"{where}: give exactly one of {a} / {b}")
    key = a if a in d else b
    return key, _number(f"{where}.{key}", d[key])


@dataclass
class WaveformSection:
    T_us: float
    B_MHz: float
    fs_MHz: float
    carrier_GHz: float = 0.0


@dataclass
class TargetSection:
    delay_us: float | None = None
    range_km: float | None = None
    velocity_mps: float = 0.0
    amplitude: float = 1.0

    def delay(self) -> float:
        return self.delay_us * 1e-6 if self.delay_us is not None else range_to_delay(self.range_km * 1e3)


@dataclass
class JammerSection:
    TJ_us: float
    duty: float
    delay_us: float | None = None
    range_km: float | None = None
    velocity_mps: float = 0.0
    sjr_db: float | None = None
    amplitude: float | None = None
    sjr_convention: str = "energy"

    def delay(self) -> float:
        return self.delay_us * 1e-6 if self.delay_us is not None else range_to_delay(self.range_km * 1e3)


@dataclass
class NoiseSection:
    snr_db: float | None = 0.0
    seed: int = 0
    noise_span_us: float = 20.0


@dataclass
class WdamfSection:
    p0: float = 0.01
    K: float = 3.0
    gamma_samples: int = 5
    diag_eps: float = 1e-6
    sigma_mode: str = "known"
    process_noise: dict = field(default_factory=lambda: {
        "q_slope": 1e-3, "q_slope_signal": 1e-4, "q_level": 1e-8,
        "r_rel": 1e-6, "v0_scale": 1.0})

    def imm_config(self) -> ImmConfig:
        return ImmConfig(p0=self.p0, jump_k=self.K, gamma=self.gamma_samples,
                         diag_eps=self.diag_eps, sigma_mode=self.sigma_mode,
                         **self.process_noise)


@dataclass
class SweepSection:
    variable: str
    grid: list
    trials: int = 50


@dataclass
class RunConfig:
    waveform: WaveformSection
    targets: list[TargetSection] = field(default_factory=list)
    jammers: list[JammerSection] = field(default_factory=list)
    noise: NoiseSection = field(default_factory=NoiseSection)
    wdamf: WdamfSection = field(default_factory=WdamfSection)
    sweep: SweepSection | None = None

    # conversion ----------------------------------------------------------

    def scenario(self, seed: int | None = None) -> ScenarioConfig:
        w = self.waveform
        try:
            p = WaveformParams(w.T_us * 1e-6, w.B_MHz * 1e6, w.fs_MHz * 1e6)
        except ValueError as exc:
            raise ConfigError(f"waveform: {exc}") from exc
        targets = tuple(TargetSpec(t.delay(), t.velocity_mps, t.amplitude) for t in self.targets)
        jammers = []
        for i, j in enumerate(self.jammers):
            try:
                jammers.append(JammerSpec(j.TJ_us * 1e-6, j.duty, j.delay(), j.velocity_mps,
                                          j.amplitude, j.sjr_db, j.sjr_convention))
            except ValueError as exc:
                raise ConfigError(f"jammers[{i}]: {exc}") from exc
        cfg = ScenarioConfig(
            p, targets, tuple(jammers), self.noise.snr_db,
            self.noise.seed if seed is None else seed,
            w.carrier_GHz * 1e9, self.noise.noise_span_us * 1e-6,
        )
        # validate the derived physical parameters up front
        try:
            cfg.target_params()
        except ValueError as exc:
            raise ConfigError(f"targets: {exc}") from exc
        try:
            cfg.jammer_params()
        except ValueError as exc:
            raise ConfigError(f"jammers: {exc}") from exc
        return cfg

    def imm_config(self) -> ImmConfig:
        try:
            return self.wdamf.imm_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"wdamf: {exc}") from exc

    def sweep_spec(self, seed: int | None = None) -> SweepSpec:
        if self.sweep is None:
            raise ConfigError("sweep: section missing")
        name, scale = SWEEP_VARIABLES[self.sweep.variable]
        grid = tuple(float(g) * scale for g in self.sweep.grid)
        try:
            return SweepSpec(name, grid, self.sweep.trials, self.scenario(seed),
                             self.noise.seed if seed is None else seed)
        except ValueError as exc:
            raise ConfigError(f"sweep: {exc}") from exc

    # serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        def clean(d):
            return {k: v for k, v in d.items() if v is not None}

        out = {
            "waveform": asdict(self.waveform),
            "targets": [clean(asdict(t)) for t in self.targets],
            "jammers": [clean(asdict(j)) for j in self.jammers],
            "noise": asdict(self.noise),
            "wdamf": asdict(self.wdamf),
        }
        if self.sweep is not None:
            out["sweep"] = asdict(self.sweep)
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _parse_target(where: str, d: Any) -> TargetSection:
    d = _mapping(where, d, ("delay_us", "range_km", "velocity_mps", "amplitude"))
    key, val = _one_of(where, d, "delay_us", "range_km")
    t = TargetSection(**{key: val})
    if "velocity_mps" in d:
        t.velocity_mps = _number(f"{where}.velocity_mps", d["velocity_mps"])
    if "amplitude" in d:
        t.amplitude = _number(f"{where}.amplitude", d["amplitude"])
        if t.amplitude == 0:
            raise ConfigError(f"{where}.amplitude: must be non-zero")
    return t


def _parse_jammer(where: str, d: Any) -> JammerSection:
    d = _mapping(where, d, ("TJ_us", "duty", "delay_us", "range_km", "velocity_mps",
                            "sjr_db", "amplitude", "sjr_convention"))
    for key in ("TJ_us", "duty"):
        if key not in d:
            raise ConfigError(f"{where}.{key}: missing")
    j = JammerSection(_number(f"{where}.TJ_us", d["TJ_us"]), _number(f"{where}.duty", d["duty"]))
    if not j.TJ_us > 0:
        raise ConfigError(f"{where}.TJ_us: must be positive")
    if not 0 < j.duty <= 0.5:
        raise ConfigError(f"{where}.duty: must be in (0, 0.5]")
    key, val = _one_of(where, d, "delay_us", "range_km")
    setattr(j, key, val)
    key, val = _one_of(where, d, "sjr_db", "amplitude")
    setattr(j, key, val)
    if "velocity_mps" in d:
        j.velocity_mps = _number(f"{where}.velocity_mps", d["velocity_mps"])
    if "sjr_convention" in d:
        if d["sjr_convention"] not in ("energy", "amplitude"):
            raise ConfigError(f"{where}.sjr_convention: expected energy or amplitude")
        j.sjr_convention = d["sjr_convention"]
    return j


def parse_config(data: Any) -> RunConfig:
    """Validate a decoded YAML document and build a RunConfig."""
    top = _mapping("config", data or {}, ("waveform", "targets", "jammers", "noise",
                                           "wdamf", "sweep"))
    if "waveform" not in top:
        raise ConfigError("waveform: section missing")
    w = _mapping("waveform", top["waveform"], ("T_us", "B_MHz", "fs_MHz", "carrier_GHz"))
    for key in ("T_us", "B_MHz", "fs_MHz"):
        if key not in w:
            raise ConfigError(f"waveform.{key}: missing")
        if not _number(f"waveform.{key}", w[key]) > 0:
            raise ConfigError(f"waveform.{key}: must be positive")
    wave = WaveformSection(w["T_us"], w["B_MHz"], w["fs_MHz"])
    if "carrier_GHz" in w:
        wave.carrier_GHz = _number("waveform.carrier_GHz", w["carrier_GHz"])

    def items(name):
        v = top.get(name) or []
        if not isinstance(v, list):
            raise ConfigError(f"{name}: expected a list")
        return v

    targets = [_parse_target(f"targets[{i}]", t) for i, t in enumerate(items("targets"))]
    jammers = [_parse_jammer(f"jammers[{i}]", j) for i, j in enumerate(items("jammers"))]

    noise = NoiseSection()
    if "noise" in top:
        n = _mapping("noise", top["noise"], ("snr_db", "seed", "noise_span_us"))
        if "snr_db" in n:
            noise.snr_db = None if n["snr_db"] is None else _number("noise.snr_db", n["snr_db"])
        if "seed" in n:
            noise.seed = _number("noise.seed", n["seed"], integer=True)
            if noise.seed < 0:
                raise ConfigError("noise.seed: must be non-negative")
        if "noise_span_us" in n:
            noise.noise_span_us = _number("noise.noise_span_us", n["noise_span_us"])
            if not noise.noise_span_us > 0:
                raise ConfigError("noise.noise_span_us: must be positive")

    wd = WdamfSection()
    if "wdamf" in top:
        d = _mapping("wdamf", top["wdamf"], ("p0", "K", "gamma_samples", "diag_eps",
                                             "sigma_mode", "process_noise"))
        for key in ("p0", "K", "diag_eps"):
            if key in d:
                setattr(wd, key, _number(f"wdamf.{key}", d[key]))
        if "gamma_samples" in d:
            wd.gamma_samples = _number("wdamf.gamma_samples", d["gamma_samples"], integer=True)
        if "sigma_mode" in d:
            wd.sigma_mode = d["sigma_mode"]
        if "process_noise" in d:
            pn = _mapping("wdamf.process_noise", d["process_noise"], _PROCESS_NOISE_KEYS)
            for key, val in pn.items():
                wd.process_noise[key] = _number(f"wdamf.process_noise.{key}", val)

    sweep = None
    if top.get("sweep") is not None:
        s = _mapping("sweep", top["sweep"], ("variable", "grid", "trials"))
        if s.get("variable") not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep.variable: expected one of {', '.join(SWEEP_VARIABLES)}")
        grid = s.get("grid")
        if not isinstance(grid, list) or not grid:
            raise ConfigError("sweep.grid: expected a non-empty list")
        grid = [_number(f"sweep.grid[{i}]", g) for i, g in enumerate(grid)]
        trials = _number("sweep.trials", s.get("trials", 50), integer=True)
        if trials < 1:
            raise ConfigError("sweep.trials: must be >= 1")
        sweep = SweepSection(s["variable"], grid, trials)

    cfg = RunConfig(wave, targets, jammers, noise, wd, sweep)
    cfg.scenario()
    cfg.imm_config()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return parse_config(data)
