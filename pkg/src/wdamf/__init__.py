"""Waveform-domain adaptive matched filtering (WD-AMF) against interrupted-sampling
repeater jamming, with the signal simulator and evaluation harness around it."""

from .core import ImmConfig, WdamfResult, process_lag, wd_amf
from .harness import (
    PeakReport,
    ScenarioConfig,
    SweepSpec,
    construction_scenario,
    multi_jammer_scenario,
    run_sweep,
    run_trial,
)
from .oracles import analytic_cwcf_echo, analytic_cwcf_jam, matched_filter, predict_false_targets
from .signals import (
    JammerParams,
    NoiseParams,
    TargetParams,
    WaveformParams,
    lfm_waveform,
    matched_filter_ref,
    synthesize_scene,
)

__version__ = "0.1.0"

__all__ = [
    "ImmConfig", "WdamfResult", "process_lag", "wd_amf",
    "PeakReport", "ScenarioConfig", "SweepSpec", "construction_scenario",
    "multi_jammer_scenario", "run_sweep", "run_trial",
    "analytic_cwcf_echo", "analytic_cwcf_jam", "matched_filter", "predict_false_targets",
    "JammerParams", "NoiseParams", "TargetParams", "WaveformParams",
    "lfm_waveform", "matched_filter_ref", "synthesize_scene",
]
