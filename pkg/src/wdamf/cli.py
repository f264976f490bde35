"""Command-line front end.

    wdamf simulate --config run.yaml [--seed N] [--out DIR]
    wdamf diagnose --config run.yaml --lags 0,20,40 [--out DIR]
    wdamf sweep    --config run.yaml [--out DIR] [--threads N]

Exit codes: 0 ok, 1 bad configuration or arguments, 2 runtime failure.

CSV files (header row always present, floats written with ``repr``):

profile.csv   lag_us, mf_db, wdamf_db, mf_abs, wdamf_abs
              dB re the noiseless jam-free MF target peak; zero magnitude is
              written as the -300 dB floor.
peaks.csv     branch (mf | wdamf), lambda_s_db, lambda_j_db, lambda_n_db
diagnose_<lag>us.csv
              mu_us, abs_v, abs_v_hat, abs_y, abs_y_hat, E, O, u1, u2, u3, a
              (u1..u3: steady / disappearance / appearance mode probabilities,
              a: integration weight)
sweep.csv     grid_value, lambda_s_db, lambda_j_db, lambda_n_db (WD-AMF branch,
              grid values in the config's units)
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .core import estimate_noise_variance, process_lag
from .harness import (
    PEAK_FLOOR_DB,
    reference_peak,
    run_sweep,
    run_trial,
    synthesize,
)
from .signals import matched_filter_ref

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else _fmt(r) for r in row])


def _to_db(mag: np.ndarray, ref: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(np.abs(mag) / ref)
    return np.where(np.isfinite(db), db, PEAK_FLOOR_DB)


def cmd_simulate(args) -> int:
    run = load_config(args.config)
    cfg = run.scenario(args.seed)
    imm = run.imm_config()
    ref = reference_peak(cfg)
    res = run_trial(cfg, cfg.seed, imm, full_profile=True, reference=ref)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lag_us = res.lags * 1e6
    mf_db, wd_db = _to_db(res.mf_output, ref), _to_db(res.wdamf_output, ref)
    _write_csv(out / "profile.csv", ["lag_us", "mf_db", "wdamf_db", "mf_abs", "wdamf_abs"],
               zip(lag_us, mf_db, wd_db, np.abs(res.mf_output), np.abs(res.wdamf_output)))
    _write_csv(out / "peaks.csv", ["branch", "lambda_s_db", "lambda_j_db", "lambda_n_db"],
               [["mf", *res.mf_report.as_row()], ["wdamf", *res.wdamf_report.as_row()]])
    return EXIT_OK


def _parse_lags(text: str) -> list[float]:
    try:
        lags = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--lags: expected comma-separated numbers, got {text!r}")
    if not lags:
        raise ConfigError("--lags: no lag given")
    return lags


def cmd_diagnose(args) -> int:
    run = load_config(args.config)
    cfg = run.scenario(args.seed)
    imm = run.imm_config()
    lags = _parse_lags(args.lags)
    profile = cfg.profile_lags()
    fs = cfg.waveform.sample_rate
    for t in lags:
        idx = int(round(t * 1e-6 * fs))
        if not profile[0] <= idx <= profile[-1]:
            raise ConfigError(f"--lags: {t} us outside the profile range "
                              f"[{profile[0] / fs * 1e6:g}, {profile[-1] / fs * 1e6:g}] us")

    x = synthesize(cfg, cfg.seed)
    h = matched_filter_ref(cfg.waveform)
    if imm.sigma_mode == "known":
        sigma2 = cfg.noise_params(cfg.seed).variance
    else:
        sigma2 = estimate_noise_variance(x, cfg.guard_window())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in lags:
        tr, est, dec = process_lag(x, h, t * 1e-6, imm, sigma2, cfg.seed)
        mu = tr.wrf.times
        n = mu.size
        objective = tr.objective_slope * (np.arange(1, n + 1) * tr.wrf.dt)
        u = est.mode_probabilities
        rows = zip(mu * 1e6, np.abs(tr.wrf.samples), np.abs(est.v_hat),
                   np.abs(tr.cwcf.samples), np.abs(est.y_hat), np.full(n, tr.threshold),
                   objective, u[:, 0], u[:, 1], u[:, 2], dec.weights)
        _write_csv(out / f"diagnose_{t:g}us.csv",
                   ["mu_us", "abs_v", "abs_v_hat", "abs_y", "abs_y_hat", "E", "O",
                    "u1", "u2", "u3", "a"], rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = load_config(args.config)
    spec = run.sweep_spec(args.seed)
    rows = run_sweep(spec, run.imm_config(), workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", ["grid_value", "lambda_s_db", "lambda_j_db", "lambda_n_db"],
               [[g, *r.wdamf.as_row()] for g, r in zip(run.sweep.grid, rows)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wdamf", description="Waveform-domain adaptive matched filtering against ISRJ.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override noise.seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for trials")

    p = sub.add_parser("simulate", help="single run: range profile and peak levels")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("diagnose", help="per-lag IMM internals")
    common(p)
    p.add_argument("--lags", required=True, help="comma-separated lags in microseconds")
    p.set_defaults(func=cmd_diagnose)
    p = sub.add_parser("sweep", help="Monte-Carlo sweep from the config's sweep section")
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
