"""Waveform-domain adaptive matched filtering (WD-AMF).

For every output lag ``t`` the matched-filter integrand, the waveform response
function (WRF) ``v(mu) = x(t - mu) h(mu)``, is inspected sample by sample. Its
running integral (the CWCF) is tracked by a three-model IMM Kalman filter;
samples whose estimated slope exceeds twice the mean slope are treated as
jamming, removed from the integral, and the removed mass is replaced by a
random draw of estimated slopes from the clean part plus fresh noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import _kernel
from .signals import STREAM_COMPENSATION, ComplexSeries, complex_awgn, substream


@dataclass(frozen=True)
class ImmConfig:
    """Tuning of the waveform-domain IMM and decision stage.

    Process noises are relative: with noise variance ``s2`` and threshold ``E``
    (both in WRF units per sample) the slope state receives
    ``q_slope * s2 + q_slope_signal * E**2`` per step, the level state
    ``q_level * (s2 + E**2)``, the Brownian noise state ``s2`` and the
    measurement ``r_rel * (s2 + E**2)``.
    """

    p0: float = 0.01
    jump_k: float = 3.0
    gamma: int = 5
    diag_eps: float = 1e-6
    q_slope: float = 1e-3
    q_slope_signal: float = 1e-4
    q_level: float = 1e-8
    r_rel: float = 1e-6
    v0_scale: float = 1.0
    sigma_mode: str = "known"

    def __post_init__(self):
        if not 0.0 < self.p0 < 0.5:
            raise ValueError(f"p0 must be in (0, 0.5), got {self.p0}")
        if not self.jump_k > 2.0:
            raise ValueError(f"jump_k must exceed 2, got {self.jump_k}")
        if self.gamma < 0 or int(self.gamma) != self.gamma:
            raise ValueError(f"gamma must be a non-negative integer, got {self.gamma}")
        if not 0.0 < self.diag_eps < self.p0:
            raise ValueError("diag_eps must be positive and smaller than p0")
        for name in ("q_slope", "q_slope_signal", "q_level", "r_rel", "v0_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.sigma_mode not in ("known", "estimated"):
            raise ValueError(f"sigma_mode must be 'known' or 'estimated', got {self.sigma_mode!r}")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def transition_matrix(self) -> np.ndarray:
        """Markov switching matrix over (steady, disappearance, appearance).

        The structural zeros on the diagonal are replaced by ``diag_eps`` and
        each row renormalised, so rows sum to one.
        """
        p0, eps = self.p0, self.diag_eps
        return np.array([
            [1.0 - 2.0 * p0, p0, p0],
            [1.0 - eps, eps, 0.0],
            [1.0 - eps, 0.0, eps],
        ])

    def initial_mode_probabilities(self) -> np.ndarray:
        return np.array([1.0 - 2.0 * self.p0, self.p0, self.p0])


@dataclass
class CwcfTrace:
    lag: float
    wrf: ComplexSeries
    cwcf: ComplexSeries
    objective_slope: float
    threshold: float


@dataclass
class ImmEstimate:
    """Per-mu IMM output. ``states`` columns: y, v, delta_minus, delta_plus, w."""

    states: np.ndarray
    mode_probabilities: np.ndarray
    covariances: np.ndarray
    dmu: float
    repairs: int = 0

    @property
    def y_hat(self) -> np.ndarray:
        return self.states[:, 0] * self.dmu

    @property
    def v_hat(self) -> np.ndarray:
        return self.states[:, 1]


@dataclass
class LagDecision:
    invalid: np.ndarray
    weights: np.ndarray
    compensation: complex = 0j
    noise_fill: complex = 0j
    output: complex = 0j

    @property
    def effective(self) -> np.ndarray:
        return np.flatnonzero(self.weights == 1)

    @property
    def n_invalid(self) -> int:
        return int(self.invalid.size)

    @property
    def n_effective(self) -> int:
        return int(self.weights.size - self.invalid.size)


# ---------------------------------------------------------------------------
# waveform-domain primitives


def _lag_offset(x: ComplexSeries, h: ComplexSeries) -> int:
    """Full-convolution index of global lag index 0."""
    return -(x.start_index + h.start_index)


def wrf(x: ComplexSeries, h: ComplexSeries, t: float) -> ComplexSeries:
    """Waveform response ``x(t - mu) h(mu)`` over the filter support.

    ``t`` is snapped to the sample grid; samples of ``x`` outside its support
    read as zero.
    """
    q = int(round(t * x.sample_rate)) + _lag_offset(x, h)
    idx = q - np.arange(len(h))
    ok = (idx >= 0) & (idx < len(x))
    xs = np.zeros(len(h), dtype=np.complex128)
    xs[ok] = x.samples[idx[ok]]
    return h.with_samples(xs * h.samples)


def wrf_matrix(x: ComplexSeries, h: ComplexSeries, lag_indices: np.ndarray) -> np.ndarray:
    """WRFs for many global lag indices at once (lags x mu)."""
    n = len(h)
    q = np.asarray(lag_indices, dtype=np.int64)[:, None] + _lag_offset(x, h)
    padded = np.concatenate([np.zeros(n, complex), x.samples, np.zeros(n, complex)])
    idx = q - np.arange(n)[None, :] + n
    idx = np.clip(idx, 0, padded.size - 1)
    return padded[idx] * h.samples[None, :]


def cwcf(v: ComplexSeries) -> ComplexSeries:
    """Inclusive running integral of a WRF (Riemann sum, ``* dmu``)."""
    return v.with_samples(np.cumsum(v.samples) * v.dt)


def objective_and_threshold(y: ComplexSeries) -> tuple[float, float]:
    """Mean slope ``o = |y(T/2)| / T`` and adaptive threshold ``E = 2 o``."""
    T = len(y) * y.dt
    o = abs(y.samples[-1]) / T
    return o, 2.0 * o


def trace(x: ComplexSeries, h: ComplexSeries, t: float) -> CwcfTrace:
    v = wrf(x, h, t)
    y = cwcf(v)
    o, e = objective_and_threshold(y)
    return CwcfTrace(t, v, y, o, e)


# ---------------------------------------------------------------------------
# five-state IMM (reference form, one lag)

_F_STEADY = np.array([
    [1, 1, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 0, 0, 0, 0],
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 1],
], dtype=float)
_F_VANISH = np.array([
    [1, 1, 1, 0, 0],
    [0, 1, 1, 0, 0],
    [0, -1, 0, 0, 0],
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 1],
], dtype=float)
_F_EMERGE = np.array([
    [1, 1, 0, 1, 0],
    [0, 1, 0, 1, 0],
    [0, 0, 0, 0, 0],
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 1],
], dtype=float)
_H = np.array([1.0, 0.0, 0.0, 0.0, 1.0])
# mode probabilities never drop below this, so mixing normalisers stay positive
_U_FLOOR = 1e-300

# delta_minus := -v before the disappearance prediction
_J_VANISH = np.eye(5)
_J_VANISH[2] = [0, -1, 0, 0, 0]


def _noise_terms(cfg: ImmConfig, e: float, sigma2: float):
    scale2 = sigma2 + e * e
    q = np.zeros(5)
    q[0] = cfg.q_level * scale2
    q[1] = cfg.q_slope * sigma2 + cfg.q_slope_signal * e * e
    q[4] = sigma2
    r = cfg.r_rel * scale2 + 1e-300
    return np.diag(q), r, (cfg.jump_k * e) ** 2, scale2


def imm_kf(y_meas: ComplexSeries, cfg: ImmConfig, threshold: float,
           noise_variance: float) -> ImmEstimate:
    """Five-state IMM over a measured CWCF.

    Models: steady slope, disappearance (slope cancelled through
    ``delta_minus = -v``) and appearance (slope jump ``delta_plus`` with
    circular prior of rms ``jump_k * threshold``). ``noise_variance`` is the
    per-sample variance of the WRF noise.
    """
    dmu = y_meas.dt
    z = y_meas.samples / dmu
    n = z.size
    Q, r_meas, jump_var, scale2 = _noise_terms(cfg, threshold, noise_variance)
    trans = cfg.transition_matrix()
    Fs = (_F_STEADY, _F_VANISH @ _J_VANISH, _F_EMERGE)

    u = cfg.initial_mode_probabilities()
    xs = [np.zeros(5, complex) for _ in range(3)]
    Ps = [np.zeros((5, 5)) for _ in range(3)]
    for P in Ps:
        P[1, 1] = cfg.v0_scale * scale2

    states = np.zeros((n, 5), complex)
    probs = np.zeros((n, 3))
    covs = np.zeros((n, 5, 5))
    repairs = 0
    for m in range(n):
        cbar = trans.T @ u
        x0, P0 = [], []
        for j in range(3):
            w = trans[:, j] * u / cbar[j]
            xm = sum(w[i] * xs[i] for i in range(3))
            Pm = np.zeros((5, 5))
            for i in range(3):
                d = xs[i] - xm
                Pm += w[i] * (Ps[i] + np.outer(d, d.conj()).real)
            x0.append(xm)
            P0.append(Pm)

        loglik = np.zeros(3)
        for j in range(3):
            x, P = x0[j].copy(), P0[j].copy()
            if j == 2:
                x[3] = 0.0
                P[3, :] = 0.0
                P[:, 3] = 0.0
                P[3, 3] = jump_var
            F = Fs[j]
            x = F @ x
            P = F @ P @ F.T + Q
            s = _H @ P @ _H + r_meas
            innov = z[m] - _H @ x
            K = P @ _H / s
            x = x + K * innov
            P = P - np.outer(K, K) * s
            P = 0.5 * (P + P.T)
            if np.any(np.diag(P) < 0):
                P += np.eye(5) * (1e-12 * np.abs(np.diag(P)).sum() + 1e-300)
                P[np.diag_indices(5)] = np.maximum(np.diag(P), 0.0)
                repairs += 1
            xs[j], Ps[j] = x, P
            loglik[j] = -abs(innov) ** 2 / s - math.log(math.pi * s) + math.log(cbar[j])
        u = np.maximum(np.exp(loglik - loglik.max()), _U_FLOOR)
        u /= u.sum()

        xm = sum(u[j] * xs[j] for j in range(3))
        Pm = np.zeros((5, 5))
        for j in range(3):
            d = xs[j] - xm
            Pm += u[j] * (Ps[j] + np.outer(d, d.conj()).real)
        states[m], probs[m], covs[m] = xm, u, Pm
    return ImmEstimate(states, probs, covs, dmu, repairs)


# ---------------------------------------------------------------------------
# decision, compensation, output


def dilate(mask: np.ndarray, gamma: int) -> np.ndarray:
    """Grow a boolean mask by ``gamma`` samples on each side."""
    if gamma == 0 or not mask.any():
        return mask.copy()
    n = mask.size
    csum = np.concatenate([[0], np.cumsum(mask)])
    lo = np.clip(np.arange(n) - gamma, 0, n)
    hi = np.clip(np.arange(n) + gamma + 1, 0, n)
    return (csum[hi] - csum[lo]) > 0


def classify(v_hat: np.ndarray, threshold: float, gamma: int) -> LagDecision:
    """Flag ``|v_hat| > threshold`` samples, dilated by ``gamma``; weight 0 there."""
    bad = dilate(np.abs(v_hat) > threshold, gamma)
    weights = (~bad).astype(np.int8)
    return LagDecision(np.flatnonzero(bad), weights)


def compensate(v_hat: np.ndarray, dec: LagDecision, noise_variance: float,
               rng: np.random.Generator, dmu: float) -> tuple[complex, complex]:
    """Replace the removed integration mass.

    ``L_v`` estimated slopes are drawn from the effective set without
    replacement; when it is too small, all ``L_e`` draws are taken with
    replacement and the missing ``L_v - L_e`` samples are filled with fresh
    noise of the WRF noise variance.
    """
    n_v = dec.n_invalid
    if n_v == 0:
        return 0j, 0j
    eff = dec.effective
    n_e = eff.size
    if n_e >= n_v:
        pick = rng.choice(eff, size=n_v, replace=False)
        return complex(v_hat[pick].sum() * dmu), 0j
    sigma = 0j
    if n_e:
        pick = rng.choice(eff, size=n_e, replace=True)
        sigma = complex(v_hat[pick].sum() * dmu)
    fill = complex(complex_awgn(rng, 1, (n_v - n_e) * noise_variance)[0] * dmu)
    return sigma, fill


def _lag_key(lag_index: int) -> int:
    return 2 * lag_index if lag_index >= 0 else -2 * lag_index - 1


def estimate_noise_variance(x: ComplexSeries, guard: tuple[float, float]) -> float:
    """Noise variance from the median power of a signal-free stretch of ``x``."""
    t = x.times
    sel = (t >= guard[0]) & (t < guard[1])
    if not sel.any():
        raise ValueError("guard window contains no samples")
    return float(np.median(np.abs(x.samples[sel]) ** 2) / math.log(2.0))


@dataclass
class WdamfResult:
    """Filter output on selected global lag indices."""

    lag_indices: np.ndarray
    output: np.ndarray
    sample_rate: float
    n_invalid: np.ndarray = field(default=None)
    thresholds: np.ndarray = field(default=None)
    repairs: int = 0

    @property
    def lags(self) -> np.ndarray:
        return self.lag_indices / self.sample_rate


def run_imm_batch(v: np.ndarray, thresholds: np.ndarray, noise_variance: float,
                  cfg: ImmConfig):
    """Fast IMM over a lags x mu WRF block; returns (v_hat, y_hat, u, repairs)."""
    v = np.ascontiguousarray(v, dtype=np.complex128)
    vhat = np.empty_like(v)
    yhat = np.empty_like(v)
    u = np.empty(v.shape + (3,))
    repairs = _kernel.imm_forward(
        v, np.ascontiguousarray(thresholds, dtype=float), float(noise_variance),
        cfg.transition_matrix(), cfg.initial_mode_probabilities(), cfg.jump_k,
        cfg.q_slope, cfg.q_slope_signal, cfg.q_level, cfg.r_rel, cfg.v0_scale,
        vhat, yhat, u)
    return vhat, yhat, u, repairs


def wd_amf(x: ComplexSeries, h: ComplexSeries, cfg: ImmConfig, noise_variance: float,
           lag_indices, seed: int = 0, force_passthrough: bool = False,
           chunk: int = 256) -> WdamfResult:
    """WD-AMF output at the given global lag indices (``t = index / fs``).

    Each lag is processed independently; its randomness comes from a substream
    keyed on ``(seed, lag index)``, so any subset of lags reproduces the values
    of a full run.
    """
    lag_indices = np.asarray(lag_indices, dtype=np.int64)
    dmu = h.dt
    n = len(h)
    out = np.zeros(lag_indices.size, complex)
    n_invalid = np.zeros(lag_indices.size, np.int64)
    thresholds = np.zeros(lag_indices.size)
    repairs = 0
    for start in range(0, lag_indices.size, chunk):
        block = lag_indices[start:start + chunk]
        v = wrf_matrix(x, h, block)
        e = 2.0 * np.abs(v.sum(axis=1)) / n
        thresholds[start:start + block.size] = e
        if force_passthrough:
            out[start:start + block.size] = v.sum(axis=1) * dmu
            continue
        vhat, _, _, rep = run_imm_batch(v, e, noise_variance, cfg)
        repairs += rep
        for i, li in enumerate(block):
            dec = classify(vhat[i], e[i], cfg.gamma)
            rng = substream(seed, STREAM_COMPENSATION, _lag_key(int(li)))
            sig, fill = compensate(vhat[i], dec, noise_variance, rng, dmu)
            kept = (v[i] * dec.weights).sum() * dmu
            out[start + i] = kept + sig + fill
            n_invalid[start + i] = dec.n_invalid
    return WdamfResult(lag_indices, out, x.sample_rate, n_invalid, thresholds, repairs)


def process_lag(x: ComplexSeries, h: ComplexSeries, t: float, cfg: ImmConfig,
                noise_variance: float, seed: int = 0):
    """Full intermediate record for one lag: (trace, estimate, decision)."""
    tr = trace(x, h, t)
    est = imm_kf(tr.cwcf, cfg, tr.threshold, noise_variance)
    dec = classify(est.v_hat, tr.threshold, cfg.gamma)
    li = int(round(t * x.sample_rate))
    rng = substream(seed, STREAM_COMPENSATION, _lag_key(li))
    dec.compensation, dec.noise_fill = compensate(est.v_hat, dec, noise_variance, rng, tr.wrf.dt)
    dec.output = (tr.wrf.samples * dec.weights).sum() * tr.wrf.dt + dec.compensation + dec.noise_fill
    return tr, est, dec
