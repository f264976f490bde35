"""Batched IMM forward pass used by the WD-AMF pipeline.

This is the (y, v, w) marginal of the five-state filter ``core.imm_kf``: the
impulse states are re-initialised before every prediction (delta_minus from
-v for the disappearance model, delta_plus from the jump prior for the
appearance model), so they carry no memory and can be folded into the model
dynamics. Covariances are stored as the six unique entries of a symmetric 3x3.

Units are per sample: the measurement is the running sum of the WRF without
the ``dmu`` factor, so the slope state is in WRF units.
"""

import math

import numpy as np
from numba import njit

# symmetric 3x3 packing: yy, yv, yw, vv, vw, ww
_YY, _YV, _YW, _VV, _VW, _WW = range(6)


@njit(cache=True, nogil=True)
def _predict(model, x, P, xo, Po, qy, qv, qw, jump_var):
    y, v, w = x[0], x[1], x[2]
    yy, yv, yw, vv, vw, ww = P[0], P[1], P[2], P[3], P[4], P[5]
    if model == 1:
        # disappearance: delta_minus = -v cancels the slope in one step
        xo[0] = y
        xo[1] = 0.0
        xo[2] = w
        Po[_YY] = yy + qy
        Po[_YV] = 0.0
        Po[_YW] = yw
        Po[_VV] = qv
        Po[_VW] = 0.0
        Po[_WW] = ww + qw
        return
    # constant slope, optionally plus a circular jump of variance jump_var
    xo[0] = y + v
    xo[1] = v
    xo[2] = w
    Po[_YY] = yy + 2.0 * yv + vv + qy + jump_var
    Po[_YV] = yv + vv + jump_var
    Po[_YW] = yw + vw
    Po[_VV] = vv + qv + jump_var
    Po[_VW] = vw
    Po[_WW] = ww + qw


@njit(cache=True, nogil=True)
def _update(z, x, P, r_meas):
    """Measurement z = y + w. Returns (log-likelihood, jitter flag)."""
    hy = P[_YY] + P[_YW]
    hv = P[_YV] + P[_VW]
    hw = P[_YW] + P[_WW]
    s = hy + hw + r_meas
    flagged = 0
    if not s > 0.0:
        s = r_meas if r_meas > 0.0 else 1e-300
        flagged = 1
    innov = z - (x[0] + x[2])
    ky, kv, kw = hy / s, hv / s, hw / s
    x[0] += ky * innov
    x[1] += kv * innov
    x[2] += kw * innov
    P[_YY] -= ky * hy
    P[_YV] -= ky * hv
    P[_YW] -= ky * hw
    P[_VV] -= kv * hv
    P[_VW] -= kv * hw
    P[_WW] -= kw * hw
    if P[_YY] < 0.0 or P[_VV] < 0.0 or P[_WW] < 0.0:
        jit = 1e-12 * (abs(P[_YY]) + abs(P[_VV]) + abs(P[_WW])) + 1e-300
        P[_YY] = max(P[_YY], 0.0) + jit
        P[_VV] = max(P[_VV], 0.0) + jit
        P[_WW] = max(P[_WW], 0.0) + jit
        flagged = 1
    mag2 = innov.real * innov.real + innov.imag * innov.imag
    return -mag2 / s - math.log(math.pi * s), flagged


@njit(cache=True, nogil=True)
def imm_forward(wrf, thresholds, sigma2, trans, u0, jump_k, q_slope, q_slope_sig,
                q_level, r_rel, v0_scale, out_vhat, out_yhat, out_u):
    """Run the IMM over every row of ``wrf`` (lags x mu samples).

    Fills ``out_vhat``/``out_yhat`` (complex, same shape as ``wrf``) and
    ``out_u`` (lags x mu x 3). Returns the number of jitter repairs.
    """
    n_lags, n_mu = wrf.shape
    xs = np.zeros((3, 3), dtype=np.complex128)
    Ps = np.zeros((3, 6))
    x0 = np.zeros((3, 3), dtype=np.complex128)
    P0 = np.zeros((3, 6))
    xm = np.zeros(3, dtype=np.complex128)
    Pm = np.zeros(6)
    c = np.zeros(3)
    loglik = np.zeros(3)
    u = np.zeros(3)
    repairs = 0

    for lag in range(n_lags):
        e = thresholds[lag]
        scale2 = sigma2 + e * e
        qy = q_level * scale2
        qv = q_slope * sigma2 + q_slope_sig * e * e
        qw = sigma2
        r_meas = r_rel * scale2 + 1e-300
        jump_var = (jump_k * e) ** 2

        for i in range(3):
            for k in range(3):
                xs[i, k] = 0.0
            for k in range(6):
                Ps[i, k] = 0.0
            Ps[i, _VV] = v0_scale * scale2
            u[i] = u0[i]

        z = 0.0 + 0.0j
        for m in range(n_mu):
            z += wrf[lag, m]
            # mixing
            for j in range(3):
                c[j] = 0.0
                for i in range(3):
                    c[j] += trans[i, j] * u[i]
            for j in range(3):
                for k in range(3):
                    x0[j, k] = 0.0
                for k in range(6):
                    P0[j, k] = 0.0
                for i in range(3):
                    wij = trans[i, j] * u[i] / c[j]
                    for k in range(3):
                        x0[j, k] += wij * xs[i, k]
                for i in range(3):
                    wij = trans[i, j] * u[i] / c[j]
                    if wij == 0.0:
                        continue
                    dy = xs[i, 0] - x0[j, 0]
                    dv = xs[i, 1] - x0[j, 1]
                    dw = xs[i, 2] - x0[j, 2]
                    P0[j, _YY] += wij * (Ps[i, _YY] + (dy * dy.conjugate()).real)
                    P0[j, _YV] += wij * (Ps[i, _YV] + (dy * dv.conjugate()).real)
                    P0[j, _YW] += wij * (Ps[i, _YW] + (dy * dw.conjugate()).real)
                    P0[j, _VV] += wij * (Ps[i, _VV] + (dv * dv.conjugate()).real)
                    P0[j, _VW] += wij * (Ps[i, _VW] + (dv * dw.conjugate()).real)
                    P0[j, _WW] += wij * (Ps[i, _WW] + (dw * dw.conjugate()).real)
            # model-matched filtering
            for j in range(3):
                _predict(j, x0[j], P0[j], xs[j], Ps[j], qy, qv, qw,
                         jump_var if j == 2 else 0.0)
                loglik[j], fl = _update(z, xs[j], Ps[j], r_meas)
                repairs += fl
            # mode probabilities (log domain)
            best = -np.inf
            for j in range(3):
                loglik[j] += math.log(c[j]) if c[j] > 0.0 else -np.inf
                if loglik[j] > best:
                    best = loglik[j]
            tot = 0.0
            for j in range(3):
                # floor keeps every mixing normaliser positive
                u[j] = max(math.exp(loglik[j] - best), 1e-300)
                tot += u[j]
            for j in range(3):
                u[j] /= tot
            # combination
            for k in range(3):
                xm[k] = 0.0
            for j in range(3):
                for k in range(3):
                    xm[k] += u[j] * xs[j, k]
            out_vhat[lag, m] = xm[1]
            out_yhat[lag, m] = xm[0]
            for j in range(3):
                out_u[lag, m, j] = u[j]
    return repairs
