"""JIT-compiled simulation loop for linear plants.

Mirrors ``sim._simulate_py`` step for step; ``tests/test_sim.py`` checks the
two against each other.  Status codes are translated by the caller.
"""
from __future__ import annotations

import numpy as np
from numba import njit

COMPLETED = 0
STABILIZED = 1
MAX_EVENTS = 2
BLOWUP = 3
TOO_COARSE = 4


@njit(cache=True)
def _static_value(x, e, Q, PBK, sigma, n):
    xqx = 0.0
    xpe = 0.0
    for i in range(n):
        qi = 0.0
        pi = 0.0
        for j in range(n):
            qi += Q[i, j] * x[j]
            pi += PBK[i, j] * e[j]
        xqx += x[i] * qi
        xpe += x[i] * pi
    return sigma * xqx - 2.0 * xpe


@njit(cache=True)
def _deriv(y, xs, A, BK, Q, PBK, sigma, lam, dynamic, out, e, xe):
    n = xs.shape[0]
    for i in range(n):
        e[i] = xs[i] - y[i]
        xe[i] = y[i] + e[i]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += A[i, j] * y[j] + BK[i, j] * xe[j]
        out[i] = acc
    if dynamic:
        out[n] = -lam * y[n] + _static_value(y, e, Q, PBK, sigma, n)
    else:
        out[n] = 0.0


@njit(cache=True)
def _rk4(y, xs, h, A, BK, Q, PBK, sigma, lam, dynamic, out, w):
    # w rows: k1, k2, k3, k4, stage, e, xe
    m = y.shape[0]
    k1, k2, k3, k4, st, e, xe = w[0], w[1], w[2], w[3], w[4], w[5], w[6]
    _deriv(y, xs, A, BK, Q, PBK, sigma, lam, dynamic, k1, e, xe)
    for i in range(m):
        st[i] = y[i] + 0.5 * h * k1[i]
    _deriv(st, xs, A, BK, Q, PBK, sigma, lam, dynamic, k2, e, xe)
    for i in range(m):
        st[i] = y[i] + 0.5 * h * k2[i]
    _deriv(st, xs, A, BK, Q, PBK, sigma, lam, dynamic, k3, e, xe)
    for i in range(m):
        st[i] = y[i] + h * k3[i]
    _deriv(st, xs, A, BK, Q, PBK, sigma, lam, dynamic, k4, e, xe)
    for i in range(m):
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def _trigger(y, xs, Q, PBK, sigma, theta, dynamic, e):
    n = xs.shape[0]
    for i in range(n):
        e[i] = xs[i] - y[i]
    s = _static_value(y, e, Q, PBK, sigma, n)
    if dynamic:
        return y[n] + theta * s
    return s


@njit(cache=True)
def _norm(x, n):
    s = 0.0
    for i in range(n):
        s += x[i] * x[i]
    return np.sqrt(s)


@njit(cache=True)
def _grow(a, size):
    b = np.empty((size,) + a.shape[1:])
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def run_linear(x0, eta0, A, BK, Q, PBK, sigma, lam, theta, dynamic,
               dt, horizon, event_tol, max_events, stride, stop_first, stab_rtol):
    n = x0.shape[0]
    m = n + 1
    w = np.zeros((7, m))
    y = np.empty(m)
    yn = np.empty(m)
    ym = np.empty(m)
    xs = x0.copy()
    y[:n] = x0
    y[n] = eta0

    cap = 1024
    rec = np.empty((cap, m + 2))  # t, y..., trigger
    nrec = 0
    ecap = 256
    ev = np.empty((ecap, m + 1))  # t_i, x(t_i), eta
    nev = 0

    t = 0.0
    g = _trigger(y, xs, Q, PBK, sigma, theta, dynamic, w[5])
    rec[0, 0] = t
    rec[0, 1:m + 1] = y
    rec[0, m + 1] = g
    nrec = 1
    ev[0, 0] = 0.0
    ev[0, 1:] = y
    nev = 1

    x0norm = _norm(x0, n)
    if x0norm == 0.0:
        return rec[:nrec], ev[:nev], STABILIZED, t
    end_tol = 1e-12 * max(1.0, horizon)
    just_exec = True
    k = 0
    status = COMPLETED
    while horizon - t > end_tol:
        last = horizon - t <= dt
        h = horizon - t if last else dt
        _rk4(y, xs, h, A, BK, Q, PBK, sigma, lam, dynamic, yn, w)
        finite = True
        for i in range(m):
            if not np.isfinite(yn[i]):
                finite = False
        if not finite:
            return rec[:nrec], ev[:nev], BLOWUP, t
        g = _trigger(yn, xs, Q, PBK, sigma, theta, dynamic, w[5])
        fired = g <= 0.0
        if fired:
            lo = 0.0
            hi = h
            while hi - lo > event_tol:
                mid = 0.5 * (lo + hi)
                _rk4(y, xs, mid, A, BK, Q, PBK, sigma, lam, dynamic, ym, w)
                if _trigger(ym, xs, Q, PBK, sigma, theta, dynamic, w[5]) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            if lo == 0.0:
                if just_exec:
                    return rec[:nrec], ev[:nev], TOO_COARSE, t
                ym[:] = y
            else:
                _rk4(y, xs, lo, A, BK, Q, PBK, sigma, lam, dynamic, ym, w)
            te = t + lo
            if nrec + 2 >= cap:
                cap *= 2
                rec = _grow(rec, cap)
            rec[nrec, 0] = te
            rec[nrec, 1:m + 1] = ym
            rec[nrec, m + 1] = _trigger(ym, xs, Q, PBK, sigma, theta, dynamic, w[5])
            nrec += 1
            xs[:] = ym[:n]
            rec[nrec, 0] = te
            rec[nrec, 1:m + 1] = ym
            rec[nrec, m + 1] = _trigger(ym, xs, Q, PBK, sigma, theta, dynamic, w[5])
            nrec += 1
            if nev >= ecap:
                ecap *= 2
                ev = _grow(ev, ecap)
            ev[nev, 0] = te
            ev[nev, 1:] = ym
            nev += 1
            y[:] = ym
            t = te
            just_exec = True
            if stop_first:
                break
            if _norm(xs, n) < stab_rtol * x0norm:
                status = STABILIZED
                break
            if nev - 1 >= max_events:
                status = MAX_EVENTS
                break
        else:
            y[:] = yn
            t = horizon if last else t + h
            k += 1
            just_exec = False
            if k % stride == 0 or last:
                if nrec >= cap:
                    cap *= 2
                    rec = _grow(rec, cap)
                rec[nrec, 0] = t
                rec[nrec, 1:m + 1] = y
                rec[nrec, m + 1] = g
                nrec += 1
    return rec[:nrec], ev[:nev], status, t
