"""Compiled evaluators and integration loops for the built-in fields.

Everything here is scalar-per-trajectory numba code.  Each trajectory is
advanced by its own loop, so results do not depend on how trajectories are
batched or on the number of worker threads.
"""
import math

import numpy as np
from numba import njit

PLANAR = 0
LORENZ4D = 1
ROTATING = 2

OK = 0
STIFF = 1
OVERFLOW = 2
STOPPED = 3

# lorenz4d parameter layout
_SIGMA, _RHO, _BETA, _SCALE, _SHIFT = 0, 1, 2, 3, 4
_EPS_S, _EPS_R, _WIDTH = 5, 6, 7
_CENTER = 8
_DIRECTION = 12
LORENZ4D_NPARAMS = 16


@njit(cache=True)
def smoothstep(xi):
    if xi <= 0.0:
        return 0.0
    if xi >= 1.0:
        return 1.0
    return xi * xi * (3.0 - 2.0 * xi)


@njit(cache=True)
def _lorenz4d(p, y, out):
    y0 = y[0]
    fr = -y0
    s1 = smoothstep(2.0 * y0 - 0.5)

    # F_minus: tangent projection of (0, -y1, -2 y2, -3 y3)
    m1 = -y[1]
    m2 = -2.0 * y[2]
    m3 = -3.0 * y[3]
    dm = m1 * y[1] + m2 * y[2] + m3 * y[3]
    f0 = -dm * y0
    f1 = m1 - dm * y[1]
    f2 = m2 - dm * y[2]
    f3 = m3 - dm * y[3]

    om = 1.0 - y0
    if s1 < 1.0 and om > 0.0:
        scale = p[_SCALE]
        v1 = y[1] / om
        v2 = y[2] / om
        v3 = y[3] / om
        u1 = scale * v1
        u2 = scale * v2
        u3 = p[_SHIFT] + scale * v3
        l1 = p[_SIGMA] * (u2 - u1) / scale
        l2 = (u1 * (p[_RHO] - u3) - u2) / scale
        l3 = (u1 * u2 - p[_BETA] * u3) / scale
        vl = v1 * l1 + v2 * l2 + v3 * l3
        # pushforward through the inverse projection, written in y
        g0 = om * om * vl
        g1 = om * l1 - y[1] * om * vl
        g2 = om * l2 - y[2] * om * vl
        g3 = om * l3 - y[3] * om * vl
        f0 = s1 * f0 + (1.0 - s1) * g0
        f1 = s1 * f1 + (1.0 - s1) * g1
        f2 = s1 * f2 + (1.0 - s1) * g2
        f3 = s1 * f3 + (1.0 - s1) * g3

    width = p[_WIDTH]
    if width > 0.0:
        dist = 0.0
        for i in range(4):
            dist += (y[i] - p[_CENTER + i]) ** 2
        bump = smoothstep(1.0 - math.sqrt(dist) / width)
        if bump > 0.0:
            f0 += p[_EPS_S] * bump * p[_DIRECTION]
            f1 += p[_EPS_S] * bump * p[_DIRECTION + 1]
            f2 += p[_EPS_S] * bump * p[_DIRECTION + 2]
            f3 += p[_EPS_S] * bump * p[_DIRECTION + 3]
            fr += p[_EPS_R] * bump

    # re-projection keeps the blend tangent under rounding
    d = f0 * y0 + f1 * y[1] + f2 * y[2] + f3 * y[3]
    out[0] = f0 - d * y0 + fr * y0
    out[1] = f1 - d * y[1] + fr * y[1]
    out[2] = f2 - d * y[2] + fr * y[2]
    out[3] = f3 - d * y[3] + fr * y[3]


@njit(cache=True)
def sphere_field(kind, p, y, out):
    """Write F(y) for a unit vector y into out."""
    if kind == PLANAR:
        a = y[0]
        b = y[1]
        out[0] = a * a + a * b + a * b * b
        out[1] = a * b + b * b - a * a * b
    elif kind == ROTATING:
        out[0] = p[0] * y[0] - p[1] * y[1]
        out[1] = p[0] * y[1] + p[1] * y[0]
    else:
        _lorenz4d(p, y, out)


@njit(cache=True)
def sphere_field_rows(kind, p, Y):
    out = np.empty_like(Y)
    for i in range(Y.shape[0]):
        sphere_field(kind, p, Y[i], out[i])
    return out


@njit(cache=True)
def _norm(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * x[i]
    return math.sqrt(s)


@njit(cache=True)
def _rhs(kind, p, alpha, nu, h0, x, y, out):
    """Regularized right-hand side; nu <= 0 gives the singular field."""
    d = x.shape[0]
    r = _norm(x)
    if r >= nu:
        for i in range(d):
            y[i] = x[i] / r
        sphere_field(kind, p, y, out)
        ra = r ** alpha
        for i in range(d):
            out[i] *= ra
        return
    na = nu ** alpha
    s1 = smoothstep(2.0 * r / nu - 0.5)
    if s1 > 0.0:
        for i in range(d):
            y[i] = x[i] / r
        sphere_field(kind, p, y, out)
        ra = r ** alpha
        for i in range(d):
            out[i] = (1.0 - s1) * na * h0[i] + s1 * ra * out[i]
    else:
        for i in range(d):
            out[i] = na * h0[i]


@njit(cache=True, nogil=True)
def integrate_batch(kind, p, alpha, nu, H0, X, T0, targets, c, dt_max, dt_min,
                    nu_watch, stop_radius, out, status, reentry, t_final,
                    min_stage_r):
    """Advance each row of X from T0[i] through the increasing ``targets``.

    ``out[i, k]`` receives the state at ``targets[k]``.  With ``stop_radius``
    positive a row halts once its norm drops to it; its time and state are
    left in ``t_final`` and ``X``.
    """
    n, d = X.shape
    m = targets.shape[0]
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    xs = np.empty(d)
    ybuf = np.empty(d)
    expo = 1.0 - alpha
    for i in range(n):
        x = X[i].copy()
        t = T0[i]
        h0 = H0[i]
        st = OK
        inside = False
        rmin = np.inf
        k = 0
        while k < m and targets[k] <= t:
            for j in range(d):
                out[i, k, j] = x[j]
            k += 1
        while k < m:
            r = _norm(x)
            if stop_radius > 0.0 and r <= stop_radius:
                st = STOPPED
                break
            dt = c * max(r, nu) ** expo
            if dt > dt_max:
                dt = dt_max
            if dt < dt_min:
                st = STIFF
                break
            last = targets[k] - t <= dt
            if last:
                dt = targets[k] - t
            _rhs(kind, p, alpha, nu, h0, x, ybuf, k1)
            for j in range(d):
                xs[j] = x[j] + 0.5 * dt * k1[j]
            rs = _norm(xs)
            if rs < rmin:
                rmin = rs
            _rhs(kind, p, alpha, nu, h0, xs, ybuf, k2)
            for j in range(d):
                xs[j] = x[j] + 0.5 * dt * k2[j]
            rs = _norm(xs)
            if rs < rmin:
                rmin = rs
            _rhs(kind, p, alpha, nu, h0, xs, ybuf, k3)
            for j in range(d):
                xs[j] = x[j] + dt * k3[j]
            rs = _norm(xs)
            if rs < rmin:
                rmin = rs
            _rhs(kind, p, alpha, nu, h0, xs, ybuf, k4)
            finite = True
            for j in range(d):
                x[j] += dt * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0
                if not math.isfinite(x[j]):
                    finite = False
            if not finite:
                st = OVERFLOW
                break
            if last:
                t = targets[k]
            else:
                t += dt
            if nu_watch > 0.0 and _norm(x) < nu_watch:
                inside = True
            while k < m and targets[k] <= t:
                for j in range(d):
                    out[i, k, j] = x[j]
                reentry[i, k] = inside
                k += 1
        status[i] = st
        t_final[i] = t
        min_stage_r[i] = rmin
        for j in range(d):
            X[i, j] = x[j]


@njit(cache=True)
def _sphere_deriv(kind, p, y, alpha, w, fbuf, dy):
    """dy = F_s(y/|y|); returns F_r(y/|y|)."""
    d = y.shape[0]
    nrm = _norm(y)
    for i in range(d):
        dy[i] = y[i] / nrm
    sphere_field(kind, p, dy, fbuf)
    fr = 0.0
    for i in range(d):
        fr += fbuf[i] * dy[i]
    for i in range(d):
        dy[i] = fbuf[i] - fr * dy[i]
    return fr


@njit(cache=True, nogil=True)
def master_slave_orbit(kind, p, alpha, y0, w0, ds, n_steps, every, Y, W, FR):
    """RK4 on dy/ds = F_s, dw/ds = 1 + (alpha-1) F_r w with renormalization.

    Records every ``every`` steps (including step 0) into Y, W, FR.
    """
    d = y0.shape[0]
    y = y0.copy()
    w = w0
    fb = np.empty(d)
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    ys = np.empty(d)
    a1 = alpha - 1.0
    rec = 0
    for step in range(n_steps + 1):
        if step % every == 0:
            for j in range(d):
                Y[rec, j] = y[j]
            W[rec] = w
            fr = 0.0
            sphere_field(kind, p, y, fb)
            for j in range(d):
                fr += fb[j] * y[j]
            FR[rec] = fr
            rec += 1
        if step == n_steps:
            break
        r1 = _sphere_deriv(kind, p, y, alpha, w, fb, k1)
        q1 = 1.0 + a1 * r1 * w
        for j in range(d):
            ys[j] = y[j] + 0.5 * ds * k1[j]
        r2 = _sphere_deriv(kind, p, ys, alpha, w, fb, k2)
        q2 = 1.0 + a1 * r2 * (w + 0.5 * ds * q1)
        for j in range(d):
            ys[j] = y[j] + 0.5 * ds * k2[j]
        r3 = _sphere_deriv(kind, p, ys, alpha, w, fb, k3)
        q3 = 1.0 + a1 * r3 * (w + 0.5 * ds * q2)
        for j in range(d):
            ys[j] = y[j] + ds * k3[j]
        r4 = _sphere_deriv(kind, p, ys, alpha, w, fb, k4)
        q4 = 1.0 + a1 * r4 * (w + ds * q3)
        for j in range(d):
            y[j] += ds * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0
        w += ds * (q1 + 2.0 * q2 + 2.0 * q3 + q4) / 6.0
        nrm = _norm(y)
        for j in range(d):
            y[j] /= nrm
    return rec
