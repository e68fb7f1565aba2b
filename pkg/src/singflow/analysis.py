"""Synchronization graph, SRB averages and post-blowup predictions.

In logarithmic time the scale variable ``w`` is slaved to the angular
dynamics: every master-slave solution converges to ``w = G(y)`` with

    G(y) = int_0^inf exp[(alpha-1) int_0^s1 F_r(Phi^{-s2} y) ds2] ds1.

Weighting the SRB measure of the sphere dynamics by ``1/G`` and pushing it
forward through ``R_tau(y, w) = (tau/w)**(1/(1-alpha)) y`` predicts the
statistics of regularized solutions after blowup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from . import _kernels
from .ensemble import SampleSet
from .exceptions import (BoundViolationError, DomainError, NotFocusingError,
                         StiffnessError)
from .fields import as_unit, decompose
from .integrate import StepPolicy, integrate_singular, sphere_orbit


@dataclass(frozen=True)
class GsyncConfig:
    """Quadrature settings for ``G``.

    Parameters
    ----------
    s_p : float or None
        Cutoff of the outer integral.  None picks it from the tail bound
        ``exp(-(1-alpha) F_m s_p) / ((1-alpha) F_m) <= tolerance``; without
        ``F_m`` the integration runs until the remaining tail, bounded with
        the smallest ``F_r`` met so far, drops below ``tolerance``.
    ds : float
        RK4 step in logarithmic time.
    F_m : float or None
        Lower bound of ``F_r`` on the region visited by the backward orbit.
    tolerance : float
        Target truncation error.
    s_max : float
        Hard limit on the backward integration length.
    """

    s_p: Optional[float] = None
    ds: float = 1e-2
    F_m: Optional[float] = None
    tolerance: float = 1e-8
    s_max: float = 1e4

    def __post_init__(self):
        if self.s_p is not None and not self.s_p > 0:
            raise DomainError("s_p must be positive")
        if not self.ds > 0 or not self.tolerance > 0:
            raise DomainError("ds and tolerance must be positive")
        if self.F_m is not None and not self.F_m > 0:
            raise DomainError("F_m must be positive")

    def cutoff(self, alpha):
        """Explicit or tail-bound cutoff; None when it must be found on the fly."""
        if self.s_p is not None:
            return self.s_p
        if self.F_m is None:
            return None
        k = (1.0 - alpha) * self.F_m
        return max(math.log(1.0 / (self.tolerance * k)) / k, self.ds)


@dataclass(frozen=True)
class SRBPrimePoint:
    y: np.ndarray
    w: float
    weight: float


@dataclass(frozen=True, eq=False)
class SRBPrimeSet:
    """Weighted sample of the ``1/G``-reweighted SRB measure, stored as arrays."""

    Y: np.ndarray
    W: np.ndarray
    weights: np.ndarray
    error_bound: float = 0.0

    def __post_init__(self):
        if np.any(self.W <= 0):
            raise DomainError("G values must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise DomainError("weights must sum to 1")

    def __len__(self):
        return len(self.W)

    def __getitem__(self, i):
        return SRBPrimePoint(self.Y[i], float(self.W[i]), float(self.weights[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_points(cls, points):
        pts = list(points)
        return cls(np.array([p.y for p in pts]), np.array([p.w for p in pts]),
                   np.array([p.weight for p in pts]))


def tail_bound(alpha, F_m, s_p):
    """Bound on the part of the ``G`` integral beyond ``s_p``."""
    k = (1.0 - alpha) * F_m
    return math.exp(-k * s_p) / k


def trapping_bounds(F_m, F_M, alpha):
    """Interval ``(w_m, w_M)`` that traps the slave variable when ``F_m <= F_r <= F_M``."""
    if not F_m > 0:
        raise DomainError("F_m must be positive")
    if F_M < F_m:
        raise DomainError("F_M must not be below F_m")
    if not alpha < 1:
        raise DomainError("alpha must be < 1")
    return 1.0 / ((1.0 - alpha) * F_M), 1.0 / ((1.0 - alpha) * F_m)


def _sphere_parts(field, Y):
    """F_s and F_r of the 0-homogeneous extension at the rows of Y."""
    Y = np.atleast_2d(Y)
    U = Y / np.linalg.norm(Y, axis=1, keepdims=True)
    return decompose(field.F(U), U)


def _jacobians(field, y, h=1e-6):
    """Central-difference Jacobian of F_s and gradient of F_r at ``y``."""
    d = len(y)
    pts = np.concatenate([y + h * np.eye(d), y - h * np.eye(d)])
    fs, fr = _sphere_parts(field, pts)
    J = ((fs[:d] - fs[d:]) / (2 * h)).T
    g = (fr[:d] - fr[d:]) / (2 * h)
    return J, g


def _backward_G(field, y, cfg, gradient=False):
    """Backward augmented RK4 for G and optionally its gradient.

    State in backward time ``sigma``: the orbit point, ``A = int F_r``, the
    running outer integral ``Q``, and for the gradient the variational
    matrix ``Y``, ``B = grad A`` and ``P = int exp(-kA) B``.
    """
    k = 1.0 - field.alpha
    d = field.d
    s_p = cfg.cutoff(field.alpha)
    ds = cfg.ds
    n = int(math.ceil((s_p if s_p is not None else cfg.s_max) / ds))
    if s_p is not None:
        ds = s_p / n

    def rhs(state):
        z, A, Q = state[0], state[1], state[2]
        fs, fr = _sphere_parts(field, z)
        out = [-fs[0], fr[0], math.exp(-k * A)]
        if gradient:
            Ymat, B = state[3], state[4]
            J, g = _jacobians(field, z)
            out += [-J @ Ymat, g @ Ymat, math.exp(-k * A) * B]
        return out, fr[0]

    def axpy(state, h, der):
        return [s + h * dv for s, dv in zip(state, der)]

    state = [np.array(y, dtype=float), 0.0, 0.0]
    if gradient:
        # tangent projector: radial perturbations do not move the direction
        state += [np.eye(d) - np.outer(state[0], state[0]), np.zeros(d), np.zeros(d)]
    fr_min = np.inf
    for step in range(n):
        k1, r1 = rhs(state)
        k2, r2 = rhs(axpy(state, 0.5 * ds, k1))
        k3, r3 = rhs(axpy(state, 0.5 * ds, k2))
        k4, r4 = rhs(axpy(state, ds, k3))
        state = [s + ds * (a + 2 * b + 2 * c + e) / 6.0
                 for s, a, b, c, e in zip(state, k1, k2, k3, k4)]
        state[0] = state[0] / np.linalg.norm(state[0])
        fr_min = min(fr_min, r1, r2, r3, r4)
        if cfg.F_m is not None and fr_min < cfg.F_m:
            raise BoundViolationError(
                f"F_r = {fr_min:.4g} below F_m = {cfg.F_m:g} on the backward orbit")
        if s_p is None:
            if fr_min <= 0:
                raise BoundViolationError("F_r is not positive on the backward orbit")
            # remaining tail is at most exp(-kA) / (k F_r,min)
            if math.exp(-k * state[1]) / (k * fr_min) <= cfg.tolerance:
                break
    else:
        if s_p is None:
            raise BoundViolationError(f"tail bound not reached within s_max = {cfg.s_max:g}")
    return state


def gsync_value(field, y, cfg=GsyncConfig()):
    """Synchronization graph ``G(y)`` by backward integration of the sphere dynamics.

    Only usable where the backward orbit stays in a region with ``F_r > 0``
    (for instance near a defocusing fixed point).  On chaotic attractors the
    backward flow is unstable; use :func:`attractor_point` or
    :func:`srb_prime_ensemble`, which evaluate ``G`` along forward orbits.
    """
    y = as_unit(y)
    return float(_backward_G(field, y, cfg)[2])


def gsync_gradient(field, y, cfg=GsyncConfig()):
    """Gradient of ``G`` from the backward variational equation.

    Jacobians of ``F_s`` and ``F_r`` are taken by central differences of
    their 0-homogeneous extensions, so the result is tangent to the sphere.
    """
    y = as_unit(y)
    state = _backward_G(field, y, cfg, gradient=True)
    return -(1.0 - field.alpha) * state[5]


def gradient_constants(field, Y):
    """Empirical ``(M_s, M_r, m_r)`` over the rows of ``Y``.

    ``M_s`` bounds the operator norm of the Jacobian of ``F_s``, ``M_r`` the
    norm of the gradient of ``F_r`` and ``m_r`` is the smallest ``F_r``.
    """
    Y = as_unit(np.atleast_2d(Y))
    M_s = M_r = 0.0
    for y in Y:
        J, g = _jacobians(field, y)
        M_s = max(M_s, np.linalg.norm(J, 2))
        M_r = max(M_r, np.linalg.norm(g))
    m_r = float(np.min(_sphere_parts(field, Y)[1]))
    return M_s, M_r, m_r


def gradient_bound(alpha, M_r, m_r, M_s):
    """Upper bound ``M_r / (((1-alpha) m_r - M_s) m_r)`` on ``|grad G|``."""
    k = 1.0 - alpha
    if not m_r > 0 or not M_s < k * m_r:
        raise DomainError("gradient bound needs M_s < (1-alpha) m_r with m_r > 0")
    return M_r / ((k * m_r - M_s) * m_r)


def explicit_w(field, y0, w0, s, dt):
    """Closed-form slave variable along the forward orbit, by quadrature.

    ``w(s) = w0 e^{-kA(s)} + int_0^s e^{-k(A(s) - A(s1))} ds1`` with
    ``A(s) = int_0^s F_r(y(s2)) ds2`` and ``k = 1 - alpha``.  Inner and outer
    integrals use Simpson's rule on the RK4 orbit sampled at step ``s/n``.
    """
    if s < 0 or not w0 > 0:
        raise DomainError("need s >= 0 and w0 > 0")
    if s == 0:
        return float(w0)
    n = max(2, int(math.ceil(s / dt)))
    n += n % 2
    _, _, _, FR = sphere_orbit(field, y0, s, s / n)
    grid = np.linspace(0.0, s, n + 1)
    A = cumulative_simpson(FR, x=grid, initial=0.0)
    k = 1.0 - field.alpha
    return float(w0 * math.exp(-k * A[-1]) + simpson(np.exp(-k * (A[-1] - A)), x=grid))


def batch_means(values, n_batches=20):
    """Mean and its standard error from non-overlapping batch averages."""
    values = np.asarray(values, dtype=float)
    m = len(values) // n_batches
    if m < 1:
        raise DomainError("fewer samples than batches")
    means = values[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def srb_average(field, y0, observable, s_burn, s_total, dt, return_error=False):
    """Time average of ``observable`` over the sphere orbit on ``[s_burn, s_total]``.

    ``observable`` maps an ``(n, d)`` array of unit vectors to ``n`` values.
    With ``return_error`` a batch-means standard error is returned as well.
    """
    if not s_total > s_burn >= 0:
        raise DomainError("need s_total > s_burn >= 0")
    _, Y, _, _ = sphere_orbit(field, y0, s_total, dt)
    vals = np.asarray(observable(Y[int(round(s_burn / dt)):]), dtype=float)
    mean, err = batch_means(vals) if return_error else (float(vals.mean()), None)
    return (mean, err) if return_error else mean


def radial_bounds(field, y0, s_total, dt=1e-2, margin=0.1):
    """Empirical ``(F_m, F_M)``: extremes of ``F_r`` along an orbit, widened by ``margin``."""
    _, _, _, FR = sphere_orbit(field, y0, s_total, dt)
    lo, hi = float(FR.min()), float(FR.max())
    if not lo > 0:
        raise BoundViolationError(f"F_r reaches {lo:.4g} along the orbit")
    return (1.0 - margin) * lo, (1.0 + margin) * hi


def _burn_length(alpha, F_m, tolerance):
    k = (1.0 - alpha) * F_m
    return math.log(1.0 / (tolerance * k)) / k


def attractor_point(field, y0, F_m, s_burn=None, ds=1e-2, tolerance=1e-8):
    """Point on the forward orbit of ``y0`` with its ``G`` value.

    ``G`` is the slave variable started at ``w = 0``; the neglected history
    contributes at most ``exp(-kA) w_M``.  Returns ``(y, G, error_bound)``.
    """
    y0 = as_unit(y0)
    s_burn = s_burn if s_burn is not None else _burn_length(field.alpha, F_m, tolerance)
    _, Y, W, FR = sphere_orbit(field, y0, s_burn, ds)
    if FR.min() < F_m:
        raise BoundViolationError(f"F_r = {FR.min():.4g} below F_m = {F_m:g}")
    A = simpson(FR, dx=ds)
    bound = math.exp(-(1.0 - field.alpha) * A) / ((1.0 - field.alpha) * F_m)
    return Y[-1], float(W[-1]), bound


def srb_prime_ensemble(field, y0, M, stride, cfg=GsyncConfig(), s_burn=None):
    """``M`` points of one long orbit weighted by ``1/G``.

    After a burn-in long enough for the slave variable started at 0 to sit
    within ``cfg.tolerance`` of the graph, the orbit is sampled every
    ``stride``.  ``cfg.F_m`` is required: it certifies the burn-in and is
    checked along the orbit.  The certified error of every ``w_i`` is kept in
    ``error_bound``.
    """
    if M < 1 or not stride > 0:
        raise DomainError("need M >= 1 and stride > 0")
    if cfg.F_m is None:
        raise DomainError("srb_prime_ensemble needs cfg.F_m")
    every = int(round(stride / cfg.ds))
    if every < 1 or abs(every * cfg.ds - stride) > 1e-9 * stride:
        raise DomainError("stride must be a multiple of cfg.ds")
    y_b, w_b, bound = attractor_point(field, y0, cfg.F_m, s_burn, cfg.ds, cfg.tolerance)
    _, Y, W, FR = sphere_orbit(field, y_b, M * stride, cfg.ds, every=every, w0=w_b)
    Y, W, FR = Y[1:M + 1], W[1:M + 1], FR[1:M + 1]
    if FR.min() < cfg.F_m:
        raise BoundViolationError(f"F_r = {FR.min():.4g} below F_m = {cfg.F_m:g}")
    inv = 1.0 / W
    return SRBPrimeSet(Y, W, inv / inv.sum(), bound)


def scale_map(Y, W, tau, alpha):
    """``R_tau(y, w) = (tau / w)**(1/(1-alpha)) y``."""
    W = np.asarray(W, dtype=float)
    return (tau / W)[..., None] ** (1.0 / (1.0 - alpha)) * np.asarray(Y, dtype=float)


def predict_post_blowup(points, t, t_b, alpha):
    """Pushforward of the weighted SRB sample to time ``t`` after blowup at ``t_b``."""
    if not t > t_b:
        raise DomainError("prediction needs t > t_b")
    if not isinstance(points, SRBPrimeSet):
        points = SRBPrimeSet.from_points(points)
    return SampleSet(float(t), scale_map(points.Y, points.W, t - t_b, alpha),
                     points.weights)


@dataclass(frozen=True)
class BlowupEstimate:
    t_b: float
    t_stop: float
    r_stop: float
    tail: float
    spherical_residual: float


def blowup_estimate(field, x0, policy=StepPolicy(), stop_radius=None, t_max=100.0,
                    converge_tol=1e-3, refinements=3):
    """Blowup time with the run details.

    The solution is integrated until ``|x| <= stop_radius`` (default
    ``1e-8 |x0|``).  The remaining time is ``r**(1-alpha) / ((1-alpha)|F_r|)``,
    exact once the direction sits at a focusing fixed point.  While
    ``|F_s|`` at the stop point exceeds ``converge_tol`` the stop radius is
    reduced by 100 and the run extended.
    """
    x0 = np.asarray(x0, dtype=float)
    r0 = np.linalg.norm(x0)
    stop = 1e-8 * r0 if stop_radius is None else stop_radius
    k = 1.0 - field.alpha
    for _ in range(refinements + 1):
        t_stop, x = _run_to_radius(field, x0, stop, policy, t_max)
        r = np.linalg.norm(x)
        if r > stop:
            raise NotFocusingError(f"|x| = {r:.3g} has not decayed to {stop:.3g} by t = {t_max:g}")
        y = x / r
        fs, fr = decompose(field.F(y), y)
        if not fr < 0:
            raise NotFocusingError(f"F_r = {fr:.3g} at the stop point is not focusing")
        residual = float(np.linalg.norm(fs))
        if residual <= converge_tol:
            break
        stop *= 1e-2
    tail = r ** k / (k * -fr)
    return BlowupEstimate(float(t_stop + tail), float(t_stop), float(r), float(tail),
                          residual)


def blowup_time(field, x0, policy=StepPolicy(), stop_radius=None, t_max=100.0):
    return blowup_estimate(field, x0, policy, stop_radius, t_max).t_b


def _run_to_radius(field, x0, stop, policy, t_max):
    if field.compiled:
        X = x0[None].copy()
        out = np.empty((1, 1, field.d))
        t_final = np.zeros(1)
        status = np.zeros(1, dtype=np.int64)
        _kernels.integrate_batch(field.kind, field.params, field.alpha, 0.0,
                                 np.zeros((1, field.d)), X, np.zeros(1),
                                 np.array([t_max]), policy.c, policy.dt_max,
                                 policy.dt_min, 0.0, stop, out, status,
                                 np.zeros((1, 1), dtype=np.bool_), t_final, np.zeros(1))
        if status[0] == _kernels.STIFF:
            raise StiffnessError("step fell below dt_min before the stop radius")
        return t_final[0], X[0]
    traj = integrate_singular(field, x0, t_max, policy, stop_radius=stop)
    return traj.final


def sync_error(field, y0, w0, s_grid, cfg=GsyncConfig(), g0=None):
    """``|w(s) - G(y(s))|`` on ``s_grid`` for the master-slave solution from ``(y0, w0)``.

    The reference solution starts on the graph, at ``g0 = G(y0)`` (computed
    with :func:`gsync_value` unless given).  Both slaves share the same
    orbit, so the difference isolates the synchronization error.
    """
    if not w0 > 0:
        raise DomainError("w0 must be positive")
    s_grid = np.asarray(s_grid, dtype=float)
    idx = np.rint(s_grid / cfg.ds).astype(np.int64)
    if np.any(idx < 0) or np.any(np.abs(idx * cfg.ds - s_grid) > 1e-9 * np.maximum(1.0, s_grid)):
        raise DomainError("s_grid points must be nonnegative multiples of cfg.ds")
    if g0 is None:
        g0 = gsync_value(field, y0, cfg)
    s_end = max(int(idx.max()), 1) * cfg.ds
    _, _, Wa, _ = sphere_orbit(field, y0, s_end, cfg.ds, w0=w0)
    _, _, Wb, _ = sphere_orbit(field, y0, s_end, cfg.ds, w0=g0)
    return np.abs(Wa[idx] - Wb[idx])
