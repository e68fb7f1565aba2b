"""Fixed-stage RK4 integration with a singularity-aware step law.

The step used near the origin is ``min(dt_max, c * |x|**(1 - alpha))``,
which is the natural time scale of a homogeneous field at radius ``|x|``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .exceptions import BracketError, DomainError, NumericalOverflowError, StiffnessError
from .fields import as_unit, decompose, singular_rhs


@dataclass(frozen=True)
class StepPolicy:
    dt_max: float = 1e-3
    c: float = 0.1
    dt_min: float = 1e-14

    def __post_init__(self):
        if not (self.c > 0 and self.dt_max > 0 and self.dt_min > 0):
            raise DomainError("step policy entries must be positive")
        if self.dt_min > self.dt_max:
            raise DomainError("dt_min must not exceed dt_max")

    def step(self, r, alpha, floor=0.0):
        return min(self.dt_max, self.c * max(r, floor) ** (1.0 - alpha))

    def rescaled(self, factor):
        """Policy for a time axis stretched by ``factor`` (``c`` is scale free)."""
        return replace(self, dt_max=self.dt_max * factor, dt_min=self.dt_min * factor)


@dataclass(frozen=True)
class Trajectory:
    """Recorded integration run.  Arrays are read-only once constructed."""

    times: np.ndarray
    states: np.ndarray
    reason: str = "t_end"

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or len(states) != len(times):
            raise DomainError("states must be (n, d) with one row per time")
        if np.any(np.diff(times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")
        times.flags.writeable = False
        states.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.times[-1], self.states[-1]

    def at(self, t):
        """Linear interpolation between recorded steps."""
        return np.array([np.interp(t, self.times, col) for col in self.states.T])


def rk4_step(rhs, state, dt):
    """One classical Runge-Kutta step; raises on a non-finite stage."""
    state = np.asarray(state, dtype=float)
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * dt * k1)
    k3 = rhs(state + 0.5 * dt * k2)
    k4 = rhs(state + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NumericalOverflowError("non-finite Runge-Kutta stage")
    return state + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _run(rhs, x0, t0, t_end, policy, alpha, floor=0.0, stop_radius=0.0, on_step=None):
    """Shared driver.  ``on_step(t, x, t_new, x_new)`` may return True to halt."""
    t = float(t0)
    x = np.array(x0, dtype=float)
    times, states = [t], [x]
    reason = "t_end"
    while t < t_end:
        r = np.linalg.norm(x)
        if stop_radius > 0 and r <= stop_radius:
            reason = "stop_radius"
            break
        dt = policy.step(r, alpha, floor)
        if dt < policy.dt_min:
            raise StiffnessError(f"step {dt:.3g} below dt_min at t={t:.12g}, |x|={r:.3g}")
        last = t_end - t <= dt
        if last:
            dt = t_end - t
        x_new = rk4_step(rhs, x, dt)
        t_new = t_end if last else t + dt
        halt = on_step is not None and on_step(t, x, t_new, x_new)
        t, x = t_new, x_new
        times.append(t)
        states.append(x)
        if halt:
            reason = "event"
            break
    else:
        if stop_radius > 0 and np.linalg.norm(x) <= stop_radius:
            reason = "stop_radius"
    return Trajectory(times, states, reason)


def integrate_singular(field, x0, t_end, policy=StepPolicy(), stop_radius=None):
    """Integrate ``dx/dt = f(x)`` until ``t_end`` or ``|x| <= stop_radius``.

    ``stop_radius`` defaults to ``1e-8 * |x0|``; pass 0 to disable it.  The
    ``reason`` attribute of the result records which condition ended the run.
    """
    x0 = np.asarray(x0, dtype=float)
    r0 = np.linalg.norm(x0)
    if stop_radius is None:
        stop_radius = 1e-8 * r0
    if not r0 > stop_radius:
        raise DomainError("|x0| must exceed stop_radius")
    return _run(lambda x: singular_rhs(field, x), x0, 0.0, t_end, policy,
                field.alpha, stop_radius=stop_radius)


def sphere_orbit(field, y0, s_end, dt, every=1, w0=0.0):
    """RK4 orbit of the master-slave system, renormalizing ``y`` each step.

    Returns ``(s, Y, W, FR)`` sampled every ``every`` steps, where ``W`` is
    the slave variable started at ``w0`` and ``FR`` the radial field along
    the orbit.  A negative ``dt`` runs the sphere dynamics backwards (``W``
    is then meaningless).
    """
    y0 = as_unit(y0)
    n = int(round(abs(s_end / dt)))
    if n < 1:
        raise DomainError("s_end must span at least one step")
    if field.compiled:
        m = n // every + 1
        Y = np.empty((m, field.d))
        W = np.empty(m)
        FR = np.empty(m)
        _kernels.master_slave_orbit(field.kind, field.params, field.alpha, y0,
                                    float(w0), float(dt), n, every, Y, W, FR)
    else:
        Y, W, FR = _python_orbit(field, y0, float(w0), float(dt), n, every)
    s = np.arange(len(W)) * every * dt
    return s, Y, W, FR


def _python_orbit(field, y, w, dt, n, every):
    a1 = field.alpha - 1.0

    def rhs(z):
        yy = z[:-1] / np.linalg.norm(z[:-1])
        fs, fr = decompose(field.F(yy), yy)
        return np.append(fs, 1.0 + a1 * fr * z[-1])

    z = np.append(y, w)
    Y, W, FR = [], [], []
    for step in range(n + 1):
        if step % every == 0:
            Y.append(z[:-1].copy())
            W.append(z[-1])
            FR.append(field.radial(z[:-1]))
        if step == n:
            break
        z = rk4_step(rhs, z, dt)
        z[:-1] /= np.linalg.norm(z[:-1])
    return np.array(Y), np.array(W), np.array(FR)


def integrate_sphere(field, y0, s_end, dt, backward=False):
    """Orbit of ``dy/ds = F_s(y)`` on the unit sphere, sampled at every step."""
    if not (s_end > 0 and dt > 0):
        raise DomainError("s_end and dt must be positive")
    s, Y, _, _ = sphere_orbit(field, y0, s_end, -dt if backward else dt)
    return Trajectory(np.abs(s), Y)


def detect_crossing(rhs, t0, x0, t1, x1, level, max_iter=200):
    """Locate where ``|x|`` crosses ``level`` inside one RK4 step.

    Bisects on the length of a single RK4 sub-step taken from ``(t0, x0)``,
    so the refined point lies on the same discrete trajectory.
    """
    x0 = np.asarray(x0, dtype=float)
    g0 = np.linalg.norm(x0) - level
    g1 = np.linalg.norm(x1) - level
    if g0 == 0:
        return t0, x0
    if g0 * g1 > 0:
        raise BracketError("|x| - level has no sign change on the step")
    lo, hi = 0.0, t1 - t0
    best = (abs(g1), t1, np.asarray(x1, dtype=float))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        xm = rk4_step(rhs, x0, mid)
        gm = np.linalg.norm(xm) - level
        if abs(gm) < best[0]:
            best = (abs(gm), t0 + mid, xm)
        if abs(gm) <= 1e-12 * level or mid in (lo, hi):
            break
        if gm * g0 > 0:
            lo = mid
        else:
            hi = mid
    return best[1], best[2]
