"""Regularized systems near the singular point and their entry/escape logic.

Inside the ball ``|x| < nu`` the singular field is replaced by
``nu**alpha * H(x / nu)``.  The regularization is either integrated
directly, or summarized by an escape map: deterministic (the unit-scale
flow run for a delay ``T``) or stochastic (a sampled escape point).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .exceptions import (DomainError, InvalidSamplerError, NoEntryError,
                         TrappedInBallError)
from .fields import lorenz4d_example, singular_rhs, smoothstep
from .integrate import StepPolicy, _run, detect_crossing

MODES = ("direct", "map_deterministic", "map_stochastic")
FAMILIES = ("point", "cap", "gaussian")

# stream tags keep the inner-field and escape-sampler draws independent
_INNER_STREAM = 0
_ESCAPE_STREAM = 1


def rng_stream(seed, index=None, stream=_INNER_STREAM):
    """Generator for ``(seed, index)``, independent of any other index."""
    if index is None:
        return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, int(index))))


@dataclass(frozen=True, eq=False)
class InnerField:
    """Regularizing field on the unit ball (plus collar).

    When ``h0`` is set the field is the smoothstep blend of the constant
    ``h0`` (for ``|x| <= 1/4``) into the outer field (for ``|x| >= 3/4``).
    """

    H: Callable[[np.ndarray], np.ndarray]
    h0: Optional[np.ndarray] = None

    def __call__(self, x):
        return self.H(x)


def blend_inner_field(field, h0):
    h0 = np.asarray(h0, dtype=float)
    if h0.shape != (field.d,):
        raise DomainError(f"h0 must have shape ({field.d},)")

    def H(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        s = np.asarray(smoothstep(2.0 * r - 0.5))[..., None]
        out = np.broadcast_to((1.0 - s) * h0, x.shape).copy()
        far = s[..., 0] > 0
        if np.any(far):
            out[far] += s[far] * singular_rhs(field, x[far])
        return out

    return InnerField(H, h0.copy())


def random_inner_field(seed, field=None, *, index=None, offset_axis=0):
    """Blend inner field with ``h0 = X - e_axis``, ``X ~ U[-1/2, 1/2]^d``.

    ``offset_axis`` picks the coordinate that receives the unit offset.  The
    default 0 is the projection-pole axis of the Lorenz-based field, which
    drives the regularized solution into the lower (Lorenz) hemisphere.
    """
    field = field or lorenz4d_example()
    X = rng_stream(seed, index).uniform(-0.5, 0.5, size=field.d)
    X[offset_axis] -= 1.0
    return blend_inner_field(field, X)


@dataclass(frozen=True)
class SamplerSpec:
    family: str = "cap"
    radius: float = 2.0
    cap_center: tuple = (-1.0, 0.0, 0.0, 0.0)
    cap_angle: float = math.pi / 3
    sigma: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSamplerError(f"unknown sampler family {self.family!r}")
        if self.family in ("point", "cap") and not self.radius > 1:
            raise InvalidSamplerError("sampler radius must exceed 1 (mass inside the ball)")
        if not 0 < self.cap_angle <= math.pi:
            raise InvalidSamplerError("cap_angle must lie in (0, pi]")
        if self.family == "gaussian" and not self.sigma > 0:
            raise InvalidSamplerError("sigma must be positive")

    @property
    def center(self):
        c = np.asarray(self.cap_center, dtype=float)
        return c / np.linalg.norm(c)

    def draw(self, rng):
        """One scaled escape point ``x_esc / nu``."""
        c = self.center
        if self.family == "point":
            return self.radius * c
        if self.family == "cap":
            return self.radius * _cap_direction(rng, c, self.cap_angle)
        cos_a = math.cos(self.cap_angle)
        for _ in range(10000):
            z = self.radius * c + self.sigma * rng.standard_normal(len(c))
            n = np.linalg.norm(z)
            if n > 1 and z @ c >= cos_a * n:
                return z
        raise InvalidSamplerError("gaussian sampler has no mass outside the unit ball in its cone")


def _cap_direction(rng, c, angle):
    d = len(c)
    # polar angle density is proportional to sin(theta)**(d-2)
    peak = 1.0 if angle >= math.pi / 2 else math.sin(angle) ** (d - 2)
    while True:
        theta = rng.uniform(0.0, angle)
        if rng.uniform(0.0, peak) <= math.sin(theta) ** (d - 2):
            break
    v = rng.standard_normal(d)
    v -= (v @ c) * c
    v /= np.linalg.norm(v)
    return math.cos(theta) * c + math.sin(theta) * v


@dataclass(frozen=True)
class RegularizationSpec:
    mode: str = "direct"
    nu: float = 1e-5
    T: float = 20.0
    sampler: SamplerSpec = dc_field(default_factory=SamplerSpec)
    seed: int = 0
    offset_axis: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if not self.nu > 0:
            raise DomainError("nu must be positive")
        if self.mode != "direct" and not self.T > 0:
            raise DomainError("T must be positive in map modes")


@dataclass(frozen=True)
class EntryEvent:
    t_ent: float
    x_ent: np.ndarray


@dataclass(frozen=True)
class EscapeSample:
    t_esc: float
    x_esc: np.ndarray


@dataclass(frozen=True)
class Continuation:
    states: np.ndarray
    reentered: np.ndarray


def regularized_rhs(field, inner, nu, x):
    """Singular field outside ``|x| >= nu``, ``nu**alpha H(x/nu)`` inside."""
    if not nu > 0:
        raise DomainError("nu must be positive")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if x.ndim == 1:
        if r >= nu:
            return singular_rhs(field, x)
        return nu ** field.alpha * inner(x / nu)
    out = np.empty_like(x)
    outer = r >= nu
    if np.any(outer):
        out[outer] = singular_rhs(field, x[outer])
    if np.any(~outer):
        out[~outer] = nu ** field.alpha * inner(x[~outer] / nu)
    return out


def find_entry(field, x0, nu, policy=StepPolicy(), t_max=100.0):
    """First time the unregularized solution reaches ``|x| = nu``."""
    x0 = np.asarray(x0, dtype=float)
    if not np.linalg.norm(x0) > nu:
        raise DomainError("|x0| must exceed nu")
    rhs = lambda x: singular_rhs(field, x)
    hit = []

    def crossed(t, x, t_new, x_new):
        if np.linalg.norm(x_new) <= nu:
            hit.append(detect_crossing(rhs, t, x, t_new, x_new, nu))
            return True
        return False

    _run(rhs, x0, 0.0, t_max, policy, field.alpha, on_step=crossed)
    if not hit:
        raise NoEntryError(f"no crossing of |x| = {nu:g} before t = {t_max:g}")
    t_ent, x_ent = hit[0]
    return EntryEvent(float(t_ent), x_ent)


def _unit_scale_flow(field, inner, z0, T, policy):
    """State of the nu = 1 regularized flow after time ``T``."""
    if field.compiled and inner.h0 is not None:
        X = z0[None].copy()
        out = np.empty((1, 1, field.d))
        _integrate_rows(field, 1.0, inner.h0[None], X, np.zeros(1), np.array([T]),
                        policy, out)
        return out[0, 0]
    traj = _run(lambda z: regularized_rhs(field, inner, 1.0, z), z0, 0.0, T, policy,
                field.alpha, floor=1.0)
    return traj.states[-1]


def escape_via_flow(field, inner, entry, nu, T=20.0, policy=StepPolicy(), retries=8):
    """Deterministic escape: run the unit-scale regularized flow for ``T``.

    ``T`` is doubled (up to ``retries`` times) while the end point is still
    inside the unit ball.
    """
    if not T > 0:
        raise DomainError("T must be positive")
    z0 = np.asarray(entry.x_ent, dtype=float) / nu
    # matched steps: the unit-scale time axis is stretched by nu**(alpha-1)
    unit_policy = policy.rescaled(nu ** (field.alpha - 1.0))
    for _ in range(retries + 1):
        z = _unit_scale_flow(field, inner, z0, T, unit_policy)
        if np.linalg.norm(z) > 1.0:
            return EscapeSample(entry.t_ent + nu ** (1.0 - field.alpha) * T, nu * z)
        T *= 2.0
    raise TrappedInBallError(f"regularized flow still inside the ball after T = {T / 2:g}")


def sample_escape(spec, entry, trajectory_index, alpha=1.0 / 3.0):
    """Random escape point for one trajectory of a stochastic regularization."""
    if spec.mode != "map_stochastic":
        raise DomainError("sample_escape requires mode 'map_stochastic'")
    z = spec.sampler.draw(rng_stream(spec.seed, trajectory_index, _ESCAPE_STREAM))
    if not np.linalg.norm(z) > 1:
        raise InvalidSamplerError("escape sample inside the regularization ball")
    return EscapeSample(entry.t_ent + spec.nu ** (1.0 - alpha) * spec.T, spec.nu * z)


def continue_from_escape(field, esc, t_targets, policy=StepPolicy(), nu=None):
    """States of the unregularized flow from the escape point at ``t_targets``.

    With ``nu`` given, targets reached after the solution dips back below
    ``|x| = nu`` are flagged in ``reentered``.
    """
    t_targets = np.asarray(t_targets, dtype=float)
    if np.any(t_targets < esc.t_esc) or np.any(np.diff(t_targets) < 0):
        raise DomainError("targets must be sorted and not precede t_esc")
    if field.compiled:
        X = np.asarray(esc.x_esc, dtype=float)[None].copy()
        out = np.empty((1, len(t_targets), field.d))
        _, reentry = _integrate_rows(field, 0.0, np.zeros((1, field.d)), X,
                                     np.array([esc.t_esc]), t_targets, policy, out,
                                     nu_watch=nu or 0.0)
        return Continuation(out[0], reentry[0])
    states, flags = [], []
    x, t, inside = np.asarray(esc.x_esc, dtype=float), esc.t_esc, False

    def watch(t0, x0, t1, x1):
        nonlocal inside
        if nu and np.linalg.norm(x1) < nu:
            inside = True
        return False

    for tt in t_targets:
        if tt > t:
            x = _run(lambda z: singular_rhs(field, z), x, t, tt, policy, field.alpha,
                     on_step=watch).states[-1]
            t = tt
        states.append(x)
        flags.append(inside)
    return Continuation(np.array(states), np.array(flags))


def _integrate_rows(field, nu, H0, X, T0, targets, policy, out, nu_watch=0.0,
                    stop_radius=0.0):
    """Thin wrapper over the compiled batch integrator.

    Returns ``(status, reentry)``; ``X`` holds the final states afterwards.
    """
    n = X.shape[0]
    status = np.zeros(n, dtype=np.int64)
    reentry = np.zeros((n, len(targets)), dtype=np.bool_)
    t_final = np.zeros(n)
    min_r = np.zeros(n)
    _kernels.integrate_batch(field.kind, field.params, field.alpha, float(nu),
                             np.ascontiguousarray(H0, dtype=float), X,
                             np.ascontiguousarray(T0, dtype=float),
                             np.ascontiguousarray(targets, dtype=float),
                             policy.c, policy.dt_max, policy.dt_min, float(nu_watch),
                             float(stop_radius), out, status, reentry, t_final, min_r)
    return status, reentry
