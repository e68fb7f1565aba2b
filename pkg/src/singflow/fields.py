"""Homogeneous singular vector fields and the systems derived from them.

A field ``f(x) = |x|**alpha * F(x/|x|)`` is stored through its values ``F``
on the unit sphere.  Arrays follow the numpy convention of putting the
component axis last, so every function here accepts a single vector of
shape ``(d,)`` or a stack of shape ``(..., d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .exceptions import DomainError, ProjectionPoleError, SingularityError

UNIT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class HomogeneousField:
    """Sphere data of a homogeneous field of degree ``alpha < 1``.

    Parameters
    ----------
    d : int
        Ambient dimension, at least 2.
    alpha : float
        Homogeneity exponent.
    F : callable
        Maps unit vectors ``(..., d)`` to field values ``(..., d)``.
    name : str
        Registry name, used in reports.
    kind, params
        Identify a built-in compiled evaluator.  User fields leave them
        unset and run through the pure-Python integrators.
    """

    d: int
    alpha: float
    F: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    kind: Optional[int] = None
    params: Optional[np.ndarray] = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 2:
            raise DomainError(f"dimension must be >= 2, got {self.d}")
        if not self.alpha < 1:
            raise DomainError(f"alpha must be < 1, got {self.alpha}")

    @property
    def compiled(self) -> bool:
        return self.kind is not None

    def radial(self, y):
        """F_r(y) for unit ``y``."""
        y = np.asarray(y, dtype=float)
        return np.sum(self.F(y) * y, axis=-1)

    def spherical(self, y):
        """F_s(y) for unit ``y``."""
        y = np.asarray(y, dtype=float)
        return decompose(self.F(y), y)[0]


@dataclass(frozen=True)
class ExtendedState:
    """Point of the rescaled system: direction ``y`` and scale variable ``w``."""

    y: np.ndarray
    w: float

    def __post_init__(self):
        if not self.w > 0:
            raise DomainError(f"w must be positive, got {self.w}")
        object.__setattr__(self, "y", as_unit(self.y))


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    projection_scale: float = 40.0
    projection_shift: float = 38.0


@dataclass(frozen=True)
class Perturbation:
    """Smooth bump added to F_s and F_r of the Lorenz-based field.

    The bump is ``smoothstep(1 - |y - center| / width)``; ``eps_s`` scales
    the tangent projection of ``direction`` and ``eps_r`` the radial part.
    """

    eps_s: float = 0.0
    eps_r: float = 0.0
    center: tuple = (-1.0, 0.0, 0.0, 0.0)
    width: float = 0.5
    direction: tuple = (0.0, 1.0, 0.0, 0.0)


def as_unit(y, tol=UNIT_TOL):
    """Validate that ``y`` has unit norm (rows, if stacked) and renormalize."""
    y = np.asarray(y, dtype=float)
    n = np.linalg.norm(y, axis=-1)
    if not np.all(np.abs(n - 1.0) <= tol):
        raise DomainError("expected unit vector(s); |y| deviates from 1 by "
                          f"{np.max(np.abs(n - 1.0)):.3g}")
    return y / n[..., None]


def decompose(fval, y):
    """Split ``fval`` into a part tangent to the sphere at ``y`` and a radial scalar.

    Returns ``(fs, fr)`` with ``fval = fs + fr * y`` and ``fs . y = 0``.
    """
    y = as_unit(y)
    fval = np.asarray(fval, dtype=float)
    fr = np.sum(fval * y, axis=-1)
    fs = fval - fr[..., None] * y
    return fs, fr


def singular_rhs(field, x):
    """``|x|**alpha * F(x/|x|)``; raises at the origin."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("singular field evaluated at the origin")
    return r[..., None] ** field.alpha * field.F(x / r[..., None])


def sphere_rhs(field, y):
    """Tangent component F_s(y) driving the scale-invariant dynamics."""
    y = as_unit(y)
    return decompose(field.F(y), y)[0]


def extended_rhs(field, s):
    """Right-hand side in logarithmic time: ``(w F_s(y), w + (alpha-1) F_r(y) w**2)``."""
    fs, fr = decompose(field.F(s.y), s.y)
    return s.w * fs, s.w + (field.alpha - 1.0) * fr * s.w ** 2


def master_slave_rhs(field, s):
    """Time-changed extended system ``(F_s(y), 1 + (alpha-1) F_r(y) w)``.

    Unlike :class:`ExtendedState`, ``w = 0`` is accepted here so the right-hand
    side can be probed at the boundary of positivity.
    """
    y, w = (s.y, s.w) if isinstance(s, ExtendedState) else s
    fs, fr = decompose(field.F(y), y)
    return fs, 1.0 + (field.alpha - 1.0) * fr * w


def smoothstep(xi):
    """Cubic Hermite step clamped to [0, 1]."""
    xi = np.clip(np.asarray(xi, dtype=float), 0.0, 1.0)
    out = xi * xi * (3.0 - 2.0 * xi)
    return out if out.ndim else float(out)


def _compiled_F(kind, params):
    def F(y):
        y = np.asarray(y, dtype=float)
        flat = np.ascontiguousarray(y.reshape(-1, y.shape[-1]))
        return _kernels.sphere_field_rows(kind, params, flat).reshape(y.shape)
    return F


def planar_example():
    """Two-dimensional field with a focusing point at (-1,0) and a defocusing one at (1,0)."""
    return HomogeneousField(d=2, alpha=1.0 / 3.0,
                            F=_compiled_F(_kernels.PLANAR, np.zeros(1)),
                            name="planar", kind=_kernels.PLANAR, params=np.zeros(1))


def constant_radial_example(F0=1.0, omega=1.0, alpha=1.0 / 3.0):
    """Planar rotation with constant radial part, ``F(y) = F0 y + omega J y``.

    Every quantity of the rescaled system has a closed form here, which
    makes it the reference problem for order and quadrature checks.
    """
    params = np.array([F0, omega], dtype=float)
    return HomogeneousField(d=2, alpha=alpha, F=_compiled_F(_kernels.ROTATING, params),
                            name="constant_radial", kind=_kernels.ROTATING,
                            params=params)


def lorenz_rhs(u, p=LorenzParams()):
    u = np.asarray(u, dtype=float)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    return np.stack([p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z],
                    axis=-1)


def stereo_forward(y, p=LorenzParams()):
    """Scaled stereographic projection from the pole (1,0,0,0) of S^3 to R^3."""
    y = as_unit(y)
    om = 1.0 - y[..., 0]
    if np.any(om <= 0):
        raise ProjectionPoleError("stereographic projection at its pole (1,0,0,0)")
    u = p.projection_scale * y[..., 1:] / om[..., None]
    u[..., 2] += p.projection_shift
    return u


def _shifted(u, p):
    v = np.array(u, dtype=float)
    v[..., 2] -= p.projection_shift
    return v / p.projection_scale


def stereo_inverse(u, p=LorenzParams()):
    v = _shifted(u, p)
    q = np.sum(v * v, axis=-1)[..., None]
    y = np.concatenate([(q - 1.0) / (q + 1.0), 2.0 * v / (q + 1.0)], axis=-1)
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def stereo_inverse_jacobian(u, p=LorenzParams()):
    """Analytic Jacobian ``d(stereo_inverse)/du`` of shape ``(..., 4, 3)``."""
    v = _shifted(u, p)
    q = np.sum(v * v, axis=-1)[..., None, None]
    vv = v[..., :, None] * v[..., None, :]
    top = 4.0 * v[..., None, :] / (q + 1.0) ** 2
    rest = 2.0 * np.eye(3) / (q + 1.0) - 4.0 * vv / (q + 1.0) ** 2
    return np.concatenate([top, rest], axis=-2) / p.projection_scale


def lorenz4d_params(p=LorenzParams(), perturbation=None):
    q = perturbation or Perturbation()
    arr = np.zeros(_kernels.LORENZ4D_NPARAMS)
    arr[:8] = [p.sigma, p.rho, p.beta, p.projection_scale, p.projection_shift,
               q.eps_s, q.eps_r, q.width if (q.eps_s or q.eps_r) else 0.0]
    arr[8:12] = q.center
    arr[12:16] = q.direction
    return arr


def lorenz4d_example(p=LorenzParams(), perturbation=None):
    """Field on S^3 with a focusing node at the north pole and a Lorenz attractor below.

    ``F_r(y) = -y0``.  The tangent part blends the projected linear node
    field (upper cap ``y0 >= 3/4``) with the Lorenz flow carried over by the
    inverse stereographic projection (``y0 <= 1/4``).  An optional
    :class:`Perturbation` adds a smooth bump.
    """
    params = lorenz4d_params(p, perturbation)
    name = "lorenz4d" if perturbation is None else "lorenz4d-perturbed"
    return HomogeneousField(d=4, alpha=1.0 / 3.0,
                            F=_compiled_F(_kernels.LORENZ4D, params),
                            name=name, kind=_kernels.LORENZ4D, params=params)


def make_field(name, params=None):
    """Build a registered field from its config name and parameter mapping."""
    params = dict(params or {})
    if name == "planar":
        if params:
            raise DomainError(f"planar field takes no parameters, got {sorted(params)}")
        return planar_example()
    if name == "constant_radial":
        return constant_radial_example(**params)
    if name == "lorenz4d":
        pert = params.pop("perturbation", None)
        lp = LorenzParams(**params)
        return lorenz4d_example(lp, Perturbation(**pert) if pert else None)
    raise DomainError(f"unknown field {name!r}")
