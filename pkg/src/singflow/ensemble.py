"""Monte Carlo ensembles of regularized solutions and their empirical densities.

Every trajectory index owns its random stream, and each trajectory is
advanced by its own compiled loop, so an ensemble is a pure function of
``(field, spec, x0, N, targets)`` whatever the number of workers.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .exceptions import (DomainError, EmptyHistogramError, EnsembleFailureError,
                         SingularSampleError)
from .integrate import StepPolicy
from .regularize import (_ESCAPE_STREAM, _integrate_rows,
                         find_entry, random_inner_field, rng_stream)

log = logging.getLogger(__name__)

CHUNK = 128
MAX_FAILURE_RATE = 0.01
# the shared pre-entry prefix stops this many radii before the ball
PREFIX_MARGIN = 4.0
ESCAPE_RETRIES = 8


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Empirical measure at time ``t``; ``weights`` of None means uniform."""

    t: float
    points: np.ndarray
    weights: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(pts),) or np.any(w < 0):
                raise DomainError("weights must be nonnegative, one per point")
            if abs(w.sum() - 1.0) > 1e-12:
                raise DomainError(f"weights sum to {w.sum()!r}, expected 1")
            object.__setattr__(self, "weights", w)
        idx = np.arange(len(pts)) if self.indices is None else np.asarray(self.indices)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.points)

    @property
    def probabilities(self):
        if self.weights is None:
            return np.full(len(self), 1.0 / len(self))
        return self.weights


@dataclass(frozen=True, eq=False)
class Histogram2D:
    """Normalized in-bounds mass on a regular grid; ``mass[i, j]`` is cell (x_i, y_j)."""

    bounds: tuple
    nx: int
    ny: int
    mass: np.ndarray
    oob_mass: float = 0.0

    def same_grid(self, other):
        return (self.nx, self.ny) == (other.nx, other.ny) and np.allclose(
            self.bounds, other.bounds, rtol=0, atol=0)

    @property
    def edges(self):
        x0, x1, y0, y1 = self.bounds
        return np.linspace(x0, x1, self.nx + 1), np.linspace(y0, y1, self.ny + 1)


@dataclass
class EnsembleResult:
    """Sample sets per target plus bookkeeping of excluded trajectories."""

    samples: list
    failures: dict = dc_field(default_factory=dict)
    reentries: int = 0
    n_total: int = 0

    @property
    def failure_rate(self):
        return len(self.failures) / self.n_total if self.n_total else 0.0

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, k):
        return self.samples[k]


def _check_grid(bounds, nx, ny):
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise DomainError("histogram bounds must be nonempty")
    if nx < 1 or ny < 1:
        raise DomainError("nx and ny must be >= 1")
    return (x0, x1, y0, y1)


def _cell_index(pts, dims, bounds, nx, ny):
    """Flat cell index of every point, -1 when outside the grid."""
    x0, x1, y0, y1 = bounds
    a = pts[:, dims[0]]
    b = pts[:, dims[1]]
    i = np.floor((a - x0) / (x1 - x0) * nx).astype(np.int64)
    j = np.floor((b - y0) / (y1 - y0) * ny).astype(np.int64)
    # closed upper edge, as in numpy.histogram2d
    i[a == x1] = nx - 1
    j[b == y1] = ny - 1
    inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
    return np.where(inside, i * ny + j, -1)


def _from_counts(counts, bounds, nx, ny):
    total = counts[:-1].sum()
    everything = counts.sum()
    if total <= 0:
        raise EmptyHistogramError("all histogram mass lies outside the grid bounds")
    mass = (counts[:-1] / total).reshape(nx, ny)
    return Histogram2D(bounds, nx, ny, mass, float(counts[-1] / everything))


def _binned(cells, weights, n_cells):
    # out-of-bounds cell -1 lands in the extra last slot
    return np.bincount(np.where(cells < 0, n_cells, cells), weights=weights,
                       minlength=n_cells + 1)


def histogram2d(s, dims=(1, 2), bounds=(-4.0, 4.0, -4.0, 4.0), nx=64, ny=64):
    """Weighted histogram of the ``dims`` projection, normalized in bounds.

    The fraction of mass that fell outside is kept in ``oob_mass``.
    """
    bounds = _check_grid(bounds, nx, ny)
    cells = _cell_index(s.points, dims, bounds, nx, ny)
    return _from_counts(_binned(cells, s.probabilities, nx * ny), bounds, nx, ny)


def l1_distance(h1, h2):
    if not h1.same_grid(h2):
        raise DomainError("histograms live on different grids")
    return float(np.abs(h1.mass - h2.mass).sum())


def bootstrap_self_distance(s, dims=(1, 2), bounds=(-4.0, 4.0, -4.0, 4.0), nx=64,
                            ny=64, B=50, seed=0):
    """Mean L1 distance between histograms of two independent resamples.

    Each resample has the size of ``s`` and is drawn with replacement
    according to the sample weights.  This is the noise floor against which
    distances between independent ensembles of the same size are judged.
    """
    if B < 10:
        raise DomainError("B must be at least 10")
    bounds = _check_grid(bounds, nx, ny)
    cells = _cell_index(s.points, dims, bounds, nx, ny)
    n_cells = nx * ny
    if np.all(cells < 0):
        raise EmptyHistogramError("all histogram mass lies outside the grid bounds")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    n = len(s)
    p = s.probabilities
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    dists = np.empty(B)
    for b in range(B):
        pair = []
        for _ in range(2):
            pick = np.searchsorted(cdf, rng.random(n), side="right")
            counts = _binned(cells[pick], None, n_cells).astype(float)
            inside = counts[:-1].sum()
            pair.append(counts[:-1] / inside if inside else counts[:-1])
        dists[b] = np.abs(pair[0] - pair[1]).sum()
    return float(dists.mean())


def pullback_samples(s, t_b, alpha):
    """Directions and scale variables ``w = (t - t_b) |x|**(alpha-1)`` of a sample set."""
    if not s.t > t_b:
        raise DomainError("pullback needs t > t_b")
    r = np.linalg.norm(s.points, axis=1)
    if np.any(r == 0):
        raise SingularSampleError("zero-norm sample has no direction")
    return s.points / r[:, None], (s.t - t_b) * r ** (alpha - 1.0)


def _map_chunks(fn, n, workers):
    starts = list(range(0, n, CHUNK))
    if workers <= 1 or len(starts) == 1:
        for a in starts:
            fn(a, min(a + CHUNK, n))
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda a: fn(a, min(a + CHUNK, n)), starts))


def inner_offsets(spec, field, N):
    """Constant parts ``h0`` of the per-trajectory random inner fields."""
    return np.array([random_inner_field(spec.seed, field, index=i,
                                        offset_axis=spec.offset_axis).h0
                     for i in range(N)])


def run_ensemble(field, spec, x0, N, t_targets, policy=StepPolicy(), workers=None,
                 strict=True):
    """Regularized ensemble observed at ``t_targets``.

    Parameters
    ----------
    field : HomogeneousField
        Must be one of the compiled built-in fields.
    spec : RegularizationSpec
        ``direct`` integrates each regularized system straight through.  Map
        modes locate the entry point once and then apply the escape map.
    x0 : array_like
        Common initial condition.
    N : int
        Number of trajectories.
    t_targets : sequence of float
        Increasing observation times.
    policy : StepPolicy
    workers : int, optional
        Thread count; defaults to the CPU count.  Does not affect results.
    strict : bool
        Raise :class:`EnsembleFailureError` when more than 1% of the
        trajectories fail.

    Returns
    -------
    EnsembleResult
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    if not field.compiled:
        raise DomainError("ensembles require a compiled built-in field")
    targets = np.asarray(t_targets, dtype=float)
    if targets.ndim != 1 or len(targets) == 0 or np.any(np.diff(targets) <= 0):
        raise DomainError("t_targets must be a nonempty increasing sequence")
    x0 = np.asarray(x0, dtype=float)
    workers = workers or os.cpu_count() or 1
    out = np.empty((N, len(targets), field.d))
    failures = {}
    reentries = 0
    if spec.mode == "direct":
        _direct(field, spec, x0, N, targets, policy, workers, out, failures)
    else:
        reentries = _mapped(field, spec, x0, N, targets, policy, workers, out, failures)
    keep = np.array([i for i in range(N) if i not in failures], dtype=np.int64)
    samples = [SampleSet(float(t), out[keep, k], None, keep)
               for k, t in enumerate(targets)]
    result = EnsembleResult(samples, failures, reentries, N)
    if failures:
        log.warning("%d of %d trajectories excluded", len(failures), N)
    if strict and result.failure_rate > MAX_FAILURE_RATE:
        raise EnsembleFailureError(
            f"{len(failures)} of {N} trajectories failed "
            f"(limit {MAX_FAILURE_RATE:.0%}): {_summary(failures)}")
    return result


def _summary(failures):
    kinds = {}
    for reason in failures.values():
        kinds[reason] = kinds.get(reason, 0) + 1
    return ", ".join(f"{k}={v}" for k, v in sorted(kinds.items()))


_STATUS = {_kernels.STIFF: "stiffness", _kernels.OVERFLOW: "overflow"}


def _direct(field, spec, x0, N, targets, policy, workers, out, failures):
    nu = spec.nu
    H0 = inner_offsets(spec, field, N)
    # all trajectories agree until they approach the ball; integrate that once
    X = x0[None].copy()
    pre = np.empty((1, len(targets), field.d))
    status = np.zeros(1, dtype=np.int64)
    t_stop = np.zeros(1)
    rmin = np.zeros(1)
    _kernels.integrate_batch(field.kind, field.params, field.alpha, 0.0, H0[:1], X,
                             np.zeros(1), targets, policy.c, policy.dt_max,
                             policy.dt_min, 0.0, PREFIX_MARGIN * nu, pre, status,
                             np.zeros((1, len(targets)), dtype=np.bool_), t_stop, rmin)
    shared = status[0] == _kernels.STOPPED and rmin[0] >= nu
    if shared:
        done = targets <= t_stop[0]
        out[:, done] = pre[0, done]
        rest = targets[~done]
        start, t0 = X[0], t_stop[0]
    else:
        done = np.zeros(len(targets), dtype=bool)
        rest, start, t0 = targets, x0, 0.0
    if len(rest) == 0:
        return

    def work(a, b):
        Xc = np.repeat(start[None], b - a, axis=0)
        buf = np.empty((b - a, len(rest), field.d))
        st, _ = _integrate_rows(field, nu, H0[a:b], Xc, np.full(b - a, t0), rest,
                                policy, buf)
        out[a:b, ~done] = buf
        for i in range(b - a):
            if st[i] in _STATUS:
                failures[a + i] = _STATUS[st[i]]

    _map_chunks(work, N, workers)
    # a solution still inside the ball at an observation time never escaped
    if shared:
        r = np.linalg.norm(out[:, ~done], axis=2)
        for i in np.flatnonzero(np.any(r < nu, axis=1)):
            failures.setdefault(int(i), "trapped")


def _mapped(field, spec, x0, N, targets, policy, workers, out, failures):
    nu = spec.nu
    entry = find_entry(field, x0, nu, policy)
    if np.any(targets <= entry.t_ent):
        raise DomainError("map modes need every target after the entry time")
    if spec.mode == "map_stochastic":
        Z = np.array([spec.sampler.draw(rng_stream(spec.seed, i, _ESCAPE_STREAM))
                      for i in range(N)])
        dT = np.full(N, spec.T)
    else:
        H0 = inner_offsets(spec, field, N)
        Z, dT = _escape_batch(field, entry.x_ent / nu, H0, spec.T,
                              policy.rescaled(nu ** (field.alpha - 1.0)), workers,
                              failures)
    t_esc = entry.t_ent + nu ** (1.0 - field.alpha) * dT
    X = nu * Z
    reentered = np.zeros((N, len(targets)), dtype=bool)

    def work(a, b):
        rows = [i for i in range(a, b) if i not in failures]
        if not rows:
            return
        Xc = X[rows].copy()
        buf = np.empty((len(rows), len(targets), field.d))
        st, re = _integrate_rows(field, 0.0, np.zeros((len(rows), field.d)), Xc,
                                 t_esc[rows], targets, policy, buf, nu_watch=nu)
        out[rows] = buf
        reentered[rows] = re
        for k, i in enumerate(rows):
            if st[k] in _STATUS:
                failures[i] = _STATUS[st[k]]

    _map_chunks(work, N, workers)
    late = np.flatnonzero(t_esc > targets[0])
    for i in late:
        failures.setdefault(int(i), "escape after first target")
    n_re = int(np.count_nonzero(reentered.any(axis=1)))
    if n_re:
        log.warning("%d trajectories re-entered |x| < nu after escape", n_re)
    return n_re


def _escape_batch(field, z0, H0, T, policy, workers, failures):
    """Unit-scale flow for every inner field, doubling ``T`` for rows still inside."""
    N = len(H0)
    Z = np.empty((N, field.d))
    dT = np.full(N, float(T))
    pending = np.arange(N)
    for _ in range(ESCAPE_RETRIES + 1):
        def work(a, b, pending=pending):
            rows = pending[a:b]
            Xc = np.repeat(z0[None], len(rows), axis=0)
            buf = np.empty((len(rows), 1, field.d))
            _integrate_rows(field, 1.0, H0[rows], Xc, np.zeros(len(rows)),
                            np.array([dT[rows[0]]]), policy, buf)
            Z[rows] = buf[:, 0]

        _map_chunks(work, len(pending), workers)
        inside = np.linalg.norm(Z[pending], axis=1) <= 1.0
        pending = pending[inside]
        if len(pending) == 0:
            return Z, dT
        dT[pending] *= 2.0
    for i in pending:
        failures[int(i)] = "trapped"
    return Z, dT


def trajectory_paths(field, spec, x0, n_paths, times, policy=StepPolicy()):
    """Full time series of the first ``n_paths`` direct-mode realizations."""
    res = run_ensemble(field, replace(spec, mode="direct"), x0, n_paths, times, policy, workers=1, strict=False)
    paths = np.full((n_paths, len(times), field.d), np.nan)
    for k, s in enumerate(res.samples):
        paths[s.indices, k] = s.points
    return paths

