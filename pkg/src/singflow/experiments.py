"""Named experiments driven by an :class:`ExperimentConfig`.

Each experiment returns a report dictionary (metrics, threshold checks and
artifact names) and writes its artifacts into the output directory.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import io
from .analysis import (GsyncConfig, blowup_estimate, blowup_time, predict_post_blowup,
                       radial_bounds, srb_prime_ensemble)
from .ensemble import (SampleSet, bootstrap_self_distance, histogram2d, l1_distance,
                       pullback_samples, run_ensemble, trajectory_paths)
from .exceptions import ConfigError, DomainError
from .fields import as_unit, make_field, stereo_forward, stereo_inverse
from .integrate import StepPolicy
from .regularize import RegularizationSpec, SamplerSpec, find_entry

log = logging.getLogger(__name__)


def derived_seed(seed, *keys):
    """Independent 64-bit seed for a sub-run, a pure function of ``(seed, keys)``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def combined_floor(a, b):
    """Noise floor for comparing two independent ensembles with floors ``a`` and ``b``."""
    return math.sqrt(0.5 * (a * a + b * b))


@dataclass
class Run:
    cfg: object
    out_dir: Path
    config_hash: str
    metrics: dict = dc_field(default_factory=dict)
    checks: list = dc_field(default_factory=list)
    artifacts: list = dc_field(default_factory=list)

    @property
    def seed(self):
        return self.cfg.seed

    def check(self, name, value, op, threshold):
        if op == "<=":
            ok = value <= threshold
        elif op == ">=":
            ok = value >= threshold
        elif op == ">":
            ok = value > threshold
        elif op == "in":
            ok = threshold[0] <= value <= threshold[1]
        else:
            raise ValueError(op)
        self.checks.append({"name": name, "value": value, "op": op,
                            "threshold": threshold, "passed": bool(ok)})

    def path(self, name):
        self.artifacts.append(name)
        return self.out_dir / name

    def report(self):
        status = "pass" if all(c["passed"] for c in self.checks) else "fail"
        return {"experiment": self.cfg.experiment, "status": status,
                "config_hash": self.config_hash, "seed": self.seed,
                "metrics": self.metrics, "checks": self.checks,
                "artifacts": sorted(self.artifacts)}


def build_field(cfg, perturbed=False):
    params = dict(cfg.field.params)
    if perturbed:
        if cfg.field.name != "lorenz4d":
            raise ConfigError("perturbation: only the lorenz4d field supports a bump perturbation")
        params["perturbation"] = cfg.perturbation.model_dump()
    try:
        field = make_field(cfg.field.name, params)
    except (TypeError, DomainError) as err:
        raise ConfigError(f"field.params: {err}") from None
    if len(cfg.x0) != field.d:
        raise ConfigError(f"x0: expected {field.d} components, got {len(cfg.x0)}")
    return field


def build_policy(cfg):
    try:
        return StepPolicy(**cfg.policy.model_dump())
    except DomainError as err:
        raise ConfigError(f"policy: {err}") from None


def build_sampler(sc):
    return SamplerSpec(family=sc.family, radius=sc.radius, cap_center=tuple(sc.cap_center),
                       cap_angle=sc.cap_angle, sigma=sc.sigma)


def build_spec(cfg, **over):
    r = cfg.regularization
    kw = dict(mode=r.mode, nu=r.nu, T=r.T, sampler=build_sampler(r.sampler),
              seed=cfg.regularization_seed, offset_axis=r.offset_axis)
    kw.update(over)
    return RegularizationSpec(**kw)


def _grid(cfg, k):
    g = cfg.ensemble.grid_for(k)
    return dict(dims=tuple(cfg.ensemble.dims), bounds=tuple(g.bounds), nx=g.nx, ny=g.ny)


def _ensemble(run, field, spec, targets=None, tag=""):
    cfg = run.cfg
    targets = cfg.ensemble.t_targets if targets is None else targets
    log.info("ensemble %s: mode=%s nu=%g N=%d", tag, spec.mode, spec.nu, cfg.ensemble.N)
    res = run_ensemble(field, spec, cfg.x0, cfg.ensemble.N, targets, build_policy(cfg),
                       workers=cfg.ensemble.workers, strict=False)
    key = f"failure_rate{tag}"
    run.metrics[key] = res.failure_rate
    run.check(key, res.failure_rate, "<=", cfg.checks.max_failure_rate)
    if res.reentries:
        run.metrics[f"reentries{tag}"] = res.reentries
    return res


def _floor(run, s, k, *keys, **grid):
    grid = grid or _grid(run.cfg, k)
    return bootstrap_self_distance(s, B=run.cfg.ensemble.bootstrap,
                                   seed=derived_seed(run.seed, 99, k, *keys), **grid)


def _fmt_t(t):
    return f"{t:.6g}".replace(".", "p").replace("-", "m")


def exp_blowup(run):
    cfg = run.cfg
    est = blowup_estimate(build_field(cfg), np.array(cfg.x0), build_policy(cfg))
    run.metrics.update(t_b=est.t_b, t_stop=est.t_stop, r_stop=est.r_stop,
                       tail=est.tail, spherical_residual=est.spherical_residual)
    run.check("t_b_finite", float(np.isfinite(est.t_b)), ">=", 1.0)
    if cfg.checks.t_b_range is not None:
        run.check("t_b", est.t_b, "in", list(cfg.checks.t_b_range))


def exp_trajectories(run):
    cfg = run.cfg
    field = build_field(cfg)
    policy = build_policy(cfg)
    spec = build_spec(cfg, mode="direct")
    times = np.linspace(0.0, cfg.t_end, 201)[1:]
    paths = trajectory_paths(field, spec, cfg.x0, cfg.trajectories, times, policy)
    sets = [SampleSet(float(t), paths[:, k]) for k, t in enumerate(times)]
    io.write_samples_ndjson(run.path("trajectories.ndjson"), sets, run.config_hash, run.seed)
    t_ent = find_entry(field, np.array(cfg.x0), spec.nu, policy).t_ent
    spread = np.array([np.max(np.linalg.norm(s.points - s.points[0], axis=1)) for s in sets])
    radius = np.array([np.max(np.linalg.norm(s.points, axis=1)) for s in sets])
    before = times < t_ent
    run.metrics.update(t_entry=t_ent, spread_before_entry=float(spread[before].max()),
                       relative_spread_final=float(spread[-1] / radius[-1]))
    run.check("spread_before_entry", float(spread[before].max()), "<=", 0.0)
    if cfg.trajectories > 1:
        run.check("relative_spread_final", float(spread[-1] / radius[-1]), ">", 1e-3)


def _write_hist(run, h, name):
    io.write_histogram_csv(run.path(f"{name}.csv"), h, run.config_hash, run.seed)
    io.write_histogram_pgm(run.path(f"{name}.pgm"), h, run.config_hash, run.seed)


def exp_density(run):
    cfg = run.cfg
    field = build_field(cfg)
    res = _ensemble(run, field, build_spec(cfg))
    io.write_samples_ndjson(run.path("samples.ndjson"), res.samples, run.config_hash, run.seed)
    prev = None
    for k, s in enumerate(res.samples):
        h = histogram2d(s, **_grid(cfg, k))
        tag = _fmt_t(s.t)
        _write_hist(run, h, f"density_t{tag}")
        total = float(h.mass.sum())
        spread = float(np.median(np.linalg.norm(s.points, axis=1)))
        run.metrics.update({f"mass_t{tag}": total, f"oob_mass_t{tag}": h.oob_mass,
                            f"median_radius_t{tag}": spread,
                            f"bootstrap_floor_t{tag}": _floor(run, s, k)})
        run.check(f"mass_t{tag}", abs(total - 1.0), "<=", 1e-12)
        if prev is not None:
            run.check(f"support_growth_t{tag}", spread, ">", prev)
        prev = spread


def _compare(run, a, b, k, factor, name, grid=None):
    grid = grid or _grid(run.cfg, k)
    d = l1_distance(histogram2d(a, **grid), histogram2d(b, **grid))
    fa = _floor(run, a, k, 1, **grid)
    fb = _floor(run, b, k, 2, **grid)
    floor = combined_floor(fa, fb)
    run.metrics.update({f"l1_{name}": d, f"floor_{name}": floor, f"ratio_{name}": d / floor})
    run.check(f"l1_{name}", d, "<=", factor * floor)
    return d, floor


def exp_nu_convergence(run):
    cfg = run.cfg
    field = build_field(cfg)
    factor = cfg.checks.l1_factor or 2.0
    ens = []
    for i, nu in enumerate(cfg.nu_ladder):
        spec = build_spec(cfg, nu=nu, seed=derived_seed(cfg.regularization_seed, 1, i))
        res = _ensemble(run, field, spec, tag=f"_nu{nu:g}")
        for k, s in enumerate(res.samples):
            _write_hist(run, histogram2d(s, **_grid(cfg, k)), f"density_nu{nu:g}_t{_fmt_t(s.t)}")
        ens.append(res)
    for i in range(len(ens) - 1):
        for k, t in enumerate(cfg.ensemble.t_targets):
            name = f"nu{cfg.nu_ladder[i]:g}_vs_nu{cfg.nu_ladder[i + 1]:g}_t{_fmt_t(t)}"
            _compare(run, ens[i][k], ens[i + 1][k], k, factor, name)


def exp_sampler_independence(run):
    cfg = run.cfg
    field = build_field(cfg)
    factor = cfg.checks.l1_factor or 2.0
    samplers = [build_sampler(cfg.regularization.sampler), build_sampler(cfg.alt_sampler)]
    ens = []
    for i, smp in enumerate(samplers):
        spec = build_spec(cfg, mode="map_stochastic", sampler=smp,
                          seed=derived_seed(cfg.regularization_seed, 2, i))
        ens.append(_ensemble(run, field, spec, tag=f"_{smp.family}{i}"))
    for k, t in enumerate(cfg.ensemble.t_targets):
        name = f"{samplers[0].family}_vs_{samplers[1].family}_t{_fmt_t(t)}"
        _compare(run, ens[0][k], ens[1][k], k, factor, name)


def orbit_start(cfg, field):
    if cfg.analysis.orbit_start is not None:
        return as_unit(np.array(cfg.analysis.orbit_start))
    if cfg.field.name == "lorenz4d":
        return stereo_inverse(np.array([1.0, 1.0, 20.0]))
    raise ConfigError("analysis.orbit_start is required for this field")


def srb_points(run, field):
    a = run.cfg.analysis
    y0 = orbit_start(run.cfg, field)
    F_m = a.F_m
    if F_m is None:
        F_m, F_M = radial_bounds(field, y0, a.s_total, a.ds)
        run.metrics.update(F_m=F_m, F_M=F_M)
    gcfg = GsyncConfig(ds=a.ds, F_m=F_m, tolerance=a.tolerance)
    pts = srb_prime_ensemble(field, y0, a.M, a.stride, gcfg, s_burn=a.s_burn)
    run.metrics.update(G_min=float(pts.W.min()), G_max=float(pts.W.max()),
                       G_error_bound=pts.error_bound)
    return pts


def exp_srb_predict(run):
    cfg = run.cfg
    field = build_field(cfg)
    factor = cfg.checks.l1_factor or 3.0
    pts = srb_points(run, field)
    io.write_srb_ndjson(run.path("srb_prime.ndjson"), pts, run.config_hash, run.seed)
    t_b = blowup_time(field, np.array(cfg.x0), build_policy(cfg))
    run.metrics["t_b"] = t_b
    res = _ensemble(run, field, build_spec(cfg))
    for k, s in enumerate(res.samples):
        pred = predict_post_blowup(pts, s.t, t_b, field.alpha)
        tag = _fmt_t(s.t)
        _write_hist(run, histogram2d(pred, **_grid(cfg, k)), f"predicted_t{tag}")
        _compare(run, pred, s, k, factor, f"prediction_t{tag}")


def similarity_features(field_name, s, t_b, alpha, dims=(1, 2)):
    """``(w, coordinate)`` pairs of the pulled-back sample.

    The coordinate is the first stereographic coordinate for the Lorenz-based
    field and ``y[dims[0]]`` otherwise.
    """
    Y, W = pullback_samples(s, t_b, alpha)
    if field_name == "lorenz4d":
        coord = stereo_forward(Y)[:, 0]
    else:
        coord = Y[:, dims[0]]
    return SampleSet(s.t, np.column_stack([W, coord]), s.weights, s.indices)


def shared_bounds(sets, lo=0.5, hi=99.5):
    """Grid bounds covering the central percentiles of all sets pooled."""
    pooled = np.concatenate([s.points for s in sets])
    a0, a1 = np.percentile(pooled[:, 0], [lo, hi])
    b0, b1 = np.percentile(pooled[:, 1], [lo, hi])
    return (float(a0), float(a1), float(b0), float(b1))


def exp_self_similarity(run):
    cfg = run.cfg
    field = build_field(cfg)
    factor = cfg.checks.l1_factor or 2.0
    if len(cfg.ensemble.t_targets) < 2:
        raise ConfigError("ensemble.t_targets: self-similarity needs at least two times")
    t_b = blowup_time(field, np.array(cfg.x0), build_policy(cfg))
    run.metrics["t_b"] = t_b
    res = _ensemble(run, field, build_spec(cfg))
    feats = [similarity_features(cfg.field.name, s, t_b, field.alpha, cfg.ensemble.dims)
             for s in res.samples]
    g = cfg.ensemble.grid
    grid = dict(dims=(0, 1), bounds=shared_bounds(feats), nx=g.nx, ny=g.ny)
    run.metrics["feature_bounds"] = list(grid["bounds"])
    for k in range(1, len(feats)):
        name = f"pullback_t{_fmt_t(feats[0].t)}_vs_t{_fmt_t(feats[k].t)}"
        _compare(run, feats[0], feats[k], k, factor, name, grid)


def exp_perturbation(run):
    cfg = run.cfg
    base = build_field(cfg)
    bumped = build_field(cfg, perturbed=True)
    ens = []
    for i, field in enumerate((base, bumped)):
        spec = build_spec(cfg, seed=derived_seed(cfg.regularization_seed, 3, i))
        ens.append(_ensemble(run, field, spec, tag=f"_{field.name}"))
    for k, t in enumerate(cfg.ensemble.t_targets):
        grid = _grid(cfg, k)
        a, b = ens[0][k], ens[1][k]
        tag = _fmt_t(t)
        hb = histogram2d(b, **grid)
        _write_hist(run, hb, f"perturbed_t{tag}")
        if cfg.checks.l1_factor is not None:
            _compare(run, a, b, k, cfg.checks.l1_factor, f"perturbed_t{tag}")
        else:
            # reported only: the size of the response is not a pass criterion
            d = l1_distance(histogram2d(a, **grid), hb)
            floor = combined_floor(_floor(run, a, k, 1), _floor(run, b, k, 2))
            run.metrics.update({f"l1_perturbed_t{tag}": d, f"floor_perturbed_t{tag}": floor,
                                f"ratio_perturbed_t{tag}": d / floor})


def nu_ladder(nus):
    """Half-decade ladder from ``max(nus)`` down to ``min(nus)``."""
    hi, lo = max(nus), min(nus)
    n = int(round(2 * math.log10(hi / lo)))
    return [hi * 10 ** (-0.5 * i) for i in range(n + 1)]


def exp_det_sensitivity(run):
    cfg = run.cfg
    field = build_field(cfg)
    policy = build_policy(cfg)
    t_obs = cfg.ensemble.t_targets[0]
    ladder = nu_ladder(cfg.nu_ladder)
    dirs = []
    for nu in ladder:
        spec = build_spec(cfg, mode="direct", nu=nu)
        res = run_ensemble(field, spec, cfg.x0, 1, [t_obs], policy, workers=1, strict=False)
        if res.failures:
            raise DomainError(f"fixed-H0 run at nu={nu:g} failed: {res.failures[0]}")
        x = res[0].points[0]
        dirs.append(x / np.linalg.norm(x))
    angles = [float(np.arccos(np.clip(a @ b, -1.0, 1.0))) for a, b in zip(dirs, dirs[1:])]
    run.metrics.update(nu_ladder=ladder, directions=[d.tolist() for d in dirs],
                       angles=angles, t_observe=t_obs)
    run.check("max_angle", max(angles), ">", cfg.checks.min_angle)


EXPERIMENT_FUNCS = {
    "blowup": exp_blowup,
    "trajectories": exp_trajectories,
    "density": exp_density,
    "nu-convergence": exp_nu_convergence,
    "sampler-independence": exp_sampler_independence,
    "srb-predict": exp_srb_predict,
    "self-similarity": exp_self_similarity,
    "perturbation": exp_perturbation,
    "det-sensitivity": exp_det_sensitivity,
}


def run_experiment(cfg, out_dir=None):
    """Run ``cfg.experiment``; returns the report and writes it with all artifacts."""
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out_dir, cfg.config_hash())
    EXPERIMENT_FUNCS[cfg.experiment](run)
    report = run.report()
    io.write_report(report, out_dir)
    return report
