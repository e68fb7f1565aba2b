"""Artifact writers: NDJSON samples, CSV/PGM histograms and JSON/text reports.

Every artifact carries the config hash and seed in its first line, and all
numbers are written with ``repr`` precision, so identical inputs produce
byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .ensemble import Histogram2D, SampleSet

LOG_FLOOR = 1e-12


def _stamp(config_hash, seed):
    return {"config_hash": config_hash, "seed": seed}


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _floats(a):
    return [float(v) for v in np.asarray(a).ravel()]


def write_samples_ndjson(path, sample_sets, config_hash="", seed=0):
    """One header record, then one ``{index, t, x}`` record per point."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_dumps({"header": _stamp(config_hash, seed)}) + "\n")
        for s in sample_sets:
            w = None if s.weights is None else s.weights
            for k, (i, x) in enumerate(zip(s.indices, s.points)):
                rec = {"index": int(i), "t": float(s.t), "x": _floats(x)}
                if w is not None:
                    rec["weight"] = float(w[k])
                fh.write(_dumps(rec) + "\n")
    return path


def read_samples_ndjson(path):
    """Inverse of :func:`write_samples_ndjson`; returns ``(header, [SampleSet])``."""
    header, groups = {}, {}
    with Path(path).open() as fh:
        for line in fh:
            rec = json.loads(line)
            if "header" in rec:
                header = rec["header"]
                continue
            groups.setdefault(rec["t"], []).append(rec)
    sets = []
    for t, recs in groups.items():
        weights = [r["weight"] for r in recs] if "weight" in recs[0] else None
        sets.append(SampleSet(t, np.array([r["x"] for r in recs]),
                              None if weights is None else np.array(weights),
                              np.array([r["index"] for r in recs])))
    return header, sets


def write_srb_ndjson(path, points, config_hash="", seed=0):
    """``{y, w, weight}`` per weighted SRB point after a header record."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_dumps({"header": _stamp(config_hash, seed)}) + "\n")
        for y, w, q in zip(points.Y, points.W, points.weights):
            fh.write(_dumps({"y": _floats(y), "w": float(w), "weight": float(q)}) + "\n")
    return path


def read_srb_ndjson(path):
    from .analysis import SRBPrimeSet
    Y, W, Q = [], [], []
    with Path(path).open() as fh:
        for line in fh:
            rec = json.loads(line)
            if "header" in rec:
                continue
            Y.append(rec["y"])
            W.append(rec["w"])
            Q.append(rec["weight"])
    return SRBPrimeSet(np.array(Y), np.array(W), np.array(Q))


def write_histogram_csv(path, h, config_hash="", seed=0):
    path = Path(path)
    x0, x1, y0, y1 = h.bounds
    lines = [f"# config_hash={config_hash}, seed={seed}",
             f"# bounds={x0!r},{x1!r},{y0!r},{y1!r} nx={h.nx} ny={h.ny} "
             f"oob_mass={h.oob_mass!r}",
             "i,j,mass"]
    for i in range(h.nx):
        for j in range(h.ny):
            lines.append(f"{i},{j},{float(h.mass[i, j])!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_histogram_csv(path):
    rows = Path(path).read_text().splitlines()
    meta = dict(tok.split("=", 1) for tok in rows[1][2:].split())
    bounds = tuple(float(v) for v in meta["bounds"].split(","))
    nx, ny = int(meta["nx"]), int(meta["ny"])
    mass = np.zeros((nx, ny))
    for line in rows[3:]:
        i, j, m = line.split(",")
        mass[int(i), int(j)] = float(m)
    return Histogram2D(bounds, nx, ny, mass, float(meta["oob_mass"]))


def write_histogram_pgm(path, h, config_hash="", seed=0):
    """ASCII P2 image, brightness linear in ``log(mass + 1e-12)``.

    Rows run from the top of the plane (largest second coordinate) down.
    """
    path = Path(path)
    logm = np.log(h.mass + LOG_FLOOR)
    lo = math.log(LOG_FLOOR)
    hi = float(logm.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.rint((logm - lo) * scale).astype(int).clip(0, 255)
    image = pix.T[::-1]
    lines = ["P2", f"# config_hash={config_hash}, seed={seed}", f"{h.nx} {h.ny}", "255"]
    lines += [" ".join(str(v) for v in row) for row in image]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_pgm(path):
    tokens = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    if tokens[0] != "P2":
        raise ValueError("not an ASCII PGM file")
    nx, ny = map(int, tokens[1].split())
    return np.array([list(map(int, ln.split())) for ln in tokens[3:3 + ny]]).reshape(ny, nx)


def _clean(obj):
    """Plain JSON types; non-finite floats become strings so the dump stays strict."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def report_text(report):
    lines = [f"experiment: {report['experiment']}",
             f"status: {report['status']}",
             f"config_hash: {report['config_hash']}",
             f"seed: {report['seed']}",
             "checks:"]
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        lines.append(f"  [{mark}] {c['name']}: {c['value']!r} {c['op']} {c['threshold']!r}")
    lines.append("metrics:")
    for k in sorted(report["metrics"]):
        lines.append(f"  {k}: {report['metrics'][k]!r}")
    if report.get("artifacts"):
        lines.append("artifacts:")
        lines += [f"  {a}" for a in report["artifacts"]]
    return "\n".join(lines) + "\n"


def write_report(report, out_dir):
    """Write ``<experiment>_report.json`` and ``.txt``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = _clean(report)
    stem = report["experiment"].replace("-", "_")
    jpath = out_dir / f"{stem}_report.json"
    tpath = out_dir / f"{stem}_report.txt"
    jpath.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    tpath.write_text(report_text(report))
    return jpath, tpath
