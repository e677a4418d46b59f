"""Batch front end.

    sigmageom <command> --config PATH|- [--out DIR] [-v]

The config is one JSON document; the command's main JSON result goes to
stdout and to a file in ``--out``, CSV tables go to ``--out`` only, logs go
to stderr. Exit codes: 0 success (certify: pass), 1 certify fail,
2 certify undetermined, 3 solver budget exhausted, 64 malformed config.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import certifier, chains, figures, solver
from .algebra import Frame
from .sampling import Box
from .worldfn import SegVector, from_descriptor

log = logging.getLogger("sigmageom")

EXIT_OK, EXIT_FAIL, EXIT_UNDETERMINED, EXIT_BUDGET, EXIT_CONFIG = 0, 1, 2, 3, 64
COMMANDS = ("certify", "solve", "tube", "straight", "ball", "chain")
TOLERANCE_KEYS = ("tol", "tol_rank", "tol_eig", "tol_solve", "tol_linear", "tol_seg", "tol_pca")
UINT64_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    pass


# --- config parsing -------------------------------------------------------

def _get(cfg, key, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    val = cfg[key]
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{key!r} must be an integer")
    elif kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(f"{key!r} must be a finite number")
        val = float(val)
    elif kind == "point":
        try:
            val = np.asarray(val, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key!r} must be a list of numbers") from exc
        if val.ndim != 1 or not np.all(np.isfinite(val)):
            raise ConfigError(f"{key!r} must be a flat list of finite numbers")
    elif kind is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{key!r} must be true or false")
    return val


def _point(cfg, key, m, default=None, required=False):
    p = _get(cfg, key, "point", default, required)
    if p is not None and np.shape(p) != (m,):
        raise ConfigError(f"{key!r} must have {m} coordinates")
    return p


def _segvector(cfg, key, m):
    raw = cfg.get(key)
    if not isinstance(raw, list) or len(raw) != 2:
        raise ConfigError(f"{key!r} must be a pair [origin, end]")
    o = _point({"o": raw[0]}, "o", m, required=True)
    e = _point({"e": raw[1]}, "e", m, required=True)
    return SegVector(o, e)


def _box(cfg, key, m):
    raw = cfg.get(key)
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError(f"{key!r} must be an object")
    if "side" in raw:
        side = _get(raw, "side", float)
        if side <= 0:
            raise ConfigError(f"{key}.side must be > 0")
        return Box.cube(m, side, _point(raw, "center", m))
    lo, hi = _point(raw, "lo", m, required=True), _point(raw, "hi", m, required=True)
    try:
        return Box(lo, hi)
    except ValueError as exc:
        raise ConfigError(f"{key!r}: {exc}") from exc


def parse_config(cfg) -> dict:
    """Validate the common part of a config; returns normalized fields."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "geometry" not in cfg:
        raise ConfigError("missing required key 'geometry'")
    try:
        g = from_descriptor(cfg["geometry"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    seed = _get(cfg, "seed", int, 0)
    if not 0 <= seed <= UINT64_MAX:
        raise ConfigError("'seed' must be a 64-bit unsigned integer")
    workers = _get(cfg, "workers", int, 1)
    if workers < 1:
        raise ConfigError("'workers' must be >= 1")
    tols = cfg.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ConfigError("'tolerances' must be an object")
    for k in tols:
        if k not in TOLERANCE_KEYS:
            raise ConfigError(f"unknown tolerance {k!r}; expected one of {TOLERANCE_KEYS}")
        if _get(tols, k, float) <= 0:
            raise ConfigError(f"tolerance {k!r} must be > 0")
    return {"g": g, "seed": seed, "workers": workers, "tol": {k: float(v) for k, v in tols.items()}}


# --- output helpers -------------------------------------------------------

def _clean(obj):
    # JSON-safe: numpy scalars/arrays to Python, non-finite floats to None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(out: Path, name: str, doc) -> None:
    text = dumps(doc)
    (out / name).write_text(text)
    sys.stdout.write(text)


# --- commands -------------------------------------------------------------

def run_certify(cfg, c, out: Path) -> int:
    g, t = c["g"], c["tol"]
    b = cfg.get("budget", {})
    if not isinstance(b, dict):
        raise ConfigError("'budget' must be an object")
    budget = certifier.Budget(**{k: _get(b, k, int, getattr(certifier.Budget(), k))
                                 for k in ("samples", "targets", "starts", "frames")})
    if budget.samples < 10 or budget.targets < 1 or budget.starts < 1 or budget.frames < 1:
        raise ConfigError("budget entries must be positive (samples >= 10)")
    rep = certifier.certify(g, _box(cfg, "domain", g.chart_dim), budget, c["seed"],
                            tol_rank=t.get("tol_rank", certifier.TOL_RANK),
                            tol_eig=t.get("tol_eig", certifier.TOL_EIG),
                            tol_solve=t.get("tol_solve", solver.TOL_SOLVE),
                            tol_linear=t.get("tol_linear", certifier.TOL_LINEAR), workers=c["workers"])
    _emit(out, "certify.json", rep.to_json())
    log.info("certify verdict %s, detected_dim %s", rep.verdict, rep.detected_dim)
    return {"pass": EXIT_OK, "fail": EXIT_FAIL}.get(rep.verdict, EXIT_UNDETERMINED)


def run_solve(cfg, c, out: Path) -> int:
    g, m = c["g"], c["g"].chart_dim
    problem = cfg.get("problem")
    if problem not in ("equal", "scale", "sum"):
        raise ConfigError("'problem' must be one of equal, scale, sum")
    starts = _get(cfg, "starts", int, solver.STARTS)
    if starts < 1:
        raise ConfigError("'starts' must be >= 1")
    kw = dict(box=_box(cfg, "box", m), starts=starts, seed=c["seed"],
              tol_solve=c["tol"].get("tol_solve", solver.TOL_SOLVE), workers=c["workers"])
    doc = {"problem": problem, "geometry": g.descriptor(), "seed": c["seed"]}
    if problem == "equal":
        v = _segvector(cfg, "v", m)
        res = solver.solve_equal(v.origin, v.end, _point(cfg, "Q0", m, required=True), g, **kw)
        doc["Q1"] = res.to_json()
        sets = [res]
    elif problem == "scale":
        v = _segvector(cfg, "v", m)
        res = solver.solve_scale(v.origin, v.end, _get(cfg, "alpha", float, required=True),
                                 _point(cfg, "S0", m, required=True), g, **kw)
        doc["S1"] = res.to_json()
        sets = [res]
    else:
        R, S1 = solver.solve_sum(_segvector(cfg, "v", m), _segvector(cfg, "w", m),
                                 _point(cfg, "S0", m, required=True), g, **kw)
        doc["R"], doc["S1"] = R.to_json(), S1.to_json()
        sets = [R, S1]
    _emit(out, "solve.json", doc)
    if any(s.classification == "empty" for s in sets):
        log.warning("no converged start: solver budget exhausted")
        return EXIT_BUDGET
    return EXIT_OK


def chart_length_for(g, l: float) -> float:
    """Chart length L along axis 0 with sqrt(2 sigma(0, L e0)) = l."""
    e = np.eye(g.chart_dim)[0]
    f = lambda L: 2.0 * float(g(np.zeros(g.chart_dim), L * e)) - l * l
    hi = 2.0 * l + 1.0
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _segment_ends(cfg, g):
    m = g.chart_dim
    if "P0" in cfg or "P1" in cfg:
        return _point(cfg, "P0", m, required=True), _point(cfg, "P1", m, required=True)
    l = _get(cfg, "l", float, 1.0)
    if l <= 0:
        raise ConfigError("'l' must be > 0")
    P1 = np.zeros(m)
    P1[0] = chart_length_for(g, l)
    return np.zeros(m), P1


def run_tube(cfg, c, out: Path) -> int:
    g = c["g"]
    P0, P1 = _segment_ends(cfg, g)
    taus = cfg.get("taus", 50)
    if isinstance(taus, list):
        taus = _get(cfg, "taus", "point")
    elif isinstance(taus, bool) or not isinstance(taus, int) or taus < 1:
        raise ConfigError("'taus' must be a positive integer or a list of values")
    directions = _get(cfg, "directions", int, 8)
    if directions < 1:
        raise ConfigError("'directions' must be >= 1")
    try:
        prof = figures.tube_profile(P0, P1, g, taus, directions, c["tol"].get("tol_seg"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    (out / "tube.csv").write_text(prof.to_csv())
    i = int(np.argmin(np.abs(prof.tau - prof.length / 2)))
    _emit(out, "tube.json", {"P0": P0, "P1": P1, "l": prof.length, "d": prof.d, "meta": prof.meta,
                             "rho_max_formula": figures.rho_max(prof.length, prof.d) if prof.d > 0 else 0.0,
                             "rho_emp_mid": prof.rho_emp[i], "tau_mid": prof.tau[i],
                             "missing": int(prof.missing.sum()), "samples": len(prof.tau)})
    return EXIT_OK


def run_straight(cfg, c, out: Path) -> int:
    g = c["g"]
    m = g.chart_dim
    P0, P1 = _point(cfg, "P0", m, required=True), _point(cfg, "P1", m, required=True)
    samples = _get(cfg, "samples", int, 2000)
    if samples < 1:
        raise ConfigError("'samples' must be >= 1")
    try:
        ss = figures.straight_set(P0, P1, g, _box(cfg, "box", m), samples, c["seed"],
                                  tol=c["tol"].get("tol", figures.TOL),
                                  tol_pca=c["tol"].get("tol_pca", figures.TOL_PCA), workers=c["workers"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    buf = [",".join(f"x{i}" for i in range(m)) + ",residual\n"]
    for p, r in zip(ss.points, ss.relation_residuals):
        buf.append(",".join("%.17g" % x for x in p) + ",%.17g\n" % r)
    (out / "straight.csv").write_text("".join(buf))
    _emit(out, "straight.json", {"P0": P0, "P1": P1, "dimension": ss.dimension, "local_dims": ss.local_dims,
                                 "accepted": ss.accepted, "attempted": ss.attempted, "seed": c["seed"]})
    return EXIT_OK if ss.dimension is not None else EXIT_BUDGET


def run_ball(cfg, c, out: Path) -> int:
    g = c["g"]
    R = _get(cfg, "radius", float, 1.0)
    samples = _get(cfg, "samples", int, 10_000)
    starts = _get(cfg, "starts", int, 8)
    if R <= 0 or samples < 1 or starts < 1:
        raise ConfigError("'radius', 'samples' and 'starts' must be positive")
    try:
        rep = figures.ball_coverage(R, g, samples, c["tol"].get("tol_seg", 1e-9), c["seed"], starts=starts,
                                    with_center=_get(cfg, "center", bool, True), workers=c["workers"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(out, "ball.json", rep.to_json())
    return EXIT_OK


def run_chain(cfg, c, out: Path) -> int:
    g = c["g"]
    if g.name not in ("minkowski", "deformed_minkowski"):
        raise ConfigError("chains need a minkowski or deformed_minkowski geometry")
    try:
        cc = chains.ChainConfig(d=float(g.params.get("d", 0.0)), mu=_get(cfg, "mu", float, 1.0),
                                N=_get(cfg, "N", int, 1000), seed=c["seed"], m=g.chart_dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ensemble = _get(cfg, "ensemble", int, 0)
    if ensemble < 0:
        raise ConfigError("'ensemble' must be >= 0")
    ch = chains.simulate_chain(cc)
    (out / "chain.csv").write_text(ch.to_csv())
    stats = dict(ch.stats)
    if ensemble:
        stats["ensemble"] = chains.simulate_ensemble(cc, ensemble, c["workers"])
    _emit(out, "chain_stats.json", stats)
    if not ch.complete:
        log.warning("chain stopped after %d links", ch.links)
        return EXIT_BUDGET
    return EXIT_OK


RUNNERS = {"certify": run_certify, "solve": run_solve, "tube": run_tube, "straight": run_straight,
           "ball": run_ball, "chain": run_chain}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sigmageom", description="World-function geometry experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file, or - for stdin")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=logging.WARNING - 10 * min(args.verbose, 2))
    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text()
        cfg = json.loads(text)
        common = parse_config(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return RUNNERS[args.command](cfg, common, out)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"sigmageom: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
