"""Random world chains in deformed space-time.

A chain is a sequence of points whose adjacent links are equal vectors in
the squared form: ``(v.w) = |v|^2`` and ``|w|^2 = |v|^2`` with
``v = P_k P_k+1`` and ``w = P_k+1 P_k+2``. In Minkowski geometry the next
point is unique (the chain is straight); in deformed geometry it is drawn
from a continuum and the chain wobbles.

Sampling measure: a unit direction ``n`` is drawn uniformly on the chart
sphere orthogonal to the previous link, and the next offset is sought on the
half-plane ``u = a*v + s*n`` with ``s >= 0``.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import algebra
from .sampling import map_blocks, stream
from .solver import TOL_SOLVE
from .worldfn import SegVector, WorldFunction, make_deformed_minkowski, make_minkowski

MAX_RETRIES = 32
NEWTON_ITERS = 30
BETA_KMIN = 10


class ChainExtensionError(RuntimeError):
    pass


@dataclass
class ChainConfig:
    d: float
    mu: float = 1.0
    N: int = 1000
    seed: int = 0
    m: int = 4
    origin: Optional[np.ndarray] = None
    direction: Optional[np.ndarray] = None  # chart direction of the first link, timelike

    def __post_init__(self):
        if not self.d >= 0:
            raise ValueError("d must be >= 0")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError("N must be a nonnegative integer")
        if self.m < 2:
            raise ValueError("chains need m >= 2")
        if self.mu ** 2 <= 2 * self.d:
            raise ValueError("mu^2 must exceed 2d for a timelike link")

    def geometry(self) -> WorldFunction:
        return make_deformed_minkowski(self.m, self.d) if self.d > 0 else make_minkowski(self.m)

    def initial_link(self):
        g = self.geometry()
        P0 = np.zeros(self.m) if self.origin is None else np.asarray(self.origin, dtype=float)
        e = np.eye(self.m)[0] if self.direction is None else np.asarray(self.direction, dtype=float)
        q = _flat_sq(g, e)
        if q <= 0:
            raise ValueError("initial link direction is not timelike")
        # 2 sigma_d = |x|_M^2 + 2d on timelike x
        return P0, P0 + e * np.sqrt((self.mu ** 2 - 2.0 * self.d) / q)


@dataclass
class WorldChain:
    points: np.ndarray  # (K+1, m)
    wobble: np.ndarray  # (K-1,) one angle per joint
    link_norms: np.ndarray  # 2 sigma per link
    joint_residuals: np.ndarray  # (K-1, 2)
    complete: bool = True
    stats: dict = field(default_factory=dict)

    @property
    def links(self) -> int:
        return self.points.shape[0] - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        m = self.points.shape[1]
        buf.write(",".join(["k"] + [f"x{i}" for i in range(m)] + ["wobble"]) + "\n")
        wob = np.full(self.points.shape[0], np.nan)
        wob[2:] = self.wobble  # angle at the joint ending in point k
        for k, (p, w) in enumerate(zip(self.points, wob)):
            buf.write(",".join([str(k)] + ["%.17g" % c for c in p] + ["%.17g" % w]) + "\n")
        return buf.getvalue()


def _sphere_perp(rng: np.random.Generator, v: np.ndarray) -> np.ndarray:
    vh = v / np.linalg.norm(v)
    while True:
        z = rng.standard_normal(v.shape[0])
        z -= (z @ vh) * vh
        nz = np.linalg.norm(z)
        if nz > 1e-12:
            return z / nz


def _joint_residuals(P0, P1, X, g: WorldFunction):
    # raw squared-form residuals, normalized by |v|^2
    v, w = SegVector(P0, P1), SegVector(P1, X)
    vv = algebra.norm_squared(v, g)
    vw = algebra.scalar_product(v, w, g)
    ww = algebra.norm_squared(w, g)
    return np.array([vw - vv, ww - vv]) / max(1.0, abs(float(vv)))


def _flat_sq(g: WorldFunction, x: np.ndarray) -> float:
    """Undeformed squared norm 2 sigma_M(0, x), removing the additive shift sgn * d."""
    s = float(g(np.zeros_like(x), x))
    return 2.0 * (s - np.sign(s) * float(g.params.get("d", 0.0)))


def _guess(g: WorldFunction, v: np.ndarray, n: np.ndarray):
    """Closed-form (a, s) for Minkowski plus a timelike shift d.

    With u = a v + s n the equations read v.u = T^2 + 3d and u.u = T^2,
    T^2 = |v|_M^2, which eliminate a and leave a quadratic in s.
    """
    d = float(g.params.get("d", 0.0))
    T2 = _flat_sq(g, v)
    q = _flat_sq(g, n)
    c = 0.5 * (_flat_sq(g, v + n) - T2 - q)
    A = T2 + 3.0 * d
    den = c * c - q * T2
    s2 = (A * A - T2 * T2) / den if den > 0 else 0.0
    s = np.sqrt(max(s2, 0.0))
    return (A - s * c) / T2, s


def extend_chain(Pk, Pk1, g: WorldFunction, rng: np.random.Generator, *, tol: float = TOL_SOLVE,
                 retries: int = MAX_RETRIES):
    """Draw P_k+2 with ``P_k+1 P_k+2`` equal to ``P_k P_k+1``; returns (point, residuals)."""
    Pk = np.asarray(Pk, dtype=float)
    Pk1 = np.asarray(Pk1, dtype=float)
    v = Pk1 - Pk
    if not float(2.0 * g(Pk, Pk1)) > 0:
        raise ValueError("link is not timelike")
    for _ in range(retries):
        n = _sphere_perp(rng, v)
        a, s = _guess(g, v, n)
        x = np.array([a, s])

        def res(x):
            return _joint_residuals(Pk, Pk1, Pk1 + x[0] * v + x[1] * n, g)

        r = res(x)
        # Newton polish on (a, s) against g itself
        for _ in range(NEWTON_ITERS):
            if np.max(np.abs(r)) < 1e-3 * tol:
                break
            h = 1e-7 * np.maximum(1.0, np.abs(x))
            J = np.column_stack([(res(x + h[i] * np.eye(2)[i]) - res(x - h[i] * np.eye(2)[i])) / (2 * h[i])
                                 for i in range(2)])
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
            t = 1.0
            while t > 1e-6:
                rn = res(x + t * step)
                if np.sum(rn * rn) < np.sum(r * r):
                    x, r = x + t * step, rn
                    break
                t *= 0.5
            else:
                break
        X = Pk1 + x[0] * v + x[1] * n
        if x[1] >= 0 and np.max(np.abs(r)) < tol and X[0] > Pk1[0]:
            return X, r
    raise ChainExtensionError(f"no forward solution after {retries} sampled directions")


def wobble_angle(link1: SegVector, link2: SegVector, g: Optional[WorldFunction] = None) -> float:
    """Chart angle of link2 away from link1's direction: arctan(|transverse| / |longitudinal|)."""
    if g is not None:
        for lk in (link1, link2):
            if algebra.norm(lk, g).causal_type != "positive":
                raise ValueError("wobble angle needs timelike links")
    a, b = link1.offset(), link2.offset()
    ah = a / np.linalg.norm(a)
    lon = float(b @ ah)
    tr = float(np.linalg.norm(b - lon * ah))
    return float(np.arctan2(tr, abs(lon)))


def _wobbles(points: np.ndarray) -> np.ndarray:
    L = np.diff(points, axis=0)
    a, b = L[:-1], L[1:]
    ah = a / np.linalg.norm(a, axis=1, keepdims=True)
    lon = np.sum(b * ah, axis=1)
    tr = np.linalg.norm(b - lon[:, None] * ah, axis=1)
    return np.arctan2(tr, np.abs(lon))


def line_distance(points: np.ndarray) -> np.ndarray:
    """Chart distance of every point from the line through the first link."""
    P0 = points[0]
    u = points[1] - P0
    u = u / np.linalg.norm(u)
    rel = points - P0
    return np.linalg.norm(rel - np.outer(rel @ u, u), axis=1)


def fit_beta(D: np.ndarray, kmin: int = BETA_KMIN) -> float:
    """Least-squares slope of log D(k) against log k over k >= kmin with D > 0."""
    k = np.arange(D.shape[0])
    ok = (k >= kmin) & (D > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(k[ok]), np.log(D[ok]), 1)[0])


def _validate(points: np.ndarray, g: WorldFunction):
    P0, P1, P2 = points[:-2], points[1:-1], points[2:]
    v, w = SegVector(P0, P1), SegVector(P1, P2)
    vv = algebra.norm_squared(v, g)
    vw = algebra.scalar_product(v, w, g)
    ww = algebra.norm_squared(w, g)
    scale = np.maximum(1.0, np.abs(vv))
    return np.column_stack([(vw - vv) / scale, (ww - vv) / scale])


def simulate_chain(cfg: ChainConfig, rng: Optional[np.random.Generator] = None) -> WorldChain:
    g = cfg.geometry()
    rng = rng if rng is not None else stream(cfg.seed, "chain", 0)
    P0, P1 = cfg.initial_link()
    pts = np.empty((cfg.N + 1, cfg.m))
    pts[0] = P0
    complete = True
    K = cfg.N
    if cfg.N >= 1:
        pts[1] = P1
    for k in range(2, cfg.N + 1):
        try:
            pts[k], _ = extend_chain(pts[k - 2], pts[k - 1], g, rng)
        except ChainExtensionError:
            complete, K = False, k - 1
            break
    pts = pts[: K + 1]
    norms = 2.0 * g(pts[:-1], pts[1:]) if K >= 1 else np.empty(0)
    if K >= 2:
        wob = _wobbles(pts)
        res = _validate(pts, g)
    else:
        wob, res = np.empty(0), np.empty((0, 2))
    D = line_distance(pts) if K >= 1 else np.zeros(1)
    theta = np.sqrt(cfg.d / cfg.mu ** 2)
    stats = {
        "d": cfg.d, "mu": cfg.mu, "N": int(cfg.N), "seed": int(cfg.seed), "links": int(K),
        "complete": complete,
        "rms_wobble": float(np.sqrt(np.mean(wob ** 2))) if wob.size else 0.0,
        "median_wobble": float(np.median(wob)) if wob.size else 0.0,
        "max_wobble": float(wob.max()) if wob.size else 0.0,
        "characteristic_angle": float(theta),
        "beta": fit_beta(D),
        "max_joint_residual": float(np.abs(res).max()) if res.size else 0.0,
        "max_link_norm_deviation": float(np.abs(norms / cfg.mu ** 2 - 1.0).max()) if norms.size else 0.0,
        "final_distance": float(D[-1]),
    }
    return WorldChain(pts, wob, norms, res, complete, stats)


def simulate_ensemble(cfg: ChainConfig, chains: int, workers: int = 1) -> dict:
    """Independent chains, chain i on stream (seed, "chain", i); stats aggregated in chain order."""

    def run(a, b):
        return [simulate_chain(cfg, stream(cfg.seed, "chain", i)).stats for i in range(a, b)]

    stats = [s for part in map_blocks(run, chains, workers, 1) for s in part]
    keys = ("rms_wobble", "median_wobble", "beta", "max_joint_residual", "max_link_norm_deviation")
    agg = {k: float(np.median([s[k] for s in stats])) for k in keys}
    return {"chains": int(chains), "median_over_chains": agg, "per_chain": stats}


def stats_json(chain: WorldChain) -> str:
    return json.dumps(chain.stats, sort_keys=True, indent=2)
