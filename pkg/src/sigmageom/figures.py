"""Figures built from sigma: segments and their tubes, straights, balls.

A segment [P0P1] is the set of R with
``sqrt(2 s(P0,R)) + sqrt(2 s(P1,R)) = sqrt(2 s(P0,P1))``. In Euclidean
geometry that is the chord; in deformed geometries it is a hollow tube
around the chord, whose radius ``tube_profile`` measures.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import io
from typing import Optional

import numpy as np

from . import algebra
from .algebra import TOL
from .newton import gauss_newton
from .sampling import Box, stream
from .solver import dedup
from .worldfn import SegVector, WorldFunction, as_point, sigma_grad

BISECT_ITERS = 100
TOL_PCA = 1e-2


def _sqrt2(s):
    if np.any(s < 0):
        raise ValueError("segment undefined: negative sigma operand (spacelike separation)")
    return np.sqrt(2.0 * s)


def membership_signed(P0, P1, R, g: WorldFunction):
    """``sqrt(2s(P0,R)) + sqrt(2s(P1,R)) - sqrt(2s(P0,P1))``; zero on the segment."""
    return _sqrt2(g(P0, R)) + _sqrt2(g(P1, R)) - _sqrt2(g(P0, P1))


def segment_membership(P0, P1, R, g: WorldFunction, tol_seg: Optional[float] = None):
    """Return ``(member, residual)`` for a point R and the segment [P0P1].

    ``tol_seg`` defaults to ``1e-9 * l``.
    """
    m = g.chart_dim
    P0, P1, R = (as_point(p, m) for p in (P0, P1, R))
    if tol_seg is None:
        tol_seg = 1e-9 * float(_sqrt2(g(P0, P1)))
    res = np.abs(membership_signed(P0, P1, R, g))
    return res <= tol_seg, res


def rho_formula(tau, l: float, d: float):
    """Closed-form tube radius; NaN outside ``2d < tau < l - 2d``."""
    tau = np.asarray(tau, dtype=float)
    rho2 = 0.25 * d / (l - d) ** 2 * (2 * tau - d) * (2 * l - 3 * d) * (2 * l - 2 * tau - d)
    ok = (tau > 2 * d) & (tau < l - 2 * d)
    return np.where(ok, np.sqrt(np.where(ok, rho2, 0.0)), np.nan)


def rho_max(l: float, d: float) -> float:
    return float(np.sqrt(l * d / 2.0))


def _complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the chart directions perpendicular to ``u``."""
    m = u.size
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(m)]))
    return q[:, 1:m].T


def transverse_rays(u: np.ndarray, directions: int) -> np.ndarray:
    basis = _complement(u / np.linalg.norm(u))
    if basis.shape[0] == 0:
        raise ValueError("no transverse directions in a 1-dimensional chart")
    if basis.shape[0] == 1:
        return np.array([basis[0], -basis[0]])[: max(1, directions)]
    ang = 2 * np.pi * np.arange(directions) / directions
    return np.cos(ang)[:, None] * basis[0] + np.sin(ang)[:, None] * basis[1]


@dataclass
class TubeProfile:
    P0: np.ndarray
    P1: np.ndarray
    length: float
    tau: np.ndarray
    rho_emp: np.ndarray  # NaN where no crossing was found
    rho_formula: np.ndarray
    d: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.rho_emp)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("tau,rho_emp,rho_formula\n")
        for t, a, b in zip(self.tau, self.rho_emp, self.rho_formula):
            buf.write(f"{t:.17g},{a:.17g},{b:.17g}\n")
        return buf.getvalue()


def tube_profile(P0, P1, g: WorldFunction, taus=50, directions: int = 8, tol_seg: Optional[float] = None,
                 probe_max: Optional[float] = None) -> TubeProfile:
    """Measure the tube radius along [P0P1] by bisection on transverse rays.

    ``taus`` is a count (equispaced, interior of (0, l)) or explicit values.
    The parameter tau maps to the chord point at chart fraction tau / l.
    """
    m = g.chart_dim
    P0, P1 = as_point(P0, m), as_point(P1, m)
    l = float(_sqrt2(g(P0, P1)))
    if not l > 0:
        raise ValueError("segment has zero length")
    d = float(g.params.get("d", 0.0))
    if tol_seg is None:
        tol_seg = 1e-9 * l
    if np.isscalar(taus):
        n = int(taus)
        tau = l * (np.arange(1, n + 1) / (n + 1))
    else:
        tau = np.asarray(taus, dtype=float)
        if np.any((tau <= 0) | (tau >= l)):
            raise ValueError("tau samples must lie strictly inside (0, l)")
    if probe_max is None:
        probe_max = 10.0 * rho_max(l, d) if d > 0 else 0.1 * l
    chord = P1 - P0
    rays = transverse_rays(chord, directions)
    centers = P0 + (tau / l)[:, None] * chord  # (T, m)

    def signed(r):  # r: (T, D)
        R = centers[:, None, :] + r[..., None] * rays[None, :, :]
        return membership_signed(P0, P1, R, g)

    T, D = len(tau), len(rays)
    s0 = signed(np.zeros((T, D)))
    s_hi = signed(np.full((T, D), probe_max))
    on_axis = np.abs(s0) <= tol_seg
    bracket = (s0 < -tol_seg) & (s_hi > 0)
    lo = np.zeros((T, D))
    hi = np.full((T, D), probe_max)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        pos = signed(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    crossing = np.where(on_axis, 0.0, np.where(bracket, 0.5 * (lo + hi), np.nan))
    with np.errstate(invalid="ignore"):
        found = ~np.isnan(crossing)
        rho = np.where(found.any(axis=1), np.nansum(np.where(found, crossing, 0.0), axis=1)
                       / np.maximum(found.sum(axis=1), 1), np.nan)
    return TubeProfile(P0, P1, l, tau, rho, rho_formula(tau, l, d), d,
                       {"directions": D, "probe_max": float(probe_max), "tol_seg": float(tol_seg)})


@dataclass
class StraightSet:
    points: np.ndarray
    dimension: Optional[int]  # None when undetermined
    local_dims: list
    attempted: int
    relation_residuals: np.ndarray

    @property
    def accepted(self) -> int:
        return len(self.points)


def _collinear_system(P0, P1, g: WorldFunction):
    vv = 2.0 * float(g(P0, P1))
    c1 = float(g(P0, P1))
    scale = max(1.0, vv * vv)

    def fun(R):
        vr = c1 + g(P0, R) - g(P1, R)
        rr = 2.0 * g(P0, R)
        return ((vr * vr - vv * rr) / scale)[:, None]

    def jac(R):
        vr = c1 + g(P0, R) - g(P1, R)
        gvr = sigma_grad(g, P0, R) - sigma_grad(g, P1, R)
        grr = 2.0 * sigma_grad(g, P0, R)
        return ((2.0 * vr[:, None] * gvr - vv * grr) / scale)[:, None, :]

    return fun, jac


def _project(P0, P1, g, starts, box, tol, workers=1):
    fun, jac = _collinear_system(P0, P1, g)
    x, _ = gauss_newton(fun, starts, jac, workers=workers)
    v = SegVector(P0, P1)
    w = SegVector(np.broadcast_to(P0, x.shape), x)
    res = algebra.collinearity_residual(v, w, g)
    keep = (res < tol) & box.contains(x)
    return x[keep], res[keep]


def local_dimension(cloud: np.ndarray, tol_pca: float = TOL_PCA) -> int:
    c = cloud - cloud.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol_pca * s[0]))


def straight_set(P0, P1, g: WorldFunction, box: Optional[Box] = None, samples: int = 2000, seed: int = 0, *,
                 tol: float = TOL, neighborhoods: int = 40, cloud: int = 24, cloud_radius: float = 1e-3,
                 tol_pca: float = TOL_PCA, min_accepted: int = 50, workers: int = 1) -> StraightSet:
    """Sample the straight through P0 and P1: all R with P0R collinear to P0P1.

    Uniform box samples are projected onto the set by Gauss-Newton and kept
    only if the collinearity residual re-evaluates below ``tol``. The local
    dimension comes from principal components of small projected clouds
    (radius ``cloud_radius`` times the box diameter) around accepted points.
    """
    m = g.chart_dim
    P0, P1 = as_point(P0, m), as_point(P1, m)
    if np.array_equal(P0, P1):
        raise ValueError("straight needs P0 != P1")
    box = box or Box.around(np.vstack([P0, P1]), inflate=4.0)
    pts, res = _project(P0, P1, g, box.uniform(samples, seed, "straight"), box, tol, workers)
    if len(pts) < min_accepted:
        return StraightSet(pts, None, [], samples, res)
    rng = stream(seed, "straight-cloud")
    eps = cloud_radius * box.diameter
    dims = []
    for p in pts[:neighborhoods]:
        u = rng.normal(size=(cloud, m))
        u *= (rng.uniform(size=(cloud, 1)) ** (1.0 / m)) / np.linalg.norm(u, axis=1, keepdims=True)
        local, _ = _project(P0, P1, g, p + eps * u, box, tol)
        if len(local) > m + 1:
            dims.append(local_dimension(local, tol_pca))
    dim = int(np.median(dims)) if dims else None
    return StraightSet(pts, dim, dims, samples, res)


@dataclass
class CoverageReport:
    radius: float
    covered_fraction: float
    overlap_fraction: float
    samples: int
    tol_seg: float
    misses: int
    overlaps: int
    mc_error: float  # 3-sigma binomial half width
    seed: int
    center_min_residual: Optional[float] = None

    def to_json(self) -> dict:
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in self.__dict__.items()}


def _family_signed(c, p, R_ball, g: WorldFunction):
    """Signed membership of points ``p`` in the chords T(c) of the ball.

    T(c) runs along the last chart axis from (c, -h) to (c, h),
    h = sqrt(R^2 - |c|^2).
    """
    h = np.sqrt(np.maximum(R_ball * R_ball - np.sum(c * c, axis=-1), 0.0))
    A = np.concatenate([c, -h[..., None]], axis=-1)
    B = np.concatenate([c, h[..., None]], axis=-1)
    return membership_signed(A, B, p, g)


def _family_search(points, R_ball, g, starts_per_point, seed, tol_seg, workers=1):
    """Multi-start zero search of the membership residual over the family.

    Returns per-row parameters, residuals and the owning point index.
    """
    m = g.chart_dim
    k = m - 1
    n = len(points)
    rng = stream(seed, "ball-starts")
    disk = rng.normal(size=(max(starts_per_point - 1, 0), k))
    disk *= (R_ball * rng.uniform(size=(len(disk), 1)) ** (1.0 / k)) / np.linalg.norm(disk, axis=1, keepdims=True)
    own = points[:, :k][:, None, :]
    c0 = np.concatenate([own, np.broadcast_to(disk, (n, len(disk), k))], axis=1).reshape(-1, k)
    owner = np.repeat(np.arange(n), starts_per_point)
    data = points[owner]

    def fun(c, p):
        return _family_signed(c, p, R_ball, g)[:, None]

    c, r = gauss_newton(fun, c0, data=data, workers=workers)
    res = np.abs(r[:, 0])
    inside = np.sum(c * c, axis=1) <= R_ball * R_ball * (1 + 1e-12)
    return c, np.where(inside, res, np.inf), owner


def ball_coverage(R_ball: float, g: WorldFunction, samples: int = 10_000, tol_seg: float = 1e-9, seed: int = 0, *,
                  starts: int = 8, with_center: bool = True, workers: int = 1) -> CoverageReport:
    """Monte Carlo test of the chord decomposition of a ball.

    A sampled point is covered when some chord T(c) has it within
    ``tol_seg`` of membership; distinct covering chords (deduplicated at
    ``1e-4 * R_ball``) beyond the first count as overlaps.
    """
    m = g.chart_dim
    if m < 2:
        raise ValueError("ball decomposition needs a chart of dimension >= 2")
    if not R_ball > 0:
        raise ValueError("ball radius must be positive")
    rng = stream(seed, "ball-points")
    u = rng.normal(size=(samples, m))
    pts = u / np.linalg.norm(u, axis=1, keepdims=True) * (R_ball * rng.uniform(size=(samples, 1)) ** (1.0 / m))
    c, res, owner = _family_search(pts, R_ball, g, starts, seed, tol_seg, workers)
    hit = res <= tol_seg
    covered = np.zeros(samples, dtype=bool)
    extra = np.zeros(samples, dtype=int)
    radius = 1e-4 * R_ball
    for i in np.unique(owner[hit]):
        rows = np.flatnonzero(hit & (owner == i))
        covered[i] = True
        extra[i] = len(dedup(c[rows], radius)) - 1
    frac = covered.mean()
    n_cov = int(covered.sum())
    report = CoverageReport(
        radius=float(R_ball),
        covered_fraction=float(frac),
        overlap_fraction=float(extra[covered].sum() / n_cov) if n_cov else 0.0,
        samples=int(samples),
        tol_seg=float(tol_seg),
        misses=int(samples - n_cov),
        overlaps=int(np.sum(extra > 0)),
        mc_error=float(3.0 * np.sqrt(frac * (1 - frac) / samples)),
        seed=int(seed),
    )
    if with_center:
        report.center_min_residual = center_min_residual(R_ball, g, seed=seed)
    return report


def center_min_residual(R_ball: float, g: WorldFunction, starts: int = 256, seed: int = 0) -> float:
    """Smallest membership residual of the ball center over the whole chord family."""
    center = np.zeros((1, g.chart_dim))
    _, res, _ = _family_search(center, R_ball, g, starts, seed, 0.0)
    return float(res.min())
