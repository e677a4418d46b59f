"""Equivalence equations over chart coordinates and their solution sets.

Equal-vector transport, vector sum and scalar multiplication are all
reduced to two squared-form equations in the unknown end point. These are
solved by multi-start Gauss-Newton, the converged starts are clustered, and
the set is classified as empty, unique, discrete or a continuum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np

from . import algebra
from .algebra import Frame, TOL, TOL_RANK
from .newton import gauss_newton
from .sampling import Box, stream
from .worldfn import SegVector, WorldFunction, as_point, sigma_grad

log = logging.getLogger(__name__)

TOL_SOLVE = 1e-8
STARTS = 512
DEDUP_FRACTION = 1e-4
CONFIRM_FRACTION = 1e-2
CONFIRM_REPS = 6
CONFIRM_STARTS = 8


@dataclass
class SolutionSet:
    solutions: np.ndarray
    classification: str  # empty | unique | discrete | continuum
    residuals: np.ndarray
    est_dim: Optional[int] = None
    branches: Optional[list] = None
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.solutions)

    @property
    def tag(self) -> str:
        if self.classification == "discrete":
            return f"discrete({self.count})"
        if self.classification == "continuum":
            return f"continuum({self.est_dim})"
        return self.classification

    def to_json(self) -> dict:
        out = {
            "classification": self.tag,
            "solutions": self.solutions.tolist(),
            "residuals": self.residuals.tolist(),
            "meta": self.meta,
        }
        if self.branches is not None:
            out["branches"] = list(self.branches)
        return out


def dedup(points: np.ndarray, radius: float, order=None) -> np.ndarray:
    """Greedy clustering; returns indices of representatives.

    ``order`` sets the visiting order (best candidates first).
    """
    idx = np.arange(len(points)) if order is None else np.asarray(order)
    reps: list[int] = []
    for i in idx:
        if reps:
            dist = np.linalg.norm(points[reps] - points[i], axis=1)
            if np.any(dist <= radius):
                continue
        reps.append(int(i))
    return np.array(reps, dtype=int)


def _lexsort(points: np.ndarray) -> np.ndarray:
    return np.lexsort(points.T[::-1]) if len(points) else np.arange(0)


def _rank(J: np.ndarray, tol_rank: float) -> int:
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol_rank * s[0]))


def solve_system(
    fun,
    jac,
    box: Box,
    *,
    starts: int = STARTS,
    seed: int = 0,
    tol_solve: float = TOL_SOLVE,
    dedup_radius: Optional[float] = None,
    tol_rank: float = TOL_RANK,
    workers: int = 1,
    extra_starts=None,
) -> SolutionSet:
    """Find all solutions of ``fun(x) = 0`` inside ``box`` and classify them.

    ``fun`` must return residuals already normalized to the scale on which
    ``tol_solve`` applies.
    """
    if starts < 1:
        raise ValueError("need at least one start")
    m = box.dim
    radius = DEDUP_FRACTION * box.diameter if dedup_radius is None else dedup_radius
    x0 = box.halton(starts, seed)
    if extra_starts is not None:
        x0 = np.vstack([np.atleast_2d(extra_starts), x0])
    x, r = gauss_newton(fun, x0, jac, workers=workers)
    res = np.max(np.abs(r), axis=1)
    ok = (res < tol_solve) & box.contains(x, slack=1e-9)
    meta = {"seed": int(seed), "starts": int(len(x0)), "converged": int(ok.sum()), "box": box.to_json()}
    if not ok.any():
        meta["warning"] = "no start converged inside the box"
        return SolutionSet(np.empty((0, m)), "empty", np.empty(0), meta=meta)

    cand = x[ok]
    reps = cand[dedup(cand, radius, order=np.argsort(res[ok], kind="stable"))]
    reps = reps[_lexsort(reps)]
    # fresh evaluation, independent of the solver's bookkeeping
    fresh = np.max(np.abs(fun(reps)), axis=1)

    J = jac(reps) if jac is not None else None
    if J is None:
        from .newton import fd_jacobian

        J = fd_jacobian(fun, reps)
    nullity = np.array([m - _rank(Ji, tol_rank) for Ji in J])

    # continuum confirmation: re-solve from small perturbations of a few
    # representatives and see whether distinct on-manifold points come back
    rng = stream(seed, "confirm")
    rc = CONFIRM_FRACTION * box.diameter
    check = np.flatnonzero(nullity >= 1)[:CONFIRM_REPS]
    confirmed = []
    for i in check:
        u = rng.normal(size=(CONFIRM_STARTS, m))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        xs, rs = gauss_newton(fun, reps[i] + rc * u, jac)
        good = (np.max(np.abs(rs), axis=1) < tol_solve) & box.contains(xs, slack=1e-9)
        dist = np.linalg.norm(xs[good] - reps[i], axis=1)
        if np.any((dist > radius) & (dist < 4.0 * rc)):
            confirmed.append(i)
    meta["nullity"] = nullity.tolist()
    meta["dedup_radius"] = float(radius)

    if confirmed:
        est = int(np.median(nullity[confirmed]))
        return SolutionSet(reps, "continuum", fresh, est_dim=est, meta=meta)
    kind = "unique" if len(reps) == 1 else "discrete"
    return SolutionSet(reps, kind, fresh, meta=meta)


def _default_box(box, *points) -> Box:
    return box if box is not None else Box.around(np.vstack(points))


def _equal_system(P0, P1, Q0, g: WorldFunction, target: float = 1.0, dot_target: float = 1.0):
    """Residuals for w = <Q0, X>: (v.w) = dot_target*|v|^2, |w|^2 = target*|v|^2."""
    vv = 2.0 * float(g(P0, P1))
    scale = max(1.0, abs(vv), abs(target * vv))
    const = float(g(P1, Q0) - g(P0, Q0))

    def fun(X):
        r1 = g(P0, X) - g(P1, X) + const - dot_target * vv
        r2 = 2.0 * g(Q0, X) - target * vv
        return np.stack([r1, r2], axis=-1) / scale

    def jac(X):
        j1 = sigma_grad(g, P0, X) - sigma_grad(g, P1, X)
        j2 = 2.0 * sigma_grad(g, Q0, X)
        return np.stack([j1, j2], axis=-2) / scale

    return fun, jac


def solve_equal(P0, P1, Q0, g: WorldFunction, box: Optional[Box] = None, *, starts: int = STARTS,
                seed: int = 0, tol_solve: float = TOL_SOLVE, dedup_radius=None, workers: int = 1) -> SolutionSet:
    """All Q1 with <Q0,Q1> equal to <P0,P1> (squared form)."""
    m = g.chart_dim
    P0, P1, Q0 = (as_point(p, m) for p in (P0, P1, Q0))
    box = _default_box(box, P0, P1, Q0)
    fun, jac = _equal_system(P0, P1, Q0, g)
    return solve_system(fun, jac, box, starts=starts, seed=seed, tol_solve=tol_solve,
                        dedup_radius=dedup_radius, workers=workers)


def solve_scale(P0, P1, alpha: float, S0, g: WorldFunction, box: Optional[Box] = None, *, starts: int = STARTS,
                seed: int = 0, tol_solve: float = TOL_SOLVE, dedup_radius=None, workers: int = 1) -> SolutionSet:
    """All S1 with <S0,S1> = alpha * <P0,P1>.

    Squared form: (S0S1.P0P1) = alpha*|P0P1|^2 and |S0S1|^2 = alpha^2*|P0P1|^2.
    """
    m = g.chart_dim
    P0, P1, S0 = (as_point(p, m) for p in (P0, P1, S0))
    alpha = float(alpha)
    if alpha == 0.0:
        meta = {"seed": int(seed), "starts": 0, "note": "alpha = 0 gives S1 = S0"}
        return SolutionSet(S0[None, :].copy(), "unique", np.zeros(1), meta=meta)
    if box is None:
        box = Box.around(np.vstack([P0, P1, S0, S0 + alpha * (P1 - P0)]))
    fun, jac = _equal_system(P0, P1, S0, g, target=alpha * alpha, dot_target=alpha)
    return solve_system(fun, jac, box, starts=starts, seed=seed, tol_solve=tol_solve,
                        dedup_radius=dedup_radius, workers=workers)


MAX_BRANCHES = 16


def solve_sum(v: SegVector, w: SegVector, S0, g: WorldFunction, box: Optional[Box] = None, *, starts: int = STARTS,
              seed: int = 0, tol_solve: float = TOL_SOLVE, dedup_radius=None, workers: int = 1):
    """Sum of ``v`` and ``w`` attached at ``S0``: returns (R set, S1 set).

    R solves S0R = v; for each R branch, S1 solves RS1 = w. The S1 set is
    the union over branches, with ``branches`` giving each solution's R index.
    """
    m = g.chart_dim
    S0 = as_point(S0, m)
    if box is None:
        box = Box.around(np.vstack([v.origin, v.end, w.origin, w.end, S0,
                                    S0 + v.offset(), S0 + v.offset() + w.offset()]))
    kw = dict(starts=starts, seed=seed, tol_solve=tol_solve, dedup_radius=dedup_radius, workers=workers)
    R = solve_equal(v.origin, v.end, S0, g, box, **kw)
    sols, res, tags, kinds, dims = [], [], [], [], []
    for b, Rb in enumerate(R.solutions[:MAX_BRANCHES]):
        Sb = solve_equal(w.origin, w.end, Rb, g, box, **kw)
        sols.append(Sb.solutions)
        res.append(Sb.residuals)
        tags += [b] * Sb.count
        kinds.append(Sb.classification)
        if Sb.est_dim is not None:
            dims.append(Sb.est_dim)
    meta = {"seed": int(seed), "starts": int(starts), "box": box.to_json(), "r_branches": int(R.count),
            "branch_classifications": kinds}
    if R.count > MAX_BRANCHES:
        meta["truncated_branches"] = int(R.count - MAX_BRANCHES)
    if not sols or sum(len(s) for s in sols) == 0:
        return R, SolutionSet(np.empty((0, m)), "empty", np.empty(0), branches=[], meta=meta)
    S1 = np.vstack(sols)
    resid = np.concatenate(res)
    if R.classification == "continuum" or "continuum" in kinds:
        dims += [R.est_dim] if R.est_dim is not None else []
        kind, est = "continuum", int(np.median(dims)) if dims else None
    else:
        kind, est = ("unique" if len(S1) == 1 else "discrete"), None
    return R, SolutionSet(S1, kind, resid, est_dim=est, branches=tags, meta=meta)


def origin_independence_check(v: SegVector, w: SegVector, S0, S0p, g: WorldFunction, box: Optional[Box] = None,
                              *, tol: float = 1e-6, **kw) -> dict:
    """Compare the sums attached at ``S0`` and at ``S0p``.

    Returns ``{"consistent": bool, "matrix": [[bool]]}`` where entry
    ``[i][j]`` says whether result branch i from S0 equals branch j from S0p.
    ``tol`` is looser than the predicate default because both sides carry
    solver error.
    """
    m = g.chart_dim
    S0, S0p = as_point(S0, m), as_point(S0p, m)
    if box is None:
        pts = [v.origin, v.end, w.origin, w.end]
        for s in (S0, S0p):
            pts += [s, s + v.offset(), s + v.offset() + w.offset()]
        box = Box.around(np.vstack(pts))
    _, A = solve_sum(v, w, S0, g, box, **kw)
    _, B = solve_sum(v, w, S0p, g, box, **kw)
    mat = [[bool(algebra.is_equal(SegVector(S0, a), SegVector(S0p, b), g, tol)) for b in B.solutions]
           for a in A.solutions]
    consistent = bool(A.count and B.count and all(all(row) for row in mat))
    return {
        "consistent": consistent,
        "matrix": mat,
        "sum_at_S0": A.to_json(),
        "sum_at_S0p": B.to_json(),
    }


def equality_in_frame(v: SegVector, w: SegVector, frame: Frame, g: WorldFunction, tol: float = TOL,
                      tol_rank: float = TOL_RANK) -> bool:
    """Coordinate-style equality: (v.OS_k) = (w.OS_k) for every frame vector."""
    algebra._require_frame(frame, g, tol_rank)
    a = _frame_components(v, frame, g)
    b = _frame_components(w, frame, g)
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return bool(np.all(np.abs(a - b) <= tol * scale))


def _frame_components(v: SegVector, frame: Frame, g: WorldFunction) -> np.ndarray:
    n = frame.n
    basis_vec = SegVector(np.broadcast_to(frame.base, (n, g.chart_dim)), frame.basis)
    return algebra.scalar_product(SegVector(np.broadcast_to(v.origin, (n, g.chart_dim)),
                                            np.broadcast_to(v.end, (n, g.chart_dim))), basis_vec, g)


def compare_equality_definitions(v: SegVector, w: SegVector, frames, g: WorldFunction, tol: float = TOL) -> dict:
    """``is_equal`` next to the frame-based equality for each frame."""
    if not frames:
        raise ValueError("need at least one frame")
    per_frame = [equality_in_frame(v, w, f, g, tol) for f in frames]
    return {
        "is_equal": bool(algebra.is_equal(v, w, g, tol)),
        "frames": per_frame,
        "frames_consistent": len(set(per_frame)) == 1,
    }


def transport_in_frame(v: SegVector, Q0, frame: Frame, g: WorldFunction, *, seed: int = 0, starts: int = 16,
                       tol_solve: float = TOL_SOLVE) -> Optional[np.ndarray]:
    """An end point Q1 with (Q0Q1.OS_k) = (v.OS_k) for all k, or None."""
    m = g.chart_dim
    Q0 = as_point(Q0, m)
    target = _frame_components(v, frame, g)
    scale = max(1.0, float(np.max(np.abs(target))))

    def fun(X):
        comp = algebra.frame_products(X, frame, g) - algebra.frame_products(Q0, frame, g)
        return (comp - target) / scale

    def jac(X):
        return algebra.frame_products_grad(X, frame, g) / scale

    guess = Q0 + v.offset()
    starts_ = np.vstack([guess, guess + 0.1 * stream(seed, "transport").normal(size=(starts - 1, m))])
    x, r = gauss_newton(fun, starts_, jac)
    res = np.max(np.abs(r), axis=1)
    best = int(np.argmin(res))
    return x[best] if res[best] < tol_solve else None


def find_frame_dependence_witness(g: WorldFunction, *, seed: int = 0, tries: int = 200, scale: float = 1.0):
    """Search for v, w and two frames on which frame-based equality disagrees.

    ``w`` is built to be frame-equal to ``v`` in the first frame, then tested
    in the second. Returns a dict with the witness, or None.
    """
    m = g.chart_dim
    rng = stream(seed, "frame-witness")
    for t in range(tries):
        P0 = rng.uniform(-scale, scale, m)
        P1 = P0 + rng.uniform(-scale, scale, m)
        Q0 = rng.uniform(-scale, scale, m)
        frames = []
        for _ in range(2):
            O = rng.uniform(-scale, scale, m)
            f = Frame(O, O + np.eye(m) * scale + 0.2 * scale * rng.normal(size=(m, m)))
            frames.append(f)
        try:
            for f in frames:
                algebra._require_frame(f, g, TOL_RANK)
        except algebra.DegenerateFrameError:
            continue
        v = SegVector(P0, P1)
        Q1 = transport_in_frame(v, Q0, frames[0], g, seed=seed + t)
        if Q1 is None:
            continue
        w = SegVector(Q0, Q1)
        report = compare_equality_definitions(v, w, frames, g, tol=1e-6)
        if report["frames"][0] and not report["frames"][1]:
            report.update(v=[P0.tolist(), P1.tolist()], w=[Q0.tolist(), Q1.tolist()],
                          frame_list=[f.to_json() for f in frames], tries=t + 1)
            return report
    return None
