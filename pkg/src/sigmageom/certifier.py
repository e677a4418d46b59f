"""Sampled certification of the four Euclideaness conditions.

I   dimension: some (n+1)-tuple has a nonvanishing Gram determinant while
    every sampled (n+2)-tuple's determinant vanishes;
II  linearity: sigma is the quadratic form of the inverse metric in
    covariant frame coordinates;
III positivity: the frame metric has only positive eigenvalues;
IV  continuity: prescribed covariant coordinates pick out exactly one point.

Everything is checked on sampled points of a bounded domain, so a passing
report certifies consistency at the sampled scale only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import algebra
from .algebra import Frame, TOL_RANK
from .sampling import Box, map_blocks
from .solver import TOL_SOLVE, solve_system
from .worldfn import WorldFunction

TOL_EIG = 1e-9
TOL_LINEAR = 1e-9
SCOPE_NOTE = "conditions tested on sampled tuples of a bounded domain; consistency at the sampled scale only"


@dataclass
class Budget:
    samples: int = 10_000  # tuples per k for I, pairs for II
    targets: int = 16  # coordinate targets for IV
    starts: int = 64  # solver starts per target
    frames: int = 1  # >1 sweeps II/III over the best few frames


@dataclass
class ConditionResult:
    status: str  # pass | fail | undetermined
    residual: float
    witness: list
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        return {"pass": self.passed, "status": self.status, "residual": float(self.residual),
                "witness": self.witness, **self.details}


@dataclass
class DimensionResult:
    dim: Optional[int]
    frame: Optional[Frame]
    max_normalized: dict  # k -> max |normalized F_k| over samples
    frames: list = field(default_factory=list)  # best few tuples, for frame sweeps

    @property
    def determined(self) -> bool:
        return self.dim is not None


@dataclass
class CertificationReport:
    detected_dim: Union[int, str]
    conditions: dict
    seed: int
    samples: dict
    verdict: str
    geometry: dict = field(default_factory=dict)
    note: str = SCOPE_NOTE

    def to_json(self) -> dict:
        return {
            "detected_dim": self.detected_dim,
            "verdict": self.verdict,
            "conditions": {k: v.to_json() for k, v in self.conditions.items()},
            "seed": self.seed,
            "samples": self.samples,
            "geometry": self.geometry,
            "note": self.note,
        }


def _tuple_dets(g, domain: Box, k: int, samples: int, seed: int, workers: int):
    # uniform (k+1)-tuples, drawn per block so the stream layout is worker-independent
    flat = domain.uniform(samples * (k + 1), seed, f"dim-{k}")
    tuples = flat.reshape(samples, k + 1, domain.dim)

    def run(a, b):
        _, nrm = algebra.normalized_determinants(algebra.gram_entries(tuples[a:b], g))
        return np.abs(nrm)

    vals = np.concatenate(map_blocks(run, samples, workers))
    return tuples, np.where(np.isfinite(vals), vals, np.inf)


def detect_dimension(g: WorldFunction, domain: Box, samples: int = 10_000, seed: int = 0, *,
                     tol_rank: float = TOL_RANK, max_dim: Optional[int] = None, workers: int = 1,
                     keep_frames: int = 5) -> DimensionResult:
    """Largest n with a nonvanishing F_n whose F_{n+1} vanishes on every sample."""
    if samples < 10:
        raise ValueError("detect_dimension needs at least 10 samples per k")
    kmax = (g.chart_dim + 2) if max_dim is None else max_dim + 1
    maxima = {}
    best = {}
    for k in range(1, kmax + 1):
        tuples, vals = _tuple_dets(g, domain, k, samples, seed, workers)
        order = np.argsort(-vals, kind="stable")
        maxima[k] = float(vals[order[0]])
        best[k] = tuples[order[:keep_frames]]
        if maxima[k] <= tol_rank:
            n = k - 1
            if n == 0:
                return DimensionResult(0, None, maxima)
            frames = [Frame(t[0], t[1:]) for t in best[n]]
            return DimensionResult(n, frames[0], maxima, frames)
    # no k separates: fall back to a chart-dimensional frame so II-IV can still run
    fb = min(g.chart_dim, kmax)
    frames = [Frame(t[0], t[1:]) for t in best[fb]]
    return DimensionResult(None, frames[0], maxima, frames)


def check_linearity(g: WorldFunction, frame: Frame, pairs: int = 10_000, seed: int = 0, *,
                    domain: Optional[Box] = None, tol: float = TOL_LINEAR, workers: int = 1) -> ConditionResult:
    """max |sigma(P,Q) - 1/2 g^ik dx_i dx_k| / max(1, |sigma|) over sampled pairs."""
    domain = domain or Box.cube(g.chart_dim)
    _, Ginv = algebra.metric_tensors(frame, g)
    pts = domain.uniform(2 * pairs, seed, "linearity").reshape(pairs, 2, g.chart_dim)

    def run(a, b):
        P, Q = pts[a:b, 0], pts[a:b, 1]
        dx = algebra.frame_products(P, frame, g) - algebra.frame_products(Q, frame, g)
        quad = 0.5 * np.sum((dx @ Ginv) * dx, axis=-1)
        s = g(P, Q)
        return np.abs(s - quad) / np.maximum(1.0, np.abs(s))

    res = np.concatenate(map_blocks(run, pairs, workers))
    worst = int(np.argmax(res))
    status = "pass" if res[worst] <= tol else "fail"
    return ConditionResult(status, float(res[worst]), pts[worst].tolist(),
                           {"mean_residual": float(res.mean()), "pairs": int(pairs)})


def check_positivity(g: WorldFunction, frame: Frame, *, rel_tol: float = TOL_EIG) -> ConditionResult:
    """Eigenvalues of the frame metric g_ik; pass iff all exceed rel_tol * max|g_ik|."""
    G = algebra.gram_matrix(frame.base, frame.basis, g).entries
    ev = np.linalg.eigvalsh(G)
    tol = rel_tol * float(np.max(np.abs(G)))
    n_pos = int(np.sum(ev > tol))
    n_neg = int(np.sum(ev < -tol))
    status = "pass" if n_pos == len(ev) else "fail"
    # residual: the most negative eigenvalue relative to the scale (0 when all positive)
    resid = float(max(0.0, -ev.min()) / max(tol / rel_tol, 1e-300))
    return ConditionResult(status, resid, [frame.base.tolist()] + frame.basis.tolist(),
                           {"eigenvalues": ev.tolist(), "positive": n_pos, "negative": n_neg,
                            "zero": len(ev) - n_pos - n_neg, "tol_eig": tol})


def check_continuity(g: WorldFunction, frame: Frame, targets: int = 16, seed: int = 0, *,
                     domain: Optional[Box] = None, starts: int = 64, tol_solve: float = TOL_SOLVE,
                     workers: int = 1) -> ConditionResult:
    """Solve (P0Pi.P0P) = y_i for sampled targets y; pass iff each has one solution.

    Targets are covariant coordinates of sampled domain points, so each
    system is known to have at least one solution inside the search box.
    """
    domain = domain or Box.cube(g.chart_dim)
    search = Box.around(np.vstack([domain.lo, domain.hi]), inflate=3.0)
    T = domain.uniform(targets, seed, "continuity")
    counts, kinds, worst, witness = [], [], 0.0, []
    undetermined = 0
    for i, t in enumerate(T):
        y = algebra.frame_products(t, frame, g)
        scale = max(1.0, float(np.max(np.abs(y))))

        def fun(X, y=y, scale=scale):
            return (algebra.frame_products(X, frame, g) - y) / scale

        def jac(X, scale=scale):
            return algebra.frame_products_grad(X, frame, g) / scale

        sol = solve_system(fun, jac, search, starts=starts, seed=seed + i, tol_solve=tol_solve, workers=workers)
        if sol.classification == "empty":
            undetermined += 1
            kinds.append("empty")
            counts.append(0)
            continue
        kinds.append(sol.tag)
        counts.append(sol.count)
        if sol.classification != "unique" and not witness:
            witness = [t.tolist()] + sol.solutions[:4].tolist()
        worst = max(worst, float(sol.residuals.max()))
    if any(k != "unique" and k != "empty" for k in kinds):
        status = "fail"
    elif undetermined:
        status = "undetermined"
    else:
        status = "pass"
    return ConditionResult(status, worst, witness,
                           {"targets": int(targets), "solution_counts": counts, "classifications": kinds})


def certify(g: WorldFunction, domain: Optional[Box] = None, budget: Optional[Budget] = None, seed: int = 0, *,
            tol_rank: float = TOL_RANK, tol_eig: float = TOL_EIG, tol_solve: float = TOL_SOLVE,
            tol_linear: float = TOL_LINEAR, workers: int = 1) -> CertificationReport:
    """Run conditions I to IV in order with the frame found by condition I."""
    domain = domain or Box.cube(g.chart_dim)
    budget = budget or Budget()
    dim = detect_dimension(g, domain, budget.samples, seed, tol_rank=tol_rank, workers=workers,
                           keep_frames=max(1, budget.frames))
    cond = {}
    k_used = dim.dim if dim.determined else min(g.chart_dim, max(dim.max_normalized))
    witness = [] if dim.frame is None else [dim.frame.base.tolist()] + dim.frame.basis.tolist()
    cond["I"] = ConditionResult("pass" if dim.determined else "fail",
                                float(dim.max_normalized.get((dim.dim or k_used) + 1, np.inf)),
                                witness,
                                {"max_normalized_det": {str(k): v for k, v in dim.max_normalized.items()},
                                 "tol_rank": tol_rank})
    if dim.frame is None:
        for c in ("II", "III", "IV"):
            cond[c] = ConditionResult("undetermined", float("nan"), [], {"reason": "no frame (dimension 0)"})
    else:
        frames = dim.frames[: max(1, budget.frames)] or [dim.frame]
        lin = [check_linearity(g, f, budget.samples, seed, domain=domain, tol=tol_linear, workers=workers)
               for f in frames]
        pos = [check_positivity(g, f, rel_tol=tol_eig) for f in frames]
        cond["II"] = _worst(lin)
        cond["III"] = _worst(pos)
        cond["IV"] = check_continuity(g, dim.frame, budget.targets, seed, domain=domain, starts=budget.starts,
                                      tol_solve=tol_solve, workers=workers)
        if len(frames) > 1:
            cond["II"].details["frames_checked"] = len(frames)
            cond["III"].details["frames_checked"] = len(frames)
    statuses = [c.status for c in cond.values()]
    if "fail" in statuses:
        verdict = "fail"
    elif "undetermined" in statuses:
        verdict = "undetermined"
    else:
        verdict = "pass"
    return CertificationReport(
        detected_dim=dim.dim if dim.determined else "undetermined",
        conditions=cond,
        seed=int(seed),
        samples={"tuples_per_k": budget.samples, "pairs": budget.samples, "targets": budget.targets,
                 "starts": budget.starts, "frames": budget.frames},
        verdict=verdict,
        geometry=g.descriptor(),
    )


def _worst(results):
    order = {"fail": 0, "undetermined": 1, "pass": 2}
    return min(results, key=lambda r: (order[r.status], -r.residual))
