"""Pointwise algebra derived from a world function.

Scalar products, norms, Gram matrices and the equality/collinearity
predicates. All functions broadcast: a ``SegVector`` may hold stacks of
points and the result then has the matching leading shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .worldfn import SegVector, WorldFunction, as_point, sigma_grad

TOL = 1e-9
TOL_ZERO = 1e-12
TOL_RANK = 1e-7


class DegenerateFrameError(ValueError):
    """Frame points do not span: normalized Gram determinant below tol_rank."""


class CausalNorm(NamedTuple):
    norm_squared: float
    causal_type: str  # "positive" | "null" | "negative"


class GramDet(NamedTuple):
    raw: float
    normalized: float


@dataclass(frozen=True)
class GramMatrix:
    base: np.ndarray
    points: np.ndarray
    entries: np.ndarray


@dataclass(frozen=True)
class Frame:
    """Origin ``base`` plus ``n`` basis points; the vectors base->basis[i]."""

    base: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        base = as_point(self.base)
        basis = np.atleast_2d(as_point(self.basis))
        if basis.shape[-1] != base.shape[-1]:
            raise ValueError("frame basis points and base differ in chart dimension")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "basis", basis)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def standard(cls, m: int, origin=None) -> "Frame":
        o = np.zeros(m) if origin is None else as_point(origin, m)
        return cls(o, o + np.eye(m))

    def to_json(self) -> dict:
        return {"base": self.base.tolist(), "basis": self.basis.tolist()}


def _check(g: WorldFunction, *pts):
    for p in pts:
        if np.shape(p)[-1] != g.chart_dim:
            raise ValueError(
                f"dimension mismatch: point has {np.shape(p)[-1]} coordinates, "
                f"geometry {g.name} has chart_dim {g.chart_dim}"
            )


def scalar_product(v: SegVector, w: SegVector, g: WorldFunction):
    """(P0P1 . Q0Q1) = s(P0,Q1) + s(P1,Q0) - s(P0,Q0) - s(P1,Q1)."""
    _check(g, v.origin, v.end, w.origin, w.end)
    return g(v.origin, w.end) + g(v.end, w.origin) - g(v.origin, w.origin) - g(v.end, w.end)


def scalar_product_grad_end(v: SegVector, w: SegVector, g: WorldFunction):
    """Gradient of ``scalar_product(v, w)`` with respect to ``w.end``."""
    return sigma_grad(g, v.origin, w.end) - sigma_grad(g, v.end, w.end)


def norm_squared(v: SegVector, g: WorldFunction):
    _check(g, v.origin, v.end)
    return 2.0 * g(v.origin, v.end)


def causal_type(norm_sq: float, tol_zero: float = TOL_ZERO) -> str:
    if norm_sq > tol_zero:
        return "positive"
    if norm_sq < -tol_zero:
        return "negative"
    return "null"


def norm(v: SegVector, g: WorldFunction, tol_zero: float = TOL_ZERO) -> CausalNorm:
    n2 = float(norm_squared(v, g))
    return CausalNorm(n2, causal_type(n2, tol_zero))


def gram_entries(tuples, g: WorldFunction) -> np.ndarray:
    """Gram matrices for stacked tuples of shape ``(..., n+1, m)``.

    Row 0 of each tuple is the common origin. Entry ``[i, k]`` is
    ``s(P0,Pi) + s(P0,Pk) - s(Pi,Pk)``.
    """
    t = np.asarray(tuples, dtype=float)
    _check(g, t)
    base = t[..., :1, :]
    pts = t[..., 1:, :]
    s0 = g(base, pts)  # (..., n)
    sik = g(pts[..., :, None, :], pts[..., None, :, :])
    G = s0[..., :, None] + s0[..., None, :] - sik
    # force exact symmetry; the expression is symmetric but evaluation order is not
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def gram_matrix(base, points, g: WorldFunction) -> GramMatrix:
    base = as_point(base, g.chart_dim)
    pts = np.atleast_2d(as_point(points, g.chart_dim))
    if pts.shape[0] == 0:
        raise ValueError("gram_matrix needs at least one point")
    G = gram_entries(np.vstack([base[None, :], pts]), g)
    return GramMatrix(base, pts, G)


def normalized_determinants(G, tol_zero: float = TOL_ZERO):
    """Raw determinants and Hadamard-normalized ones for stacked Gram matrices.

    The normalizer is the product of row norms, which bounds |det| for any
    matrix; the diagonal product only bounds it for positive semidefinite
    ones and explodes on near-null Minkowski vectors.
    """
    G = np.asarray(G, dtype=float)
    raw = np.linalg.det(G)
    rows = np.maximum(np.linalg.norm(G, axis=-1), tol_zero)
    return raw, raw / np.prod(rows, axis=-1)


def gram_determinant(base, points, g: WorldFunction, tol_zero: float = TOL_ZERO) -> GramDet:
    G = gram_matrix(base, points, g).entries
    raw, nrm = normalized_determinants(G, tol_zero)
    return GramDet(float(raw), float(nrm))


def collinearity_residual(v: SegVector, w: SegVector, g: WorldFunction):
    """Scale-normalized ``|(v.w)^2 - |v|^2 |w|^2|``."""
    vw = scalar_product(v, w, g)
    prod = norm_squared(v, g) * norm_squared(w, g)
    scale = np.maximum(1.0, np.maximum(vw * vw, np.abs(prod)))
    return np.abs(vw * vw - prod) / scale


def is_collinear(v: SegVector, w: SegVector, g: WorldFunction, tol: float = TOL):
    return collinearity_residual(v, w, g) <= tol


def equality_residuals(v: SegVector, w: SegVector, g: WorldFunction):
    """The two squared-form equality residuals, each scale-normalized.

    ``(v.w) - |v|^2`` and ``|v|^2 - |w|^2``; this form needs no square root,
    so spacelike (negative-norm) vectors are handled the same way.
    """
    vw = scalar_product(v, w, g)
    vv = norm_squared(v, g)
    ww = norm_squared(w, g)
    scale = np.maximum.reduce([np.ones_like(vw), np.abs(vw), np.abs(vv), np.abs(ww)])
    return np.abs(vw - vv) / scale, np.abs(vv - ww) / scale


def is_equal(v: SegVector, w: SegVector, g: WorldFunction, tol: float = TOL):
    r1, r2 = equality_residuals(v, w, g)
    return (r1 <= tol) & (r2 <= tol)


def _require_frame(frame: Frame, g: WorldFunction, tol_rank: float) -> np.ndarray:
    G = gram_matrix(frame.base, frame.basis, g).entries
    _, nrm = normalized_determinants(G)
    if not np.abs(nrm) > tol_rank:
        raise DegenerateFrameError(f"degenerate frame: normalized Gram determinant {nrm:.3e}")
    return G


def covariant_coordinates(P, frame: Frame, g: WorldFunction, tol_rank: float = TOL_RANK) -> np.ndarray:
    """x_i(P) = (P0Pi . P0P); shape ``(..., n)``."""
    _require_frame(frame, g, tol_rank)
    P = as_point(P, g.chart_dim)
    return frame_products(P, frame, g)


def frame_products(P, frame: Frame, g: WorldFunction) -> np.ndarray:
    """Covariant coordinates without the nondegeneracy check (hot path)."""
    P = np.asarray(P, dtype=float)
    b = frame.base
    s0P = g(b, P)[..., None]
    s0i = g(b, frame.basis)
    siP = g(frame.basis, P[..., None, :])
    return s0P + s0i - siP


def frame_products_grad(P, frame: Frame, g: WorldFunction) -> np.ndarray:
    """Jacobian of ``frame_products`` in ``P``; shape ``(..., n, m)``."""
    P = np.asarray(P, dtype=float)
    return sigma_grad(g, frame.base, P)[..., None, :] - sigma_grad(g, frame.basis, P[..., None, :])


def metric_tensors(frame: Frame, g: WorldFunction, tol_rank: float = TOL_RANK):
    """Covariant metric g_ik (the frame's Gram matrix) and its inverse g^ik."""
    G = _require_frame(frame, g, tol_rank)
    try:
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFrameError("singular metric tensor") from exc
    return G, Ginv


def angle_between(v: SegVector, w: SegVector, g: WorldFunction, tol_zero: float = TOL_ZERO) -> float:
    nv, nw = norm(v, g, tol_zero), norm(w, g, tol_zero)
    if nv.causal_type != "positive" or nw.causal_type != "positive":
        raise ValueError("angle undefined: both vectors need positive squared norm")
    c = float(scalar_product(v, w, g)) / np.sqrt(nv.norm_squared * nw.norm_squared)
    if abs(c) > 1.0 + TOL:
        raise ValueError(f"cosine {c!r} outside [-1, 1] beyond roundoff")
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
