"""Points, segment vectors and the built-in world functions.

A world function ``sigma(P, Q)`` (half the squared distance) is the only
geometric structure; everything else in the package is derived from it.
Evaluators broadcast over leading axes, so ``P`` and ``Q`` may be single
points of shape ``(m,)`` or stacks of shape ``(..., m)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

GEOMETRY_NAMES = ("euclidean", "minkowski", "deformed_minkowski", "deformed_euclidean")


def as_point(coords, chart_dim: Optional[int] = None) -> np.ndarray:
    """Validate chart coordinates and return them as a float array.

    Stacks of points (shape ``(..., m)``) are accepted as well.
    """
    p = np.asarray(coords, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if chart_dim is not None and p.shape[-1] != chart_dim:
        raise ValueError(f"point has {p.shape[-1]} coordinates, expected {chart_dim}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


@dataclass(frozen=True)
class SegVector:
    """Ordered pair of points <origin, end>."""

    origin: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        o = as_point(self.origin)
        e = as_point(self.end)
        if o.shape[-1] != e.shape[-1]:
            raise ValueError("origin and end have different chart dimensions")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "end", e)

    @property
    def chart_dim(self) -> int:
        return self.origin.shape[-1]

    def offset(self) -> np.ndarray:
        """Chart-coordinate difference end - origin (not a sigma quantity)."""
        return self.end - self.origin


def seg(origin, end) -> SegVector:
    return SegVector(origin, end)


@dataclass(frozen=True)
class WorldFunction:
    """A named world function on an m-dimensional chart.

    ``grad`` is optional: when given, ``grad(P, Q)`` returns the gradient of
    ``sigma(P, Q)`` with respect to ``Q``. Solvers fall back to finite
    differences when it is missing.
    """

    name: str
    chart_dim: int
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    params: Mapping[str, float] = field(default_factory=dict)
    grad: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __call__(self, P, Q):
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        if P.shape[-1] != self.chart_dim or Q.shape[-1] != self.chart_dim:
            raise ValueError(
                f"{self.name}: expected points with {self.chart_dim} coordinates, "
                f"got {P.shape[-1]} and {Q.shape[-1]}"
            )
        return self.evaluator(P, Q)

    def descriptor(self) -> dict:
        out = {"name": self.name, "dim": self.chart_dim}
        if "d" in self.params:
            out["d"] = float(self.params["d"])
        return out


def _check_dim(m, minimum=1):
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < minimum:
        raise ValueError(f"chart dimension must be an integer >= {minimum}, got {m!r}")
    return int(m)


def _check_d(d):
    d = float(d)
    if not np.isfinite(d) or d <= 0:
        raise ValueError(f"deformation d must be a positive finite number, got {d!r}")
    return d


def _sigma_euclid(P, Q):
    diff = P - Q
    return 0.5 * np.sum(diff * diff, axis=-1)


def _grad_euclid(P, Q):
    return np.broadcast_to(Q - P, np.broadcast_shapes(P.shape, Q.shape)).copy()


def _sigma_mink(P, Q):
    diff = P - Q
    sq = diff * diff
    return 0.5 * (sq[..., 0] - np.sum(sq[..., 1:], axis=-1))


def _grad_mink(P, Q):
    g = np.array(Q - P, dtype=float)
    g[..., 1:] *= -1.0
    return g


def make_euclidean(m: int) -> WorldFunction:
    """Proper Euclidean world function, ``0.5 * sum((x - x')**2)``."""
    m = _check_dim(m)
    return WorldFunction("euclidean", m, _sigma_euclid, {}, _grad_euclid)


def make_minkowski(m: int) -> WorldFunction:
    """Minkowski world function with coordinate 0 timelike, signature (+,-,...,-)."""
    m = _check_dim(m, minimum=2)
    return WorldFunction("minkowski", m, _sigma_mink, {}, _grad_mink)


def make_deformed_minkowski(m: int, d: float) -> WorldFunction:
    """``sigma_M + sgn(sigma_M) * d`` with ``sgn(0) = 0``."""
    m = _check_dim(m, minimum=2)
    d = _check_d(d)

    def sigma(P, Q):
        s = _sigma_mink(P, Q)
        return s + np.sign(s) * d

    return WorldFunction("deformed_minkowski", m, sigma, {"d": d}, _grad_mink)


def make_deformed_euclidean(m: int, d: float) -> WorldFunction:
    """``sigma_E - d`` where ``sigma_E >= 2d``, ``sigma_E / 2`` below the seam."""
    m = _check_dim(m)
    d = _check_d(d)

    def sigma(P, Q):
        s = _sigma_euclid(P, Q)
        return np.where(s >= 2.0 * d, s - d, 0.5 * s)

    def grad(P, Q):
        s = _sigma_euclid(P, Q)
        g = _grad_euclid(P, Q)
        return np.where((s >= 2.0 * d)[..., None], g, 0.5 * g)

    return WorldFunction("deformed_euclidean", m, sigma, {"d": d}, grad)


def from_descriptor(desc: Mapping) -> WorldFunction:
    """Build a geometry from ``{"name": ..., "dim": m, "d": optional}``."""
    if not isinstance(desc, Mapping):
        raise ValueError("geometry descriptor must be an object")
    for key in ("name", "dim"):
        if key not in desc:
            raise ValueError(f"geometry descriptor is missing {key!r}")
    name, m = desc["name"], desc["dim"]
    if name not in GEOMETRY_NAMES:
        raise ValueError(f"unknown geometry {name!r}; expected one of {GEOMETRY_NAMES}")
    if name == "euclidean":
        return make_euclidean(m)
    if name == "minkowski":
        return make_minkowski(m)
    if "d" not in desc:
        raise ValueError(f"geometry {name!r} requires a deformation 'd'")
    if name == "deformed_minkowski":
        return make_deformed_minkowski(m, desc["d"])
    return make_deformed_euclidean(m, desc["d"])


def finite_difference_grad(g: WorldFunction, P, Q, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of ``sigma(P, Q)`` with respect to ``Q``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    shape = np.broadcast_shapes(P.shape, Q.shape)
    out = np.empty(shape)
    h = step * np.maximum(1.0, np.abs(Q))
    for i in range(g.chart_dim):
        e = np.zeros(g.chart_dim)
        e[i] = 1.0
        hi = h[..., i : i + 1]
        out[..., i] = (g(P, Q + hi * e) - g(P, Q - hi * e)) / (2.0 * h[..., i])
    return out


def sigma_grad(g: WorldFunction, P, Q) -> np.ndarray:
    """Gradient of ``sigma(P, Q)`` in ``Q``, analytic when the geometry provides one."""
    if g.grad is not None:
        return g.grad(np.asarray(P, dtype=float), np.asarray(Q, dtype=float))
    return finite_difference_grad(g, P, Q)
