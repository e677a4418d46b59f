import numpy as np
import pytest
from scipy.optimize import brentq

from sigmageom import algebra, figures
from sigmageom.cli import chart_length_for
from sigmageom.figures import (ball_coverage, center_min_residual, rho_formula, rho_max, segment_membership,
                               straight_set, tube_profile)
from sigmageom.sampling import Box
from sigmageom.worldfn import SegVector, make_deformed_euclidean, make_euclidean, make_minkowski

E3, M4 = make_euclidean(3), make_minkowski(4)


def _segment(d, l=1.0):
    g = make_deformed_euclidean(3, d)
    return g, np.zeros(3), np.array([chart_length_for(g, l), 0.0, 0.0])


def _tube_oracle(d, L, frac):
    """Transverse radius solving the membership equation for the deformed branch directly."""
    l = np.sqrt(L * L - 2 * d)

    def f(r):
        a2 = (frac * L) ** 2 + r * r
        b2 = ((1 - frac) * L) ** 2 + r * r
        return np.sqrt(a2 - 2 * d) + np.sqrt(b2 - 2 * d) - l

    return brentq(f, 0.0, 1.0, xtol=1e-15)


def test_rho_formula_values():
    assert rho_formula(0.5, 1.0, 1e-3) == pytest.approx(0.02234, abs=1e-5)
    assert rho_formula(0.5, 1.0, 1e-3) ** 2 == pytest.approx(4.99e-4, rel=2e-3)
    assert rho_max(1.0, 1e-3) == pytest.approx(0.022360, abs=1e-6)
    assert np.isnan(rho_formula(0.001, 1.0, 1e-3)) and np.isnan(rho_formula(0.9995, 1.0, 1e-3))


def test_membership_examples():
    P0, P1 = np.zeros(3), np.array([1.0, 0, 0])
    member, res = segment_membership(P0, P1, [0.5, 0, 0], E3)
    assert member and res == 0.0
    member, res = segment_membership(P0, P1, [0.5, 0.1, 0], E3)
    assert not member and res > 1e-3
    g, P0, P1 = _segment(1e-3)
    member, res = segment_membership(P0, P1, P1 / 2, g)
    assert not member


def test_membership_rejects_spacelike():
    with pytest.raises(ValueError):
        segment_membership(np.zeros(4), [1.0, 0, 0, 0], [0, 1.0, 0, 0], M4)


def test_nearest_members_on_transverse_ray_at_tube_radius():
    g, P0, P1 = _segment(1e-3)
    prof = tube_profile(P0, P1, g, [0.5])
    r = np.linspace(0, 0.1, 200_001)
    R = P1 / 2 + r[:, None] * np.array([0, 1.0, 0])
    res = np.abs(figures.membership_signed(P0, P1, R, g))
    assert r[np.argmin(res)] == pytest.approx(prof.rho_emp[0], abs=1e-6)


def test_euclidean_tube_degenerate():
    prof = tube_profile(np.zeros(3), [1.0, 0, 0], E3, 20)
    assert np.all(prof.rho_emp < 1e-7)


@pytest.mark.parametrize("d", [1e-2, 1e-3])
def test_tube_matches_membership_oracle(d):
    g, P0, P1 = _segment(d)
    # stay where both chart distances exceed the seam, so the oracle needs only one branch
    prof = tube_profile(P0, P1, g, np.linspace(0.2, 0.8, 7))
    L = P1[0]
    oracle = np.array([_tube_oracle(d, L, t / prof.length) for t in prof.tau])
    assert np.allclose(prof.rho_emp, oracle, rtol=1e-9, atol=1e-12)


def test_tube_symmetry():
    g, P0, P1 = _segment(1e-3)
    taus = np.linspace(0.05, 0.95, 19)
    prof = tube_profile(P0, P1, g, taus)
    assert np.allclose(prof.rho_emp, prof.rho_emp[::-1], rtol=0.02)


def test_tube_maximum_at_midpoint():
    g, P0, P1 = _segment(1e-3)
    taus = np.linspace(0.05, 0.95, 19)
    prof = tube_profile(P0, P1, g, taus)
    assert abs(prof.tau[np.argmax(prof.rho_emp)] - 0.5) <= taus[1] - taus[0]


@pytest.mark.parametrize("d", [1e-2, 1e-3])
def test_tube_closed_form_consistency(d):
    g, P0, P1 = _segment(d)
    prof = tube_profile(P0, P1, g, np.linspace(0.1, 0.9, 17))
    rel = np.abs(prof.rho_emp - prof.rho_formula) / prof.rho_formula
    assert np.nanmax(rel) <= 0.10


def test_tube_quarter_point_approximation():
    d = 1e-3
    g, P0, P1 = _segment(d)
    prof = tube_profile(P0, P1, g, [0.25])
    approx = np.sqrt(2 * d * 0.25 * 0.75)
    assert abs(prof.rho_emp[0] - approx) / approx <= 0.10


def test_tube_missing_when_probe_too_short():
    g, P0, P1 = _segment(1e-3)
    prof = tube_profile(P0, P1, g, 5, probe_max=1e-3)
    assert prof.missing.all()
    assert "nan" in prof.to_csv()


def test_tube_csv_shape():
    g, P0, P1 = _segment(1e-3)
    lines = tube_profile(P0, P1, g, 50).to_csv().splitlines()
    assert lines[0] == "tau,rho_emp,rho_formula" and len(lines) == 51


def test_straight_euclidean_line():
    s = straight_set(np.zeros(3), [1.0, 1.0, 0.0], E3, samples=1000)
    assert s.dimension == 1 and s.accepted >= 500
    cross = np.cross(s.points, [1.0, 1.0, 0.0])
    assert np.abs(cross).max() < 1e-4


def test_straight_minkowski_dimensions():
    tl = straight_set(np.zeros(4), [1.0, 0, 0, 0], M4, samples=1000)
    assert tl.dimension == 1
    sl = straight_set(np.zeros(4), [0, 1.0, 0, 0], M4, samples=1000)
    assert sl.dimension == 3
    W = sl.points
    assert np.abs(W[:, 0] ** 2 - W[:, 2] ** 2 - W[:, 3] ** 2).max() < 1e-6


def test_straight_containment():
    s = straight_set(np.zeros(4), [0, 1.0, 0, 0], M4, samples=500)
    v = SegVector(np.zeros(4), np.array([0, 1.0, 0, 0]))
    w = SegVector(np.zeros_like(s.points), s.points)
    assert np.all(algebra.collinearity_residual(v, w, M4) < algebra.TOL)


def test_straight_undetermined_with_few_samples():
    s = straight_set(np.zeros(3), [1.0, 0, 0], E3, samples=20)
    assert s.dimension is None


def test_straight_rejects_equal_points():
    with pytest.raises(ValueError):
        straight_set(np.zeros(3), np.zeros(3), E3)


def test_ball_euclidean_exact_decomposition():
    r = ball_coverage(1.0, E3, samples=500, seed=1)
    assert r.covered_fraction == 1.0 and r.overlaps == 0 and r.overlap_fraction == 0.0
    assert r.center_min_residual == pytest.approx(0.0, abs=1e-12)


def test_ball_tiny_radius_well_defined():
    r = ball_coverage(1e-6, E3, samples=50, with_center=False)
    assert 0.0 <= r.covered_fraction <= 1.0 and r.samples == 50


def test_ball_deformed_report():
    r = ball_coverage(1.0, make_deformed_euclidean(3, 1e-3), samples=100, tol_seg=1e-6, with_center=False)
    assert 0.0 <= r.covered_fraction <= 1.0 and r.overlap_fraction >= 0.0


def test_ball_worker_independence():
    a = ball_coverage(1.0, E3, samples=300, workers=1, with_center=False).to_json()
    b = ball_coverage(1.0, E3, samples=300, workers=8, with_center=False).to_json()
    assert a == b


def test_center_residual_deformed_is_finite():
    r = center_min_residual(1.0, make_deformed_euclidean(3, 1e-3), starts=64)
    assert np.isfinite(r) and r >= 0.0
