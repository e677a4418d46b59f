import numpy as np
import pytest

from sigmageom import algebra, solver
from sigmageom.algebra import Frame
from sigmageom.cli import dumps
from sigmageom.sampling import Box
from sigmageom.solver import (compare_equality_definitions, dedup, equality_in_frame, find_frame_dependence_witness,
                              origin_independence_check, solve_equal, solve_scale, solve_sum)
from sigmageom.worldfn import (SegVector, make_deformed_euclidean, make_deformed_minkowski, make_euclidean,
                               make_minkowski, seg)

E1, E2, E3, M4 = make_euclidean(1), make_euclidean(2), make_euclidean(3), make_minkowski(4)
O4 = np.zeros(4)


def test_solve_equal_translation_oracle():
    s = solve_equal([0, 0, 0], [1, 0, 0], [2, 3, 4], E3)
    assert s.classification == "unique"
    assert np.allclose(s.solutions[0], [3, 3, 4], atol=1e-6)


def test_solve_equal_identity_transport():
    P0, P1 = np.array([0.2, -0.4, 0.9]), np.array([1.0, 0.5, -0.3])
    s = solve_equal(P0, P1, P0, E3)
    assert s.classification == "unique" and np.allclose(s.solutions[0], P1, atol=1e-6)


def test_minkowski_spacelike_continuum():
    s = solve_equal(O4, [0, 1, 0, 0], O4, M4, seed=1)
    assert s.classification == "continuum" and s.est_dim == 2
    W = s.solutions
    assert np.all(np.abs(W[:, 1] - 1) <= 1e-6)
    assert np.all(np.abs(W[:, 0] ** 2 - W[:, 2] ** 2 - W[:, 3] ** 2) <= 1e-6)
    # both analytic members lie on the reported relation
    for w in ([0, 1, 0, 0], [1, 1, 1, 0]):
        assert algebra.is_equal(seg(O4, [0, 1, 0, 0]), seg(O4, w), M4)


def test_minkowski_timelike_unique():
    P1 = np.array([1.0, 0.2, 0.1, -0.3])
    Q0 = np.array([0.3, 0.3, -0.2, 0.1])
    s = solve_equal(O4, P1, Q0, M4, seed=2)
    assert s.classification == "unique" and np.allclose(s.solutions[0], Q0 + P1, atol=1e-6)


def test_solution_invariants():
    s = solve_equal(O4, [0, 1, 0, 0], O4, M4, seed=4)
    assert np.all(s.residuals < solver.TOL_SOLVE)
    fun, _ = solver._equal_system(O4, np.array([0.0, 1, 0, 0]), O4, M4)
    assert np.all(np.max(np.abs(fun(s.solutions)), axis=1) < solver.TOL_SOLVE)
    D = np.linalg.norm(s.solutions[:, None] - s.solutions[None], axis=-1)
    assert D[np.triu_indices(len(D), 1)].min() > s.meta["dedup_radius"]
    # lexicographic order of representatives
    keys = [tuple(p) for p in s.solutions]
    assert keys == sorted(keys)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_euclidean_uniqueness_random(m):
    g = make_euclidean(m)
    rng = np.random.default_rng(m)
    for i in range(15):
        P0, P1, Q0 = rng.uniform(-1, 1, (3, m))
        s = solve_equal(P0, P1, Q0, g, seed=i)
        assert s.classification == "unique"
        assert np.linalg.norm(s.solutions[0] - (Q0 + P1 - P0)) <= 1e-6
        alpha = rng.uniform(0.3, 2.0) * rng.choice([-1, 1])
        t = solve_scale(P0, P1, alpha, Q0, g, seed=i)
        assert t.classification == "unique"
        assert np.linalg.norm(t.solutions[0] - (Q0 + alpha * (P1 - P0))) <= 1e-6


def test_scale_examples():
    s = solve_scale([0, 0], [1, 0], 1.0, [0, 0], E2)
    assert np.allclose(s.solutions[0], [1, 0], atol=1e-6)
    s = solve_scale([0], [3], -2.0, [0], E1)
    assert s.classification == "unique" and np.allclose(s.solutions[0], [-6], atol=1e-6)
    assert algebra.scalar_product(seg([0], s.solutions[0]), seg([0], [3]), E1) == pytest.approx(-18, abs=1e-5)
    s = solve_scale([0, 0], [1, 0], 2.0, [0, 5], E2)
    assert np.allclose(s.solutions[0], [2, 5], atol=1e-6)
    z = solve_scale([0, 0], [1, 0], 0.0, [4, 4], E2)
    assert z.classification == "unique" and np.array_equal(z.solutions[0], [4, 4])


def test_scale_reversibility():
    rng = np.random.default_rng(6)
    for i in range(10):
        P0, P1, S0 = rng.uniform(-1, 1, (3, 3))
        a = rng.uniform(0.5, 2)
        S1 = solve_scale(P0, P1, a, S0, E3, seed=i).solutions[0]
        back = solve_scale(S0, S1, 1 / a, S0, E3, seed=i).solutions[0]
        assert np.linalg.norm(back - (S0 + (S1 - S0) / a)) <= 1e-6
        assert np.linalg.norm(back - (S0 + (P1 - P0))) <= 1e-6


def test_sum_examples():
    R, S1 = solve_sum(seg([0], [3]), seg([1], [5]), [10], E1)
    assert R.classification == "unique" and np.allclose(R.solutions[0], [13], atol=1e-6)
    assert S1.classification == "unique" and np.allclose(S1.solutions[0], [17], atol=1e-6)
    R, S1 = solve_sum(seg([0, 0], [1, 0]), seg([0, 0], [0, 1]), [5, 5], E2)
    assert S1.classification == "unique" and np.allclose(S1.solutions[0], [6, 6], atol=1e-6)
    R, S1 = solve_sum(seg([0, 0], [1, 0]), seg([1, 1], [1, 1]), [5, 5], E2)
    assert np.allclose(S1.solutions[0], R.solutions[0], atol=1e-6)
    assert S1.branches == [0]


def test_sum_random_euclidean():
    rng = np.random.default_rng(9)
    for i in range(8):
        a, b, c, d, S0 = rng.uniform(-1, 1, (5, 3))
        _, S1 = solve_sum(seg(a, b), seg(c, d), S0, E3, seed=i)
        assert S1.classification == "unique"
        assert np.linalg.norm(S1.solutions[0] - (S0 + b - a + d - c)) <= 1e-6


def test_origin_independence():
    rng = np.random.default_rng(12)
    a, b, c, d, S0, S0p = rng.uniform(-1, 1, (6, 3))
    rep = origin_independence_check(seg(a, b), seg(c, d), S0, S0p, E3)
    assert rep["consistent"] is True
    rep = origin_independence_check(seg(a, b), seg(c, d), S0, S0, E3)
    assert rep["consistent"] is True


def test_origin_independence_deformed_reports_matrix():
    g = make_deformed_euclidean(2, 0.01)
    rep = origin_independence_check(seg([0, 0], [0.5, 0.1]), seg([0.1, 0.2], [0.3, 0.7]), [0.2, -0.1],
                                    [-0.3, 0.4], g, starts=128)
    assert "matrix" in rep and isinstance(rep["consistent"], bool)


def test_equality_in_frame_examples():
    rng = np.random.default_rng(3)
    f = Frame.standard(3)
    for _ in range(20):
        P0, P1, Q0 = rng.uniform(-1, 1, (3, 3))
        same = seg(Q0, Q0 + P1 - P0)
        other = seg(Q0, Q0 + P1 - P0 + rng.normal(size=3) * 0.1)
        assert equality_in_frame(seg(P0, P1), same, f, E3)
        assert not equality_in_frame(seg(P0, P1), other, f, E3)
    v, w = seg(O4, [0, 1, 0, 0]), seg(O4, [1, 1, 1, 0])
    assert not equality_in_frame(v, w, Frame.standard(4), M4) and algebra.is_equal(v, w, M4)
    assert equality_in_frame(v, v, Frame.standard(4), M4)
    with pytest.raises(algebra.DegenerateFrameError):
        equality_in_frame(v, v, Frame(O4, np.ones((4, 4))), M4)


def test_compare_definitions():
    frames = [Frame.standard(3), Frame([0.1, 0.2, 0.3], [[1.2, 0.1, 0.3], [0.0, 1.5, 0.2], [0.3, 0.1, 0.9]])]
    v, w = seg([0, 0, 0], [1, 2, 3]), seg([1, 1, 1], [2, 3, 4])
    rep = compare_equality_definitions(v, w, frames, E3)
    assert rep["is_equal"] and rep["frames"] == [True, True] and rep["frames_consistent"]
    v, w = seg(O4, [1.0, 0.2, 0.1, 0.0]), seg(np.ones(4), np.ones(4) + [1.0, 0.2, 0.1, 0.0])
    rep = compare_equality_definitions(v, w, [Frame.standard(4)], M4)
    assert rep["is_equal"] and all(rep["frames"])


def test_deformed_minkowski_frame_dependence_witness():
    w = find_frame_dependence_witness(make_deformed_minkowski(4, 0.01), seed=0)
    assert w is not None
    assert w["frames"][0] and not w["frames"][1] and not w["frames_consistent"]
    # control: the same search in Minkowski geometry finds nothing
    assert find_frame_dependence_witness(M4, seed=0, tries=20) is None


def test_dedup_radius_soundness():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (300, 2))
    keep = dedup(pts, 0.05)
    reps = pts[keep]
    D = np.linalg.norm(reps[:, None] - reps[None], axis=-1)
    assert D[np.triu_indices(len(reps), 1)].min() > 0.05
    # every point lies within the radius of some representative
    assert np.all(np.linalg.norm(pts[:, None] - reps[None], axis=-1).min(axis=1) <= 0.05)


def test_worker_independence():
    a = solve_equal(O4, [0, 1, 0, 0], O4, M4, seed=3, workers=1)
    b = solve_equal(O4, [0, 1, 0, 0], O4, M4, seed=3, workers=8)
    assert dumps(a.to_json()) == dumps(b.to_json())


def test_empty_when_box_excludes_solutions():
    s = solve_equal([0, 0], [1, 0], [0, 0], E2, box=Box(np.array([5.0, 5.0]), np.array([6.0, 6.0])), starts=32)
    assert s.classification == "empty" and "warning" in s.meta
