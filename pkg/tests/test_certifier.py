import numpy as np
import pytest

from sigmageom import certifier
from sigmageom.algebra import Frame
from sigmageom.certifier import Budget, certify, check_linearity, check_positivity, detect_dimension
from sigmageom.cli import dumps
from sigmageom.sampling import Box
from sigmageom.worldfn import make_deformed_euclidean, make_euclidean, make_minkowski

SMALL = Budget(samples=2000, targets=6, starts=48)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("seed", [0, 17])
def test_euclidean_certifies(m, seed):
    rep = certify(make_euclidean(m), budget=SMALL, seed=seed)
    assert rep.verdict == "pass"
    assert rep.detected_dim == m
    for c in rep.conditions.values():
        assert c.passed and c.residual <= 1e-9


def test_detect_dimension_examples():
    assert detect_dimension(make_euclidean(3), Box.cube(3), 1000).dim == 3
    assert detect_dimension(make_euclidean(1), Box.cube(1), 1000).dim == 1
    with pytest.raises(ValueError):
        detect_dimension(make_euclidean(2), Box.cube(2), 5)


def test_euclidean_subspace_detected():
    # chart of dimension 3 but points confined to a plane: geometric dimension 2
    box = Box(np.array([-0.5, -0.5, 0.0]), np.array([0.5, 0.5, 1e-300]))
    assert detect_dimension(make_euclidean(3), box, 1000).dim == 2


def test_deformed_euclidean_not_euclidean():
    g = make_deformed_euclidean(3, 0.01)
    res = detect_dimension(g, Box.cube(3), 2000)
    assert res.dim is None or res.dim > 3 or res.max_normalized[4] > certifier.TOL_RANK
    rep = certify(g, budget=SMALL)
    assert not rep.conditions["I"].passed or not rep.conditions["II"].passed
    assert rep.verdict == "fail"


def test_linearity_examples():
    assert check_linearity(make_euclidean(3), Frame.standard(3), 2000).residual <= 1e-9
    f = Frame([0.1, 0.2, -0.3, 0.05], [[1.1, 0.3, 0.1, 0.0], [0.2, 0.9, 0.0, 0.1], [0.0, 0.1, 1.2, 0.4],
                                        [0.3, 0.0, 0.2, 0.8]])
    assert check_linearity(make_minkowski(4), f, 2000).residual <= 1e-9
    g = make_deformed_euclidean(3, 0.01)
    assert check_linearity(g, Frame.standard(3, [-0.5, -0.5, -0.5]), 2000).residual > 1e-3


def test_positivity_examples():
    r = check_positivity(make_euclidean(2), Frame([0, 0], [[2, 0], [0, 1]]))
    assert r.passed and np.allclose(sorted(r.details["eigenvalues"]), [1, 4])
    r = check_positivity(make_minkowski(4), Frame.standard(4))
    assert not r.passed and r.details["positive"] == 1 and r.details["negative"] == 3


def test_minkowski_inertia_any_frame():
    rng = np.random.default_rng(8)
    g = make_minkowski(4)
    for _ in range(50):
        pts = rng.uniform(-1, 1, (5, 4))
        if abs(np.linalg.det(pts[1:] - pts[0])) < 1e-3:
            continue
        r = check_positivity(g, Frame(pts[0], pts[1:]))
        assert (r.details["positive"], r.details["negative"]) == (1, 3)


def test_minkowski_certification():
    rep = certify(make_minkowski(4), budget=SMALL)
    c = rep.conditions
    assert rep.detected_dim == 4
    assert c["I"].passed and c["II"].passed and not c["III"].passed
    assert rep.verdict == "fail"


def test_positivity_pass_implies_eigenvalues_above_tolerance():
    rep = certify(make_euclidean(3), budget=SMALL)
    c = rep.conditions["III"]
    assert c.passed and min(c.details["eigenvalues"]) > c.details["tol_eig"]


def test_report_deterministic_and_worker_independent():
    g = make_euclidean(3)
    a = dumps(certify(g, budget=SMALL, seed=5, workers=1).to_json())
    b = dumps(certify(g, budget=SMALL, seed=5, workers=1).to_json())
    c = dumps(certify(g, budget=SMALL, seed=5, workers=8).to_json())
    assert a == b == c


def test_monotone_sampling_euclidean():
    g = make_euclidean(2)
    for n in (100, 1000, 5000):
        assert certify(g, budget=Budget(samples=n, targets=3, starts=32)).verdict == "pass"


def test_witness_reproducible_from_seed():
    g = make_deformed_euclidean(3, 0.01)
    a = certify(g, budget=SMALL, seed=3).conditions["II"].witness
    b = certify(g, budget=SMALL, seed=3).conditions["II"].witness
    assert a == b and len(a) == 2
