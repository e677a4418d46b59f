"""Geometry computed from a world function sigma(P, Q) = rho^2 / 2 alone."""
from .algebra import (
    CausalNorm, DegenerateFrameError, Frame, GramMatrix, angle_between, covariant_coordinates,
    gram_determinant, gram_matrix, is_collinear, is_equal, metric_tensors, norm, scalar_product,
)
from .certifier import Budget, CertificationReport, certify, detect_dimension
from .chains import ChainConfig, WorldChain, extend_chain, simulate_chain, wobble_angle
from .figures import ball_coverage, segment_membership, straight_set, tube_profile
from .sampling import Box
from .solver import (
    SolutionSet, compare_equality_definitions, equality_in_frame, origin_independence_check,
    solve_equal, solve_scale, solve_sum,
)
from .worldfn import (
    SegVector, WorldFunction, from_descriptor, make_deformed_euclidean, make_deformed_minkowski,
    make_euclidean, make_minkowski, seg,
)

__version__ = "0.1.0"
