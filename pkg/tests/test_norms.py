import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inexact_newton.norms import NormSpec, power_iteration_norm

finite = st.floats(-10, 10, allow_nan=False)


def test_euclidean_operator_norm_matches_svd():
    rng = np.random.default_rng(3)
    for n in (1, 2, 5, 20):
        A = rng.standard_normal((n, n))
        assert NormSpec.euclidean().operator_norm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-9)


def test_metric_norm_and_coordinates():
    M = np.array([[4.0, 1.0], [1.0, 3.0]])
    ns = NormSpec.metric(M)
    v = np.array([0.3, -1.2])
    assert ns.norm(v) == pytest.approx(np.sqrt(v @ M @ v))
    assert np.allclose(ns.from_coords(ns.to_coords(v)), v)


def test_metric_operator_norm_is_induced():
    rng = np.random.default_rng(5)
    M = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    ns = NormSpec.metric(M)
    A = rng.standard_normal((3, 3))
    op = ns.operator_norm(A)
    ratios = [ns.norm(A @ v) / ns.norm(v) for v in rng.standard_normal((4000, 3))]
    assert max(ratios) <= op * (1 + 1e-10)
    assert max(ratios) >= 0.95 * op


def test_scalar_metric_operator_norm_is_exact():
    ns = NormSpec.metric([[1 / 1.15**2]])
    assert ns.operator_norm(np.array([[-2.5]])) == 2.5


@pytest.mark.parametrize("M", [[[1.0, 2.0], [2.0, 1.0]], [[1.0, 0.1], [0.0, 1.0]], [[1.0, 0.0], [0.0]]])
def test_metric_rejects_bad_matrices(M):
    with pytest.raises(Exception):
        NormSpec.metric(M)


def test_round_trip_dict():
    ns = NormSpec.metric([[2.0, 0.0], [0.0, 0.5]])
    again = NormSpec.from_dict(ns.to_dict())
    assert np.array_equal(again.matrix, ns.matrix)
    assert NormSpec.from_dict({"kind": "euclidean"}).kind == "euclidean"


@settings(max_examples=60, deadline=None)
@given(arrays(float, (3, 3), elements=finite))
def test_power_iteration_agrees_with_svd(B):
    assert power_iteration_norm(B) == pytest.approx(np.linalg.norm(B, 2), rel=1e-8, abs=1e-12)
