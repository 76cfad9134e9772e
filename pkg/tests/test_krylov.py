import numpy as np
import pytest

from inexact_newton.krylov import gmres_until


@pytest.mark.parametrize("rtol", [0.5, 0.1, 1e-3, 1e-10])
def test_meets_target_on_true_residual(rtol):
    rng = np.random.default_rng(11)
    B = 4.0 * np.eye(12) + 0.3 * rng.standard_normal((12, 12))
    rhs = rng.standard_normal(12)
    res = gmres_until(lambda w: B @ w, rhs, rtol, restart=5, max_iter=200)
    assert res.converged
    true = np.linalg.norm(rhs - B @ res.solution) / np.linalg.norm(rhs)
    assert true <= rtol
    assert res.relative_residual == pytest.approx(true)


def test_stops_early_for_loose_tolerance():
    rng = np.random.default_rng(2)
    B = np.diag(np.linspace(1, 50, 40))
    rhs = rng.standard_normal(40)
    loose = gmres_until(lambda w: B @ w, rhs, 0.5, restart=40, max_iter=400)
    tight = gmres_until(lambda w: B @ w, rhs, 1e-10, restart=40, max_iter=400)
    assert loose.iterations < tight.iterations


def test_trivial_cases():
    B = np.eye(3)
    assert gmres_until(lambda w: B @ w, np.zeros(3), 0.1, 3, 10).iterations == 0
    res = gmres_until(lambda w: B @ w, np.ones(3), 1.0, 3, 10)
    assert res.converged and np.all(res.solution == 0)


def test_reports_failure_when_budget_exhausted():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((30, 30))
    rhs = rng.standard_normal(30)
    res = gmres_until(lambda w: B @ w, rhs, 1e-12, restart=2, max_iter=4)
    assert not res.converged
    assert res.relative_residual <= 1.0


def test_restarted_stagnation_matches_reference():
    # GMRES(5) stalls on this spectrum; the reference implementation stalls at the same place
    from scipy.sparse.linalg import gmres

    rng = np.random.default_rng(11)
    B = np.eye(12) + 0.3 * rng.standard_normal((12, 12))
    rhs = rng.standard_normal(12)
    ours = gmres_until(lambda w: B @ w, rhs, 1e-3, restart=5, max_iter=200)
    x, _ = gmres(B, rhs, rtol=1e-3, restart=5, maxiter=40)
    ref = np.linalg.norm(rhs - B @ x) / np.linalg.norm(rhs)
    assert not ours.converged
    assert ours.relative_residual == pytest.approx(ref, rel=1e-6)
