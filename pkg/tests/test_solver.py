import math

import numpy as np
import pytest
from scipy import linalg

from inexact_newton.majorant import derive_certificate, quadratic
from inexact_newton.solver import (
    EnvelopeViolation,
    IterationTrace,
    OperatorProblem,
    SolveConfig,
    adaptive_theta_solve,
    inexact_newton_solve,
    relative_residual,
    residual_controlled_step,
)
from inexact_newton.verifier import check_trace

from conftest import SQRT2


def sine_chain(n=40):
    """Tridiagonal system plus a small sine term; Lipschitz Jacobian with a computable constant."""
    A = 3.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    c = np.linspace(0.5, 1.5, n)
    x0 = np.linalg.solve(A, c)
    p = OperatorProblem(
        lambda x: A @ x + 0.05 * np.sin(x) - c,
        lambda x: A + 0.05 * np.diag(np.cos(x)),
        x0,
        name="sine_chain",
    )
    J0inv = np.linalg.inv(p.jacobian(x0))
    b = np.linalg.norm(J0inv @ p.residual(x0))
    return p, quadratic(0.05 * np.linalg.norm(J0inv, 2), b)


def test_problem_construction_checks():
    with pytest.raises(ValueError, match="singular"):
        OperatorProblem(lambda x: x**2, lambda x: np.diag(2 * x), np.array([0.0]))
    with pytest.raises(ValueError, match="finite differences"):
        OperatorProblem(lambda x: x**2 - 2, lambda x: np.diag(3 * x), np.array([1.5]))
    with pytest.raises(ValueError, match="shape"):
        OperatorProblem(lambda x: x, lambda x: np.eye(3), np.array([1.0, 2.0]))


def test_exact_newton_iterates(sqrt2_raw):
    p, m = sqrt2_raw
    tr = inexact_newton_solve(p, m, SolveConfig(theta=0.0))
    z = tr.iterates[:, 0]
    assert z[:3] == pytest.approx([1.5, 17 / 12, 577 / 408], rel=1e-15)
    assert abs(tr.final[0] - SQRT2) < 1e-15
    assert tr.stop_reason == "stop_residual"
    assert tr.residuals[0] == pytest.approx(1 / 12)


@pytest.mark.parametrize("theta", [0.0, 0.1, 0.5])
def test_perturbed_step_pins_relative_residual(sqrt2_raw, theta):
    p, _ = sqrt2_raw
    lu = linalg.lu_factor(p.jacobian(p.base_point))
    step = residual_controlled_step(p, lu, np.array([1.45]), theta, mode="perturbed")
    assert step.relative_residual == pytest.approx(theta, abs=1e-13)
    assert relative_residual(p, lu, np.array([1.45]), step.step) == step.relative_residual


@pytest.mark.parametrize("theta", [0.05, 0.3, 0.6])
def test_iterative_step_meets_tolerance(theta):
    p, _ = sine_chain()
    z = p.base_point + 0.01
    lu = linalg.lu_factor(p.jacobian(p.base_point))
    step = residual_controlled_step(p, lu, z, theta)
    assert step.relative_residual <= theta
    assert step.inner_iterations >= 1
    exact = residual_controlled_step(p, lu, z, 0.0)
    assert exact.relative_residual < 1e-12


def test_zero_residual_gives_zero_step(sqrt2_raw):
    p, _ = sqrt2_raw
    lu = linalg.lu_factor(p.jacobian(p.base_point))
    q = OperatorProblem(lambda x: x - 1.0, lambda x: np.eye(1), np.array([1.0]))
    assert np.all(residual_controlled_step(q, lu, np.array([1.0]), 0.3).step == 0)


def test_perturbed_target_validation(sqrt2_raw):
    p, _ = sqrt2_raw
    lu = linalg.lu_factor(p.jacobian(p.base_point))
    with pytest.raises(ValueError):
        residual_controlled_step(p, lu, p.base_point, 0.1, mode="perturbed", target=0.2)
    with pytest.raises(ValueError):
        residual_controlled_step(p, lu, p.base_point, 0.1, mode="sideways")


@pytest.mark.parametrize("theta", [0.0, 0.2, 0.45])
def test_large_iterative_solve_is_certified(theta):
    p, m = sine_chain()
    cert = derive_certificate(m)
    assert theta <= cert.theta_max
    tr = inexact_newton_solve(p, m, SolveConfig(theta=theta))
    assert tr.stop_reason == "stop_residual"
    assert all(r.rel_residual <= theta + 1e-14 for r in tr.records[:-1])
    assert check_trace(tr, p, m).passed


def test_theta_above_max_rejected(sqrt2_raw):
    p, m = sqrt2_raw
    with pytest.raises(ValueError, match="theta_max"):
        inexact_newton_solve(p, m, SolveConfig(theta=0.6))
    tr = inexact_newton_solve(p, m, SolveConfig(theta=0.6, enforce=False, step_mode="perturbed", max_iterations=20))
    assert len(tr) > 1


def test_understated_majorant_trips_envelope(sqrt2_raw):
    p, _ = sqrt2_raw
    with pytest.raises(EnvelopeViolation) as err:
        inexact_newton_solve(p, quadratic(2 / 3, 0.01), SolveConfig(theta=0.0))
    assert err.value.step == 0


def test_start_point_outside_rho(sqrt2_raw):
    p, m = sqrt2_raw
    with pytest.raises(ValueError, match="outside rho"):
        inexact_newton_solve(p, m, SolveConfig(rho=0.01, start_point=[1.55]))


def test_perturbed_start_converges(sqrt2_raw):
    p, m = sqrt2_raw
    tr = inexact_newton_solve(p, m, SolveConfig(theta=0.3, rho=0.05, start_point=[1.55], step_mode="perturbed"))
    assert abs(tr.final[0] - SQRT2) < 1e-12
    cert = derive_certificate(m, 0.05)
    assert np.all(tr.residuals <= [cert.envelope(k, 0.3) * (1 + 1e-12) for k in range(len(tr))])


def test_adaptive_schedule_goes_to_zero(sqrt2_raw):
    p, m = sqrt2_raw
    tr = adaptive_theta_solve(p, m, SolveConfig(step_mode="perturbed"))
    thetas = [r.theta for r in tr.records[:-1]]
    assert thetas[0] == pytest.approx(min(derive_certificate(m).theta_max, 1 / 12))
    assert all(a >= b for a, b in zip(thetas, thetas[1:]))
    assert thetas[-1] < 1e-6
    assert tr.schedule == "adaptive"


def test_custom_schedule(sqrt2_raw):
    p, m = sqrt2_raw
    tr = inexact_newton_solve(p, m, SolveConfig(theta_schedule=lambda k, r, tmax: tmax / (k + 2), step_mode="perturbed"))
    assert tr.records[0].theta == pytest.approx(0.25, rel=1e-9)
    assert tr.schedule == "custom"


def test_paired_states_follow_scalar_map(sqrt2_raw):
    p, m = sqrt2_raw
    tr = inexact_newton_solve(p, m, SolveConfig(theta=0.25, step_mode="perturbed"))
    for rec in tr.records:
        assert rec.dist <= rec.t + 1e-15


def test_csv_round_trip(tmp_path, sqrt2_raw):
    p, m = sqrt2_raw
    tr = inexact_newton_solve(p, m, SolveConfig(theta=0.25, step_mode="perturbed"))
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "k,z0,dist_to_z0,precond_residual,step_norm,achieved_rel_residual,t_k,eps_k,theta_k"
    back = IterationTrace.from_csv(path)
    assert back.problem_name == "sqrt2"
    assert np.array_equal(back.iterates, tr.iterates)
    assert np.array_equal(back.residuals, tr.residuals)
    assert math.isnan(back.records[-1].theta)
    assert check_trace(back, p, m).passed


def test_max_iterations_stop(sqrt2_raw):
    p, m = sqrt2_raw
    tr = inexact_newton_solve(p, m, SolveConfig(theta=0.5, step_mode="perturbed", max_iterations=3))
    assert tr.stop_reason == "max_iterations"
    assert len(tr) == 4
