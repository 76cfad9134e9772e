import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inexact_newton.majorant import SQRT2_GAP, derive_certificate, quadratic, self_concordant, smale
from inexact_newton.scalar import (
    SEED,
    MajorantState,
    ScalarStepError,
    majorant_sequence,
    n_theta_step,
    omega_contains,
    sample_omega,
    step_properties,
)


def scalar_newton_root(m, t=0.0, iters=200):
    for _ in range(iters):
        t_new = t - m(t) / m.d(t)
        if t_new == t:
            break
        t = t_new
    return t


majorants = st.one_of(
    st.builds(lambda L, bl: quadratic(L, bl / L), st.floats(0.2, 5.0), st.floats(0.01, 0.49)),
    st.builds(lambda g, gb: smale(g, gb / g), st.floats(0.2, 5.0), st.floats(0.005, 0.98 * SQRT2_GAP)),
    st.builds(self_concordant, st.floats(0.005, 0.98 * SQRT2_GAP)),
)


@settings(max_examples=400, deadline=None)
@given(majorants, st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_omega_invariance(m, frac, seed):
    cert = derive_certificate(m)
    theta = frac * cert.theta_max
    s = sample_omega(m, cert, np.random.default_rng(seed))
    props = step_properties(m, cert, theta, s)
    assert all(props.values()), props


def test_seed_is_in_omega():
    m = quadratic(2 / 3, 1 / 12)
    cert = derive_certificate(m)
    assert omega_contains(m, cert, SEED)[0]
    assert not omega_contains(m, cert, MajorantState(0.6, 0.0))[0]
    assert omega_contains(m, cert, MajorantState(0.1, 0.1))[1] == "ε ≤ κt violated"


@pytest.mark.parametrize("m", [quadratic(2 / 3, 1 / 12), smale(0.5, 0.1), self_concordant(0.15)])
def test_exact_sequence_is_scalar_newton(m):
    cert = derive_certificate(m)
    seq = majorant_sequence(m, cert, 0.0)
    assert seq.limit == pytest.approx(scalar_newton_root(m), rel=1e-12)
    assert seq.limit == pytest.approx(cert.t_star, rel=1e-9)
    assert all(e == 0 for e in seq.eps)


def test_sqrt2_sequence_values():
    m = quadratic(2 / 3, 1 / 12)
    seq = majorant_sequence(m, derive_certificate(m), 0.0)
    assert seq.t[1] == pytest.approx(1 / 12)
    assert seq.stopped_early


@pytest.mark.parametrize("frac", [0.25, 0.5, 1.0])
def test_inexact_sequence_monotone_and_bounded(frac):
    m = smale(1.0, 0.05)
    cert = derive_certificate(m)
    seq = majorant_sequence(m, cert, frac * cert.theta_max, k_max=400)
    t = np.array(seq.t)
    assert np.all(np.diff(t) > 0) or seq.stopped_early
    assert t[-1] < cert.lam
    gaps = [m(s.t) + s.eps for s in seq.states]
    assert gaps[-1] < 1e-10


def test_step_rejects_bad_theta():
    m = quadratic(2 / 3, 1 / 12)
    cert = derive_certificate(m)
    with pytest.raises(ScalarStepError, match="exceeds"):
        n_theta_step(m, cert, 0.51, SEED)
    with pytest.raises(ScalarStepError):
        n_theta_step(m, cert, -0.1, SEED)
    with pytest.raises(ScalarStepError, match="negative-slope"):
        n_theta_step(m, cert, 0.1, MajorantState(1.5, 0.0))


def test_k_max_cap():
    m = quadratic(2 / 3, 1 / 12)
    with pytest.raises(ValueError):
        majorant_sequence(m, derive_certificate(m), 0.0, k_max=10_001)


def test_theta_at_boundary_admitted():
    m = quadratic(2 / 3, 1 / 12)
    cert = derive_certificate(m)
    assert cert.admits(0.5)
    assert math.isfinite(n_theta_step(m, cert, 0.5, SEED).t)
