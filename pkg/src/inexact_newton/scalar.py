"""Scalar shadow iteration on ``(t, eps)`` that bounds the vector iteration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .majorant import Certificate, MajorantFunction

STOP_GAP = 1e-15


class MajorantState(NamedTuple):
    t: float
    eps: float


SEED = MajorantState(0.0, 0.0)


class ScalarStepError(ValueError):
    pass


def n_theta_step(m: MajorantFunction, cert: Certificate, theta: float, s: MajorantState) -> MajorantState:
    """One step ``(t, eps) -> (t - (1+theta)(f+eps)/f'(t), eps + 2 theta (f+eps))``.

    ``cert`` must be the rho = 0 certificate of ``m`` (use the shifted majorant
    for perturbed start points).
    """
    if theta < 0:
        raise ScalarStepError("theta must be nonnegative")
    if not cert.admits(theta):
        raise ScalarStepError(f"tolerance theta = {theta!r} exceeds theta_max = {cert.theta_max!r}")
    t, eps = s
    slope = m.d(t)
    if slope >= 0:
        raise ScalarStepError(f"left the negative-slope region at t = {t!r}")
    gap = m(t) + eps
    return MajorantState(t - (1.0 + theta) * gap / slope, eps + 2.0 * theta * gap)


def omega_contains(m: MajorantFunction, cert: Certificate, s: MajorantState) -> tuple[bool, str]:
    t, eps = s
    if not 0.0 <= t:
        return False, "t >= 0 violated"
    if not t < cert.lam:
        return False, "t < λ violated"
    if not 0.0 <= eps:
        return False, "ε >= 0 violated"
    if not eps <= cert.kappa * t:
        return False, "ε ≤ κt violated"
    if not m(t) + eps > 0:
        return False, "f(t)+ε > 0 violated"
    return True, "in Ω"


@dataclass
class MajorantSequence:
    states: list[MajorantState]
    limit: float
    stopped_early: bool
    stop_gap: float = STOP_GAP

    def __len__(self):
        return len(self.states)

    @property
    def t(self) -> list[float]:
        return [s.t for s in self.states]

    @property
    def eps(self) -> list[float]:
        return [s.eps for s in self.states]


def majorant_sequence(
    m: MajorantFunction,
    cert: Certificate,
    theta: float,
    s0: MajorantState = SEED,
    k_max: int = 100,
) -> MajorantSequence:
    """Iterate :func:`n_theta_step` up to ``k_max`` times.

    Stops early once ``f(t) + eps < 1e-15``; the last ``t`` is the limit estimate.
    """
    if k_max > 10_000:
        raise ValueError("k_max is capped at 10000")
    states = [MajorantState(float(s0[0]), float(s0[1]))]
    stopped = False
    for _ in range(k_max):
        s = states[-1]
        if m(s.t) + s.eps < STOP_GAP:
            stopped = True
            break
        states.append(n_theta_step(m, cert, theta, s))
    return MajorantSequence(states, states[-1].t, stopped)


def step_properties(m: MajorantFunction, cert: Certificate, theta: float, s: MajorantState) -> dict[str, bool]:
    """Conditions one step from ``s`` in Omega must satisfy, each evaluated in floating point."""
    t, eps = s
    gap = m(t) + eps
    nxt = n_theta_step(m, cert, theta, s)
    new_gap = m(nxt.t) + nxt.eps
    inside, _ = omega_contains(m, cert, nxt)
    return {
        "stays_in_omega": inside,
        "t_increases": nxt.t > t,
        "eps_nondecreasing": nxt.eps >= eps,
        "gap_lower": theta * gap <= new_gap,
        "gap_contracts": new_gap < 0.5 * (1.0 + theta * theta) * gap,
    }


def sample_omega(m: MajorantFunction, cert: Certificate, rng) -> MajorantState:
    """Draw ``(t, eps)`` in Omega by rejection."""
    while True:
        t = cert.lam * rng.uniform()
        eps = cert.kappa * t * rng.uniform()
        s = MajorantState(t, eps)
        if omega_contains(m, cert, s)[0]:
            return s
