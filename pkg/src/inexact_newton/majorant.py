"""Scalar majorant functions and the convergence certificate derived from them.

A majorant ``f: [0, R) -> R`` is a convex scalar model whose derivative
increments dominate those of the preconditioned Jacobian. Everything the
convergence theory guarantees (error radius, uniqueness radius, admissible
residual tolerance, contraction factors) is a number computed from ``f``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import optimize

SQRT2_GAP = 3.0 - 2.0 * math.sqrt(2.0)

ROOT_XTOL = 1e-12
SCAN_POINTS = 64
SCAN_REFINEMENTS = 4
# theta within root-finding accuracy of theta_max counts as admissible
THETA_SLACK = 1e-9


class MajorantError(ValueError):
    """Invalid majorant parameters or hypotheses."""


class DomainError(ValueError):
    """Argument outside ``[0, R)``."""


class CertificateError(ValueError):
    """A certificate cannot be derived (bad ``rho`` or unverifiable hypothesis)."""


def _fd_derivative(fn: Callable[[float], float], R: float) -> Callable[[float], float]:
    def d(t):
        h = 1e-6 * max(1.0, t)
        lo, hi = t - h, t + h
        if lo < 0.0:
            return (fn(hi) - fn(t)) / h
        if hi >= R:
            return (fn(t) - fn(lo)) / h
        return (fn(hi) - fn(lo)) / (2 * h)

    return d


@dataclass(frozen=True)
class MajorantFunction:
    domain_radius: float
    value_at: Callable[[float], float]
    derivative_at: Callable[[float], float]
    left_second_at: Callable[[float], float] | None = None
    family: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.domain_radius > 0:
            raise MajorantError("domain radius must be positive")
        if self.left_second_at is None:
            object.__setattr__(
                self, "left_second_at", _fd_derivative(self.derivative_at, self.domain_radius)
            )

    def __call__(self, t: float) -> float:
        return self.value_at(t)

    def d(self, t: float) -> float:
        return self.derivative_at(t)

    def d2(self, t: float) -> float:
        return self.left_second_at(t)

    def value_near_edge(self) -> float:
        """``lim f(t)`` as ``t -> R-``, evaluated at ``R`` when ``f`` is finite there."""
        return _edge_value(self.value_at, self.domain_radius)

    def derivative_near_edge(self) -> float:
        return _edge_value(self.derivative_at, self.domain_radius)


def _edge_value(fn, R):
    try:
        v = float(fn(R))
    except (ZeroDivisionError, OverflowError, ValueError):
        v = math.nan
    if math.isfinite(v):
        return v
    return float(fn(R * (1.0 - 1e-15)))


# -- canonical families -------------------------------------------------------


def quadratic(L: float, b: float) -> MajorantFunction:
    """``f(t) = L t^2 / 2 - t + b`` on ``[0, 1/L)`` (Lipschitz Jacobian)."""
    if not L > 0:
        raise MajorantError("L > 0 violated")
    if not b > 0:
        raise MajorantError("b > 0 violated")
    if not b * L < 0.5:
        raise MajorantError(f"bL < 1/2 violated (bL = {b * L!r})")
    return MajorantFunction(
        domain_radius=1.0 / L,
        value_at=lambda t: 0.5 * L * t * t - t + b,
        derivative_at=lambda t: L * t - 1.0,
        left_second_at=lambda t: L,
        family="quadratic",
        params={"L": L, "b": b},
    )


def _rational(gamma: float, b: float, family: str) -> MajorantFunction:
    return MajorantFunction(
        domain_radius=1.0 / gamma,
        value_at=lambda t: t / (1.0 - gamma * t) - 2.0 * t + b,
        derivative_at=lambda t: 1.0 / (1.0 - gamma * t) ** 2 - 2.0,
        left_second_at=lambda t: 2.0 * gamma / (1.0 - gamma * t) ** 3,
        family=family,
        params={"gamma": gamma, "b": b} if family == "smale" else {"b": b},
    )


def smale(gamma: float, b: float) -> MajorantFunction:
    """``f(t) = t / (1 - gamma t) - 2t + b`` on ``[0, 1/gamma)`` (analytic maps)."""
    if not gamma > 0:
        raise MajorantError("gamma > 0 violated")
    if not b > 0:
        raise MajorantError("b > 0 violated")
    if not gamma * b < SQRT2_GAP:
        raise MajorantError(f"gamma*b < 3-2*sqrt(2) violated (gamma*b = {gamma * b!r})")
    return _rational(gamma, b, "smale")


def self_concordant(b: float) -> MajorantFunction:
    """``f(t) = t / (1 - t) - 2t + b`` on ``[0, 1)`` (Newton decrement in the local norm)."""
    if not b > 0:
        raise MajorantError("b > 0 violated")
    if not b < SQRT2_GAP:
        raise MajorantError(f"b < 3-2*sqrt(2) violated (b = {b!r})")
    return _rational(1.0, b, "self_concordant")


def make_canonical(family: str, **params: float) -> MajorantFunction:
    builders = {"quadratic": quadratic, "smale": smale, "self_concordant": self_concordant}
    try:
        build = builders[family]
    except KeyError:
        raise MajorantError(f"unknown majorant family {family!r}") from None
    return build(**params)


def custom(value_at, derivative_at, domain_radius, left_second_at=None) -> MajorantFunction:
    return MajorantFunction(domain_radius, value_at, derivative_at, left_second_at)


# -- validation ---------------------------------------------------------------


@dataclass
class ValidationReport:
    checks: dict[str, tuple[bool, str]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, (ok, _) in self.checks.items() if not ok]

    def __str__(self):
        return "\n".join(
            f"{name}: {'pass' if ok else 'FAIL'} ({detail})" for name, (ok, detail) in self.checks.items()
        )


def validate_majorant(m: MajorantFunction, grid_size: int = 1024) -> ValidationReport:
    """Check hypotheses h1-h3 and derivative consistency on a grid.

    Failures are recorded in the report, never raised.
    """
    if grid_size < 3:
        raise ValueError("grid_size >= 3 required")
    R = m.domain_radius
    report = ValidationReport()

    f0, fp0 = m(0.0), m.d(0.0)
    report.checks["h1"] = (
        f0 > 0 and abs(fp0 + 1.0) <= 1e-12,
        f"f(0) = {f0:.6g}, f'(0) = {fp0:.6g}",
    )

    grid = R * np.arange(grid_size) / grid_size
    fp = np.array([m.d(t) for t in grid])
    steps = np.diff(fp)
    report.checks["h2_increasing"] = (
        bool(np.all(steps > 0)),
        f"min f' increment {steps.min():.3g}",
    )
    mid = fp[1:-1]
    chord = 0.5 * (fp[:-2] + fp[2:])
    gap = chord - mid
    scale = 1e-12 * np.maximum(1.0, np.abs(chord))
    report.checks["h2_convex"] = (
        bool(np.all(gap >= -scale)),
        f"min chord-minus-midpoint {gap.min():.3g}",
    )

    t_neg = _find_negative(m)
    report.checks["h3"] = (
        t_neg is not None,
        "no t with f(t) < 0 found" if t_neg is None else f"f({t_neg:.6g}) < 0",
    )

    worst = fd_derivative_mismatch(m, 256)
    report.checks["fd_derivative"] = (worst <= 1e-6, f"max relative mismatch {worst:.3g}")
    return report


def fd_derivative_mismatch(m: MajorantFunction, n_points: int = 256) -> float:
    """Largest relative gap between ``f'`` and central differences of ``f`` at interior points."""
    R = m.domain_radius
    worst = 0.0
    for i in range(1, n_points + 1):
        t = R * i / (n_points + 1)
        h = 1e-6 * min(max(1.0, t), R - t, t)
        fd = (m(t + h) - m(t - h)) / (2 * h)
        d = m.d(t)
        worst = max(worst, abs(fd - d) / max(1.0, abs(d)))
    return worst


def _find_negative(m: MajorantFunction) -> float | None:
    for grid in _scan_grids(0.0, m.domain_radius):
        for t in grid:
            if m(t) < 0:
                return float(t)
    return None


# -- root finding -------------------------------------------------------------


def _scan_grids(lo: float, hi: float):
    """Geometric scan grids over ``(lo, hi)`` clustered at both ends, refined x4 on each retry."""
    n = SCAN_POINTS
    for _ in range(SCAN_REFINEMENTS + 1):
        half = n // 2
        u = np.geomspace(1e-13, 0.5, half)
        frac = np.unique(np.concatenate([u, 1.0 - u]))
        yield lo + (hi - lo) * frac
        n *= 4


def bracket_crossing(fn, lo: float, hi: float):
    """First bracket ``[a, b]`` in ``[lo, hi)`` across which ``fn`` changes sign, or ``None``.

    The sign at ``lo`` is the reference; callers use this on monotone or
    single-crossing functions only.
    """
    positive = fn(lo) > 0
    for grid in _scan_grids(lo, hi):
        prev = lo
        for t in grid:
            if (fn(t) > 0) != positive:
                return prev, float(t)
            prev = float(t)
    return None


def bisect(fn, a: float, b: float, xtol: float = ROOT_XTOL) -> float:
    fa, fb = fn(a), fn(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    return float(optimize.bisect(fn, a, b, xtol=xtol, maxiter=400))


# -- certificate --------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    rho: float
    beta: float
    t_star: float
    tau_bar: float
    t_bar: float
    kappa: float
    lam: float
    theta_max: float
    qlinear_threshold: float
    domain_radius: float
    f0: float
    shifted_f0: float
    shifted_t_star: float
    slope_at_rho: float

    @property
    def qlinear_factor(self):
        """``theta -> (1 + theta)/2 + 2 theta / kappa``, the Q-linear contraction bound."""
        return lambda theta: 0.5 * (1.0 + theta) + 2.0 * theta / self.kappa

    def admits(self, theta: float) -> bool:
        return 0.0 <= theta <= self.theta_max * (1.0 + THETA_SLACK)

    def envelope(self, k: int, theta: float) -> float:
        """Residual bound ``((1 + theta^2)/2)^k (f(0) + 2 rho)``."""
        return ((1.0 + theta * theta) / 2.0) ** k * (self.f0 + 2.0 * self.rho)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Certificate":
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})


def _slope_and_sign_radii(m: MajorantFunction):
    """Return ``(t_bar, beta)``."""
    R = m.domain_radius
    br = bracket_crossing(m.d, 0.0, R)
    if br is None:
        t_bar = R
        beta = -m.value_near_edge()
    else:
        t_bar = bisect(m.d, *br)
        beta = -m(t_bar)
    return t_bar, beta


def derive_certificate(m: MajorantFunction, rho: float = 0.0) -> Certificate:
    """Compute all convergence constants of ``m`` for perturbation radius ``rho``.

    ``kappa`` and ``lam`` come from the tangency of the supporting line drawn
    from ``(rho, -2 rho)``: the root of ``H(u) = f(rho+u) + 2 rho - u f'(rho+u)``,
    which is strictly decreasing from ``f(rho) + 2 rho > 0``. ``lam`` is measured
    from the (perturbed) start point.
    """
    R = m.domain_radius
    if rho < 0:
        raise CertificateError("perturbation radius must be nonnegative")
    t_bar, beta = _slope_and_sign_radii(m)
    if not beta > 0:
        raise CertificateError("hypothesis h3 not numerically verifiable")
    if not rho < beta / 2:
        raise CertificateError(f"perturbation radius too large (rho = {rho!r} >= beta/2 = {beta / 2!r})")

    f_edge = m(t_bar) if t_bar < R else m.value_near_edge()
    t_star = bisect(m.value_at, 0.0, t_bar) if f_edge < 0 else t_bar

    tau_bar = R
    if t_bar < R:
        br = bracket_crossing(m.value_at, t_bar, R)
        if br is not None:
            tau_bar = bisect(m.value_at, *br)

    slope = -m.d(rho)
    shifted_f0 = (m(rho) + 2 * rho) / slope

    def H(u):
        return m(rho + u) + 2 * rho - u * m.d(rho + u)

    br = bracket_crossing(H, 0.0, R - rho)
    if br is not None:
        u_c = bisect(H, *br)
        kappa = -m.d(rho + u_c) / slope
        lam = u_c
    else:
        kappa = -(m.value_near_edge() + 2 * rho) / (slope * (R - rho))

        def q(u):
            return m.d(rho + u) + kappa * slope

        br = bracket_crossing(q, 0.0, R - rho)
        lam = bisect(q, *br) if br is not None else R - rho

    def g(u):
        return m(rho + u) + 2 * rho

    shifted_t_star = bisect(g, 0.0, t_bar - rho)

    theta_max = kappa / (2.0 - kappa)
    return Certificate(
        rho=float(rho),
        beta=float(beta),
        t_star=float(t_star),
        tau_bar=float(tau_bar),
        t_bar=float(t_bar),
        kappa=float(kappa),
        lam=float(lam),
        theta_max=float(theta_max),
        qlinear_threshold=float(kappa / (4.0 + kappa)),
        domain_radius=float(R),
        f0=float(m(0.0)),
        shifted_f0=float(shifted_f0),
        shifted_t_star=float(shifted_t_star),
        slope_at_rho=float(slope),
    )


def shift_majorant(m: MajorantFunction, rho: float) -> MajorantFunction:
    """Majorant at a start point ``z0`` with ``||z0 - x0|| <= rho``.

    ``g(t) = -(f(t + rho) + 2 rho) / f'(rho)`` on ``[0, R - rho)``.
    """
    if rho == 0:
        return m
    if rho < 0:
        raise CertificateError("perturbation radius must be nonnegative")
    _, beta = _slope_and_sign_radii(m)
    if not rho < beta / 2:
        raise CertificateError(f"perturbation radius too large (rho = {rho!r} >= beta/2 = {beta / 2!r})")
    slope = -m.d(rho)
    if not slope > 0:
        raise CertificateError("f'(rho) < 0 violated")
    return MajorantFunction(
        domain_radius=m.domain_radius - rho,
        value_at=lambda t: (m(t + rho) + 2 * rho) / slope,
        derivative_at=lambda t: m.d(t + rho) / slope,
        left_second_at=lambda t: m.d2(t + rho) / slope,
        family="custom",
        params={"base_family": m.family, "rho": rho, **m.params},
    )


def scalar_linearization_error(m: MajorantFunction, v: float, t: float) -> float:
    """``e_f(v, t) = f(v) - f(t) - f'(t)(v - t)``."""
    R = m.domain_radius
    for name, x in (("v", v), ("t", t)):
        if not 0.0 <= x < R:
            raise DomainError(f"{name} = {x!r} outside [0, {R!r})")
    return m(v) - (m(t) + m.d(t) * (v - t))


# -- closed forms -------------------------------------------------------------


def quadratic_closed_form(L: float, b: float) -> dict:
    s = math.sqrt(2 * b * L)
    return {
        "kappa": 1.0 - s,
        "lam": s / L,
        "t_star": (1.0 - math.sqrt(1.0 - 2 * L * b)) / L,
        "theta_max": (1.0 - s) / (1.0 + s),
    }


def rational_closed_form(gamma: float, b: float) -> dict:
    """Closed forms for ``t/(1 - gamma t) - 2t + b``, with the ``1/gamma`` scale on the roots."""
    gb = gamma * b
    disc = math.sqrt(1.0 - 6.0 * gb + gb * gb)
    r = math.sqrt(gb)
    return {
        "t_star": (1.0 + gb - disc) / (4.0 * gamma),
        "tau_bar": (1.0 + gb + disc) / (4.0 * gamma),
        "lam": b / (r + gb),
        "kappa": 1.0 - 2.0 * r - gb,
        "theta_max": (1.0 - 2.0 * r - gb) / (1.0 + 2.0 * r + gb),
    }
