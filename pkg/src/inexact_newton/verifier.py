"""Inequality probes tying an operator to its majorant, and trace checking.

Every quantity here is recomputed from fresh evaluations of ``F``, ``F'``
and ``f``. Nothing is read back from the solver except the iterates and the
tolerances it claims to have used, so a disagreement points at a real bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .majorant import Certificate, MajorantFunction, derive_certificate, scalar_linearization_error
from .solver import IterationTrace, OperatorProblem

DEFAULT_SEED = 20101112
DEFAULT_TOL = 1e-10
RATIO_TOL = 1e-12
RATIO_CUTOFF = 1e-12


class ProvenanceError(ValueError):
    """Trace and problem/certificate do not belong together."""


@dataclass
class ProbeReport:
    name: str
    slacks: np.ndarray
    tolerance: float = DEFAULT_TOL
    indices: np.ndarray | None = None
    rejected: int = 0
    note: str = ""
    components: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.slacks = np.asarray(self.slacks, dtype=float)
        if self.indices is None:
            self.indices = np.arange(self.slacks.size)
        self.indices = np.asarray(self.indices, dtype=int)

    @property
    def samples(self) -> int:
        return int(self.slacks.size)

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min()) if self.slacks.size else math.inf

    @property
    def max_slack(self) -> float:
        return float(self.slacks.max()) if self.slacks.size else math.inf

    @property
    def violations(self) -> list[int]:
        return [int(i) for i in self.indices[self.slacks < -self.tolerance]]

    @property
    def first_violation(self) -> int | None:
        v = self.violations
        return v[0] if v else None

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tolerance

    def summary(self) -> str:
        status = "pass" if self.passed else f"FAIL at {self.first_violation}"
        extra = f", rejected {self.rejected}" if self.rejected else ""
        return f"{self.name}: {status} (n={self.samples}, min slack {self.min_slack:.3e}{extra})"


# -- sampling -----------------------------------------------------------------


def _unit(rng, n, norm):
    d = rng.standard_normal(n)
    return d / norm.norm(d)


def sample_ball(problem: OperatorProblem, radius: float, n: int, seed: int = DEFAULT_SEED) -> list[np.ndarray]:
    """``n`` points in ``B(x0, radius)`` (problem norm), radius drawn uniformly."""
    rng = np.random.default_rng(seed)
    x0 = problem.base_point
    return [x0 + radius * rng.uniform() * _unit(rng, x0.size, problem.norm) for _ in range(n)]


def sample_pairs(problem: OperatorProblem, reach: float, n: int, seed: int = DEFAULT_SEED):
    """Pairs ``(x, y)`` with ``||x - x0|| + ||y - x|| < reach``."""
    rng = np.random.default_rng(seed)
    x0 = problem.base_point
    out = []
    for _ in range(n):
        total = reach * rng.uniform()
        a = total * rng.uniform()
        x = x0 + a * _unit(rng, x0.size, problem.norm)
        y = x + (total - a) * _unit(rng, x0.size, problem.norm)
        out.append((x, y))
    return out


# -- operator/majorant probes -------------------------------------------------


def _precond(problem, x0=None):
    x0 = problem.base_point if x0 is None else x0
    return linalg.lu_factor(problem.jacobian(x0))


def probe_banach_bound(
    problem: OperatorProblem,
    m: MajorantFunction,
    samples=None,
    n: int = 200,
    seed: int = DEFAULT_SEED,
    tol: float = DEFAULT_TOL,
) -> ProbeReport:
    """``||F'(x)^{-1} F'(x0)|| <= 1 / (-f'(t))`` for ``||x - x0|| <= t < t_bar``.

    ``samples`` is a sequence of ``(x, t)``; by default points are drawn in
    ``B(x0, 0.9 t_bar)`` with ``t = ||x - x0||``.
    """
    t_bar = derive_certificate(m).t_bar
    norm = problem.norm
    x0 = problem.base_point
    if samples is None:
        samples = [(x, norm.norm(x - x0)) for x in sample_ball(problem, 0.9 * t_bar, n, seed)]
    J0 = problem.jacobian(x0)
    slacks, idx, rejected = [], [], 0
    for i, (x, t) in enumerate(samples):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not (norm.norm(x - x0) <= t * (1 + 1e-14) and 0 <= t < t_bar):
            rejected += 1
            continue
        measured = norm.operator_norm(np.linalg.solve(problem.jacobian(x), J0))
        slacks.append(1.0 / (-m.d(t)) - measured)
        idx.append(i)
    return ProbeReport("banach_bound", slacks, tol, idx, rejected)


def probe_linearization_bounds(
    problem: OperatorProblem,
    m: MajorantFunction,
    pairs=None,
    n: int = 500,
    seed: int = DEFAULT_SEED,
    tol: float = DEFAULT_TOL,
) -> ProbeReport:
    """``||A0^{-1} E_F(y, x)||`` against ``e_f(t + s, t)`` and ``(f'(t+s) - f'(t)) s / 2``.

    ``t = ||x - x0||`` and ``s = ||y - x||``; each sample's slack is the
    smaller of the two.
    """
    R = m.domain_radius
    norm = problem.norm
    x0 = problem.base_point
    if pairs is None:
        pairs = sample_pairs(problem, 0.99 * R, n, seed)
    lu = _precond(problem)
    slacks, idx, rejected = [], [], 0
    first, second = [], []
    for i, (x, y) in enumerate(pairs):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        t, s = norm.norm(x - x0), norm.norm(y - x)
        if not t + s < R:
            rejected += 1
            continue
        E = problem.residual(y) - problem.residual(x) - problem.jacobian(x) @ (y - x)
        measured = norm.norm(linalg.lu_solve(lu, E))
        a = scalar_linearization_error(m, t + s, t) - measured
        b = 0.5 * (m.d(t + s) - m.d(t)) * s - measured if s > 0 else a
        first.append(a)
        second.append(b)
        slacks.append(min(a, b))
        idx.append(i)
    comps = {}
    if first:
        comps = {"taylor": float(min(first)), "taylor_quadratic": float(min(second))}
    return ProbeReport("linearization_bounds", slacks, tol, idx, rejected, components=comps)


def probe_residual_envelope(
    problem: OperatorProblem,
    m: MajorantFunction,
    points=None,
    n: int = 500,
    seed: int = DEFAULT_SEED,
    tol: float = DEFAULT_TOL,
) -> ProbeReport:
    """``-f(r) <= ||A0^{-1} F(y)|| <= f(r) + 2r`` and ``||A0^{-1} F'(y)|| <= 2 + f'(r)``, ``r = ||y - x0||``."""
    R = m.domain_radius
    norm = problem.norm
    x0 = problem.base_point
    if points is None:
        points = sample_ball(problem, 0.99 * R, n, seed)
    lu = _precond(problem)
    slacks, idx, rejected = [], [], 0
    lower, upper, jac = [], [], []
    for i, y in enumerate(points):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        r = norm.norm(y - x0)
        if not r < R:
            rejected += 1
            continue
        measured = norm.norm(linalg.lu_solve(lu, problem.residual(y)))
        jac_norm = norm.operator_norm(linalg.lu_solve(lu, problem.jacobian(y)))
        f_r = m(r)
        parts = (measured + f_r, f_r + 2 * r - measured, 2.0 + m.d(r) - jac_norm)
        lower.append(parts[0])
        upper.append(parts[1])
        jac.append(parts[2])
        slacks.append(min(parts))
        idx.append(i)
    comps = {}
    if lower:
        comps = {"lower": float(min(lower)), "upper": float(min(upper)), "jacobian": float(min(jac))}
    return ProbeReport("residual_envelope", slacks, tol, idx, rejected, components=comps)


def run_probes(problem, m, samples: int = 500, seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOL):
    return [
        probe_banach_bound(problem, m, n=samples, seed=seed, tol=tol),
        probe_linearization_bounds(problem, m, n=samples, seed=seed, tol=tol),
        probe_residual_envelope(problem, m, n=samples, seed=seed, tol=tol),
    ]


# -- trace checking -----------------------------------------------------------


def reference_solution(problem: OperatorProblem, start=None, stop: float = 1e-14, max_iter: int = 200) -> np.ndarray:
    """High-accuracy limit by plain exact Newton from ``start`` (default ``x0``)."""
    z = problem.base_point.copy() if start is None else np.atleast_1d(np.asarray(start, dtype=float))
    lu = linalg.lu_factor(problem.jacobian(z))
    for _ in range(max_iter):
        Fz = problem.residual(z)
        if problem.norm.norm(linalg.lu_solve(lu, Fz)) <= stop:
            break
        z = z - np.linalg.solve(problem.jacobian(z), Fz)
    return z


@dataclass
class TraceCheck:
    reports: dict[str, ProbeReport]
    cutoff: float = RATIO_CUTOFF

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values())

    def __getitem__(self, name) -> ProbeReport:
        return self.reports[name]

    def summary(self) -> str:
        return "\n".join(r.summary() for r in self.reports.values())


def check_trace(
    trace: IterationTrace,
    problem: OperatorProblem,
    m: MajorantFunction,
    x_star=None,
    cert: Certificate | None = None,
    tol: float = DEFAULT_TOL,
    cutoff: float = RATIO_CUTOFF,
) -> TraceCheck:
    """Check a solver trace against the guaranteed bounds.

    Reports (each indexed by step ``k``):

    - ``k_membership``: ``||z_k - z0|| <= t_k`` and ``r_k <= g(t_k) + eps_k``
    - ``containment``: ``||z_k - z0|| < lambda``
    - ``residual_condition``: the step's preconditioned linear residual is at most ``theta_k r_k``
    - ``envelope``: ``r_k <= prod_j (1 + theta_j^2)/2 * (f(0) + 2 rho)``
    - ``step_bound``: ``||z_{k+1} - z_k|| <= t_{k+1} - t_k``
    - ``composite_contraction`` / ``composite_contraction_stated``: the
      two-term error recursion in shifted-majorant form and in the form with
      ``f'(lambda + rho) + 2|f'(rho)|``
    - ``q_linear``: ``e_{k+1} <= [(1+theta)/2 + 2 theta/kappa] e_k`` when
      every ``theta_k`` is below ``kappa/(4+kappa)``
    - ``limit_location``: ``||x* - x0|| <= t*``

    ``g`` is the majorant shifted to ``z0`` and ``(t_k, eps_k)`` are
    regenerated here from ``(0, 0)`` with the trace's ``theta_k``. Ratio checks
    skip steps with ``r_k < cutoff``.
    """
    norm = problem.norm
    x0 = problem.base_point
    rho = trace.rho
    if trace.problem_name not in ("unknown", problem.name):
        raise ProvenanceError(f"trace is for {trace.problem_name!r}, not {problem.name!r}")
    z = trace.iterates
    if z.shape[1] != x0.size:
        raise ProvenanceError("trace dimension does not match the problem")
    z0 = z[0]
    if norm.norm(z0 - x0) > rho * (1 + 1e-12) + tol:
        raise ProvenanceError(f"start point lies outside B(x0, rho = {rho!r})")
    cert = cert or derive_certificate(m, rho)
    if cert.rho != rho:
        raise ProvenanceError(f"certificate rho {cert.rho!r} does not match trace rho {rho!r}")

    # shifted majorant at z0, written out directly
    slope = -m.d(rho)

    def g(t):
        return (m(t + rho) + 2 * rho) / slope

    def dg(t):
        return m.d(t + rho) / slope

    K = len(z)
    thetas = np.array([rec.theta for rec in trace.records])
    lu = linalg.lu_factor(problem.jacobian(z0))
    F = [problem.residual(zk) for zk in z]
    r = np.array([norm.norm(linalg.lu_solve(lu, Fk)) for Fk in F])
    dist = np.array([norm.norm(zk - z0) for zk in z])

    t = np.zeros(K)
    eps = np.zeros(K)
    for k in range(K - 1):
        gap = g(t[k]) + eps[k]
        t[k + 1] = t[k] - (1 + thetas[k]) * gap / dg(t[k])
        eps[k + 1] = eps[k] + 2 * thetas[k] * gap

    reports: dict[str, ProbeReport] = {}
    member = np.minimum(t - dist, np.array([g(tk) for tk in t]) + eps - r)
    reports["k_membership"] = ProbeReport("k_membership", member, tol)
    reports["containment"] = ProbeReport(
        "containment", cert.lam - dist, 0.0, note="strict: slack must be positive"
    )
    if reports["containment"].slacks.size and np.any(reports["containment"].slacks <= 0):
        reports["containment"].slacks = np.where(
            reports["containment"].slacks <= 0, -np.inf, reports["containment"].slacks
        )

    cond, steps = [], []
    for k in range(K - 1):
        S = z[k + 1] - z[k]
        lin = norm.norm(linalg.lu_solve(lu, F[k] + problem.jacobian(z[k]) @ S))
        cond.append(thetas[k] * r[k] - lin)
        steps.append((t[k + 1] - t[k]) - norm.norm(S))
    reports["residual_condition"] = ProbeReport("residual_condition", cond, tol)
    reports["step_bound"] = ProbeReport("step_bound", steps, tol)

    factors = np.concatenate([[1.0], np.cumprod((1 + thetas[:-1] ** 2) / 2)])
    stated = factors * (cert.f0 + 2 * rho)
    proven = factors * g(0.0)
    reports["envelope"] = ProbeReport(
        "envelope", stated - r, tol, components={"stated": float(np.min(stated - r)), "shifted": float(np.min(proven - r))}
    )

    if x_star is None:
        x_star = reference_solution(problem, start=z0)
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    err = np.array([norm.norm(x_star - zk) for zk in z])
    measurable = [k for k in range(K - 1) if r[k] >= cutoff]

    lam = cert.lam
    R = m.domain_radius
    if lam < R - rho:
        a_shift = m.d2(lam + rho) / abs(m.d(lam + rho))
        c_shift = (2 + dg(lam)) / abs(dg(lam))
        c_stated = (m.d(lam + rho) + 2 * abs(m.d(rho))) / abs(m.d(lam + rho))
        comp, comp_stated = [], []
        for k in measurable:
            th = thetas[k]
            comp.append((0.5 * (1 + th) * a_shift * err[k] + th * c_shift) * err[k] - err[k + 1])
            comp_stated.append((0.5 * (1 + th) * a_shift * err[k] + th * c_stated) * err[k] - err[k + 1])
        reports["composite_contraction"] = ProbeReport("composite_contraction", comp, RATIO_TOL, measurable)
        reports["composite_contraction_stated"] = ProbeReport(
            "composite_contraction_stated", comp_stated, RATIO_TOL, measurable
        )

    steps_theta = thetas[: K - 1]
    if K > 1 and np.all(steps_theta < cert.qlinear_threshold):
        q = [(0.5 * (1 + thetas[k]) + 2 * thetas[k] / cert.kappa) * err[k] - err[k + 1] for k in measurable]
        reports["q_linear"] = ProbeReport("q_linear", q, RATIO_TOL, measurable)

    reports["limit_location"] = ProbeReport("limit_location", [cert.t_star - norm.norm(x_star - x0)], 1e-9)
    return TraceCheck(reports, cutoff)


def double_step(trace: IterationTrace, problem: OperatorProblem, index: int) -> IterationTrace:
    """Copy of ``trace`` whose iterate ``index`` is reached by twice the recorded step."""
    if not 1 <= index < len(trace):
        raise IndexError("index must point at an iterate reached by a step")
    records = list(trace.records)
    prev, cur = records[index - 1], records[index]
    z_bad = prev.z + 2.0 * (cur.z - prev.z)
    z0 = records[0].z
    lu = linalg.lu_factor(problem.jacobian(z0))
    records[index - 1] = replace(prev, step_norm=2.0 * prev.step_norm)
    records[index] = replace(
        cur,
        z=z_bad,
        dist=problem.norm.norm(z_bad - z0),
        residual=problem.norm.norm(linalg.lu_solve(lu, problem.residual(z_bad))),
    )
    return replace(trace, records=records)


def error_ratios(trace: IterationTrace, x_star, norm=None, floor: float = 0.0) -> list[float]:
    """Consecutive ratios ``||x* - z_{k+1}|| / ||x* - z_k||`` over errors above ``floor``."""
    z = trace.iterates
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    nf = norm.norm if norm is not None else np.linalg.norm
    e = [nf(x_star - zk) for zk in z]
    return [e[k + 1] / e[k] for k in range(len(e) - 1) if e[k] > floor and e[k + 1] > floor]


def monotone_error_holds(m: MajorantFunction, a: float, b: float, s: float, t: float) -> bool:
    """``e_f(a+b, b) <= e_f(t+s, t)`` for ``0 <= b <= t``, ``0 <= a <= s``, ``t + s < R``."""
    lhs = scalar_linearization_error(m, a + b, b)
    rhs = scalar_linearization_error(m, t + s, t)
    return lhs <= rhs + 1e-14 * max(1.0, abs(rhs))
