"""Inexact Newton iteration with a fixed relative residual tolerance.

Each step ``S_k`` only has to satisfy

    ||A0^{-1} [F(z_k) + F'(z_k) S_k]|| <= theta ||A0^{-1} F(z_k)||,

with ``A0 = F'(z0)`` factorized once at the start point and never refreshed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .krylov import gmres_until
from .majorant import Certificate, MajorantFunction, derive_certificate, shift_majorant
from .norms import NormSpec
from .scalar import SEED, MajorantState, ScalarStepError, n_theta_step

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
RCOND_FLOOR = 1e3 * EPS


class StepFailure(RuntimeError):
    def __init__(self, message, best_relative_residual=math.nan):
        super().__init__(message)
        self.best_relative_residual = best_relative_residual


class EnvelopeViolation(RuntimeError):
    def __init__(self, bound: str, step: int, measured: float, limit: float):
        super().__init__(f"{bound} violated at step {step}: {measured!r} > {limit!r}")
        self.bound = bound
        self.step = step
        self.measured = measured
        self.limit = limit


def fd_jacobian(residual_at, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(residual_at(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = 1e-6 * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (np.atleast_1d(residual_at(x + e)) - np.atleast_1d(residual_at(x - e))) / (2 * h)
    return J


@dataclass(frozen=True)
class OperatorProblem:
    residual_at: Callable[[np.ndarray], np.ndarray]
    jacobian_at: Callable[[np.ndarray], np.ndarray]
    base_point: np.ndarray
    domain_radius: float = math.inf
    norm: NormSpec = field(default_factory=NormSpec.euclidean)
    name: str = "problem"

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.base_point, dtype=float))
        object.__setattr__(self, "base_point", x0)
        J0 = self.jacobian(x0)
        if J0.shape != (x0.size, x0.size):
            raise ValueError(f"jacobian shape {J0.shape} does not match dimension {x0.size}")
        if 1.0 / np.linalg.cond(J0) < RCOND_FLOOR:
            raise ValueError("jacobian at the base point is singular")
        mismatch = self.jacobian_mismatch(x0)
        if mismatch > 1e-5:
            raise ValueError(f"jacobian disagrees with finite differences (relative error {mismatch:.3g})")

    @property
    def dimension(self) -> int:
        return self.base_point.size

    def residual(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.residual_at(np.asarray(x, dtype=float)), dtype=float))

    def jacobian(self, x) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.jacobian_at(np.asarray(x, dtype=float)), dtype=float))

    def jacobian_mismatch(self, x=None) -> float:
        x = self.base_point if x is None else np.asarray(x, dtype=float)
        J = self.jacobian(x)
        Jfd = fd_jacobian(self.residual, x)
        return float(np.max(np.abs(J - Jfd)) / max(1.0, np.max(np.abs(J))))


@dataclass(frozen=True)
class StepResult:
    step: np.ndarray
    relative_residual: float
    inner_iterations: int


def _check_conditioning(J):
    rc = 1.0 / np.linalg.cond(J)
    if not rc >= RCOND_FLOOR:
        raise StepFailure(f"jacobian numerically singular (rcond {rc:.3g})")


def relative_residual(problem: OperatorProblem, base_lu, z, S) -> float:
    """``||A0^{-1}[F(z) + F'(z) S]|| / ||A0^{-1} F(z)||`` (0 when ``F(z) = 0``)."""
    Fz = problem.residual(z)
    denom = problem.norm.norm(linalg.lu_solve(base_lu, Fz))
    num = problem.norm.norm(linalg.lu_solve(base_lu, Fz + problem.jacobian(z) @ S))
    if denom == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / denom


def _unit_direction(direction, n, norm: NormSpec) -> np.ndarray:
    if direction is None:
        d = np.ones(n)
    elif isinstance(direction, (int, np.integer)):
        d = np.random.default_rng(int(direction)).standard_normal(n)
    else:
        d = np.atleast_1d(np.asarray(direction, dtype=float))
    nd = norm.norm(d)
    if nd == 0.0:
        raise ValueError("perturbation direction must be nonzero")
    return d / nd


def residual_controlled_step(
    problem: OperatorProblem,
    base_lu,
    z,
    theta: float,
    mode: str = "iterative",
    target: float | None = None,
    direction=None,
) -> StepResult:
    """Compute a step whose preconditioned relative linear residual is at most ``theta``.

    ``mode="iterative"`` runs restarted GMRES on the ``A0``-preconditioned
    system and stops at the first inner iterate meeting the tolerance (a
    direct solve when ``theta == 0``). ``mode="perturbed"`` takes the exact
    Newton step and adds a perturbation along ``direction`` sized so the
    relative residual equals ``target`` (default ``theta``).
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    z = np.asarray(z, dtype=float)
    n = problem.dimension
    Fz = problem.residual(z)
    if not np.any(Fz):
        return StepResult(np.zeros(n), 0.0, 0)
    J = problem.jacobian(z)
    _check_conditioning(J)
    norm = problem.norm

    if mode == "perturbed":
        target = theta if target is None else target
        if not 0.0 <= target <= theta:
            raise ValueError("perturbation target must lie in [0, theta]")
        S = linalg.solve(J, -Fz)
        if target > 0:
            d = _unit_direction(direction, n, norm)
            r = norm.norm(linalg.lu_solve(base_lu, Fz))
            scale = norm.norm(linalg.lu_solve(base_lu, J @ d))
            if scale <= EPS * max(1.0, r):
                raise StepFailure("perturbation direction is degenerate")
            S = S + (target * r / scale) * d
        return StepResult(S, relative_residual(problem, base_lu, z, S), 0)

    if mode != "iterative":
        raise ValueError(f"unknown step mode {mode!r}")
    if theta == 0:
        S = linalg.solve(J, -Fz)
        return StepResult(S, relative_residual(problem, base_lu, z, S), 0)

    # GMRES in coordinates where the norm is Euclidean: w = C^T v
    def apply(w):
        return norm.to_coords(linalg.lu_solve(base_lu, J @ norm.from_coords(w)))

    rhs = norm.to_coords(linalg.lu_solve(base_lu, -Fz))
    result = gmres_until(apply, rhs, theta, restart=min(n, 30), max_iter=10 * n)
    if not result.converged:
        raise StepFailure(
            f"inner solver stagnated at relative residual {result.relative_residual:.3g} > {theta!r}",
            result.relative_residual,
        )
    S = norm.from_coords(result.solution)
    achieved = relative_residual(problem, base_lu, z, S)
    return StepResult(S, achieved, result.iterations)


# -- traces -------------------------------------------------------------------


@dataclass
class StepRecord:
    k: int
    z: np.ndarray
    dist: float
    residual: float
    step_norm: float
    rel_residual: float
    t: float
    eps: float
    theta: float
    inner_iterations: int = 0


@dataclass
class IterationTrace:
    records: list[StepRecord]
    problem_name: str
    x0: np.ndarray
    rho: float
    schedule: str
    stop_reason: str
    certificate: Certificate | None = None

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]

    @property
    def z0(self) -> np.ndarray:
        return self.records[0].z

    @property
    def iterates(self) -> np.ndarray:
        return np.array([r.z for r in self.records])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def final(self) -> np.ndarray:
        return self.records[-1].z

    def columns(self) -> list[str]:
        n = self.x0.size
        return (
            ["k"]
            + [f"z{i}" for i in range(n)]
            + ["dist_to_z0", "precond_residual", "step_norm", "achieved_rel_residual", "t_k", "eps_k", "theta_k"]
        )

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for r in self.records:
                w.writerow(
                    [r.k, *map(repr, map(float, r.z))]
                    + [repr(float(v)) for v in (r.dist, r.residual, r.step_norm, r.rel_residual, r.t, r.eps, r.theta)]
                )
        meta = {
            "problem": self.problem_name,
            "x0": self.x0.tolist(),
            "rho": self.rho,
            "schedule": self.schedule,
            "stop_reason": self.stop_reason,
        }
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path, problem_name=None, x0=None, rho=None) -> "IterationTrace":
        """Read a trace; metadata comes from the sidecar file unless given explicitly."""
        path = Path(path)
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        records = []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            zcols = [c for c in reader.fieldnames if c.startswith("z") and c[1:].isdigit()]
            for row in reader:
                records.append(
                    StepRecord(
                        k=int(row["k"]),
                        z=np.array([float(row[c]) for c in zcols]),
                        dist=float(row["dist_to_z0"]),
                        residual=float(row["precond_residual"]),
                        step_norm=float(row["step_norm"]),
                        rel_residual=float(row["achieved_rel_residual"]),
                        t=float(row["t_k"]),
                        eps=float(row["eps_k"]),
                        theta=float(row["theta_k"]),
                    )
                )
        if not records:
            raise ValueError(f"{path}: empty trace")
        x0 = x0 if x0 is not None else meta.get("x0", records[0].z)
        return cls(
            records=records,
            problem_name=problem_name or meta.get("problem", "unknown"),
            x0=np.asarray(x0, dtype=float),
            rho=float(rho if rho is not None else meta.get("rho", 0.0)),
            schedule=meta.get("schedule", "fixed"),
            stop_reason=meta.get("stop_reason", "unknown"),
        )


# -- driver -------------------------------------------------------------------


def residual_schedule(k: int, r: float, theta_max: float) -> float:
    """Default adaptive rule ``theta_k = min(theta_max, r_k)``."""
    return min(theta_max, r)


@dataclass
class SolveConfig:
    theta: float = 0.0
    rho: float = 0.0
    start_point: Sequence[float] | None = None
    max_iterations: int = 100
    stop_residual: float = 1e-13
    theta_schedule: str | Callable[[int, float, float], float] = "fixed"
    step_mode: str = "iterative"
    perturbation_target: float | None = None
    perturbation_direction: object = None
    enforce: bool = True


def _theta_rule(cfg: SolveConfig):
    if callable(cfg.theta_schedule):
        return cfg.theta_schedule, "custom"
    if cfg.theta_schedule == "fixed":
        return (lambda k, r, tmax: cfg.theta), "fixed"
    if cfg.theta_schedule == "adaptive":
        return residual_schedule, "adaptive"
    raise ValueError(f"unknown theta schedule {cfg.theta_schedule!r}")


def inexact_newton_solve(problem: OperatorProblem, m: MajorantFunction, cfg: SolveConfig) -> IterationTrace:
    """Run the inexact Newton iteration and record a full trace.

    The paired majorant states evolve from ``(0, 0)`` on the majorant shifted
    to the start point. With ``cfg.enforce`` the tolerance must not exceed
    ``theta_max`` and every step is checked against the residual envelope and
    the containment ball; a breach raises :class:`EnvelopeViolation`.
    """
    rule, schedule_name = _theta_rule(cfg)
    x0 = problem.base_point
    norm = problem.norm
    z = x0.copy() if cfg.start_point is None else np.atleast_1d(np.asarray(cfg.start_point, dtype=float))
    if z.shape != x0.shape:
        raise ValueError("start point has the wrong dimension")
    offset = norm.norm(z - x0)
    if offset > cfg.rho * (1 + 1e-12) + 1e-15:
        raise ValueError(f"start point is {offset!r} from x0, outside rho = {cfg.rho!r}")

    cert = derive_certificate(m, cfg.rho)
    g = shift_majorant(m, cfg.rho)
    gcert = derive_certificate(g, 0.0) if cfg.rho > 0 else cert
    if cfg.enforce and schedule_name == "fixed" and not cert.admits(cfg.theta):
        raise ValueError(f"theta = {cfg.theta!r} exceeds theta_max = {cert.theta_max!r}")

    z0 = z.copy()
    base_lu = linalg.lu_factor(problem.jacobian(z0))
    records: list[StepRecord] = []
    state: MajorantState | None = SEED
    envelope_factor = 1.0
    seed = cert.f0 + 2.0 * cfg.rho
    stop_reason = "max_iterations"

    for k in range(cfg.max_iterations + 1):
        r = norm.norm(linalg.lu_solve(base_lu, problem.residual(z)))
        dist = norm.norm(z - z0)
        t_k, eps_k = (state.t, state.eps) if state is not None else (math.nan, math.nan)
        if cfg.enforce:
            limit = envelope_factor * seed
            if r > limit * (1 + 1e-12) + 1e-15:
                raise EnvelopeViolation("residual envelope", k, r, limit)
            if dist >= cert.lam:
                raise EnvelopeViolation("containment ball", k, dist, cert.lam)
        if r <= cfg.stop_residual or k == cfg.max_iterations:
            if r <= cfg.stop_residual:
                stop_reason = "stop_residual"
            records.append(StepRecord(k, z.copy(), dist, r, math.nan, math.nan, t_k, eps_k, math.nan))
            break
        theta_k = float(rule(k, r, cert.theta_max))
        if cfg.enforce and not cert.admits(theta_k):
            raise ValueError(f"schedule produced theta_{k} = {theta_k!r} > theta_max = {cert.theta_max!r}")
        step = residual_controlled_step(
            problem,
            base_lu,
            z,
            theta_k,
            mode=cfg.step_mode,
            target=None if cfg.perturbation_target is None else min(cfg.perturbation_target, theta_k),
            direction=cfg.perturbation_direction,
        )
        records.append(
            StepRecord(
                k, z.copy(), dist, r, norm.norm(step.step), step.relative_residual, t_k, eps_k, theta_k,
                step.inner_iterations,
            )
        )
        if state is not None:
            try:
                state = n_theta_step(g, gcert, theta_k, state)
            except ScalarStepError as exc:
                logger.warning("majorant pairing stopped at step %d: %s", k, exc)
                state = None
        envelope_factor *= (1.0 + theta_k * theta_k) / 2.0
        z = z + step.step

    return IterationTrace(
        records=records,
        problem_name=problem.name,
        x0=x0.copy(),
        rho=float(cfg.rho),
        schedule=schedule_name,
        stop_reason=stop_reason,
        certificate=cert,
    )


def adaptive_theta_solve(problem: OperatorProblem, m: MajorantFunction, cfg: SolveConfig) -> IterationTrace:
    """Solve with ``theta_k -> 0`` (default ``theta_k = min(theta_max, r_k)``)."""
    if cfg.theta_schedule == "fixed":
        cfg = SolveConfig(**{**cfg.__dict__, "theta_schedule": "adaptive"})
    return inexact_newton_solve(problem, m, cfg)
