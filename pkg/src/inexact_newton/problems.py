"""Problem files, built-in evaluator families and the test corpus.

A problem file is JSON (schema in ``docs/problem_schema.md``). Evaluators are
chosen from a fixed set of families by tag; files never carry code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .majorant import MajorantFunction, make_canonical
from .norms import NormSpec
from .solver import OperatorProblem

FAMILIES = ("polynomial_system", "exp_analytic", "log_barrier", "custom_builtin")
SPOT_CHECK_PAIRS = 100
SPOT_CHECK_RTOL = 1e-6
SPOT_CHECK_SEED = 0


class ProblemLoadError(ValueError):
    def __init__(self, field_name: str, message: str, measured: float | None = None):
        self.field = field_name
        self.measured = measured
        suffix = f" (measured {measured!r})" if measured is not None else ""
        super().__init__(f"{field_name}: {message}{suffix}")


# -- evaluator families -------------------------------------------------------


def _polynomial(params, n):
    try:
        eqs = params["equations"]
        terms = [
            (np.array([t["coef"] for t in eq], dtype=float), np.array([t["powers"] for t in eq], dtype=float))
            for eq in eqs
        ]
    except (KeyError, TypeError) as exc:
        raise ProblemLoadError("parameters.equations", f"malformed polynomial terms: {exc}") from None
    if len(terms) != n or any(P.ndim != 2 or P.shape[1] != n for _, P in terms):
        raise ProblemLoadError("parameters.equations", f"need {n} equations with {n} exponents per term")
    if any(np.any(P < 0) or np.any(P != np.round(P)) for _, P in terms):
        raise ProblemLoadError("parameters.equations", "exponents must be nonnegative integers")

    def F(x):
        return np.array([c @ np.prod(x**P, axis=1) for c, P in terms])

    def J(x):
        out = np.zeros((n, n))
        for i, (c, P) in enumerate(terms):
            for j in range(n):
                Pj = P.copy()
                coef = c * Pj[:, j]
                Pj[:, j] = np.maximum(Pj[:, j] - 1, 0)
                out[i, j] = coef @ np.prod(x**Pj, axis=1)
        return out

    return F, J


def _exp_analytic(params, n):
    shift = np.asarray(params.get("shift"), dtype=float)
    if shift.shape != (n,):
        raise ProblemLoadError("parameters.shift", f"need {n} values")
    return (lambda x: np.exp(x) - shift), (lambda x: np.diag(np.exp(x)))


def _log_barrier(params, n):
    # gradient of sum_i a_i x_i - ln x_i
    a = np.asarray(params.get("weights"), dtype=float)
    if a.shape != (n,):
        raise ProblemLoadError("parameters.weights", f"need {n} values")

    def F(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, a - 1.0 / x, np.nan)

    return F, (lambda x: np.diag(1.0 / x**2))


def _kepler(params, n):
    e = float(params["eccentricity"])
    M = np.asarray(params["mean_anomaly"], dtype=float)
    if M.shape != (n,):
        raise ProblemLoadError("parameters.mean_anomaly", f"need {n} values")
    return (lambda x: x - e * np.sin(x) - M), (lambda x: np.eye(n) - e * np.diag(np.cos(x)))


BUILTINS = {"kepler": _kepler}


def _evaluators(family, params, n):
    if family == "polynomial_system":
        return _polynomial(params, n)
    if family == "exp_analytic":
        return _exp_analytic(params, n)
    if family == "log_barrier":
        return _log_barrier(params, n)
    if family == "custom_builtin":
        name = params.get("name")
        if name not in BUILTINS:
            raise ProblemLoadError("parameters.name", f"unknown builtin {name!r}; have {sorted(BUILTINS)}")
        try:
            return BUILTINS[name](params, n)
        except KeyError as exc:
            raise ProblemLoadError(f"parameters.{exc.args[0]}", "missing") from None
    raise ProblemLoadError("family", f"unknown family {family!r}; expected one of {FAMILIES}")


# -- problem files ------------------------------------------------------------


@dataclass
class ProblemSpec:
    name: str
    family: str
    parameters: dict
    x0: list[float]
    majorant: dict
    domain_radius: float = math.inf
    norm: dict = field(default_factory=lambda: {"kind": "euclidean"})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "parameters": self.parameters,
            "x0": list(map(float, self.x0)),
            "majorant": self.majorant,
            "domain_radius": None if math.isinf(self.domain_radius) else self.domain_radius,
            "norm": self.norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        for key in ("name", "family", "parameters", "x0", "majorant"):
            if key not in d:
                raise ProblemLoadError(key, "required field missing")
        if not isinstance(d["x0"], list) or not d["x0"]:
            raise ProblemLoadError("x0", "must be a non-empty list of numbers")
        radius = d.get("domain_radius")
        return cls(
            name=str(d["name"]),
            family=d["family"],
            parameters=dict(d["parameters"]),
            x0=[float(v) for v in d["x0"]],
            majorant=dict(d["majorant"]),
            domain_radius=math.inf if radius is None else float(radius),
            norm=dict(d.get("norm") or {"kind": "euclidean"}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def build_majorant(self) -> MajorantFunction:
        params = {k: v for k, v in self.majorant.items() if k != "family"}
        family = self.majorant.get("family")
        try:
            return make_canonical(family, **{k: float(v) for k, v in params.items()})
        except TypeError as exc:
            raise ProblemLoadError("majorant", f"bad constants for {family!r}: {exc}") from None
        except ValueError as exc:
            raise ProblemLoadError("majorant", str(exc)) from None

    def build(self, spot_check: bool = True) -> tuple[OperatorProblem, MajorantFunction]:
        n = len(self.x0)
        F, J = _evaluators(self.family, self.parameters, n)
        try:
            norm = NormSpec.from_dict(self.norm)
        except (ValueError, KeyError, np.linalg.LinAlgError) as exc:
            raise ProblemLoadError("norm", str(exc)) from None
        try:
            problem = OperatorProblem(F, J, np.array(self.x0), self.domain_radius, norm, self.name)
        except ValueError as exc:
            raise ProblemLoadError("x0", str(exc)) from None
        m = self.build_majorant()
        if m.domain_radius > self.domain_radius * (1 + 1e-12):
            raise ProblemLoadError(
                "domain_radius", "majorant radius exceeds the operator domain", m.domain_radius
            )
        if spot_check:
            spot_check_constants(problem, m, self.majorant.get("family", "?"))
        return problem, m


def spot_check_constants(problem: OperatorProblem, m: MajorantFunction, family: str) -> None:
    """Check the declared constants on seeded sample pairs; raise naming the offending field."""
    norm = problem.norm
    x0 = problem.base_point
    lu = linalg.lu_factor(problem.jacobian(x0))
    b_measured = norm.norm(linalg.lu_solve(lu, problem.residual(x0)))
    if b_measured > m(0.0) * (1 + SPOT_CHECK_RTOL):
        raise ProblemLoadError("majorant.b", f"||F'(x0)^-1 F(x0)|| exceeds declared b = {m(0.0)!r}", b_measured)

    lip_field = {"quadratic": "majorant.L", "smale": "majorant.gamma"}.get(family, "majorant.b")
    rng = np.random.default_rng(SPOT_CHECK_SEED)
    reach = 0.99 * m.domain_radius
    n = x0.size
    for _ in range(SPOT_CHECK_PAIRS):
        total = reach * rng.uniform()
        a = total * rng.uniform()
        s = total - a
        d1 = rng.standard_normal(n)
        d2 = rng.standard_normal(n)
        x = x0 + a * d1 / norm.norm(d1)
        y = x + s * d2 / norm.norm(d2)
        if s == 0:
            continue
        measured = norm.operator_norm(linalg.lu_solve(lu, problem.jacobian(y) - problem.jacobian(x)))
        bound = m.d(a + s) - m.d(a)
        if measured > bound * (1 + SPOT_CHECK_RTOL) + 1e-14:
            if family == "quadratic":
                raise ProblemLoadError(lip_field, f"Lipschitz quotient exceeds declared L = {m.params['L']!r}", measured / s)
            raise ProblemLoadError(lip_field, f"derivative increment {measured!r} exceeds majorant bound {bound!r}", measured)


def load_spec(path) -> ProblemSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemLoadError("file", f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ProblemLoadError("file", "top level must be an object")
    return ProblemSpec.from_dict(data)


def load_problem(path) -> tuple[OperatorProblem, MajorantFunction]:
    return load_spec(path).build()


# -- corpus -------------------------------------------------------------------


def _poly_terms(*terms):
    return [{"coef": c, "powers": list(p)} for c, p in terms]


def _measured_b(F, J, x0, norm=None):
    norm = norm or NormSpec.euclidean()
    return norm.norm(np.linalg.solve(J(x0), F(x0)))


def corpus_specs() -> list[ProblemSpec]:
    specs = [
        ProblemSpec(
            "sqrt2",
            "polynomial_system",
            {"equations": [_poly_terms((1.0, [2]), (-2.0, [0]))]},
            [1.5],
            {"family": "quadratic", "L": 2.0 / 3.0, "b": 1.0 / 12.0},
        )
    ]

    # circle meets diagonal at (1/sqrt2, 1/sqrt2); F'' only touches row 0
    circle = {"equations": [_poly_terms((1.0, [2, 0]), (1.0, [0, 2]), (-1.0, [0, 0])), _poly_terms((1.0, [1, 0]), (-1.0, [0, 1]))]}
    x0 = np.array([0.75, 0.70])
    F, J = _polynomial(circle, 2)
    L = 2.0 * np.linalg.norm(np.linalg.solve(J(x0), [1.0, 0.0]))
    specs.append(
        ProblemSpec("circle_line", "polynomial_system", circle, x0.tolist(), {"family": "quadratic", "L": float(L), "b": _measured_b(F, J, x0)})
    )

    # gamma = sup_n (1/n!)^(1/(n-1)) = 1/2 at n = 2
    F, J = _exp_analytic({"shift": [1.1]}, 1)
    specs.append(
        ProblemSpec("exp", "exp_analytic", {"shift": [1.1]}, [0.0], {"family": "smale", "gamma": 0.5, "b": _measured_b(F, J, np.zeros(1))})
    )

    x0 = np.array([1.15])
    metric = {"kind": "metric", "matrix": [[1.0 / 1.15**2]]}
    F, J = _log_barrier({"weights": [1.0]}, 1)
    specs.append(
        ProblemSpec(
            "log_barrier",
            "log_barrier",
            {"weights": [1.0]},
            x0.tolist(),
            {"family": "self_concordant", "b": _measured_b(F, J, x0, NormSpec.from_dict(metric))},
            domain_radius=1.0,
            norm=metric,
        )
    )

    cubic = {
        "equations": [
            _poly_terms((1.0, [2, 0, 0]), (1.0, [0, 1, 0]), (-2.0, [0, 0, 0])),
            _poly_terms((1.0, [0, 2, 0]), (1.0, [0, 0, 1]), (-2.0, [0, 0, 0])),
            _poly_terms((1.0, [0, 0, 2]), (1.0, [1, 0, 0]), (-2.0, [0, 0, 0])),
        ]
    }
    x0 = np.array([1.05, 0.97, 1.02])
    F, J = _polynomial(cubic, 3)
    # F'(y) - F'(x) = 2 diag(y - x)
    L = 2.0 * np.linalg.norm(np.linalg.inv(J(x0)), 2)
    specs.append(
        ProblemSpec("poly3", "polynomial_system", cubic, x0.tolist(), {"family": "quadratic", "L": float(L), "b": _measured_b(F, J, x0)})
    )

    kep = {"name": "kepler", "eccentricity": 0.3, "mean_anomaly": [1.0]}
    x0 = np.array([1.25])
    F, J = _kepler(kep, 1)
    L = 0.3 / abs(J(x0)[0, 0])
    specs.append(
        ProblemSpec("kepler", "custom_builtin", kep, x0.tolist(), {"family": "quadratic", "L": float(L), "b": _measured_b(F, J, x0)})
    )
    return specs


def builtin_corpus() -> list[tuple[OperatorProblem, MajorantFunction]]:
    return [spec.build() for spec in corpus_specs()]


def builtin_spec(name: str) -> ProblemSpec:
    for spec in corpus_specs():
        if spec.name == name:
            return spec
    raise KeyError(f"no builtin problem {name!r}")


def write_corpus(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for spec in corpus_specs():
        p = directory / f"{spec.name}.json"
        spec.save(p)
        paths.append(p)
    return paths
