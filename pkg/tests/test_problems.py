import json
import math

import numpy as np
import pytest

from inexact_newton.majorant import derive_certificate, validate_majorant
from inexact_newton.problems import (
    ProblemLoadError,
    builtin_spec,
    corpus_specs,
    load_problem,
    load_spec,
    write_corpus,
)
from inexact_newton.solver import SolveConfig, inexact_newton_solve
from inexact_newton.verifier import check_trace, reference_solution


@pytest.fixture
def problem_dir(tmp_path):
    write_corpus(tmp_path)
    return tmp_path


def edit(path, **changes):
    d = json.loads(path.read_text())
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(d.get(key), dict):
            d[key].update(value)
        else:
            d[key] = value
    path.write_text(json.dumps(d))
    return path


def test_sqrt2_file(problem_dir):
    p, m = load_problem(problem_dir / "sqrt2.json")
    assert derive_certificate(m).theta_max == pytest.approx(0.5, rel=1e-10)
    assert p.norm.norm(reference_solution(p) - math.sqrt(2)) < 1e-15


def test_bl_violation_named(problem_dir):
    path = edit(problem_dir / "sqrt2.json", majorant={"b": 0.75})
    with pytest.raises(ProblemLoadError, match="bL < 1/2"):
        load_problem(path)


def test_understated_b_named(problem_dir):
    path = edit(problem_dir / "sqrt2.json", majorant={"b": 0.05})
    with pytest.raises(ProblemLoadError) as err:
        load_problem(path)
    assert err.value.field == "majorant.b"
    assert err.value.measured == pytest.approx(1 / 12)


def test_understated_lipschitz_named(problem_dir):
    path = edit(problem_dir / "poly3.json", majorant={"L": 1.0})
    with pytest.raises(ProblemLoadError) as err:
        load_problem(path)
    assert err.value.field == "majorant.L"
    assert err.value.measured > 1.0


def test_understated_gamma_named(problem_dir):
    path = edit(problem_dir / "exp.json", majorant={"gamma": 0.3})
    with pytest.raises(ProblemLoadError) as err:
        load_problem(path)
    assert err.value.field == "majorant.gamma"


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"family": "fortran"}, "family"),
        ({"x0": []}, "x0"),
        ({"parameters": {"equations": [[{"coef": 1.0, "powers": [2, 1]}]]}}, "parameters.equations"),
        ({"norm": {"kind": "metric", "matrix": [[-1.0]]}}, "norm"),
        ({"majorant": {"family": "quadratic", "gamma": 1.0}}, "majorant"),
    ],
)
def test_schema_violations(problem_dir, changes, field):
    path = problem_dir / "sqrt2.json"
    d = json.loads(path.read_text())
    d.update(changes)
    path.write_text(json.dumps(d))
    with pytest.raises(ProblemLoadError) as err:
        load_problem(path)
    assert err.value.field == field


def test_missing_field_and_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"name": "x"}')
    with pytest.raises(ProblemLoadError, match="family"):
        load_problem(p)
    p.write_text("{not json")
    with pytest.raises(ProblemLoadError, match="not valid JSON"):
        load_problem(p)


def test_exp_problem():
    p, m = builtin_spec("exp").build()
    c = derive_certificate(m)
    assert c.t_star == pytest.approx(0.1059236346, rel=1e-8)
    assert math.log(1.1) <= c.t_star
    assert reference_solution(p)[0] == pytest.approx(math.log(1.1), rel=1e-14)


def test_log_barrier_problem():
    spec = builtin_spec("log_barrier")
    p, m = spec.build()
    assert m.params["b"] == pytest.approx(0.15, rel=1e-14)
    assert p.norm.kind == "metric"
    assert reference_solution(p)[0] == pytest.approx(1.0, rel=1e-14)
    assert derive_certificate(m).t_star >= p.norm.norm(np.array([0.15]))


def test_circle_line_constant_is_exact():
    p, m = builtin_spec("circle_line").build()
    assert m.params["L"] == pytest.approx(2 * math.sqrt(2) / 2.9, rel=1e-14)
    assert reference_solution(p) == pytest.approx([1 / math.sqrt(2)] * 2, rel=1e-14)


def test_corpus_contract(corpus):
    specs = corpus_specs()
    assert len(corpus) >= 5
    assert {s.family for s in specs} == {"polynomial_system", "exp_analytic", "log_barrier", "custom_builtin"}
    for p, m in corpus:
        assert validate_majorant(m).passed, p.name
        assert p.jacobian_mismatch() <= 1e-5


def test_round_trip_is_bit_identical(tmp_path):
    for spec in corpus_specs():
        path = tmp_path / f"{spec.name}.json"
        spec.save(path)
        again = load_spec(path)
        assert again == spec
        _, m1 = spec.build()
        _, m2 = again.build()
        assert derive_certificate(m1) == derive_certificate(m2)


@pytest.mark.parametrize("name", [s.name for s in corpus_specs()])
@pytest.mark.parametrize("mode", ["iterative", "perturbed"])
def test_corpus_solves_pass_trace_check(name, mode):
    p, m = builtin_spec(name).build()
    theta_max = derive_certificate(m).theta_max
    for theta in (0.0, theta_max / 2, theta_max):
        tr = inexact_newton_solve(p, m, SolveConfig(theta=theta, step_mode=mode))
        assert tr.stop_reason == "stop_residual"
        check = check_trace(tr, p, m)
        assert check.passed, f"{name} theta={theta}\n{check.summary()}"
