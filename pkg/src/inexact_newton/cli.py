"""Command-line entry points: certify, solve, verify, probe, sweep, corpus.

``<problem>`` is a path to a problem file or ``builtin:<name>`` for a corpus entry.
Exit codes: 0 success, 1 a check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .majorant import MajorantError, derive_certificate, validate_majorant
from .problems import ProblemLoadError, ProblemSpec, builtin_spec, load_spec, write_corpus
from .solver import (
    EnvelopeViolation,
    IterationTrace,
    SolveConfig,
    StepFailure,
    adaptive_theta_solve,
    inexact_newton_solve,
)
from .verifier import DEFAULT_SEED, ProvenanceError, check_trace, reference_solution, run_probes

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _spec(ref: str) -> ProblemSpec:
    if ref.startswith("builtin:"):
        try:
            return builtin_spec(ref.split(":", 1)[1])
        except KeyError as exc:
            raise InputError(str(exc)) from None
    try:
        return load_spec(ref)
    except FileNotFoundError:
        raise InputError(f"no such problem file: {ref}") from None


def _point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InputError(f"cannot parse point {text!r}; use comma-separated numbers") from None


def format_kv(d: dict) -> str:
    return "\n".join(f"{k} = {v!r}" for k, v in d.items())


# -- subcommands --------------------------------------------------------------


def cmd_certify(args) -> int:
    spec = _spec(args.problem)
    _, m = spec.build()
    report = validate_majorant(m)
    try:
        cert = derive_certificate(m, args.rho)
    except ValueError as exc:
        print(f"certificate: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = format_kv({"problem": spec.name, "family": m.family, **cert.to_dict()})
    print(text)
    print(report)
    if args.out:
        Path(args.out).write_text(text + "\n")
    ok = report.passed and args.rho < cert.beta / 2
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve(args) -> int:
    spec = _spec(args.problem)
    problem, m = spec.build()
    cfg = SolveConfig(
        theta=args.theta,
        rho=args.rho,
        start_point=None if args.start is None else _point(args.start),
        max_iterations=args.max_iter,
        stop_residual=args.stop_residual,
        step_mode=args.step_mode,
        enforce=not args.no_enforce,
    )
    run = adaptive_theta_solve if args.adaptive else inexact_newton_solve
    try:
        trace = run(problem, m, cfg)
    except EnvelopeViolation as exc:
        print(f"envelope violation: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except StepFailure as exc:
        print(f"step failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{'k':>3} {'dist_to_z0':>12} {'residual':>12} {'theta':>8} {'t_k':>12}")
    for r in trace.records:
        print(f"{r.k:>3} {r.dist:12.5e} {r.residual:12.5e} {r.theta:8.4f} {r.t:12.5e}")
    print(f"stop: {trace.stop_reason}; final z = {np.array2string(trace.final, precision=15)}")
    if args.trace:
        trace.to_csv(args.trace)
    return EXIT_OK if trace.stop_reason == "stop_residual" else EXIT_FAIL


def cmd_verify(args) -> int:
    spec = _spec(args.problem)
    problem, m = spec.build()
    try:
        trace = IterationTrace.from_csv(args.trace)
    except (FileNotFoundError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read trace {args.trace}: {exc}") from None
    result = check_trace(trace, problem, m)
    print(result.summary())
    probes = run_probes(problem, m, samples=args.samples, seed=args.seed)
    for p in probes:
        print(p.summary())
    return EXIT_OK if result.passed and all(p.passed for p in probes) else EXIT_FAIL


def cmd_probe(args) -> int:
    spec = _spec(args.problem)
    problem, m = spec.build()
    probes = run_probes(problem, m, samples=args.samples, seed=args.seed)
    for p in probes:
        print(p.summary())
    if args.out:
        payload = {
            "problem": spec.name,
            "seed": args.seed,
            "probes": {
                p.name: {"slacks": p.slacks.tolist(), "min_slack": p.min_slack, "rejected": p.rejected, "components": p.components}
                for p in probes
            },
        }
        _atomic_write(Path(args.out), json.dumps(payload, indent=1))
    return EXIT_OK if all(p.passed for p in probes) else EXIT_FAIL


# -- sweep --------------------------------------------------------------------

SWEEP_FIELDS = [
    "rho", "theta", "iterations", "stop_reason", "final_residual", "max_envelope_ratio",
    "error_to_reference", "trace_check", "error",
]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def sweep_grid(spec: ProblemSpec, n_theta: int = 9, n_rho: int = 5) -> list[tuple[float, float]]:
    """``n_theta`` tolerances in ``[0, theta_max(rho)]`` for each of ``n_rho`` radii in ``[0, 0.9 beta/2]``."""
    _, m = spec.build()
    beta = derive_certificate(m).beta
    cells = []
    for rho in np.linspace(0.0, 0.9 * beta / 2, n_rho):
        theta_max = derive_certificate(m, float(rho)).theta_max
        cells.extend((float(rho), float(th)) for th in np.linspace(0.0, theta_max, n_theta))
    return cells


def run_cell(spec_dict: dict, rho: float, theta: float, step_mode: str = "perturbed", seed: int = DEFAULT_SEED) -> dict:
    """One sweep cell: start on the sphere of radius ``rho`` and solve with fixed ``theta``.

    The default perturbed mode pins each achieved relative residual at ``theta``.
    """
    spec = ProblemSpec.from_dict(spec_dict)
    problem, m = spec.build(spot_check=False)
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(problem.dimension)
    start = problem.base_point + rho * d / problem.norm.norm(d)
    row = {"rho": rho, "theta": theta, "error": ""}
    try:
        trace = inexact_newton_solve(problem, m, SolveConfig(theta=theta, rho=rho, start_point=start, max_iterations=200, step_mode=step_mode))
    except (EnvelopeViolation, StepFailure, ValueError) as exc:
        row.update(iterations=-1, stop_reason="error", final_residual=math.nan, max_envelope_ratio=math.nan,
                   error_to_reference=math.nan, trace_check="not run", error=str(exc))
        return row
    cert = trace.certificate
    factors = np.concatenate([[1.0], np.cumprod([(1 + r.theta**2) / 2 for r in trace.records[:-1]])])
    ratio = trace.residuals / (factors * (cert.f0 + 2 * rho))
    x_star = reference_solution(problem, start=start)
    check = check_trace(trace, problem, m, x_star=x_star)
    row.update(
        iterations=len(trace) - 1,
        stop_reason=trace.stop_reason,
        final_residual=float(trace.residuals[-1]),
        max_envelope_ratio=float(ratio.max()),
        error_to_reference=float(problem.norm.norm(trace.final - x_star)),
        trace_check="pass" if check.passed else "fail",
    )
    return row


def cmd_sweep(args) -> int:
    spec = _spec(args.problem)
    try:
        n_theta, n_rho = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        raise InputError(f"bad grid {args.grid!r}; expected THETAxRHO, e.g. 9x5") from None
    cells = sweep_grid(spec, n_theta, n_rho)
    out = Path(args.out)
    cell_dir = out / "cells"
    spec_dict = spec.to_dict()

    def finish(i, row):
        _atomic_write(cell_dir / f"cell_{i:04d}.json", json.dumps(row))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_cell, spec_dict, rho, th, args.step_mode) for rho, th in cells]
            for i, fut in enumerate(futures):
                finish(i, fut.result())
    else:
        for i, (rho, th) in enumerate(cells):
            finish(i, run_cell(spec_dict, rho, th, args.step_mode))

    rows = [json.loads((cell_dir / f"cell_{i:04d}.json").read_text()) for i in range(len(cells))]
    fd, tmp = tempfile.mkstemp(dir=out, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)
    os.replace(tmp, out / "sweep.csv")
    failed = [r for r in rows if r["trace_check"] != "pass"]
    print(f"{len(rows)} cells written to {out / 'sweep.csv'}; {len(failed)} failed")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_corpus(args) -> int:
    for p in write_corpus(args.out):
        print(p)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inexact-newton", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="print the convergence certificate")
    p.add_argument("problem")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--out", help="also write the certificate as key = value text")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("solve", help="run the inexact Newton iteration")
    p.add_argument("problem")
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--start", help="start point, comma-separated")
    p.add_argument("--adaptive", action="store_true", help="theta_k = min(theta_max, r_k)")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--stop-residual", type=float, default=1e-13)
    p.add_argument("--step-mode", choices=("iterative", "perturbed"), default="iterative")
    p.add_argument("--no-enforce", action="store_true", help="record envelope breaches instead of stopping")
    p.add_argument("--trace", help="write the trace CSV here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check a trace and run the inequality probes")
    p.add_argument("problem")
    p.add_argument("--trace", required=True)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("probe", help="sample the operator/majorant inequalities")
    p.add_argument("problem")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="persist slack distributions as JSON")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sweep", help="theta x rho grid of solves")
    p.add_argument("problem")
    p.add_argument("--grid", default="9x5", help="THETAxRHO cell counts (default 9x5)")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--step-mode", choices=("iterative", "perturbed"), default="perturbed")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("corpus", help="write the built-in problem files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corpus)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ProblemLoadError, ProvenanceError, MajorantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
