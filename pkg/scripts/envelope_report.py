"""Residual histories against the geometric envelope, for theta in {0, theta_max/2, theta_max}."""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field

import numpy as np

from inexact_newton.majorant import derive_certificate
from inexact_newton.problems import builtin_spec, corpus_specs
from inexact_newton.solver import SolveConfig, inexact_newton_solve
from inexact_newton.verifier import check_trace


@dataclass
class ReportConfig:
    problems: list[str] = field(default_factory=lambda: [s.name for s in corpus_specs()])
    fractions: tuple[float, ...] = (0.0, 0.5, 1.0)
    step_mode: str = "perturbed"
    rows: int = 8


def report(cfg: ReportConfig) -> None:
    for name in cfg.problems:
        p, m = builtin_spec(name).build()
        cert = derive_certificate(m)
        print(f"\n== {name}: theta_max {cert.theta_max:.6f}, kappa {cert.kappa:.6f}, t* {cert.t_star:.8f}")
        for frac in cfg.fractions:
            theta = frac * cert.theta_max
            tr = inexact_newton_solve(p, m, SolveConfig(theta=theta, step_mode=cfg.step_mode))
            env = np.array([cert.envelope(k, theta) for k in range(len(tr))])
            verdict = "pass" if check_trace(tr, p, m).passed else "FAIL"
            print(f"-- theta = {theta:.6f} ({len(tr) - 1} steps, trace check {verdict})")
            print(f"   {'k':>3} {'r_k':>12} {'envelope':>12} {'ratio':>7}")
            for k in range(min(cfg.rows, len(tr))):
                print(f"   {k:>3} {tr.residuals[k]:12.4e} {env[k]:12.4e} {tr.residuals[k] / env[k]:7.4f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("problems", nargs="*")
    ap.add_argument("--step-mode", default="perturbed", choices=("iterative", "perturbed"))
    ap.add_argument("--rows", type=int, default=8)
    a = ap.parse_args()
    cfg = ReportConfig(step_mode=a.step_mode, rows=a.rows)
    if a.problems:
        cfg.problems = a.problems
    report(cfg)
