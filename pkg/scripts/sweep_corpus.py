"""Theta x rho sweep over every corpus problem; one CSV per problem plus a summary."""

from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass
from pathlib import Path

from inexact_newton.cli import main as cli_main
from inexact_newton.problems import corpus_specs


@dataclass
class SweepConfig:
    out: Path = Path("results/sweep")
    grid: str = "9x5"
    jobs: int = 1
    step_mode: str = "perturbed"


def run(cfg: SweepConfig) -> int:
    failures = 0
    summary = []
    for spec in corpus_specs():
        target = cfg.out / spec.name
        code = cli_main(
            ["sweep", f"builtin:{spec.name}", "--grid", cfg.grid, "--out", str(target),
             "--jobs", str(cfg.jobs), "--step-mode", cfg.step_mode]
        )
        failures += code != 0
        with (target / "sweep.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        worst = max(float(r["max_envelope_ratio"]) for r in rows)
        iters = max(int(r["iterations"]) for r in rows)
        summary.append((spec.name, len(rows), sum(r["trace_check"] == "pass" for r in rows), worst, iters))
    print(f"{'problem':<12} {'cells':>5} {'pass':>5} {'max r/env':>10} {'max iters':>9}")
    for name, n, ok, worst, iters in summary:
        print(f"{name:<12} {n:>5} {ok:>5} {worst:>10.4f} {iters:>9}")
    return 1 if failures else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=SweepConfig.out)
    ap.add_argument("--grid", default=SweepConfig.grid)
    ap.add_argument("--jobs", type=int, default=SweepConfig.jobs)
    ap.add_argument("--step-mode", default=SweepConfig.step_mode, choices=("iterative", "perturbed"))
    a = ap.parse_args()
    raise SystemExit(run(SweepConfig(a.out, a.grid, a.jobs, a.step_mode)))
