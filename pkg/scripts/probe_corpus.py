"""Run the inequality probes on the corpus and persist slack distributions for regression comparison.

With ``--baseline`` the fresh minimum slacks are compared against a saved run.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from inexact_newton.problems import builtin_spec, corpus_specs
from inexact_newton.verifier import DEFAULT_SEED, run_probes


@dataclass
class ProbeConfig:
    out: Path = Path("results/slacks.json")
    samples: int = 500
    seed: int = DEFAULT_SEED
    baseline: Path | None = None


def run(cfg: ProbeConfig) -> int:
    results = {}
    ok = True
    for spec in corpus_specs():
        p, m = builtin_spec(spec.name).build()
        for rep in run_probes(p, m, samples=cfg.samples, seed=cfg.seed):
            print(f"{spec.name:<12} {rep.summary()}")
            ok &= rep.passed
            results[f"{spec.name}/{rep.name}"] = {
                "min_slack": rep.min_slack,
                "quantiles": [float(q) for q in np.quantile(rep.slacks, [0, 0.01, 0.5, 0.99, 1])],
                "slacks": rep.slacks.tolist(),
            }
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    cfg.out.write_text(json.dumps({"seed": cfg.seed, "samples": cfg.samples, "probes": results}))
    print(f"slacks written to {cfg.out}")
    if cfg.baseline is not None:
        old = json.loads(cfg.baseline.read_text())["probes"]
        for key, new in results.items():
            if key in old and new["slacks"] != old[key]["slacks"]:
                print(f"changed: {key} min slack {old[key]['min_slack']:.3e} -> {new['min_slack']:.3e}")
    return 0 if ok else 1


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ProbeConfig.out)
    ap.add_argument("--samples", type=int, default=ProbeConfig.samples)
    ap.add_argument("--seed", type=int, default=ProbeConfig.seed)
    ap.add_argument("--baseline", type=Path)
    a = ap.parse_args()
    raise SystemExit(run(ProbeConfig(a.out, a.samples, a.seed, a.baseline)))
