"""Restarted GMRES that stops at the first iterate meeting a relative residual target."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular


@dataclass
class KrylovResult:
    solution: np.ndarray
    iterations: int
    converged: bool
    relative_residual: float


def gmres_until(
    apply: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    rtol: float,
    restart: int,
    max_iter: int,
) -> KrylovResult:
    """Solve ``B w = rhs`` from ``w = 0`` until ``||rhs - B w|| <= rtol ||rhs||``.

    The stopping test is applied to the recomputed residual, never to the
    Givens estimate alone, so the returned iterate satisfies it exactly as
    evaluated in floating point.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    w = np.zeros(n)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0 or rtol >= 1.0:
        return KrylovResult(w, 0, True, 0.0 if rhs_norm == 0.0 else 1.0)
    target = rtol * rhs_norm

    def true_rel(x):
        return float(np.linalg.norm(rhs - apply(x)) / rhs_norm)

    best = (w.copy(), 1.0)
    total = 0
    while total < max_iter:
        r = rhs - apply(w)
        beta = np.linalg.norm(r)
        if beta <= target:
            return KrylovResult(w, total, True, beta / rhs_norm)
        m = min(restart, max_iter - total)
        V = np.zeros((n, m + 1))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        j_done = 0
        for j in range(m):
            v = apply(V[:, j])
            for _ in range(2):  # reorthogonalize once
                for i in range(j + 1):
                    h = V[:, i] @ v
                    H[i, j] += h
                    v = v - h * V[:, i]
            hnext = np.linalg.norm(v)
            H[j + 1, j] = hnext
            for i in range(j):
                a, b = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * a + sn[i] * b
                H[i + 1, j] = -sn[i] * a + cs[i] * b
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            breakdown = hnext <= 1e-14 * beta
            if abs(g[j + 1]) <= target or breakdown:
                y = solve_triangular(H[:j_done, :j_done], g[:j_done])
                candidate = w + V[:, :j_done] @ y
                rel = true_rel(candidate)
                if rel < best[1]:
                    best = (candidate, rel)
                if rel <= rtol:
                    return KrylovResult(candidate, total, True, rel)
                if breakdown:
                    break
            V[:, j + 1] = v / hnext
        y = solve_triangular(H[:j_done, :j_done], g[:j_done])
        w = w + V[:, :j_done] @ y
        rel = true_rel(w)
        if rel < best[1]:
            best = (w.copy(), rel)
        if rel <= rtol:
            return KrylovResult(w, total, True, rel)
    return KrylovResult(best[0], total, False, best[1])
