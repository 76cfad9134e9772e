"""Vector and induced operator norms on R^n.

Two norms are supported: the Euclidean norm and a metric norm
``||v||_M = sqrt(v^T M v)`` for a symmetric positive definite ``M`` (the
local Hessian norm used for self-concordant problems).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormSpec:
    kind: str = "euclidean"
    matrix: np.ndarray | None = None
    _factor: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "euclidean":
            if self.matrix is not None:
                raise ValueError("euclidean norm takes no matrix")
            return
        if self.kind != "metric":
            raise ValueError(f"unknown norm kind {self.kind!r}")
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ValueError("metric matrix must be square")
        if not np.allclose(M, M.T, rtol=1e-12, atol=0.0):
            raise ValueError("metric matrix must be symmetric")
        # raises LinAlgError unless M is positive definite
        C = np.linalg.cholesky(M)
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "_factor", C)

    @classmethod
    def euclidean(cls) -> "NormSpec":
        return cls("euclidean")

    @classmethod
    def metric(cls, M) -> "NormSpec":
        return cls("metric", np.asarray(M, dtype=float))

    def to_coords(self, v: np.ndarray) -> np.ndarray:
        """Map ``v`` to coordinates where this norm is Euclidean (``C^T v``, ``M = C C^T``)."""
        v = np.asarray(v, dtype=float)
        if self._factor is None:
            return v
        return self._factor.T @ v

    def from_coords(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self._factor is None:
            return w
        return np.linalg.solve(self._factor.T, w)

    def norm(self, v) -> float:
        return float(np.linalg.norm(self.to_coords(np.atleast_1d(v))))

    def transformed(self, A: np.ndarray) -> np.ndarray:
        """Matrix of ``A`` in the coordinates where the norm is Euclidean."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if self._factor is None:
            return A
        C = self._factor
        return C.T @ np.linalg.solve(C, A.T).T

    def operator_norm(self, A, tol: float = 1e-10, max_iter: int = 5000) -> float:
        """Induced operator norm of ``A`` by power iteration on ``B^T B``."""
        return power_iteration_norm(self.transformed(A), tol=tol, max_iter=max_iter)

    def to_dict(self) -> dict:
        if self.kind == "euclidean":
            return {"kind": "euclidean"}
        return {"kind": "metric", "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormSpec":
        kind = d.get("kind", "euclidean")
        if kind == "euclidean":
            return cls.euclidean()
        return cls.metric(d["matrix"])


def power_iteration_norm(B: np.ndarray, tol: float = 1e-10, max_iter: int = 5000) -> float:
    """Largest singular value of ``B`` to relative tolerance ``tol``.

    Iterates on ``B^T B`` from a fixed start vector. If the iteration has not
    settled after ``max_iter`` sweeps (clustered top singular values) the
    result falls back to an SVD so the estimate never undershoots silently.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = B.shape[1]
    if n == 1:
        return float(np.linalg.norm(B[:, 0]))
    if not np.any(B):
        return 0.0
    # fixed, generic start vector; all-ones alone can be orthogonal to the top mode
    v = np.ones(n) + 0.1 * np.arange(1, n + 1) / n
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = B.T @ (B @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v_new = w / nw
        sigma_new = float(np.sqrt(nw))
        if abs(sigma_new - sigma) <= tol * sigma_new and np.linalg.norm(v_new - v) <= np.sqrt(tol):
            return float(np.linalg.norm(B @ v_new))
        v, sigma = v_new, sigma_new
    logger.warning("power iteration did not settle; using SVD")
    return float(np.linalg.norm(B, 2))
