"""Equilibrated, pivoted LU solves for badly scaled direction matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

RCOND_TOL = 1e-12


def equilibrate(A: np.ndarray, rounds: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Row and column scalings (powers of two) balancing the 2-norms of ``A``.

    Returns ``(r, c)`` such that ``r[:, None] * A * c`` has rows and columns
    of comparable norm.  Power-of-two factors keep the scaling exact.
    """
    A = np.abs(np.asarray(A, dtype=float))
    n_rows, n_cols = A.shape
    r, c = np.ones(n_rows), np.ones(n_cols)
    for _ in range(rounds):
        S = r[:, None] * A * c
        rn = np.linalg.norm(S, axis=1)
        rn[rn == 0] = 1.0
        r = r / rn
        S = r[:, None] * A * c
        cn = np.linalg.norm(S, axis=0)
        cn[cn == 0] = 1.0
        c = c / cn
    return np.exp2(np.round(np.log2(r))), np.exp2(np.round(np.log2(c)))


def scaled_rcond(A: np.ndarray) -> float:
    """Reciprocal 2-norm condition number after equilibration."""
    r, c = equilibrate(A)
    s = np.linalg.svd(r[:, None] * A * c, compute_uv=False)
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def backward_error(A, x, b) -> float:
    """Normwise relative residual ||Ax - b|| / (||A|| ||x|| + ||b||)."""
    num = np.linalg.norm(A @ x - b)
    den = np.linalg.norm(A) * np.linalg.norm(x) + np.linalg.norm(b)
    return float(num / den) if den > 0 else 0.0


@dataclass(frozen=True)
class Factored:
    """LU factorization of an equilibrated square matrix."""

    A: np.ndarray
    row_scale: np.ndarray
    col_scale: np.ndarray
    lu: tuple

    @classmethod
    def of(cls, A: np.ndarray) -> "Factored":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"square matrix required, got {A.shape}")
        r, c = equilibrate(A)
        lu = scipy.linalg.lu_factor(r[:, None] * A * c, check_finite=False)
        return cls(A, r, c, lu)

    def _raw(self, b: np.ndarray) -> np.ndarray:
        rb = self.row_scale.reshape((-1,) + (1,) * (b.ndim - 1)) * b
        y = scipy.linalg.lu_solve(self.lu, rb, check_finite=False)
        return self.col_scale.reshape((-1,) + (1,) * (b.ndim - 1)) * y

    def solve(self, b: np.ndarray, refine: int = 3, tol: float = 1e-15) -> tuple[np.ndarray, float]:
        """Solve ``A x = b``; returns ``x`` and its backward error."""
        b = np.asarray(b, dtype=float)
        x = self._raw(b)
        err = backward_error(self.A, x, b)
        for _ in range(refine):
            if err <= tol:
                break
            x_new = x + self._raw(b - self.A @ x)
            err_new = backward_error(self.A, x_new, b)
            if err_new >= err:
                break
            x, err = x_new, err_new
        return x, err


def solve(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    return Factored.of(A).solve(b)
