"""Direct sparse LU with iterative refinement and a GMRES fallback."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a solve does not reach its tolerance; carries the report."""

    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


class SingularMatrixError(SolverError):
    pass


@dataclass
class SolveReport:
    x: np.ndarray = field(repr=False)
    residual: float
    iterations: int
    method: str
    wall_time: float
    converged: bool = True

    def to_dict(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations,
                "method": self.method, "wall_time": self.wall_time,
                "converged": self.converged}


def _relres(A, x, r, rnorm):
    return float(np.linalg.norm(A @ x - r)) / rnorm


class Factorization:
    """Reusable LU factorisation of a square sparse matrix.

    Solves with ``A`` or ``A^T`` share the same factors.
    """

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError(f"matrix must be square and non-empty, got shape {A.shape}")
        self.A = A
        self._At = None
        try:
            self.lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
            raise SingularMatrixError(f"LU factorisation failed: {exc}") from exc

    def op(self, transpose: bool):
        if not transpose:
            return self.A
        if self._At is None:
            self._At = self.A.T.tocsr()
        return self._At

    def solve(self, r, tol: float = DEFAULT_TOL, transpose: bool = False,
              max_refine: int = 3) -> SolveReport:
        if not 0 < tol <= 1e-4:
            raise ValueError(f"tol must lie in (0, 1e-4], got {tol}")
        t0 = time.perf_counter()
        r = np.asarray(r, float)
        A = self.op(transpose)
        trans = "T" if transpose else "N"
        rnorm = float(np.linalg.norm(r))
        if rnorm == 0.0:
            return SolveReport(np.zeros_like(r), 0.0, 0, "trivial", time.perf_counter() - t0)
        x = self.lu.solve(r, trans=trans)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("LU solve produced non-finite values")
        res = _relres(A, x, r, rnorm)
        steps = 0
        while res > tol and steps < max_refine:
            x = x + self.lu.solve(r - A @ x, trans=trans)
            res = _relres(A, x, r, rnorm)
            steps += 1
        method = "splu" + (f"+refine{steps}" if steps else "")
        if res > tol:
            x, res, its = _gmres_fallback(A, r, x, tol, rnorm)
            steps += its
            method += "+gmres"
        report = SolveReport(x, res, steps, method, time.perf_counter() - t0, res <= tol)
        if not report.converged:
            raise SolverError(f"relative residual {res:.3e} above tol {tol:.1e}", report)
        return report


def _gmres_fallback(A, r, x0, tol, rnorm):
    ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-6)
    M = spla.LinearOperator(A.shape, ilu.solve)
    its = [0]

    def count(_):
        its[0] += 1

    x, _ = spla.gmres(A, r, x0=x0, rtol=tol, atol=0.0, M=M, restart=200, maxiter=50,
                      callback=count, callback_type="pr_norm")
    return x, _relres(A, x, r, rnorm), its[0]


def solve(A, r, tol: float = DEFAULT_TOL, transpose: bool = False) -> SolveReport:
    """Solve ``A x = r`` (or ``A^T x = r``) to relative residual ``tol``."""
    return Factorization(A).solve(r, tol=tol, transpose=transpose)
