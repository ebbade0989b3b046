"""Sparse direct solves with residual checks and an iterative fallback."""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverBreakdown

log = logging.getLogger(__name__)


def _relative_residual(A, X, B) -> np.ndarray:
    R = A @ X - B
    scale = np.maximum(np.linalg.norm(B, axis=0), np.finfo(float).tiny)
    return np.linalg.norm(R, axis=0) / scale


def solve(A: sp.spmatrix, B: np.ndarray, *, rtol: float = 1e-10, what: str = "system", refine: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``A X = B`` for one or several right-hand sides.

    A sparse LU factorization is tried first, followed by a few steps of
    iterative refinement with the same factors. Columns whose relative residual
    exceeds ``rtol`` are retried with GMRES preconditioned by an incomplete LU.

    Returns
    -------
    X : ndarray
    residuals : ndarray
        Relative residual per column (0 for a zero right-hand side).

    Raises
    ------
    SolverBreakdown
    """
    A = sp.csc_matrix(A)
    B = np.asarray(B)
    vector = B.ndim == 1
    B2 = B[:, None] if vector else B
    dtype = np.result_type(A.dtype, B2.dtype, np.float64)
    A = A.astype(dtype)
    B2 = B2.astype(dtype)
    X = np.zeros_like(B2)
    live = np.linalg.norm(B2, axis=0) > 0
    res = np.zeros(B2.shape[1])
    if live.any():
        Bl = np.ascontiguousarray(B2[:, live])
        try:
            lu = spla.splu(A)
            Xl = lu.solve(Bl)
            res[live] = _relative_residual(A, Xl, Bl)
            # iterative refinement with the same factors
            for _ in range(refine):
                if res[live].max() <= rtol:
                    break
                Xl = Xl + lu.solve(np.ascontiguousarray(Bl - A @ Xl))
                res[live] = _relative_residual(A, Xl, Bl)
            X[:, live] = Xl
        except RuntimeError as exc:
            log.warning("direct factorization of %s failed: %s", what, exc)
            X[:, live] = np.nan
        res[live] = _relative_residual(A, X[:, live], B2[:, live])
        res[~np.isfinite(res)] = np.inf
        bad = np.flatnonzero(live & (res > rtol))
        if bad.size:
            X, res = _fallback(A, B2, X, res, bad, rtol, what)
    return (X[:, 0], res) if vector else (X, res)


def _fallback(A, B, X, res, bad, rtol, what):
    log.warning("retrying %d column(s) of %s iteratively", len(bad), what)
    try:
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve, dtype=A.dtype)
    except RuntimeError:
        M = None
    for k in bad:
        x0 = X[:, k] if np.all(np.isfinite(X[:, k])) else None
        x, _ = spla.gmres(A, B[:, k], x0=x0, M=M, rtol=rtol * 0.1, atol=0.0, restart=200, maxiter=50)
        X[:, k] = x
        res[k] = _relative_residual(A, x[:, None], B[:, k : k + 1])[0]
    if np.any(res[bad] > rtol):
        raise SolverBreakdown(f"{what}: relative residual {res[bad].max():.3e} exceeds {rtol:.1e}")
    return X, res
