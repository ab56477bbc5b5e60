"""Conjugate gradient solver for the symmetric positive definite step systems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverError(RuntimeError):
    """Linear solve failed: indefinite system or no convergence."""


@dataclass
class SolveOptions:
    rel_tol: float = 1e-10
    max_iters: int | None = None  # default 10 n
    preconditioner: str = "diagonal"  # "diagonal" or "none"


def solve_spd(A, b, opts: SolveOptions | None = None, x0=None) -> np.ndarray:
    """Preconditioned conjugate gradients for SPD systems.

    Converges when ||r|| <= rel_tol * ||b||.  A non-positive curvature
    p' A p aborts with an error instead of silently regularizing: the
    caller decides what an indefinite step system means.  Iteration
    order is fixed, so repeated solves are bitwise reproducible.
    """
    opts = opts or SolveOptions()
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs length {n}")
    if opts.preconditioner not in ("diagonal", "none"):
        raise ValueError(f"unknown preconditioner {opts.preconditioner!r}")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n)
    max_iters = opts.max_iters if opts.max_iters is not None else 10 * n

    if opts.preconditioner == "diagonal":
        diag = np.asarray(A.diagonal(), dtype=np.float64)
        if np.any(diag <= 0.0):
            raise SolverError("indefinite detected: non-positive diagonal entry")
        inv_diag = 1.0 / diag
        precond = lambda r: inv_diag * r
    else:
        precond = lambda r: r

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A @ x
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    tol = opts.rel_tol * bnorm
    for _ in range(max_iters):
        if np.linalg.norm(r) <= tol:
            return x
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError(f"indefinite detected: curvature {pAp:.3e} <= 0")
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol:
        return x
    raise SolverError(
        f"no convergence in {max_iters} iterations "
        f"(residual {np.linalg.norm(r):.3e}, target {tol:.3e})"
    )
