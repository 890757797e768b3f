"""Dense primal active-set solver for small strictly convex QPs.

Solves  min 0.5 z'Hz + g'z  subject to  A z <= b  from a feasible start.
Problem sizes here are tiny (tens to a few hundred variables), so all linear
algebra is dense numpy.  The solver is deterministic: ties are broken by the
lowest constraint index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QpError(RuntimeError):
    """Raised when the active-set iteration fails to make progress."""


@dataclass
class QpResult:
    z: np.ndarray
    active: list[int]
    iterations: int


def _kkt_step(H, grad, A_w):
    """Newton step p and multipliers for the equality-constrained subproblem.

    Solves  min 0.5 p'Hp + grad'p  s.t.  A_w p = 0 via the Schur complement;
    falls back to least squares when the working-set rows are dependent.
    """
    if A_w.shape[0] == 0:
        return np.linalg.solve(H, -grad), np.zeros(0)
    Hinv_g = np.linalg.solve(H, grad)
    Hinv_At = np.linalg.solve(H, A_w.T)
    S = A_w @ Hinv_At
    rhs = -A_w @ Hinv_g
    try:
        lam = np.linalg.solve(S, rhs)
    except np.linalg.LinAlgError:
        lam, *_ = np.linalg.lstsq(S, rhs, rcond=None)
    p = -Hinv_g - Hinv_At @ lam
    return p, lam


def solve_qp(H: np.ndarray, g: np.ndarray, A: np.ndarray, b: np.ndarray,
             z0: np.ndarray, max_iter: int = 200, tol: float = 1e-9) -> QpResult:
    """Minimize 0.5 z'Hz + g'z over {A z <= b} starting from feasible z0.

    H must be symmetric positive definite.  Raises QpError if z0 is
    infeasible beyond tolerance or the iteration limit is hit.
    """
    z = np.asarray(z0, dtype=float).copy()
    n_cons = A.shape[0]
    residual = A @ z - b if n_cons else np.zeros(0)
    if n_cons and residual.max() > 1e-7:
        raise QpError(f"infeasible start, worst violation {residual.max():.3e}")

    # start with the constraints already (numerically) active
    working = [i for i in range(n_cons) if residual[i] > -1e-10]

    for it in range(1, max_iter + 1):
        grad = H @ z + g
        A_w = A[working] if working else np.zeros((0, len(z)))
        p, lam = _kkt_step(H, grad, A_w)

        if np.linalg.norm(p, ord=np.inf) < tol:
            if len(lam) == 0 or lam.min() >= -tol:
                return QpResult(z=z, active=sorted(working), iterations=it)
            drop = int(np.argmin(lam))
            working.pop(drop)
            continue

        # longest feasible step along p
        alpha, blocking = 1.0, -1
        for i in range(n_cons):
            if i in working:
                continue
            a_p = float(A[i] @ p)
            if a_p > tol:
                step = float(b[i] - A[i] @ z) / a_p
                if step < alpha - 1e-12:
                    alpha, blocking = max(step, 0.0), i
        z = z + alpha * p
        if blocking >= 0:
            working.append(blocking)

    raise QpError(f"active-set iteration limit {max_iter} reached")
