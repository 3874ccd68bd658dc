"""Dense convex quadratic programming by a primal active-set method.

The kernel solves

    minimize    <g, w> + 1/2 <H w, w>
    subject to  A_eq w = b_eq,  A_in w <= b_in

from a feasible starting point.  Cone-constrained problems (right-hand
sides zero) start at the origin, which is always feasible.  Working sets
stay linearly independent by construction, reduced Hessians are factored
by Cholesky with an eigen-decomposition fallback, and directions of zero
or negative curvature are followed until a constraint blocks them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .exceptions import DimensionError, Infeasible, QPError, QPMaxIter, QPUnbounded
from .sets import ConeRep, PolyhedralSet

__all__ = [
    "QPStatus",
    "ConeQP",
    "QPSolution",
    "solve_qp",
    "solve_cone_qp",
    "require_optimal",
    "project_polyhedral",
    "project_soc",
    "conjugate_maximizer",
]

class QPStatus(str, Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True, eq=False)
class ConeQP:
    """``min <g,w> + 1/2 <Hw,w>`` over a polyhedral cone."""

    H: np.ndarray
    g: np.ndarray
    cone: ConeRep

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = np.asarray(self.g, dtype=float).reshape(-1)
        if H.shape != (g.size, g.size) or self.cone.dim != g.size:
            raise DimensionError("inconsistent ConeQP dimensions")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "g", g)


@dataclass
class QPSolution:
    w: np.ndarray
    active: tuple
    multipliers: np.ndarray
    status: QPStatus
    kkt_residual: float
    iterations: int
    objective: float


def require_optimal(sol: QPSolution) -> QPSolution:
    if sol.status is QPStatus.UNBOUNDED:
        raise QPUnbounded("quadratic program is unbounded below")
    if sol.status is QPStatus.MAX_ITER:
        raise QPMaxIter("active-set iteration limit reached")
    return sol


def _null_space(A: np.ndarray, n: int) -> np.ndarray:
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(n)
    rank = int(np.sum(s > 1e-11 * s[0]))
    return vt[rank:].T


def _eqp_direction(H, grad, Z):
    """Direction for the working-set subproblem.

    Returns ``(p, is_newton)``.  A Newton step minimizes the model on the
    working-set subspace; otherwise ``p`` is a descent ray of nonpositive
    curvature that must be cut off by a blocking constraint.
    """
    n = Z.shape[0]
    if Z.shape[1] == 0:
        return np.zeros(n), True
    M = Z.T @ H @ Z
    r = Z.T @ grad
    scale = max(1.0, float(np.max(np.abs(M))))
    try:
        c = sla.cho_factor(M, lower=True, check_finite=False)
        if np.min(np.abs(np.diag(c[0]))) ** 2 > 1e-11 * scale:
            return -Z @ sla.cho_solve(c, r, check_finite=False), True
    except np.linalg.LinAlgError:
        pass
    lam, V = np.linalg.eigh(M)
    curv_tol = 1e-11 * scale
    if lam[0] < -curv_tol:
        u = V[:, 0]
        sign = -1.0 if u @ r > 0 else 1.0
        return Z @ (sign * u), False
    flat = lam <= curv_tol
    rn = V[:, flat].T @ r
    if np.linalg.norm(rn) > 1e-12 * max(1.0, float(np.linalg.norm(r))):
        return -Z @ (V[:, flat] @ rn), False
    pos = ~flat
    coeff = (V[:, pos].T @ r) / lam[pos]
    return -Z @ (V[:, pos] @ coeff), True


def _kkt_residual(H, g, x, A_eq, b_eq, A_in, b_in, lam_eq, lam_in) -> float:
    stat = H @ x + g + A_eq.T @ lam_eq + A_in.T @ lam_in
    res = float(np.max(np.abs(stat))) if stat.size else 0.0
    if A_eq.shape[0]:
        res = max(res, float(np.max(np.abs(A_eq @ x - b_eq))))
    if A_in.shape[0]:
        slack = A_in @ x - b_in
        res = max(res, float(np.max(slack)), float(np.max(-lam_in)))
        res = max(res, float(np.max(np.abs(lam_in * slack))))
    return max(res, 0.0)


def _phase_one(n, A_eq, b_eq, A_in, b_in) -> np.ndarray:
    # with independent rows the point making every constraint tight is
    # feasible, and it avoids an LP solve in the common few-row case
    A = np.vstack([A_eq, A_in])
    b = np.concatenate([b_eq, b_in])
    if A.shape[0] <= n:
        x = np.linalg.lstsq(A, b, rcond=None)[0]
        slack = 1e-14 * (1.0 + np.abs(b))
        if (np.all(np.abs(A_eq @ x - b_eq) <= slack[:b_eq.size])
                and np.all(A_in @ x - b_in <= slack[b_eq.size:])):
            return x
    res = linprog(
        np.zeros(n),
        A_ub=A_in if A_in.shape[0] else None,
        b_ub=b_in if A_in.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if res.status != 0:
        raise Infeasible(f"QP constraints are infeasible ({res.message})")
    return np.asarray(res.x, dtype=float)


def solve_qp(H, g, A_eq=None, b_eq=None, A_in=None, b_in=None, x0=None,
             tol: float = 1e-10, max_iter: int | None = None) -> QPSolution:
    """Primal active-set solve of a dense convex QP.

    ``x0`` must be feasible; when omitted the origin is used if feasible,
    otherwise a phase-one LP supplies a start.  Ties in the ratio test and
    in the choice of the constraint to release go to the lowest index.
    After ``3 n`` consecutive zero-length exchanges the release rule
    switches to Bland's (lowest index with a negative multiplier).
    """
    g = np.asarray(g, dtype=float).reshape(-1)
    n = g.size
    H = np.atleast_2d(np.asarray(H, dtype=float)).reshape(n, n)
    H = 0.5 * (H + H.T)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float)).reshape(-1, n)
    A_in = np.zeros((0, n)) if A_in is None else np.atleast_2d(np.asarray(A_in, float)).reshape(-1, n)
    b_eq = np.zeros(A_eq.shape[0]) if b_eq is None else np.asarray(b_eq, float).reshape(-1)
    b_in = np.zeros(A_in.shape[0]) if b_in is None else np.asarray(b_in, float).reshape(-1)
    if b_eq.size != A_eq.shape[0] or b_in.size != A_in.shape[0]:
        raise DimensionError("constraint right-hand sides do not match")
    n_eq, n_in = A_eq.shape[0], A_in.shape[0]
    if max_iter is None:
        max_iter = 50 * (n + n_in) + 100

    if x0 is None:
        zero_ok = (not n_eq or np.all(b_eq == 0)) and (not n_in or np.all(b_in >= 0))
        x = np.zeros(n) if zero_ok else _phase_one(n, A_eq, b_eq, A_in, b_in)
    else:
        x = np.array(x0, dtype=float).reshape(n)

    row_norm = np.linalg.norm(A_in, axis=1) if n_in else np.zeros(0)
    working: list[int] = []
    stalls = 0
    status = QPStatus.MAX_ITER
    eqp_solved = False
    lam_eq = np.zeros(n_eq)
    lam_in = np.zeros(n_in)
    it = 0
    while it < max_iter:
        it += 1
        grad = H @ x + g
        Aw = np.vstack([A_eq, A_in[working]]) if working else A_eq
        if not eqp_solved:
            Z = _null_space(Aw, n)
            p, is_newton = _eqp_direction(H, grad, Z)
            small = np.linalg.norm(p) <= 1e-14 * max(1.0, float(np.linalg.norm(x)))
            eqp_solved = is_newton and small
        if eqp_solved:
            if Aw.shape[0]:
                lam, *_ = np.linalg.lstsq(Aw.T, -grad, rcond=None)
            else:
                lam = np.zeros(0)
            lam_eq = lam[:n_eq]
            lam_w = lam[n_eq:]
            mult_tol = 1e-12 * max(1.0, float(np.linalg.norm(grad)))
            neg = [k for k, val in enumerate(lam_w) if val < -mult_tol]
            if not neg:
                lam_in = np.zeros(n_in)
                if working:
                    lam_in[working] = np.maximum(lam_w, 0.0) if np.all(lam_w > -tol) else lam_w
                status = QPStatus.OPTIMAL
                break
            if stalls > 3 * n:
                drop = min(neg, key=lambda k: working[k])
            else:
                drop = min(neg, key=lambda k: (lam_w[k], working[k]))
            working.pop(drop)
            eqp_solved = False
            stalls += 1
            continue

        # ratio test over inequality rows outside the working set
        alpha_block, block = np.inf, -1
        if n_in:
            ap = A_in @ p
            pn = float(np.linalg.norm(p))
            for i in range(n_in):
                if i in working or ap[i] <= 1e-14 * row_norm[i] * pn:
                    continue
                a = max(0.0, (b_in[i] - A_in[i] @ x) / ap[i])
                if a < alpha_block:
                    alpha_block, block = a, i
        if is_newton:
            alpha = min(1.0, alpha_block)
        else:
            if not np.isfinite(alpha_block):
                status = QPStatus.UNBOUNDED
                break
            alpha = alpha_block
        x = x + alpha * p
        if block >= 0 and alpha_block <= alpha:
            working.append(block)
            eqp_solved = False
        else:
            eqp_solved = is_newton
        stalls = stalls + 1 if alpha == 0.0 else 0

    obj = float(0.5 * x @ H @ x + g @ x)
    if status is not QPStatus.OPTIMAL:
        return QPSolution(x, tuple(sorted(working)), np.concatenate([lam_eq, lam_in]),
                          status, np.inf, it, obj)
    kkt = _kkt_residual(H, g, x, A_eq, b_eq, A_in, b_in, lam_eq, lam_in)
    return QPSolution(x, tuple(sorted(working)), np.concatenate([lam_eq, lam_in]),
                      status, kkt, it, obj)


def solve_cone_qp(qp: ConeQP, tol: float = 1e-10, max_iter: int | None = None) -> QPSolution:
    """Solve ``min <g,w> + 1/2 <Hw,w>`` subject to ``w`` in ``qp.cone``.

    Returned multipliers are ordered as the cone's equality rows followed
    by its inequality rows.
    """
    n = qp.g.size
    return solve_qp(qp.H, qp.g, qp.cone.eq, None, qp.cone.ineq, None,
                    x0=np.zeros(n), tol=tol, max_iter=max_iter)


def project_polyhedral(pset: PolyhedralSet, z) -> np.ndarray:
    """Euclidean projection onto a nonempty polyhedral set."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != pset.dim:
        raise DimensionError("point dimension does not match the set")
    if pset.violation(z) == 0.0:
        return z.copy()
    if pset.is_box:
        lo, hi = pset.box_bounds
        return np.clip(z, lo, hi)
    sol = solve_qp(np.eye(z.size), -z, pset.E, pset.d, pset.G, pset.h,
                   x0=pset.feasible_point)
    if sol.status is not QPStatus.OPTIMAL:
        raise QPError(f"projection failed: {sol.status.value}")
    return sol.w


def project_soc(z) -> np.ndarray:
    """Projection onto ``{(y, t) : ||y|| <= t}`` (axis is the last entry)."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size < 2:
        raise DimensionError("second-order cone needs dim >= 2")
    y, t = z[:-1], z[-1]
    ny = float(np.linalg.norm(y))
    if ny <= t:
        return z.copy()
    if ny <= -t:
        return np.zeros_like(z)
    c = 0.5 * (t + ny)
    return np.concatenate([c * y / ny, [c]])


def conjugate_maximizer(C: PolyhedralSet, B, z) -> QPSolution:
    """Maximizer of ``<z,p> - 1/2 <p,Bp>`` over ``p`` in ``C``.

    ``B`` must be positive definite, so the maximizer exists and is unique.
    Multipliers follow the ordering of ``C.E`` rows then ``C.G`` rows.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    sol = solve_qp(B, -z, C.E, C.d, C.G, C.h, x0=C.feasible_point)
    if sol.status is not QPStatus.OPTIMAL:
        raise Infeasible(f"conjugate supremum is not attained ({sol.status.value})")
    return sol
