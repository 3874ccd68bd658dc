"""Moreau envelopes and proximal mappings.

``e_r phi(x) = min_w phi(w) + |w - x|^2 / (2r)`` and ``P_r phi(x)`` is the
minimizer.  The envelope gradient ``v = (x - P_r phi(x)) / r`` satisfies
``v in d phi(x - r v)``, which is how prox-regular problems are handed to
the C^{1,1} machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import Infeasible, InnerSolveFailed, UnsupportedSet
from .problems import Kind, ProblemInstance
from .qpsolver import QPStatus, solve_qp

__all__ = [
    "MoreauParams",
    "ProxResult",
    "default_r",
    "prox",
    "envelope_value",
    "envelope_gradient",
    "envelope",
]


@dataclass(frozen=True)
class MoreauParams:
    r: float = 0.1
    inner_tol: float = 1e-10
    inner_max_iters: int = 10000

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if int(self.inner_max_iters) < 1:
            raise ValueError("inner_max_iters must be positive")


@dataclass
class ProxResult:
    point: np.ndarray
    inner_residual: float
    iterations: int
    exact: bool


def default_r(instance: ProblemInstance) -> float:
    """``min(0.1, 0.1 / rho)`` for the instance's prox-regularity constant ``rho``."""
    rho = float(instance.known_rho or 0.0)
    return 0.1 if rho <= 0 else min(0.1, 0.1 / rho)


def _residual(instance, x, w, r) -> float:
    return float(instance.subgradient_residual(w, (x - w) / r))


def _tolerance(params, x, w) -> float:
    """``inner_tol``, raised to the rounding floor of ``(x - w) / r`` if larger."""
    scale = 1.0 + (float(np.linalg.norm(x)) + float(np.linalg.norm(w))) / params.r
    return max(params.inner_tol, 100 * np.finfo(float).eps * scale)


def prox(instance: ProblemInstance, params: MoreauParams, x) -> ProxResult:
    """Proximal point of ``instance`` at ``x`` with parameter ``params.r``."""
    x = np.asarray(x, dtype=float).reshape(instance.n)
    r = params.r
    start = x.copy()
    if instance.prox is not None:
        p = instance.prox(x, r)
        if p is not None:
            p = np.asarray(p, dtype=float).reshape(instance.n)
            res = _residual(instance, x, p, r)
            if res <= params.inner_tol:
                return ProxResult(p, res, 0, True)
            start = p
    if instance.gradient is not None and instance.kind is not Kind.NLP:
        return _prox_c11(instance, params, x, start)
    if instance.kind is Kind.NLP:
        return _prox_nlp(instance, params, x, start)
    raise UnsupportedSet(f"no proximal solver for kind {instance.kind.value}")


def _prox_c11(instance, params, x, w):
    """Gradient steps with backtracking on ``phi + |. - x|^2/(2r)``.

    A Newton step built from the first Hessian selection is tried first at
    every iteration and kept when it reduces the residual or passes the
    sufficient-decrease test.
    """
    r = params.r
    n = instance.n

    def F(u):
        return instance.value(u) + float((u - x) @ (u - x)) / (2 * r)

    def G(u):
        return np.asarray(instance.gradient(u), float) + (u - x) / r

    L = 1.0 / r
    g = G(w)
    Fw = F(w)
    for it in range(1, params.inner_max_iters + 1):
        res = float(np.linalg.norm(g))
        if res <= _tolerance(params, x, w):
            return ProxResult(w, res, it - 1, False)
        moved = False
        if instance.hessian_selections is not None:
            H = np.asarray(instance.hessian_selections(w)[0], float) + np.eye(n) / r
            try:
                np.linalg.cholesky(0.5 * (H + H.T))
                d = -np.linalg.solve(H, g)
                wn = w + d
                gn = G(wn)
                Fn = F(wn)
                slack = 4 * np.finfo(float).eps * (1 + abs(Fw))
                if np.linalg.norm(gn) <= 0.5 * res or Fn <= Fw + 1e-4 * (g @ d) + slack:
                    w, g, Fw, moved = wn, gn, Fn, True
            except np.linalg.LinAlgError:
                pass
        if moved:
            continue
        step = 1.0 / L
        while True:
            wn = w - step * g
            Fn = F(wn)
            if Fn <= Fw - 0.5 * step * res * res + 4 * np.finfo(float).eps * (1 + abs(Fw)):
                break
            step *= 0.5
            if step < 1e-20:
                raise InnerSolveFailed("proximal line search stalled")
        L = max(1.0 / r, 0.5 / step)
        w, Fw = wn, Fn
        g = G(w)
    res = float(np.linalg.norm(g))
    if res <= _tolerance(params, x, w):
        return ProxResult(w, res, params.inner_max_iters, False)
    raise InnerSolveFailed(f"prox residual {res:.3e} after {params.inner_max_iters} iterations")


def _prox_nlp(instance, params, x, w):
    """Sequential quadratic programming on the proximal subproblem.

    Uses an l1 merit function; a full step is also accepted whenever it at
    least halves the first-order residual, which avoids the Maratos effect
    near curved constraints.
    """
    data = instance.data
    r = params.r
    n, m, s = data.n, data.m, data.s
    lam = np.zeros(m)
    nu = 1.0

    def F(u):
        return float(data.psi(u)) + float((u - x) @ (u - x)) / (2 * r)

    def gradF(u):
        return np.asarray(data.psi_grad(u), float) + (u - x) / r

    def viol(u):
        if m == 0:
            return 0.0
        fu = np.asarray(data.f(u), float)
        return float(np.sum(np.abs(fu[:s])) + np.sum(np.maximum(fu[s:], 0.0)))

    def kkt(u, mult):
        st = gradF(u)
        if m:
            J = np.atleast_2d(np.asarray(data.f_jac(u), float)).reshape(m, n)
            st = st + J.T @ mult
        return float(np.linalg.norm(st)) + viol(u)

    for it in range(1, params.inner_max_iters + 1):
        if data.feasibility_violation(w) <= 1e-13:
            res = _residual(instance, x, w, r)
            if res <= _tolerance(params, x, w):
                return ProxResult(w, res, it - 1, False)
        H = np.atleast_2d(np.asarray(data.psi_hess(w), float)) + np.eye(n) / r
        if m:
            H = H + np.tensordot(lam, np.asarray(data.f_hess(w), float).reshape(m, n, n), axes=1)
        H = 0.5 * (H + H.T)
        ev, V = np.linalg.eigh(H)
        floor = 1e-6 / r
        if ev[0] < floor:
            H = (V * np.maximum(ev, floor)) @ V.T
        g = gradF(w)
        if m:
            fw = np.asarray(data.f(w), float)
            J = np.atleast_2d(np.asarray(data.f_jac(w), float)).reshape(m, n)
            try:
                sol = solve_qp(H, g, J[:s], -fw[:s], J[s:], -fw[s:])
            except Infeasible as exc:
                raise InnerSolveFailed(f"linearized constraints infeasible: {exc}") from exc
        else:
            sol = solve_qp(H, g)
        if sol.status is not QPStatus.OPTIMAL:
            raise InnerSolveFailed(f"SQP subproblem failed: {sol.status.value}")
        d = sol.w
        lam_new = sol.multipliers
        if float(np.linalg.norm(d)) <= 1e-16 * max(1.0, float(np.linalg.norm(w))):
            w_next = w
        else:
            nu = max(nu, 2.0 * float(np.max(np.abs(lam_new), initial=0.0)))
            k0 = kkt(w, lam)
            w_full = w + d
            if kkt(w_full, lam_new) <= 0.5 * k0:
                w_next = w_full
            else:
                M0 = F(w) + nu * viol(w)
                slope = float(g @ d) - nu * viol(w)
                alpha = 1.0
                while True:
                    wt = w + alpha * d
                    if F(wt) + nu * viol(wt) <= M0 + 1e-4 * alpha * min(slope, 0.0) + 1e-15 * (1 + abs(M0)):
                        break
                    alpha *= 0.5
                    if alpha < 1e-12:
                        break
                w_next = w + alpha * d
        if np.array_equal(w_next, w) and data.feasibility_violation(w) <= 1e-13:
            res = _residual(instance, x, w, r)
            if res <= _tolerance(params, x, w):
                return ProxResult(w, res, it, False)
            raise InnerSolveFailed(f"SQP stalled with residual {res:.3e}")
        w, lam = w_next, lam_new
    res = _residual(instance, x, w, r)
    raise InnerSolveFailed(f"prox residual {res:.3e} after {params.inner_max_iters} iterations")


def envelope(instance: ProblemInstance, params: MoreauParams, x):
    """Return ``(e_r phi(x), grad e_r phi(x), ProxResult)`` from one prox solve."""
    x = np.asarray(x, dtype=float).reshape(instance.n)
    pr = prox(instance, params, x)
    diff = pr.point - x
    val = instance.value(pr.point) + float(diff @ diff) / (2 * params.r)
    return float(val), -diff / params.r, pr


def envelope_value(instance: ProblemInstance, params: MoreauParams, x) -> float:
    return envelope(instance, params, x)[0]


def envelope_gradient(instance: ProblemInstance, params: MoreauParams, x) -> np.ndarray:
    """``(x - P_r phi(x)) / r``."""
    return envelope(instance, params, x)[1]
