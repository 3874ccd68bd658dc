"""Critical cones, Lagrange multipliers and second subderivatives.

The functions here take problem data by attribute (duck typing) so that
the module does not depend on :mod:`tiltnewton.problems`.  Three families
of quadratic models are produced, all wrapped in
:class:`SecondSubderivativeForm`:

* a quadratic restricted to a polyhedral cone on ``J w`` (nonlinear
  programs),
* a quadratic plus twice a conjugate term ``f_{K,B}(-A w)`` (extended
  linear-quadratic programs),
* a quadratic plus the envelope term ``min_{u in K} u'Su + rho |u - Jw|^2``
  (augmented Lagrangians).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, lsq_linear

from .exceptions import (
    DegenerateMultipliers,
    DimensionError,
    MultiplierInfeasible,
    NotInGraph,
    NotMember,
    NotNormal,
    QPError,
    SubproblemUnbounded,
    UnsupportedSet,
)
from .qpsolver import ConeQP, QPStatus, conjugate_maximizer, project_soc, solve_cone_qp
from .sets import ConeRep, PolyhedralSet, SecondOrderCone

__all__ = [
    "tangent_cone",
    "normal_cone_residual",
    "critical_cone_polyhedral",
    "soc_critical_cone",
    "soc_curvature",
    "soc_projection_jacobians",
    "conjugate_jacobians",
    "MultiplierResult",
    "IndexSets",
    "lagrange_multipliers",
    "vertex_multipliers",
    "index_sets",
    "ELQPTerm",
    "EnvelopeTerm",
    "SecondSubderivativeForm",
    "elqp_form",
    "second_subderivative_elqp",
    "nlp_form",
    "second_subderivative_constrained",
    "auglag_form",
    "fd_second_quotient",
]

TOL_ACT = 1e-8


# ---------------------------------------------------------------------------
# cones


def tangent_cone(pset: PolyhedralSet, u, tol_act: float = TOL_ACT) -> ConeRep:
    u = np.asarray(u, dtype=float).reshape(-1)
    if pset.violation(u) > tol_act:
        raise NotMember(f"point violates the set by {pset.violation(u):.3e}")
    act = pset.active_rows(u, tol_act)
    return ConeRep(pset.dim, pset.E, pset.G[act])


def normal_cone_residual(pset: PolyhedralSet, u, y, tol_act: float = TOL_ACT) -> float:
    """Distance from ``y`` to the normal cone of ``pset`` at ``u``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    act = pset.active_rows(u, tol_act)
    gens = np.vstack([pset.E, pset.G[act]]).T
    if gens.shape[1] == 0:
        return float(np.linalg.norm(y))
    n_eq = pset.E.shape[0]
    lb = np.concatenate([np.full(n_eq, -np.inf), np.zeros(act.size)])
    res = lsq_linear(gens, y, bounds=(lb, np.full(lb.size, np.inf)), method="bvls",
                     tol=1e-14)
    return float(np.linalg.norm(gens @ res.x - y))


def critical_cone_polyhedral(pset: PolyhedralSet, u, y, tol_act: float = TOL_ACT,
                             tol: float = 1e-8) -> ConeRep:
    """``T_C(u)`` intersected with the hyperplane orthogonal to ``y``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    T = tangent_cone(pset, u, tol_act)
    res = normal_cone_residual(pset, u, y, tol_act)
    if res > tol * max(1.0, float(np.linalg.norm(y))):
        raise NotNormal(f"vector is not normal to the set (residual {res:.3e})")
    return T.with_equalities(y[None, :])


def _soc_parts(z):
    z = np.asarray(z, dtype=float).reshape(-1)
    return z[:-1], z[-1], float(np.linalg.norm(z[:-1]))


def soc_critical_cone(z, mu, tol: float = 1e-9):
    """Critical cone of the second-order cone ``Q`` at ``(z, mu)``.

    ``mu`` must be normal to ``Q`` at ``z``.  Returns a :class:`ConeRep`,
    or the :class:`SecondOrderCone` itself when ``z = 0`` and ``mu = 0``.
    When ``z = 0`` and ``mu`` lies in the interior of ``-Q`` the cone
    ``Q`` meets the hyperplane orthogonal to ``mu`` only at the origin, so
    ``{0}`` is returned.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    m = z.size
    if mu.size != m or m < 2:
        raise DimensionError("z and mu must share a dimension >= 2")
    zy, zt, nzy = _soc_parts(z)
    my, mt, nmy = _soc_parts(mu)
    scale = max(1.0, float(np.linalg.norm(z)), float(np.linalg.norm(mu)))
    if nzy - zt > tol * scale or nmy + mt > tol * scale or abs(z @ mu) > tol * scale ** 2:
        raise NotInGraph("(z, mu) is not in the graph of the normal cone")
    z_zero = np.linalg.norm(z) <= tol * scale
    mu_zero = np.linalg.norm(mu) <= tol * scale
    if z_zero:
        if mu_zero:
            return SecondOrderCone(m)
        if nmy < -mt - tol * scale:
            return ConeRep.zero(m)
        return ConeRep.ray(np.concatenate([my, [-mt]]))
    if zt - nzy > tol * scale:
        return ConeRep.whole(m)
    if mu_zero:
        return ConeRep(m, ineq=np.concatenate([zy / nzy, [-1.0]])[None, :])
    return ConeRep(m, eq=mu[None, :])


def soc_curvature(z, mu, tol: float = 1e-9) -> np.ndarray:
    """Curvature matrix ``S`` of the second-order cone's boundary at ``z``.

    Nonzero only when ``z`` is a nonzero boundary point and ``mu`` a nonzero
    normal there; then ``S = (-mu_m / z_m) [(I - e e') (+) 0]`` with ``e``
    the unit vector along the first ``m - 1`` coordinates of ``z``.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    m = z.size
    S = np.zeros((m, m))
    zy, zt, nzy = _soc_parts(z)
    scale = max(1.0, float(np.linalg.norm(z)))
    if np.linalg.norm(mu) <= tol or zt <= tol * scale or abs(nzy - zt) > tol * scale:
        return S
    e = zy / nzy
    S[:-1, :-1] = (-mu[-1] / zt) * (np.eye(m - 1) - np.outer(e, e))
    return S


def soc_projection_jacobians(y, tol: float = 1e-12) -> list:
    """Limiting Jacobians of the projection onto the second-order cone."""
    y = np.asarray(y, dtype=float).reshape(-1)
    m = y.size
    yy, t, ny = _soc_parts(y)
    scale = max(1.0, float(np.linalg.norm(y)))

    def blend():
        yb = yy / ny if ny > 0 else np.eye(m - 1)[0]
        ratio = t / ny if ny > 0 else 0.0
        D = np.empty((m, m))
        D[:-1, :-1] = (1.0 + ratio) * np.eye(m - 1) - ratio * np.outer(yb, yb)
        D[:-1, -1] = yb
        D[-1, :-1] = yb
        D[-1, -1] = 1.0
        return 0.5 * D

    inside = ny - t
    outside = ny + t
    if abs(inside) <= tol * scale and abs(outside) <= tol * scale:
        return [np.eye(m), np.zeros((m, m)), blend()]
    if abs(inside) <= tol * scale:
        return [np.eye(m), blend()]
    if abs(outside) <= tol * scale:
        return [np.zeros((m, m)), blend()]
    if inside < 0:
        return [np.eye(m)]
    if outside < 0:
        return [np.zeros((m, m))]
    return [blend()]


def _null_space(A, n):
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > 1e-11 * max(1.0, s[0])))
    return vt[rank:].T


def conjugate_jacobians(C: PolyhedralSet, B, z, sol=None, tol_act: float | None = None,
                        max_weak: int = 10) -> list:
    """Limiting Jacobians of ``z -> argmax_{p in C} <z,p> - 1/2 <p,Bp>``.

    On the piece where the rows ``W`` are active the map is affine with
    Jacobian ``Z (Z'BZ)^{-1} Z'``, ``Z`` spanning the null space of the
    rows in ``W``.  Rows with a zero multiplier (weakly active) may or may
    not belong to a neighbouring piece, so subsets of them are enumerated,
    largest first.

    By default a row counts as active, and a multiplier as zero, only up to
    rounding error (``64 eps`` times the data scale).  A looser ``tol_act``
    also reports the neighbouring pieces within that distance of a kink.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    z = np.asarray(z, dtype=float).reshape(-1)
    if sol is None:
        sol = conjugate_maximizer(C, B, z)
    p = sol.w
    n_eq = C.E.shape[0]
    if tol_act is None:
        scale = 1.0 + float(np.linalg.norm(z)) + np.linalg.norm(B, 2) * float(np.linalg.norm(p))
        hmax = float(np.max(np.abs(C.h[np.isfinite(C.h)]), initial=0.0))
        tol_act = 64 * np.finfo(float).eps * (scale + hmax)
        mtol = tol_act
    else:
        mtol = 1e-9 * max(1.0, float(np.max(np.abs(sol.multipliers), initial=0.0)))
    act = C.active_rows(p, tol_act)
    mult = sol.multipliers[n_eq:]
    strong = [int(i) for i in act if mult[i] > mtol]
    weak = [int(i) for i in act if mult[i] <= mtol]
    if len(weak) > max_weak:
        subsets = [tuple(weak), ()]
    else:
        subsets = [c for k in range(len(weak), -1, -1)
                   for c in itertools.combinations(weak, k)]
    mats = []
    m = C.dim
    for extra in subsets:
        rows = np.vstack([C.E, C.G[sorted(strong + list(extra))]])
        Z = _null_space(rows, m)
        if Z.shape[1] == 0:
            D = np.zeros((m, m))
        else:
            D = Z @ np.linalg.solve(Z.T @ B @ Z, Z.T)
        if not any(np.allclose(D, E, rtol=0, atol=1e-12) for E in mats):
            mats.append(D)
    return mats


# ---------------------------------------------------------------------------
# multipliers


@dataclass
class MultiplierResult:
    lam: np.ndarray
    unique: bool
    residual: float


@dataclass(frozen=True)
class IndexSets:
    """Active (``I``) and strongly active (``I_plus``) inequality indices.

    Indices are zero-based positions in the constraint vector.
    """

    I: frozenset
    I_plus: frozenset
    s: int


def index_sets(z, lam, s: int, tol_act: float = TOL_ACT, tol_pos: float = 1e-8) -> IndexSets:
    z = np.asarray(z, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if z.size != lam.size:
        raise DimensionError("z and lambda must have the same length")
    act = frozenset(i for i in range(s, z.size) if abs(z[i]) <= tol_act)
    plus = frozenset(i for i in act if lam[i] > tol_pos)
    return IndexSets(act, plus, s)


def _active_layout(nlp, x, tol_act):
    fx = np.asarray(nlp.f(x), dtype=float).reshape(-1)
    J = np.atleast_2d(np.asarray(nlp.f_jac(x), dtype=float)).reshape(nlp.m, nlp.n)
    s = nlp.s
    if np.any(np.abs(fx[:s]) > tol_act * 10) or np.any(fx[s:] > tol_act * 10):
        raise NotMember("point is infeasible for the constraint system")
    act = [i for i in range(s, nlp.m) if abs(fx[i]) <= tol_act]
    return fx, J, list(range(s)), act


def lagrange_multipliers(nlp, x, v, tol: float = 1e-7, tol_act: float = TOL_ACT) -> MultiplierResult:
    """Solve ``J(x)' lam = v`` with ``lam`` in the normal cone of ``Theta`` at ``f(x)``.

    Equality multipliers are free, active inequality multipliers are
    nonnegative and inactive ones vanish.  When the active rows of the
    Jacobian are dependent the multiplier is not unique and the least-norm
    element is returned.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    m = nlp.m
    if m == 0:
        res = float(np.linalg.norm(v))
        if res > tol * max(1.0, res):
            raise MultiplierInfeasible(f"no multiplier: residual {res:.3e}")
        return MultiplierResult(np.zeros(0), True, res)
    _, J, eq, act = _active_layout(nlp, x, tol_act)
    idx = eq + act
    lam = np.zeros(m)
    if not idx:
        res = float(np.linalg.norm(v))
        if res > tol * max(1.0, float(np.linalg.norm(v))):
            raise MultiplierInfeasible(f"no multiplier: residual {res:.3e}")
        return MultiplierResult(lam, True, res)
    JA = J[idx]
    lb = np.concatenate([np.full(len(eq), -np.inf), np.zeros(len(act))])
    fit = lsq_linear(JA.T, v, bounds=(lb, np.full(lb.size, np.inf)), method="bvls", tol=1e-14)
    res = float(np.linalg.norm(JA.T @ fit.x - v))
    if res > tol * max(1.0, float(np.linalg.norm(v))):
        raise MultiplierInfeasible(f"no multiplier within tolerance: residual {res:.3e}")
    unique = np.linalg.matrix_rank(JA, tol=1e-10 * max(1.0, np.abs(JA).max())) == len(idx)
    sub = fit.x
    if not unique:
        sub = _least_norm_multiplier(JA, JA.T @ fit.x, len(eq), fit.x)
    lam[idx] = sub
    return MultiplierResult(lam, bool(unique), res)


def _least_norm_multiplier(JA, rhs, n_eq, start):
    from .qpsolver import solve_qp

    k = JA.shape[0]
    n_in = k - n_eq
    A_in = -np.eye(k)[n_eq:] if n_in else None
    sol = solve_qp(np.eye(k), np.zeros(k), JA.T, rhs, A_in, np.zeros(n_in) if n_in else None,
                   x0=np.maximum(start, np.concatenate([np.full(n_eq, -np.inf), np.zeros(n_in)])))
    return sol.w if sol.status is QPStatus.OPTIMAL else start


def vertex_multipliers(nlp, x, v, tol: float = 1e-7, tol_act: float = TOL_ACT) -> list:
    """Vertices of the multiplier polytope, found by enumerating active subsets.

    Raises :class:`DegenerateMultipliers` when the multiplier set is
    unbounded.
    """
    base = lagrange_multipliers(nlp, x, v, tol, tol_act)
    if base.unique:
        return [base.lam]
    _, J, eq, act = _active_layout(nlp, x, tol_act)
    v = np.asarray(v, dtype=float).reshape(-1)
    JE = J[eq]
    if JE.shape[0] and np.linalg.matrix_rank(JE) < JE.shape[0]:
        raise DegenerateMultipliers("equality rows are dependent; multipliers unbounded")
    if act:
        # recession direction with a nonnegative, nonzero inequality part?
        JA = J[eq + act]
        c = np.concatenate([np.zeros(len(eq)), -np.ones(len(act))])
        bounds = [(None, None)] * len(eq) + [(0.0, 1.0)] * len(act)
        lp = linprog(c, A_eq=JA.T, b_eq=np.zeros(J.shape[1]), bounds=bounds, method="highs")
        if lp.status == 0 and -lp.fun > 1e-9:
            raise DegenerateMultipliers("multiplier set is unbounded")
    verts = []
    for k in range(len(act), -1, -1):
        for subset in itertools.combinations(act, k):
            idx = eq + list(subset)
            if not idx:
                continue
            JS = J[idx]
            if np.linalg.matrix_rank(JS) < len(idx):
                continue
            sol, *_ = np.linalg.lstsq(JS.T, v, rcond=None)
            if np.linalg.norm(JS.T @ sol - v) > tol * max(1.0, float(np.linalg.norm(v))):
                continue
            if np.any(sol[len(eq):] < -1e-12):
                continue
            lam = np.zeros(nlp.m)
            lam[idx] = sol
            if not any(np.allclose(lam, u, atol=1e-12) for u in verts):
                verts.append(lam)
    return verts or [base.lam]


# ---------------------------------------------------------------------------
# second-subderivative forms


@dataclass(frozen=True, eq=False)
class ELQPTerm:
    """Adds ``2 f_{K,B}(-A w)`` with ``f_{K,B}(y) = sup_{p in K} <y,p> - 1/2 <p,Bp>``."""

    A: np.ndarray
    B: np.ndarray
    K: ConeRep


@dataclass(frozen=True, eq=False)
class EnvelopeTerm:
    """Adds ``min_{u in K} <u,Su> + rho |u - J w|^2``."""

    J: np.ndarray
    rho: float
    S: np.ndarray
    K: object  # ConeRep or SecondOrderCone


@dataclass(frozen=True, eq=False)
class SecondSubderivativeForm:
    """The map ``w -> d^2 phi(x, v)(w)`` for one multiplier.

    ``H`` is the quadratic part.  If ``cone`` is set the value is ``+inf``
    unless ``J w`` lies in it.  ``extra`` holds an optional conjugate or
    envelope term.
    """

    H: np.ndarray
    J: np.ndarray | None = None
    cone: ConeRep | None = None
    extra: object = None
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def domain(self) -> ConeRep:
        if self.cone is None:
            return ConeRep.whole(self.n)
        return self.cone.pullback(self.J)

    def evaluate(self, w) -> float:
        w = np.asarray(w, dtype=float).reshape(-1)
        val = float(w @ self.H @ w)
        if self.cone is not None and not self.cone.contains(self.J @ w, tol=1e-10):
            return np.inf
        ex = self.extra
        if isinstance(ex, ELQPTerm):
            y = -ex.A @ w
            sol = solve_cone_qp(ConeQP(ex.B, -y, ex.K))
            if sol.status is not QPStatus.OPTIMAL:
                raise QPError(f"conjugate term solve failed: {sol.status.value}")
            val += -2.0 * sol.objective
        elif isinstance(ex, EnvelopeTerm):
            eta = ex.J @ w
            if isinstance(ex.K, SecondOrderCone):
                val += ex.rho * float(np.sum((eta - project_soc(eta)) ** 2))
            else:
                qp = ConeQP(2.0 * (ex.S + ex.rho * np.eye(eta.size)), -2.0 * ex.rho * eta, ex.K)
                sol = solve_cone_qp(qp)
                if sol.status is not QPStatus.OPTIMAL:
                    raise QPError(f"envelope term solve failed: {sol.status.value}")
                val += sol.objective + ex.rho * float(eta @ eta)
        return val

    def model_qp(self, v) -> tuple:
        """Cone QP whose first ``n`` coordinates minimize ``<v,w> + 1/2 d^2(w)``."""
        v = np.asarray(v, dtype=float).reshape(-1)
        n = self.n
        ex = self.extra
        if isinstance(ex, ELQPTerm):
            # f_{K,B}(y) = min over u in the polar of K of 1/2 (y-u)' B^{-1} (y-u),
            # with u = Eq' a + Ineq' b, b >= 0
            K = ex.K
            ne, ni = K.eq.shape[0], K.ineq.shape[0]
            M = np.hstack([ex.A, K.eq.T, K.ineq.T])
            Binv = np.linalg.inv(ex.B)
            H = M.T @ Binv @ M
            H[:n, :n] += self.H
            g = np.concatenate([v, np.zeros(ne + ni)])
            ineq = np.hstack([np.zeros((ni, n + ne)), -np.eye(ni)])
            return ConeQP(H, g, ConeRep(n + ne + ni, ineq=ineq)), n
        if isinstance(ex, EnvelopeTerm):
            if isinstance(ex.K, SecondOrderCone):
                raise UnsupportedSet("model step over a second-order critical cone")
            J = ex.J
            m = J.shape[0]
            H = np.block([[self.H + ex.rho * J.T @ J, -ex.rho * J.T],
                          [-ex.rho * J, ex.S + ex.rho * np.eye(m)]])
            g = np.concatenate([v, np.zeros(m)])
            cone = ConeRep(n + m, np.hstack([np.zeros((ex.K.eq.shape[0], n)), ex.K.eq]),
                           np.hstack([np.zeros((ex.K.ineq.shape[0], n)), ex.K.ineq]))
            return ConeQP(H, g, cone), n
        return ConeQP(self.H, v, self.domain()), n

    def model_step(self, v) -> np.ndarray:
        """Minimizer of ``<v,w> + 1/2 d^2 phi(x,v)(w)``."""
        qp, n = self.model_qp(v)
        sol = solve_cone_qp(qp)
        if sol.status is QPStatus.UNBOUNDED:
            raise SubproblemUnbounded("Newton model is unbounded below")
        if sol.status is not QPStatus.OPTIMAL:
            raise QPError(f"Newton model solve failed: {sol.status.value}")
        return sol.w[:n]


def elqp_form(data, x) -> SecondSubderivativeForm:
    """Form of ``d^2 phi(x, grad phi(x))`` for an extended linear-quadratic program."""
    x = np.asarray(x, dtype=float).reshape(-1)
    z = data.b - data.A @ x
    sol = conjugate_maximizer(data.C, data.B, z)
    u = sol.w
    K = critical_cone_polyhedral(data.C, u, z - data.B @ u)
    return SecondSubderivativeForm(np.asarray(data.Q, float), extra=ELQPTerm(data.A, data.B, K),
                                   info={"maximizer": u})


def second_subderivative_elqp(data, x, w) -> float:
    return elqp_form(data, x).evaluate(w)


def _lagrangian_hessian(nlp, x, lam):
    H = np.atleast_2d(np.asarray(nlp.psi_hess(x), dtype=float)).copy()
    if nlp.m:
        Hf = np.asarray(nlp.f_hess(x), dtype=float).reshape(nlp.m, H.shape[0], H.shape[0])
        H += np.tensordot(lam, Hf, axes=1)
    return 0.5 * (H + H.T)


def _constrained_form(nlp, x, lam, tol_act):
    fx = np.asarray(nlp.f(x), dtype=float).reshape(-1)
    J = np.atleast_2d(np.asarray(nlp.f_jac(x), dtype=float)).reshape(nlp.m, nlp.n)
    H = _lagrangian_hessian(nlp, x, lam)
    if nlp.m == 0:
        return SecondSubderivativeForm(H, info={"lam": lam})
    sets = index_sets(fx, lam, nlp.s, tol_act)
    eq_rows = sorted(set(range(nlp.s)) | sets.I_plus)
    in_rows = sorted(sets.I - sets.I_plus)
    I = np.eye(nlp.m)
    cone = ConeRep(nlp.m, I[eq_rows], I[in_rows])
    return SecondSubderivativeForm(H, J, cone, info={"lam": lam, "index_sets": sets})


def nlp_form(nlp, x, v, tol: float = 1e-7, tol_act: float = TOL_ACT) -> SecondSubderivativeForm:
    """Form at ``(x, v)`` built from the (least-norm if not unique) multiplier.

    ``v`` is a subgradient of ``psi + indicator(Omega)`` at ``x``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    res = lagrange_multipliers(nlp, x, v - np.asarray(nlp.psi_grad(x), float), tol, tol_act)
    form = _constrained_form(nlp, x, res.lam, tol_act)
    form.info["unique"] = res.unique
    return form


def second_subderivative_constrained(nlp, x, v, w, tol: float = 1e-7,
                                     tol_act: float = TOL_ACT) -> float:
    """Max over vertex multipliers of the constrained second subderivative."""
    x = np.asarray(x, dtype=float).reshape(-1)
    vv = np.asarray(v, dtype=float).reshape(-1) - np.asarray(nlp.psi_grad(x), float)
    lams = vertex_multipliers(nlp, x, vv, tol, tol_act)
    return max(_constrained_form(nlp, x, lam, tol_act).evaluate(w) for lam in lams)


def auglag_form(data, x) -> SecondSubderivativeForm:
    """Form of ``d^2`` of the augmented Lagrangian at ``(x, grad)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    fx = np.asarray(data.f(x), dtype=float).reshape(-1)
    J = np.atleast_2d(np.asarray(data.f_jac(x), dtype=float)).reshape(fx.size, -1)
    z = fx + data.lam / data.rho
    theta = data.theta
    proj = theta.project(z)
    mu = data.rho * (z - proj)
    H = _lagrangian_hessian(data, x, mu)
    if isinstance(theta, SecondOrderCone):
        K = soc_critical_cone(proj, mu)
        S = soc_curvature(proj, mu)
    else:
        K = critical_cone_polyhedral(theta, proj, mu)
        S = np.zeros((fx.size, fx.size))
    return SecondSubderivativeForm(H, extra=EnvelopeTerm(J, float(data.rho), S, K),
                                   info={"mu": mu, "projection": proj})


def fd_second_quotient(instance, x, v, w, t: float = 1e-4) -> float:
    """Second-order difference quotient of ``instance.value`` at ``x`` along ``w``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    f0 = instance.value(x)
    f1 = instance.value(x + t * w)
    if not np.isfinite(f1):
        return np.inf
    return float((f1 - f0 - t * (v @ w)) / (0.5 * t * t))
