"""Problem instances with value, gradient, second-order and prox oracles.

Every builder returns an immutable :class:`ProblemInstance`.  Instances
built from plain numeric data also carry a JSON-ready ``spec`` so they can
be written to and read from problem files (see :func:`problem_from_dict`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import mpmath
import numpy as np
from scipy import optimize, special
from scipy.optimize import lsq_linear

from . import secondorder as so
from .exceptions import ConfigInvalid, DimensionError, UnsupportedSet
from .qpsolver import QPStatus, conjugate_maximizer, solve_qp
from .sets import ConeRep, PolyhedralSet, SecondOrderCone

__all__ = [
    "Kind",
    "ProblemInstance",
    "ELQPData",
    "NLPData",
    "AugLagData",
    "Example46Data",
    "make_smooth",
    "make_smooth_poly",
    "make_quadratic",
    "make_c11",
    "make_elqp",
    "make_nlp",
    "make_auglag",
    "make_example_4_6",
    "make_norm1",
    "problem_from_dict",
    "problem_to_dict",
    "load_problem",
    "save_problem",
    "PROBLEM_SCHEMA",
]

FEAS_TOL = 1e-9


class Kind(str, Enum):
    SMOOTH = "SmoothC2"
    PIECEWISE = "PiecewiseC11"
    ELQP = "ELQP"
    NLP = "NLP"
    AUGLAG = "AugLag"
    EXAMPLE46 = "Example46"
    NORM1 = "Norm1"


C11_KINDS = frozenset({Kind.SMOOTH, Kind.PIECEWISE, Kind.ELQP, Kind.AUGLAG, Kind.EXAMPLE46})


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A function ``phi`` on ``R^n`` together with its oracles.

    ``hessian_selections(x)`` lists limiting-Hessian selections of
    ``grad phi`` at ``x`` in a fixed order; ``form(x, v)`` returns the
    :class:`~tiltnewton.secondorder.SecondSubderivativeForm` of
    ``d^2 phi(x, v)``; ``prox(x, r)`` is a closed-form proximal map or
    ``None`` when the generic inner solver must be used.
    """

    kind: Kind
    n: int
    value: Callable
    subgradient_residual: Callable
    gradient: Callable | None = None
    hessian_selections: Callable | None = None
    form: Callable | None = None
    prox: Callable | None = None
    data: object = None
    spec: dict | None = None
    name: str = ""
    known_solution: np.ndarray | None = None
    known_tilt_modulus: float | None = None
    known_rho: float = 0.0
    precision: int | None = None
    start: object = None

    @property
    def is_c11(self) -> bool:
        return self.kind in C11_KINDS

    def to_dict(self) -> dict:
        return problem_to_dict(self)


def _vec(a, n=None, name="vector"):
    a = np.asarray(a, dtype=float).reshape(-1)
    if n is not None and a.size != n:
        raise DimensionError(f"{name} must have length {n}, got {a.size}")
    return a


def _mat(a, rows=None, cols=None, name="matrix"):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if (rows is not None and a.shape[0] != rows) or (cols is not None and a.shape[1] != cols):
        raise DimensionError(f"{name} has shape {a.shape}, expected ({rows}, {cols})")
    return a


def _common(spec, known_solution, known_tilt_modulus, known_rho, name):
    if spec is None:
        return None
    out = dict(spec)
    if name:
        out["name"] = name
    if known_solution is not None:
        out["known_solution"] = np.asarray(known_solution, float).tolist()
    if known_tilt_modulus is not None:
        out["known_tilt_modulus"] = float(known_tilt_modulus)
    if known_rho:
        out["known_rho"] = float(known_rho)
    return out


def _gradient_residual(grad):
    def residual(x, v):
        return float(np.linalg.norm(np.asarray(v, float) - grad(np.asarray(x, float))))
    return residual


# ---------------------------------------------------------------------------
# smooth


def make_smooth(value, gradient, hessian, n: int, *, known_solution=None,
                known_tilt_modulus=None, known_rho: float = 0.0, name: str = "smooth",
                prox=None, spec=None, kind: Kind = Kind.SMOOTH) -> ProblemInstance:
    """Wrap a C^2 function given by value, gradient and Hessian callables."""

    def grad(x):
        return np.asarray(gradient(np.asarray(x, float)), dtype=float).reshape(n)

    def hess(x):
        return np.atleast_2d(np.asarray(hessian(np.asarray(x, float)), dtype=float)).reshape(n, n)

    return ProblemInstance(
        kind=kind, n=n,
        value=lambda x: float(value(np.asarray(x, float))),
        subgradient_residual=_gradient_residual(grad),
        gradient=grad,
        hessian_selections=lambda x: [hess(x)],
        form=lambda x, v: so.SecondSubderivativeForm(hess(x)),
        prox=prox,
        spec=_common(spec, known_solution, known_tilt_modulus, known_rho, name),
        name=name,
        known_solution=None if known_solution is None else _vec(known_solution, n),
        known_tilt_modulus=known_tilt_modulus,
        known_rho=known_rho,
    )


def make_smooth_poly(Q, b=None, quartic=None, *, known_solution=None, known_tilt_modulus=None,
                     name: str = "smooth_poly") -> ProblemInstance:
    """``phi(x) = 1/2 x'Qx - b'x + sum_i c_i x_i^4``."""
    Q = _mat(Q, name="Q")
    n = Q.shape[0]
    Q = 0.5 * (Q + Q.T)
    b = np.zeros(n) if b is None else _vec(b, n, "b")
    c = np.zeros(n) if quartic is None else _vec(quartic, n, "quartic")
    lam_min = float(np.linalg.eigvalsh(Q)[0])
    pure = not np.any(c)
    if known_solution is None:
        if pure and lam_min > 0:
            known_solution = np.linalg.solve(Q, b)
        elif not np.any(b) and lam_min > 0 and np.all(c >= 0):
            known_solution = np.zeros(n)
    if known_tilt_modulus is None and known_solution is not None and lam_min > 0:
        Hs = Q + np.diag(12.0 * c * np.asarray(known_solution) ** 2)
        known_tilt_modulus = 1.0 / float(np.linalg.eigvalsh(Hs)[0])
    rho = max(0.0, -lam_min) if pure else 0.0

    def value(x):
        return 0.5 * x @ Q @ x - b @ x + float(np.sum(c * x ** 4))

    def gradient(x):
        return Q @ x - b + 4.0 * c * x ** 3

    def hessian(x):
        return Q + np.diag(12.0 * c * x ** 2)

    prox = None
    if pure:
        def prox(x, r):
            M = Q + np.eye(n) / r
            if np.linalg.eigvalsh(M)[0] <= 0:
                return None
            return np.linalg.solve(M, np.asarray(x, float) / r + b)

    spec = {"kind": Kind.SMOOTH.value, "Q": Q.tolist(), "b": b.tolist(), "quartic": c.tolist()}
    return make_smooth(value, gradient, hessian, n, known_solution=known_solution,
                       known_tilt_modulus=known_tilt_modulus, known_rho=rho, name=name,
                       prox=prox, spec=spec)


def make_quadratic(Q, b=None, **kw) -> ProblemInstance:
    """``phi(x) = 1/2 x'Qx - b'x``."""
    kw.setdefault("name", "quadratic")
    return make_smooth_poly(Q, b, None, **kw)


# ---------------------------------------------------------------------------
# extended linear-quadratic programs


@dataclass(frozen=True, eq=False)
class ELQPData:
    """``phi(x) = <q,x> + 1/2 <Qx,x> + f_{C,B}(b - Ax)`` with
    ``f_{C,B}(z) = sup_{p in C} <z,p> - 1/2 <p,Bp>``."""

    Q: np.ndarray
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    C: PolyhedralSet
    B: np.ndarray

    def __post_init__(self):
        Q = _mat(self.Q, name="Q")
        n = Q.shape[0]
        A = _mat(self.A, cols=n, name="A")
        m = A.shape[0]
        B = _mat(self.B, m, m, "B")
        if self.C.dim != m:
            raise DimensionError("C must live in R^m with m = rows of A")
        object.__setattr__(self, "Q", _mat(0.5 * (Q + Q.T), n, n, "Q"))
        object.__setattr__(self, "q", _vec(self.q, n, "q"))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", _vec(self.b, m, "b"))
        B = 0.5 * (B + B.T)
        try:
            np.linalg.cholesky(B)
        except np.linalg.LinAlgError as exc:
            raise ValueError("B must be positive definite") from exc
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def maximizer(self, x):
        """Solution of the inner conjugate problem at ``z = b - Ax``."""
        z = self.b - self.A @ x
        return z, conjugate_maximizer(self.C, self.B, z)

    def conjugate_value(self, z, p) -> float:
        return float(z @ p - 0.5 * p @ self.B @ p)

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "q": self.q.tolist(), "A": self.A.tolist(),
                "b": self.b.tolist(), "C": _set_to_dict(self.C), "B": self.B.tolist()}


def _elqp_prox(data: ELQPData):
    n = data.n

    def prox(x, r):
        M = data.Q + np.eye(n) / r
        if np.linalg.eigvalsh(M)[0] <= 0:
            return None
        x = np.asarray(x, float)
        Minv_At = np.linalg.solve(M, data.A.T)
        base = x / r - data.q
        H = data.B + data.A @ Minv_At
        g = data.A @ np.linalg.solve(M, base) - data.b
        C = data.C
        sol = solve_qp(H, g, C.E, C.d, C.G, C.h, x0=C.feasible_point)
        if sol.status is not QPStatus.OPTIMAL:
            return None
        return np.linalg.solve(M, base + data.A.T @ sol.w)

    return prox


def make_elqp(data: ELQPData, *, known_solution=None, known_tilt_modulus=None,
              name: str = "elqp", kind: Kind = Kind.ELQP, spec=None) -> ProblemInstance:
    n = data.n

    def value(x):
        x = np.asarray(x, float)
        z, sol = data.maximizer(x)
        return float(data.q @ x + 0.5 * x @ data.Q @ x + data.conjugate_value(z, sol.w))

    def gradient(x):
        x = np.asarray(x, float)
        _, sol = data.maximizer(x)
        return data.q + data.Q @ x - data.A.T @ sol.w

    def selections(x):
        x = np.asarray(x, float)
        z, sol = data.maximizer(x)
        return [data.Q + data.A.T @ D @ data.A
                for D in so.conjugate_jacobians(data.C, data.B, z, sol)]

    if spec is None:
        spec = {"kind": Kind.ELQP.value, **data.to_dict()}
    return ProblemInstance(
        kind=kind, n=n, value=value,
        subgradient_residual=_gradient_residual(gradient),
        gradient=gradient,
        hessian_selections=selections,
        form=lambda x, v: so.elqp_form(data, x),
        prox=_elqp_prox(data),
        data=data,
        spec=_common(spec, known_solution, known_tilt_modulus, 0.0, name),
        name=name,
        known_solution=None if known_solution is None else _vec(known_solution, n),
        known_tilt_modulus=known_tilt_modulus,
        known_rho=max(0.0, -float(np.linalg.eigvalsh(data.Q)[0])),
    )


def make_c11(Q, q, G, h, weights=None, *, known_solution=None, known_tilt_modulus=None,
             name: str = "piecewise_c11") -> ProblemInstance:
    """``phi(x) = <q,x> + 1/2 x'Qx + 1/2 sum_i w_i max(0, G_i x - h_i)^2``.

    This is the extended linear-quadratic program with ``C`` the
    nonnegative orthant, ``B = diag(1/w)``, ``A = -G`` and ``b = -h``.
    """
    G = _mat(G, name="G")
    m = G.shape[0]
    w = np.ones(m) if weights is None else _vec(weights, m, "weights")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    data = ELQPData(Q, q, -G, -_vec(h, m, "h"), PolyhedralSet.nonnegative_orthant(m),
                    np.diag(1.0 / w))
    spec = {"kind": Kind.PIECEWISE.value, "Q": data.Q.tolist(), "q": data.q.tolist(),
            "G": G.tolist(), "h": _vec(h).tolist(), "weights": w.tolist()}
    return make_elqp(data, known_solution=known_solution, known_tilt_modulus=known_tilt_modulus,
                     name=name, kind=Kind.PIECEWISE, spec=spec)


# ---------------------------------------------------------------------------
# smooth maps built from quadratics (serializable psi and f)


def _quad_parts(entry, n):
    P = entry.get("P")
    P = np.zeros((n, n)) if P is None else _mat(P, n, n, "P")
    a = entry.get("a")
    a = np.zeros(n) if a is None else _vec(a, n, "a")
    return 0.5 * (P + P.T), a, float(entry.get("c", 0.0))


@dataclass(frozen=True, eq=False)
class QuadraticMaps:
    """``psi(x) = 1/2 x'P0x + a0'x + c0`` and ``f_i(x) = 1/2 x'P_ix + a_i'x + c_i``."""

    n: int
    psi_spec: dict
    constraint_specs: tuple

    def __post_init__(self):
        P0, a0, c0 = _quad_parts(self.psi_spec, self.n)
        parts = [_quad_parts(e, self.n) for e in self.constraint_specs]
        m = len(parts)
        object.__setattr__(self, "_P0", P0)
        object.__setattr__(self, "_a0", a0)
        object.__setattr__(self, "_c0", c0)
        object.__setattr__(self, "_P", np.array([p[0] for p in parts]).reshape(m, self.n, self.n))
        object.__setattr__(self, "_a", np.array([p[1] for p in parts]).reshape(m, self.n))
        object.__setattr__(self, "_c", np.array([p[2] for p in parts]).reshape(m))

    @property
    def m(self) -> int:
        return len(self.constraint_specs)

    @property
    def affine_constraints(self) -> bool:
        return not np.any(self._P)

    def psi(self, x):
        return float(0.5 * x @ self._P0 @ x + self._a0 @ x + self._c0)

    def psi_grad(self, x):
        return self._P0 @ x + self._a0

    def psi_hess(self, x):
        return self._P0.copy()

    def f(self, x):
        return 0.5 * np.einsum("i,kij,j->k", x, self._P, x) + self._a @ x + self._c

    def f_jac(self, x):
        return np.einsum("kij,j->ki", self._P, x) + self._a

    def f_hess(self, x):
        return self._P.copy()

    def to_dict(self) -> dict:
        def clean(e):
            return {k: (np.asarray(v, float).tolist() if k != "c" else float(v))
                    for k, v in e.items() if v is not None}
        return {"n": self.n, "psi": clean(self.psi_spec),
                "constraints": [clean(e) for e in self.constraint_specs]}


@dataclass(frozen=True, eq=False)
class NLPData:
    """``min psi(x)`` subject to ``f(x)`` in ``{0}^s x R_-^(m-s)``.

    ``f_hess(x)`` returns the stacked constraint Hessians, shape ``(m, n, n)``.
    """

    psi: Callable
    psi_grad: Callable
    psi_hess: Callable
    f: Callable
    f_jac: Callable
    f_hess: Callable
    n: int
    m: int
    s: int
    maps: QuadraticMaps | None = None

    def __post_init__(self):
        if not 0 <= self.s <= self.m:
            raise DimensionError("need 0 <= s <= m")

    @classmethod
    def quadratic(cls, n: int, psi: dict, constraints=(), s: int = 0) -> "NLPData":
        maps = QuadraticMaps(n, dict(psi), tuple(dict(c) for c in constraints))
        return cls(maps.psi, maps.psi_grad, maps.psi_hess, maps.f, maps.f_jac, maps.f_hess,
                   n, maps.m, s, maps)

    def feasibility_violation(self, x) -> float:
        if self.m == 0:
            return 0.0
        fx = np.asarray(self.f(x), float).reshape(-1)
        v = np.abs(fx[: self.s]).max(initial=0.0)
        return float(max(v, fx[self.s:].max(initial=0.0)))

    def to_dict(self) -> dict:
        if self.maps is None:
            raise ValueError("only quadratic NLP data can be serialized")
        return {**self.maps.to_dict(), "s": self.s}


def _nlp_residual(data: NLPData):
    def residual(x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        if data.feasibility_violation(x) > FEAS_TOL:
            return np.inf
        r0 = v - np.asarray(data.psi_grad(x), float)
        if data.m == 0:
            return float(np.linalg.norm(r0))
        fx = np.asarray(data.f(x), float)
        J = np.atleast_2d(np.asarray(data.f_jac(x), float)).reshape(data.m, data.n)
        eq = list(range(data.s))
        act = [i for i in range(data.s, data.m) if abs(fx[i]) <= so.TOL_ACT]
        idx = eq + act
        if not idx:
            return float(np.linalg.norm(r0))
        lb = np.concatenate([np.full(len(eq), -np.inf), np.zeros(len(act))])
        fit = lsq_linear(J[idx].T, r0, bounds=(lb, np.full(lb.size, np.inf)),
                         method="bvls", tol=1e-15)
        return float(np.linalg.norm(J[idx].T @ fit.x - r0))
    return residual


def _nlp_prox_affine(data: NLPData):
    """Exact prox when psi is quadratic and the constraints are affine."""
    maps = data.maps
    n, s = data.n, data.s

    def prox(x, r):
        H = maps._P0 + np.eye(n) / r
        if np.linalg.eigvalsh(H)[0] <= 0:
            return None
        g = maps._a0 - np.asarray(x, float) / r
        A, c = maps._a, maps._c
        sol = solve_qp(H, g, A[:s], -c[:s], A[s:], -c[s:])
        if sol.status is not QPStatus.OPTIMAL:
            return None
        return sol.w

    return prox


def make_nlp(data: NLPData, *, known_solution=None, known_tilt_modulus=None,
             known_rho: float = 0.0, name: str = "nlp") -> ProblemInstance:
    n = data.n

    def value(x):
        x = np.asarray(x, float)
        if data.feasibility_violation(x) > FEAS_TOL:
            return np.inf
        return float(data.psi(x))

    prox = None
    if data.maps is not None and data.maps.affine_constraints:
        prox = _nlp_prox_affine(data)
    spec = None
    if data.maps is not None:
        spec = {"kind": Kind.NLP.value, **data.to_dict()}
    return ProblemInstance(
        kind=Kind.NLP, n=n, value=value,
        subgradient_residual=_nlp_residual(data),
        form=lambda x, v: so.nlp_form(data, x, v),
        prox=prox,
        data=data,
        spec=_common(spec, known_solution, known_tilt_modulus, known_rho, name),
        name=name,
        known_solution=None if known_solution is None else _vec(known_solution, n),
        known_tilt_modulus=known_tilt_modulus,
        known_rho=known_rho,
    )


# ---------------------------------------------------------------------------
# augmented Lagrangian


@dataclass(frozen=True, eq=False)
class AugLagData:
    """``L(x) = psi(x) + rho/2 dist^2(f(x) + lam/rho; Theta) - |lam|^2/(2 rho)``."""

    psi: Callable
    psi_grad: Callable
    psi_hess: Callable
    f: Callable
    f_jac: Callable
    f_hess: Callable
    n: int
    m: int
    theta: object
    lam: np.ndarray
    rho: float
    maps: QuadraticMaps | None = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "lam", _vec(self.lam, self.m, "lam"))
        if not isinstance(self.theta, (PolyhedralSet, SecondOrderCone)):
            raise UnsupportedSet("Theta must be a PolyhedralSet or SecondOrderCone")
        if self.theta.dim != self.m:
            raise DimensionError("Theta must live in R^m")

    @classmethod
    def quadratic(cls, n: int, psi: dict, constraints, theta, lam, rho) -> "AugLagData":
        maps = QuadraticMaps(n, dict(psi), tuple(dict(c) for c in constraints))
        return cls(maps.psi, maps.psi_grad, maps.psi_hess, maps.f, maps.f_jac, maps.f_hess,
                   n, maps.m, theta, lam, rho, maps)

    def shifted(self, x):
        fx = np.asarray(self.f(x), float).reshape(-1)
        z = fx + self.lam / self.rho
        proj = self.theta.project(z)
        return z, proj, self.rho * (z - proj)

    def to_dict(self) -> dict:
        if self.maps is None:
            raise ValueError("only quadratic augmented-Lagrangian data can be serialized")
        return {**self.maps.to_dict(), "theta": _set_to_dict(self.theta),
                "lam": self.lam.tolist(), "rho": float(self.rho)}


def make_auglag(data: AugLagData, *, known_solution=None, known_tilt_modulus=None,
                name: str = "auglag") -> ProblemInstance:
    n, m = data.n, data.m

    def value(x):
        x = np.asarray(x, float)
        z, proj, _ = data.shifted(x)
        return float(data.psi(x) + 0.5 * data.rho * np.sum((z - proj) ** 2)
                     - 0.5 * (data.lam @ data.lam) / data.rho)

    def gradient(x):
        x = np.asarray(x, float)
        _, _, mu = data.shifted(x)
        J = np.atleast_2d(np.asarray(data.f_jac(x), float)).reshape(m, n)
        return np.asarray(data.psi_grad(x), float) + J.T @ mu

    def selections(x):
        x = np.asarray(x, float)
        z, _, mu = data.shifted(x)
        J = np.atleast_2d(np.asarray(data.f_jac(x), float)).reshape(m, n)
        HL = so._lagrangian_hessian(data, x, mu)
        if isinstance(data.theta, SecondOrderCone):
            jacs = so.soc_projection_jacobians(z)
        else:
            jacs = so.conjugate_jacobians(data.theta, np.eye(m), z)
        return [HL + data.rho * J.T @ (np.eye(m) - D) @ J for D in jacs]

    spec = None
    if data.maps is not None:
        spec = {"kind": Kind.AUGLAG.value, **data.to_dict()}
    return ProblemInstance(
        kind=Kind.AUGLAG, n=n, value=value,
        subgradient_residual=_gradient_residual(gradient),
        gradient=gradient,
        hessian_selections=selections,
        form=lambda x, v: so.auglag_form(data, x),
        data=data,
        spec=_common(spec, known_solution, known_tilt_modulus, 0.0, name),
        name=name,
        known_solution=None if known_solution is None else _vec(known_solution, n),
        known_tilt_modulus=known_tilt_modulus,
    )


# ---------------------------------------------------------------------------
# the oscillating one-dimensional example


@dataclass(frozen=True)
class Example46Data:
    """Start-point parameter for ``x0 = 1/(2 alpha pi)``."""

    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def _is_mp(x) -> bool:
    return isinstance(x, mpmath.mpf)


def _psi46(x):
    if _is_mp(x):
        return mpmath.mpf(0) if x == 0 else x * x * mpmath.sin(1 / x) + 2 * x
    return 0.0 if x == 0 else x * x * math.sin(1.0 / x) + 2.0 * x


def _dpsi46(x):
    if _is_mp(x):
        return 2 * x * mpmath.sin(1 / x) - mpmath.cos(1 / x) + 2
    return 2.0 * x * math.sin(1.0 / x) - math.cos(1.0 / x) + 2.0


def make_example_4_6(alpha: float = 1.0, precision: int | None = None) -> ProblemInstance:
    """``phi(x) = int_0^x psi`` with ``psi(t) = t^2 sin(1/t) + 2t`` and ``psi(0) = 0``.

    ``phi`` is convex with a Lipschitz gradient and a tilt-stable minimizer
    at 0, yet Newton iterations from ``x0 = 1/(2 alpha pi)`` (integer
    ``alpha``) alternate between ``x0`` and ``-x0``.  With ``precision``
    set (decimal digits) the gradient and Hessian oracles accept
    :mod:`mpmath` numbers and the runner iterates in that precision;
    ``start`` then holds ``x0`` to full precision.
    """
    data = Example46Data(alpha)

    def value(x):
        t = np.asarray(x, dtype=object).reshape(-1)[0]
        if _is_mp(t):
            return mpmath.quad(_psi46, [0, t]) if t != 0 else mpmath.mpf(0)
        t = float(t)
        if t == 0.0:
            return 0.0
        # int_0^|t| s^2 sin(1/s) ds = int_a^inf sin(u) u^-4 du with a = 1/|t|,
        # reduced to the cosine integral by parts (the integrand is even in t)
        a = 1.0 / abs(t)
        sa, ca = math.sin(a), math.cos(a)
        s2 = sa / a - special.sici(a)[1]
        osc = sa / (3 * a ** 3) + (ca / (2 * a * a) - 0.5 * s2) / 3.0
        return float(osc + t * t)

    def gradient(x):
        t = np.asarray(x, dtype=object).reshape(-1)[0]
        if _is_mp(t):
            return np.array([_psi46(t)], dtype=object)
        return np.array([_psi46(float(t))])

    def selections(x):
        t = np.asarray(x, dtype=object).reshape(-1)[0]
        if t == 0:
            return [np.array([[1.0]]), np.array([[3.0]])]
        if _is_mp(t):
            return [np.array([[_dpsi46(t)]], dtype=object)]
        return [np.array([[_dpsi46(float(t))]])]

    def residual(x, v):
        return float(abs(float(np.asarray(v, float).reshape(-1)[0]) - gradient(np.asarray(x, float))[0]))

    def form(x, v):
        return so.SecondSubderivativeForm(np.asarray(selections(np.asarray(x, float))[0], float))

    def prox(x, r):
        x0 = float(np.asarray(x, float).reshape(-1)[0])

        def F(w):
            return _psi46(w) + (w - x0) / r

        span = max(1.0, abs(x0))
        lo, hi = x0 - span, x0 + span
        while F(lo) > 0:
            lo -= span
        while F(hi) < 0:
            hi += span
        return np.array([optimize.brentq(F, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps,
                                         maxiter=500)])

    if precision is not None:
        with mpmath.workdps(precision):
            start = np.array([1 / (2 * mpmath.mpf(alpha) * mpmath.pi)], dtype=object)
    else:
        start = np.array([1.0 / (2.0 * alpha * math.pi)])
    spec = {"kind": Kind.EXAMPLE46.value, "alpha": float(alpha)}
    if precision is not None:
        spec["precision"] = int(precision)
    return ProblemInstance(
        kind=Kind.EXAMPLE46, n=1, value=value,
        subgradient_residual=residual,
        gradient=gradient,
        hessian_selections=selections,
        form=form,
        prox=prox,
        data=data,
        spec=_common(spec, np.zeros(1), 1.0, 0.0, "example_4_6"),
        name="example_4_6",
        known_solution=np.zeros(1),
        known_tilt_modulus=1.0,
        precision=precision,
        start=start,
    )


# ---------------------------------------------------------------------------
# l1 norm


def make_norm1(n: int, name: str = "norm1") -> ProblemInstance:
    """``phi(x) = |x|_1``, a convex function with a closed-form prox."""
    kink = 1e-12

    def value(x):
        return float(np.sum(np.abs(np.asarray(x, float))))

    def residual(x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        on = np.abs(x) > kink
        r = np.where(on, np.abs(v - np.sign(x)), np.maximum(np.abs(v) - 1.0, 0.0))
        return float(np.linalg.norm(r))

    def prox(x, r):
        x = np.asarray(x, float)
        return np.sign(x) * np.maximum(np.abs(x) - r, 0.0)

    def form(x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        eq, ineq = [], []
        I = np.eye(n)
        for i in range(n):
            if abs(x[i]) > kink:
                continue
            if abs(abs(v[i]) - 1.0) <= 1e-9:
                ineq.append(-np.sign(v[i]) * I[i])
            else:
                eq.append(I[i])
        cone = ConeRep(n, np.array(eq).reshape(-1, n), np.array(ineq).reshape(-1, n))
        return so.SecondSubderivativeForm(np.zeros((n, n)), I, cone)

    return ProblemInstance(
        kind=Kind.NORM1, n=n, value=value, subgradient_residual=residual,
        form=form, prox=prox,
        spec={"kind": Kind.NORM1.value, "n": n, "name": name},
        name=name, known_solution=np.zeros(n),
    )


# ---------------------------------------------------------------------------
# JSON problem files

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": ["number", "null"]}}}
_VECTOR = {"type": "array", "items": {"type": ["number", "null"]}}
_QUAD = {"type": "object", "properties": {"P": _MATRIX, "a": _VECTOR, "c": {"type": "number"}},
         "additionalProperties": False}
_SET = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["polyhedral", "box", "soc"]},
        "dim": {"type": "integer", "minimum": 1},
        "G": _MATRIX, "h": _VECTOR, "E": _MATRIX, "d": _VECTOR,
        "lower": _VECTOR, "upper": _VECTOR,
    },
}
_COMMON = {
    "kind": {"enum": [k.value for k in Kind]},
    "name": {"type": "string"},
    "known_solution": _VECTOR,
    "known_tilt_modulus": {"type": "number", "exclusiveMinimum": 0},
    "known_rho": {"type": "number", "minimum": 0},
}


def _kind_schema(kind: Kind, required, props):
    return {
        "if": {"properties": {"kind": {"const": kind.value}}},
        "then": {"required": list(required), "properties": props},
    }


PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tiltnewton problem",
    "type": "object",
    "required": ["kind"],
    "properties": _COMMON,
    "allOf": [
        _kind_schema(Kind.SMOOTH, ["Q"], {"Q": _MATRIX, "b": _VECTOR, "quartic": _VECTOR}),
        _kind_schema(Kind.PIECEWISE, ["Q", "q", "G", "h"],
                     {"Q": _MATRIX, "q": _VECTOR, "G": _MATRIX, "h": _VECTOR, "weights": _VECTOR}),
        _kind_schema(Kind.ELQP, ["Q", "q", "A", "b", "C", "B"],
                     {"Q": _MATRIX, "q": _VECTOR, "A": _MATRIX, "b": _VECTOR, "C": _SET,
                      "B": _MATRIX}),
        _kind_schema(Kind.NLP, ["n", "psi"],
                     {"n": {"type": "integer", "minimum": 1}, "psi": _QUAD,
                      "constraints": {"type": "array", "items": _QUAD},
                      "s": {"type": "integer", "minimum": 0}}),
        _kind_schema(Kind.AUGLAG, ["n", "psi", "constraints", "theta", "lam", "rho"],
                     {"n": {"type": "integer", "minimum": 1}, "psi": _QUAD,
                      "constraints": {"type": "array", "items": _QUAD}, "theta": _SET,
                      "lam": _VECTOR, "rho": {"type": "number", "exclusiveMinimum": 0}}),
        _kind_schema(Kind.EXAMPLE46, [],
                     {"alpha": {"type": "number", "exclusiveMinimum": 0},
                      "precision": {"type": "integer", "minimum": 16}}),
        _kind_schema(Kind.NORM1, ["n"], {"n": {"type": "integer", "minimum": 1}}),
    ],
}


def _nullable(values, fill):
    return [fill if v is None else v for v in values]


def _set_from_dict(d: dict):
    typ = d.get("type", "polyhedral")
    if typ == "soc":
        return SecondOrderCone(int(d["dim"]))
    if typ == "box":
        return PolyhedralSet.box(_nullable(d["lower"], -np.inf), _nullable(d["upper"], np.inf))
    return PolyhedralSet.from_dict(d)


def _set_to_dict(s) -> dict:
    if isinstance(s, SecondOrderCone):
        return {"type": "soc", "dim": s.dim}
    return {"type": "polyhedral", **s.to_dict()}


def validate_problem(d: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(d, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"problem field {where}: {exc.message}") from exc


def problem_from_dict(d: dict) -> ProblemInstance:
    """Build an instance from a JSON-ready dictionary (see ``PROBLEM_SCHEMA``)."""
    validate_problem(d)
    kind = Kind(d["kind"])
    kw = {"known_solution": d.get("known_solution"),
          "known_tilt_modulus": d.get("known_tilt_modulus")}
    if "name" in d:
        kw["name"] = d["name"]
    try:
        if kind is Kind.SMOOTH:
            return make_smooth_poly(d["Q"], d.get("b"), d.get("quartic"), **kw)
        if kind is Kind.PIECEWISE:
            return make_c11(d["Q"], d["q"], d["G"], d["h"], d.get("weights"), **kw)
        if kind is Kind.ELQP:
            data = ELQPData(d["Q"], d["q"], d["A"], d["b"], _set_from_dict(d["C"]), d["B"])
            return make_elqp(data, **kw)
        if kind is Kind.NLP:
            data = NLPData.quadratic(int(d["n"]), d["psi"], d.get("constraints", []),
                                     int(d.get("s", 0)))
            return make_nlp(data, known_rho=float(d.get("known_rho", 0.0)), **kw)
        if kind is Kind.AUGLAG:
            data = AugLagData.quadratic(int(d["n"]), d["psi"], d["constraints"],
                                        _set_from_dict(d["theta"]), d["lam"], float(d["rho"]))
            return make_auglag(data, **kw)
        if kind is Kind.EXAMPLE46:
            return make_example_4_6(float(d.get("alpha", 1.0)), d.get("precision"))
        return make_norm1(int(d["n"]), **({"name": d["name"]} if "name" in d else {}))
    except (ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(f"invalid {kind.value} problem: {exc}") from exc


def problem_to_dict(inst: ProblemInstance) -> dict:
    if inst.spec is None:
        raise ValueError(f"instance {inst.name!r} was built from callables and has no JSON form")
    return json.loads(json.dumps(inst.spec))


def load_problem(path) -> ProblemInstance:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return problem_from_dict(d)


def save_problem(inst: ProblemInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(inst), fh, indent=2)

