"""Convex sets used as constraint data: polyhedra, polyhedral cones and the
second-order cone."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .exceptions import DimensionError, Infeasible

__all__ = ["PolyhedralSet", "ConeRep", "SecondOrderCone"]


def _as_matrix(a, cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, cols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, cols))
    if a.shape[1] != cols:
        raise DimensionError(f"expected {cols} columns, got shape {a.shape}")
    return a


def _as_vector(a, rows: int) -> np.ndarray:
    if a is None:
        return np.zeros(rows)
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape[0] != rows:
        raise DimensionError(f"expected length {rows}, got {a.shape[0]}")
    return a


@dataclass(frozen=True, eq=False)
class PolyhedralSet:
    """The set ``{z : G z <= h, E z = d}`` in ``R^dim``.

    Nonemptiness is certified at construction by a feasibility LP; the
    point found is kept in ``feasible_point`` and used to warm-start QPs.
    """

    dim: int
    G: np.ndarray = None
    h: np.ndarray = None
    E: np.ndarray = None
    d: np.ndarray = None
    feasible_point: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = int(self.dim)
        if m < 1:
            raise DimensionError("dim must be positive")
        G = _as_matrix(self.G, m)
        E = _as_matrix(self.E, m)
        object.__setattr__(self, "dim", m)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", _as_vector(self.h, G.shape[0]))
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "d", _as_vector(self.d, E.shape[0]))
        object.__setattr__(self, "feasible_point", self._find_feasible_point())

    def _find_feasible_point(self) -> np.ndarray:
        m = self.dim
        if self.G.shape[0] == 0 and self.E.shape[0] == 0:
            return np.zeros(m)
        if self.is_box:
            lo, hi = self.box_bounds
            if np.any(lo > hi):
                raise Infeasible("empty box")
            return np.clip(np.zeros(m), lo, hi)
        res = linprog(
            np.zeros(m),
            A_ub=self.G if self.G.shape[0] else None,
            b_ub=self.h if self.G.shape[0] else None,
            A_eq=self.E if self.E.shape[0] else None,
            b_eq=self.d if self.E.shape[0] else None,
            bounds=[(None, None)] * m,
            method="highs",
        )
        if res.status != 0:
            raise Infeasible(f"polyhedral set is empty ({res.message})")
        return np.asarray(res.x, dtype=float)

    # builders -----------------------------------------------------------

    @classmethod
    def box(cls, lower, upper) -> "PolyhedralSet":
        """Box ``lower <= z <= upper``; infinite bounds add no rows."""
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise DimensionError("bound shapes differ")
        m = lower.size
        rows, rhs = [], []
        for i in range(m):
            if np.isfinite(upper[i]):
                e = np.zeros(m)
                e[i] = 1.0
                rows.append(e)
                rhs.append(upper[i])
            if np.isfinite(lower[i]):
                e = np.zeros(m)
                e[i] = -1.0
                rows.append(e)
                rhs.append(-lower[i])
        G = np.array(rows) if rows else None
        return cls(m, G, np.array(rhs) if rows else None)

    @classmethod
    def nonnegative_orthant(cls, m: int) -> "PolyhedralSet":
        return cls.box(np.zeros(m), np.full(m, np.inf))

    @classmethod
    def nonpositive_orthant(cls, m: int) -> "PolyhedralSet":
        return cls.box(np.full(m, -np.inf), np.zeros(m))

    @classmethod
    def singleton(cls, point) -> "PolyhedralSet":
        point = np.asarray(point, dtype=float).reshape(-1)
        return cls(point.size, E=np.eye(point.size), d=point)

    @classmethod
    def whole_space(cls, m: int) -> "PolyhedralSet":
        return cls(m)

    @classmethod
    def nlp_constraint_set(cls, s: int, m: int) -> "PolyhedralSet":
        """``{0}^s x R_-^(m-s)``, the constraint set of a nonlinear program."""
        if not 0 <= s <= m:
            raise DimensionError("need 0 <= s <= m")
        lower = np.concatenate([np.zeros(s), np.full(m - s, -np.inf)])
        return cls.box(lower, np.zeros(m))

    # queries ------------------------------------------------------------

    @property
    def is_box(self) -> bool:
        if self.E.shape[0]:
            return False
        G = self.G
        if G.shape[0] == 0:
            return True
        nz = np.count_nonzero(G, axis=1)
        return bool(np.all(nz == 1) and np.all(np.abs(G[G != 0]) == 1.0))

    @property
    def box_bounds(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for row, rhs in zip(self.G, self.h):
            i = int(np.flatnonzero(row)[0])
            if row[i] > 0:
                hi[i] = min(hi[i], rhs)
            else:
                lo[i] = max(lo[i], -rhs)
        return lo, hi

    def violation(self, z) -> float:
        z = np.asarray(z, dtype=float)
        v = 0.0
        if self.G.shape[0]:
            v = max(v, float(np.max(self.G @ z - self.h)))
        if self.E.shape[0]:
            v = max(v, float(np.max(np.abs(self.E @ z - self.d))))
        return max(v, 0.0)

    def contains(self, z, tol: float = 1e-9) -> bool:
        return self.violation(z) <= tol

    def active_rows(self, z, tol: float = 1e-8) -> np.ndarray:
        """Indices of inequality rows with ``|G_i z - h_i| <= tol``."""
        if self.G.shape[0] == 0:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(np.abs(self.G @ z - self.h) <= tol)

    def project(self, z) -> np.ndarray:
        from .qpsolver import project_polyhedral

        return project_polyhedral(self, z)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "G": self.G.tolist(),
            "h": self.h.tolist(),
            "E": self.E.tolist(),
            "d": self.d.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolyhedralSet":
        dim = int(data["dim"])
        return cls(dim, data.get("G") or None, data.get("h") or None,
                   data.get("E") or None, data.get("d") or None)


@dataclass(frozen=True, eq=False)
class ConeRep:
    """Polyhedral cone ``{w : eq @ w = 0, ineq @ w <= 0}``."""

    dim: int
    eq: np.ndarray = None
    ineq: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "eq", _as_matrix(self.eq, self.dim))
        object.__setattr__(self, "ineq", _as_matrix(self.ineq, self.dim))

    @classmethod
    def whole(cls, m: int) -> "ConeRep":
        return cls(m)

    @classmethod
    def zero(cls, m: int) -> "ConeRep":
        return cls(m, eq=np.eye(m))

    @classmethod
    def ray(cls, direction) -> "ConeRep":
        """The ray ``{t * direction : t >= 0}``.

        Encoded as ``dim - 1`` equality rows spanning the orthogonal
        complement of the direction plus one sign row.
        """
        direction = np.asarray(direction, dtype=float).reshape(-1)
        m = direction.size
        nrm = np.linalg.norm(direction)
        if nrm == 0:
            return cls.zero(m)
        u = direction / nrm
        # orthonormal complement from a QR of [u | I]
        q, _ = np.linalg.qr(np.column_stack([u, np.eye(m)]))
        comp = q[:, 1:m].T
        return cls(m, eq=comp, ineq=-u[None, :])

    def with_equalities(self, rows) -> "ConeRep":
        rows = _as_matrix(rows, self.dim)
        keep = [r for r in rows if np.any(r != 0)]
        if not keep:
            return self
        return ConeRep(self.dim, np.vstack([self.eq, *keep]), self.ineq)

    def contains(self, w, tol: float = 1e-12) -> bool:
        w = np.asarray(w, dtype=float)
        scale = tol * max(1.0, float(np.linalg.norm(w)))
        if self.eq.shape[0] and np.max(np.abs(self.eq @ w)) > scale:
            return False
        if self.ineq.shape[0] and np.max(self.ineq @ w) > scale:
            return False
        return True

    def pullback(self, J) -> "ConeRep":
        """The cone ``{w : J w in self}``."""
        J = np.asarray(J, dtype=float)
        return ConeRep(J.shape[1], self.eq @ J, self.ineq @ J)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "eq": self.eq.tolist(), "ineq": self.ineq.tolist()}


@dataclass(frozen=True)
class SecondOrderCone:
    """``{(y, t) in R^(dim-1) x R : ||y|| <= t}``; the last entry is the axis."""

    dim: int

    def __post_init__(self):
        if int(self.dim) < 2:
            raise DimensionError("second-order cone needs dim >= 2")

    def contains(self, z, tol: float = 1e-9) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.linalg.norm(z[:-1]) - z[-1] <= tol)

    def project(self, z) -> np.ndarray:
        from .qpsolver import project_soc

        return project_soc(z)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "type": "soc"}
