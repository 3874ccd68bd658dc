"""Generalized Newton iterations.

Five variants share one driver:

* ``Coderivative``: solve ``H d = grad phi(x)`` for a limiting-Hessian
  selection ``H`` and set ``x+ = x - d``;
* ``Graphical``: minimize ``<v,w> + 1/2 d^2 phi(x,v)(w)`` over ``w`` and set
  ``x+ = x + w``;
* ``ProxGraphical``: the graphical step applied through the Moreau
  envelope, usable on extended-valued (prox-regular) functions;
* ``SemismoothBaseline`` and ``BDiffBaseline``: the classical semismooth
  Newton step from the Clarke Jacobian and the B-differential.

Non-convergence is reported through :class:`TerminalStatus`, never by
raising.
"""

from __future__ import annotations

import contextlib
import csv
import io
from dataclasses import dataclass, field
from enum import Enum

import mpmath
import numpy as np

from .envelope import MoreauParams, default_r, envelope
from .exceptions import (
    Infeasible,
    InnerSolveFailed,
    NotMember,
    NotNormal,
    QPError,
    SingularSelection,
    SubproblemUnbounded,
    TiltNewtonError,
    UnsupportedSet,
)
from .problems import ProblemInstance

__all__ = [
    "Variant",
    "TerminalStatus",
    "LineSearchParams",
    "NewtonOptions",
    "TraceRecord",
    "IterateTrace",
    "direction_coderivative",
    "semismooth_baseline_direction",
    "bdiff_baseline_direction",
    "direction_graphical",
    "armijo_step",
    "run_newton",
    "run_newton_prox",
]

_EPS = np.finfo(float).eps
_SUBPROBLEM_ERRORS = (SingularSelection, SubproblemUnbounded, QPError, UnsupportedSet,
                      Infeasible, InnerSolveFailed, NotMember, NotNormal)


class Variant(str, Enum):
    CODERIVATIVE = "Coderivative"
    GRAPHICAL = "Graphical"
    PROX_GRAPHICAL = "ProxGraphical"
    SEMISMOOTH = "SemismoothBaseline"
    BDIFF = "BDiffBaseline"


class TerminalStatus(str, Enum):
    STATIONARY = "Stationary"
    MAX_ITER = "MaxIter"
    SUBPROBLEM_FAILED = "SubproblemFailed"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class LineSearchParams:
    """Backtracking parameters for ``phi(x + a d) <= phi(x) + mu a <grad, d>``."""

    mu: float = 1e-4
    beta: float = 0.5
    alpha_min: float = 1e-10

    def __post_init__(self):
        if not 0 < self.mu < 1 or not 0 < self.beta < 1 or not self.alpha_min > 0:
            raise ValueError("need 0 < mu < 1, 0 < beta < 1 and alpha_min > 0")


@dataclass(frozen=True)
class NewtonOptions:
    variant: Variant = Variant.CODERIVATIVE
    r: float | None = None
    grad_tol: float = 1e-10
    max_iters: int = 50
    line_search: LineSearchParams | None = None
    inner_tol: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if int(self.max_iters) < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.r is not None and not self.r > 0:
            raise ValueError("r must be positive")


@dataclass
class TraceRecord:
    """One iteration: ``x_{k+1} = x_k + alpha_k d_k``.

    ``v`` is the gradient (or envelope gradient) at ``x_k``.  On the final
    record ``d`` and ``alpha`` are ``None``.
    """

    k: int
    x: np.ndarray
    v: np.ndarray
    d: np.ndarray | None
    alpha: float | None
    grad_norm: float
    subproblem_status: str
    r: float | None = None


@dataclass
class IterateTrace:
    variant: Variant
    records: list = field(default_factory=list)
    terminal_status: TerminalStatus = TerminalStatus.MAX_ITER
    oscillating: bool = False
    message: str = ""

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    @property
    def iterates(self) -> np.ndarray:
        return np.array([rec.x for rec in self.records])

    @property
    def final_x(self) -> np.ndarray:
        return self.records[-1].x

    @property
    def final_grad_norm(self) -> float:
        return self.records[-1].grad_norm

    def to_csv(self, fh=None, start_index: int | None = None, header: bool = True) -> str:
        """Write rows ``k, x_0.., grad_norm, alpha, step_norm, status`` (17 digits)."""
        buf = io.StringIO() if fh is None else fh
        n = self.records[0].x.size if self.records else 0
        writer = csv.writer(buf, lineterminator="\n")
        head = ["k"] + [f"x{i}" for i in range(n)] + ["grad_norm", "alpha", "step_norm", "status"]
        if start_index is not None:
            head = ["start"] + head
        if header:
            writer.writerow(head)
        last = len(self.records) - 1
        for j, rec in enumerate(self.records):
            step = "" if rec.d is None else _fmt(rec.alpha * float(np.linalg.norm(rec.d)))
            status = self.terminal_status.value if j == last else rec.subproblem_status
            row = [rec.k] + [_fmt(v) for v in rec.x] + [
                _fmt(rec.grad_norm), "" if rec.alpha is None else _fmt(rec.alpha), step, status]
            if start_index is not None:
                row = [start_index] + row
            writer.writerow(row)
        return buf.getvalue() if fh is None else ""


def _fmt(v) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# arithmetic that also works on mpmath object arrays


def _is_object(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def _norm(a) -> float:
    if _is_object(a):
        return float(mpmath.sqrt(mpmath.fsum(e * e for e in a.ravel())))
    return float(np.linalg.norm(a))


def _solve(H, g):
    """Solve ``H d = g``; raise :class:`SingularSelection` on singular ``H``."""
    if _is_object(H) or _is_object(g):
        try:
            sol = mpmath.lu_solve(mpmath.matrix(H.tolist()), mpmath.matrix(list(g)))
        except ZeroDivisionError as exc:
            raise SingularSelection("selection is singular") from exc
        return np.array([sol[i] for i in range(len(g))], dtype=object)
    H = np.asarray(H, float)
    if not np.all(np.isfinite(H)) or np.linalg.cond(H) > 1e14:
        raise SingularSelection("selection is singular")
    return np.linalg.solve(H, np.asarray(g, float))


def _precision(instance):
    if instance.precision:
        return mpmath.workdps(instance.precision)
    return contextlib.nullcontext()


def _initial_point(instance, x0):
    if x0 is None:
        if instance.start is None:
            raise ValueError("no start point given and the instance has no default start")
        x0 = instance.start
    if instance.precision:
        return np.array([e if isinstance(e, mpmath.mpf) else mpmath.mpf(e)
                         for e in np.asarray(x0, dtype=object).reshape(-1)], dtype=object)
    return np.asarray(x0, dtype=float).reshape(instance.n).copy()


# ---------------------------------------------------------------------------
# directions


def _selection_direction(selections, g, start: int = 0):
    last = None
    for idx in range(start, len(selections)):
        try:
            return _solve(selections[idx], g), idx
        except SingularSelection as exc:
            last = exc
    raise last or SingularSelection("no selection available")


def direction_coderivative(instance: ProblemInstance, x, start: int = 0):
    """``(d, idx)`` with ``H_idx d = grad phi(x)``; the update is ``x - d``.

    Selections are tried in the instance's order from ``start`` on until a
    nonsingular one is found.
    """
    if instance.hessian_selections is None:
        raise UnsupportedSet(f"{instance.kind.value} has no Hessian selections")
    with _precision(instance):
        return _selection_direction(instance.hessian_selections(x), instance.gradient(x), start)


def bdiff_baseline_direction(instance: ProblemInstance, x, start: int = 0):
    """Step from the B-differential; the selection list already enumerates it."""
    return direction_coderivative(instance, x, start)


def semismooth_baseline_direction(instance: ProblemInstance, x, start: int = 0):
    """Step from the Clarke Jacobian: selections followed by their barycenter."""
    if instance.hessian_selections is None:
        raise UnsupportedSet(f"{instance.kind.value} has no Hessian selections")
    with _precision(instance):
        sels = list(instance.hessian_selections(x))
        if len(sels) > 1:
            sels.append(sum(sels[1:], sels[0]) / len(sels))
        return _selection_direction(sels, instance.gradient(x), start)


def direction_graphical(instance: ProblemInstance, x, v=None):
    """Minimizer ``w`` of ``<v,w> + 1/2 d^2 phi(x,v)(w)``; the update is ``x + w``."""
    if instance.form is None:
        raise UnsupportedSet(f"{instance.kind.value} has no second-subderivative form")
    if v is None:
        v = instance.gradient(x)
    if _is_object(x):
        # extended precision is only offered for twice differentiable points
        with _precision(instance):
            return -_solve(instance.hessian_selections(x)[0], v)
    return instance.form(np.asarray(x, float), np.asarray(v, float)).model_step(v)


def armijo_step(instance: ProblemInstance, x, d, params: LineSearchParams,
                merit=None, slope=None):
    """Largest ``beta^j >= alpha_min`` passing the sufficient-decrease test.

    Returns ``(alpha, ok)``; ``ok`` is False when ``d`` is not a descent
    direction or no trial step passed, in which case ``alpha_min`` is
    returned.  ``merit`` replaces ``instance.value`` (the prox variant uses
    the envelope) and then ``slope`` must be ``<grad merit(x), d>``.  The
    test allows a rounding slack of ``4 eps (1 + |merit(x)|)``.
    """
    x = np.asarray(x, float)
    d = np.asarray(d, float)
    f = instance.value if merit is None else merit
    if slope is None:
        slope = float(np.asarray(instance.gradient(x), float) @ d)
    if not slope < 0:
        return params.alpha_min, False
    f0 = float(f(x))
    slack = 4 * _EPS * (1 + abs(f0))
    alpha = 1.0
    while alpha >= params.alpha_min:
        if float(f(x + alpha * d)) <= f0 + params.mu * alpha * slope + slack:
            return alpha, True
        alpha *= params.beta
    return params.alpha_min, False


# ---------------------------------------------------------------------------
# drivers


def _exhausted_status(records) -> TerminalStatus:
    norms = [rec.grad_norm for rec in records[-11:]]
    if len(norms) >= 11 and all(b >= a * (1 - 1e-8) for a, b in zip(norms, norms[1:])):
        return TerminalStatus.DIVERGED
    return TerminalStatus.MAX_ITER


def _oscillating(records) -> bool:
    xs = [rec.x for rec in records[-6:]]
    if len(xs) < 4:
        return False
    for a, b, c in zip(xs, xs[1:], xs[2:]):
        scale = 1.0 + float(np.linalg.norm(a))
        if np.linalg.norm(c - a) > 1e-8 * scale or np.linalg.norm(b - a) <= 1e-6 * scale:
            return False
    return True


def run_newton(instance: ProblemInstance, x0=None, opts: NewtonOptions | None = None) -> IterateTrace:
    """Run a Newton variant from ``x0`` (default: ``instance.start``)."""
    opts = opts or NewtonOptions()
    if opts.variant is Variant.PROX_GRAPHICAL:
        return run_newton_prox(instance, x0, opts)
    if instance.gradient is None:
        raise UnsupportedSet(f"{opts.variant.value} needs a gradient; "
                             f"{instance.kind.value} is extended-valued")
    trace = IterateTrace(opts.variant)
    with _precision(instance):
        x = _initial_point(instance, x0)
        for k in range(opts.max_iters + 1):
            g = instance.gradient(x)
            gn = _norm(g)
            xf = np.array(x, dtype=float)
            gf = np.array(g, dtype=float)
            if not np.isfinite(gn) or _norm(x) > 1e6:
                trace.records.append(TraceRecord(k, xf, gf, None, None, gn, "diverged"))
                trace.terminal_status = TerminalStatus.DIVERGED
                break
            if gn <= opts.grad_tol:
                trace.records.append(TraceRecord(k, xf, gf, None, None, gn, "stationary"))
                trace.terminal_status = TerminalStatus.STATIONARY
                break
            if k == opts.max_iters:
                trace.records.append(TraceRecord(k, xf, gf, None, None, gn, "max_iter"))
                trace.terminal_status = _exhausted_status(trace.records)
                break
            try:
                if opts.variant is Variant.GRAPHICAL:
                    step = direction_graphical(instance, x, g)
                    tag = "Optimal"
                else:
                    pick = (semismooth_baseline_direction if opts.variant is Variant.SEMISMOOTH
                            else direction_coderivative)
                    d, idx = pick(instance, x)
                    step = -d
                    tag = f"selection {idx}"
            except _SUBPROBLEM_ERRORS as exc:
                trace.records.append(TraceRecord(k, xf, gf, None, None, gn, type(exc).__name__))
                trace.terminal_status = TerminalStatus.SUBPROBLEM_FAILED
                trace.message = str(exc)
                break
            alpha = 1.0
            if opts.line_search is not None:
                alpha, ok = armijo_step(instance, xf, np.array(step, dtype=float), opts.line_search,
                                        slope=float(gf @ np.array(step, dtype=float)))
                if not ok:
                    tag += "; DescentFailure"
            trace.records.append(TraceRecord(k, xf, gf, np.array(step, dtype=float), alpha, gn, tag))
            x = x + alpha * step if alpha != 1.0 else x + step
    trace.oscillating = _oscillating(trace.records)
    return trace


def run_newton_prox(instance: ProblemInstance, x0=None,
                    opts: NewtonOptions | None = None) -> IterateTrace:
    """Newton iteration on the Moreau envelope with second-subderivative steps.

    Each iteration computes ``v = grad e_r phi(x)`` and the proximal point
    ``u = x - r v``, minimizes ``<v,w> + 1/2 d^2 phi(u, v)(w)`` and moves by
    ``w - r v``.  If the model is unbounded ``r`` is halved, at most six
    times over the run.
    """
    opts = opts or NewtonOptions(Variant.PROX_GRAPHICAL)
    if instance.form is None:
        raise UnsupportedSet(f"{instance.kind.value} has no second-subderivative form")
    r = opts.r if opts.r is not None else default_r(instance)
    inner_tol = opts.inner_tol if opts.inner_tol is not None else min(1e-12, 1e-2 * opts.grad_tol)
    trace = IterateTrace(Variant.PROX_GRAPHICAL)
    x = np.asarray(_initial_point(instance, x0), dtype=float)
    halvings = 0
    k = 0
    while True:
        params = MoreauParams(r, inner_tol)
        try:
            _, v, pr = envelope(instance, params, x)
        except _SUBPROBLEM_ERRORS as exc:
            trace.records.append(TraceRecord(k, x.copy(), np.full(x.size, np.nan), None, None,
                                             np.inf, type(exc).__name__, r))
            trace.terminal_status = TerminalStatus.SUBPROBLEM_FAILED
            trace.message = str(exc)
            break
        gn = float(np.linalg.norm(v))
        if not np.isfinite(gn) or np.linalg.norm(x) > 1e6:
            trace.records.append(TraceRecord(k, x.copy(), v, None, None, gn, "diverged", r))
            trace.terminal_status = TerminalStatus.DIVERGED
            break
        if gn <= opts.grad_tol:
            trace.records.append(TraceRecord(k, x.copy(), v, None, None, gn, "stationary", r))
            trace.terminal_status = TerminalStatus.STATIONARY
            break
        if k == opts.max_iters:
            trace.records.append(TraceRecord(k, x.copy(), v, None, None, gn, "max_iter", r))
            trace.terminal_status = _exhausted_status(trace.records)
            break
        try:
            w = instance.form(pr.point, v).model_step(v)
        except SubproblemUnbounded as exc:
            if halvings < 6:
                halvings += 1
                r *= 0.5
                continue
            trace.records.append(TraceRecord(k, x.copy(), v, None, None, gn, "SubproblemUnbounded", r))
            trace.terminal_status = TerminalStatus.SUBPROBLEM_FAILED
            trace.message = str(exc)
            break
        except (TiltNewtonError, np.linalg.LinAlgError) as exc:
            trace.records.append(TraceRecord(k, x.copy(), v, None, None, gn, type(exc).__name__, r))
            trace.terminal_status = TerminalStatus.SUBPROBLEM_FAILED
            trace.message = str(exc)
            break
        d = w - r * v
        alpha = 1.0
        tag = "Optimal"
        if opts.line_search is not None:
            def merit(y, _p=params):
                return envelope(instance, _p, y)[0]
            alpha, ok = armijo_step(instance, x, d, opts.line_search, merit=merit,
                                    slope=float(v @ d))
            if not ok:
                tag += "; DescentFailure"
        trace.records.append(TraceRecord(k, x.copy(), v, d, alpha, gn, tag, r))
        x = x + alpha * d
        k += 1
    trace.oscillating = _oscillating(trace.records)
    return trace
