"""Sampling probes for tilt stability, the semismooth* estimate, convergence
rates and local constants.

All probes draw from ``numpy.random.default_rng(seed)`` so reports are
reproducible.  Points are sampled uniformly in balls (or spherical shells)
around the reference point.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .envelope import MoreauParams, default_r, envelope, envelope_gradient, prox
from .exceptions import NotStationary, SingularSelection
from .newton import IterateTrace, direction_coderivative
from .problems import ProblemInstance

__all__ = [
    "ProbeReport",
    "RateReport",
    "tilt_probe",
    "semismoothstar_probe",
    "superlinear_ratios",
    "estimate_constants",
    "inverse_gradient_modulus",
    "newton_estimate_probe",
    "unit_step_mu_bound",
]

_EPS = np.finfo(float).eps


@dataclass
class ProbeReport:
    samples: int
    violations: int
    worst_ratio: float
    estimated_kappa: float | None = None
    estimated_ell: float | None = None
    estimated_rho: float | None = None
    per_radius: list | None = None
    verdict: bool | None = None

    def to_dict(self) -> dict:
        return {k: to_builtin(v) for k, v in asdict(self).items()}


@dataclass
class RateReport:
    ratios: list
    superlinear_verdict: bool
    final_ratio: float | None

    def to_dict(self) -> dict:
        return {k: to_builtin(v) for k, v in asdict(self).items()}


def to_builtin(v):
    """Nested lists/dicts of plain Python values; non-finite floats become None."""
    if isinstance(v, np.ndarray):
        return to_builtin(v.tolist())
    if isinstance(v, (list, tuple)):
        return [to_builtin(e) for e in v]
    if isinstance(v, dict):
        return {k: to_builtin(e) for k, e in v.items()}
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _ball(rng, n, count):
    u = rng.standard_normal((count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * rng.random((count, 1)) ** (1.0 / n)


def _sphere(rng, n, count):
    u = rng.standard_normal((count, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _check_stationary(instance, xbar, r):
    if instance.gradient is not None:
        g = np.asarray(instance.gradient(xbar), float)
    else:
        g = envelope_gradient(instance, MoreauParams(r, 1e-12), xbar)
    if np.linalg.norm(g) > 1e-8:
        raise NotStationary(f"gradient norm {np.linalg.norm(g):.3e} at the reference point")


def _graph_pairs(instance, xbar, radius, count, rng, r):
    """Points ``(u, v)`` with ``v`` a subgradient at ``u``, near ``xbar``."""
    pts = xbar + radius * _ball(rng, instance.n, count)
    if instance.gradient is not None:
        return pts, np.array([np.asarray(instance.gradient(p), float) for p in pts])
    params = MoreauParams(r, 1e-12)
    us, vs = [], []
    for y in pts:
        u = prox(instance, params, y).point
        us.append(u)
        vs.append((y - u) / r)
    return np.array(us), np.array(vs)


def _growth_terms(instance, u, v, x):
    """``D = phi(x) - phi(u) - <v, x-u>`` and its rounding scale."""
    fx = instance.value(x)
    fu = instance.value(u)
    lin = float(v @ (x - u))
    return fx - fu - lin, 64 * _EPS * (1 + abs(fx) + abs(fu) + abs(lin))


def tilt_probe(instance: ProblemInstance, xbar, kappa_hyp: float, radius: float = 1e-2,
               samples: int = 1000, seed: int = 0, r: float | None = None) -> ProbeReport:
    """Test ``phi(x) >= phi(u) + <v, x-u> + |x-u|^2 / (2 kappa)`` on samples.

    ``estimated_kappa`` is the smallest modulus passing every sample,
    ``max |x-u|^2 / (2 D)`` with ``D`` the growth gap padded by its rounding
    allowance; ``worst_ratio`` is that value over ``kappa_hyp``.
    """
    xbar = np.asarray(xbar, float).reshape(instance.n)
    r = default_r(instance) if r is None else r
    _check_stationary(instance, xbar, r)
    rng = np.random.default_rng(seed)
    us, vs = _graph_pairs(instance, xbar, radius, samples, rng, r)
    xs = xbar + radius * _ball(rng, instance.n, samples)
    kappa_est = 0.0
    violations = 0
    used = 0
    for u, v, x in zip(us, vs, xs):
        d2 = float((x - u) @ (x - u))
        if d2 <= (1e-8 * radius) ** 2:
            continue
        used += 1
        D, slack = _growth_terms(instance, u, v, x)
        if not np.isfinite(D):
            continue
        if D < d2 / (2 * kappa_hyp) - slack:
            violations += 1
        kappa_est = max(kappa_est, d2 / (2 * (D + slack)) if D + slack > 0 else np.inf)
    return ProbeReport(used, violations, kappa_est / kappa_hyp, estimated_kappa=kappa_est)


def semismoothstar_probe(instance: ProblemInstance, xbar, radii=None, samples: int = 200,
                         seed: int = 0) -> ProbeReport:
    """Worst ``|grad(x) - grad(xbar) - A (x - xbar)| / |x - xbar|`` per radius.

    Points lie in the shell ``[rad/2, rad]``; the same base directions are
    reused at every radius.  ``A`` runs over all Hessian selections at
    ``x``.  The verdict passes when the ratio falls by a factor of at least
    2 per decade, or drops to 1e-6 or below at some radius.  The second
    rule is needed because a gradient formed by cancelling O(1) terms has a
    rounding floor near ``eps / radius`` at the tiniest radii.
    """
    xbar = np.asarray(xbar, float).reshape(instance.n)
    radii = sorted((1e-2, 1e-4, 1e-6, 1e-8, 1e-10) if radii is None else radii, reverse=True)
    rng = np.random.default_rng(seed)
    dirs = _sphere(rng, instance.n, samples)
    scales = 0.5 + 0.5 * rng.random(samples)
    g0 = np.asarray(instance.gradient(xbar), float)
    per_radius = []
    total = 0
    for rad in radii:
        worst = 0.0
        for u, s in zip(dirs, scales):
            h = rad * s * u
            x = xbar + h
            g = np.asarray(instance.gradient(x), float)
            for A in instance.hessian_selections(x):
                A = np.asarray(A, float)
                worst = max(worst, float(np.linalg.norm(g - g0 - A @ h) / np.linalg.norm(h)))
                total += 1
        per_radius.append({"radius": float(rad), "worst_ratio": worst})
    worsts = [p["worst_ratio"] for p in per_radius]
    decay = all(
        b <= a * 0.5 ** np.log10(ra / rb) + 1e-14
        for (a, ra), (b, rb) in zip(zip(worsts, radii), zip(worsts[1:], radii[1:]))
    )
    verdict = bool(min(worsts) <= 1e-6 or decay)
    return ProbeReport(total, sum(w > 1e-6 for w in worsts), max(worsts),
                       per_radius=per_radius, verdict=verdict)


def superlinear_ratios(trace: IterateTrace, xbar) -> RateReport:
    """Ratios ``|x_{k+1} - xbar| / |x_k - xbar|`` until the error hits rounding level.

    Errors at or below ``floor = max(1e-14, 16 eps (1 + |xbar|))`` cannot be
    told apart from zero, so such an error ends the list and counts as a
    ratio of 0.  The verdict requires the last (up to) three ratios to be
    strictly decreasing and the final ratio to be below 0.1; an empty ratio
    list counts as superlinear.
    """
    xbar = np.asarray(xbar, float)
    floor = max(1e-14, 16 * _EPS * (1 + float(np.linalg.norm(xbar))))
    errs = [float(np.linalg.norm(rec.x - xbar)) for rec in trace.records]
    ratios = []
    for k in range(len(errs) - 1):
        if errs[k] <= floor:
            break
        ratios.append(0.0 if errs[k + 1] <= floor else errs[k + 1] / errs[k])
    if not ratios:
        return RateReport([], True, None)
    tail = ratios[-3:]
    verdict = all(b < a for a, b in zip(tail, tail[1:])) and tail[-1] < 0.1
    return RateReport(ratios, bool(verdict), ratios[-1])


def estimate_constants(instance: ProblemInstance, xbar, radius: float = 1e-1,
                       samples: int = 1000, seed: int = 0, r: float | None = None) -> ProbeReport:
    """Sampled gradient Lipschitz constant and lower-quadratic constant ``rho``.

    ``rho`` is the smallest value with
    ``phi(x) >= phi(u) + <v, x-u> - rho/2 |x-u|^2`` on every sample.
    """
    xbar = np.asarray(xbar, float).reshape(instance.n)
    r = default_r(instance) if r is None else r
    rng = np.random.default_rng(seed)
    ell = None
    if instance.gradient is not None:
        xs = xbar + radius * _ball(rng, instance.n, samples)
        ys = xbar + radius * _ball(rng, instance.n, samples)
        ell = 0.0
        for x, y in zip(xs, ys):
            dist = np.linalg.norm(x - y)
            if dist > 1e-12:
                gx = np.asarray(instance.gradient(x), float)
                gy = np.asarray(instance.gradient(y), float)
                ell = max(ell, float(np.linalg.norm(gx - gy) / dist))
    us, vs = _graph_pairs(instance, xbar, radius, samples, rng, r)
    xs = xbar + radius * _ball(rng, instance.n, samples)
    rho = 0.0
    for u, v, x in zip(us, vs, xs):
        d2 = float((x - u) @ (x - u))
        if d2 <= (1e-8 * radius) ** 2:
            continue
        D, slack = _growth_terms(instance, u, v, x)
        if np.isfinite(D) and D < -slack:
            rho = max(rho, -2 * D / d2)
    return ProbeReport(samples, 0, 0.0, estimated_ell=ell, estimated_rho=rho)


def inverse_gradient_modulus(instance: ProblemInstance, xbar, r: float, radius: float = 1e-1,
                             samples: int = 200, seed: int = 0) -> float:
    """Sampled Lipschitz modulus of the inverse of ``grad e_r phi`` near ``xbar``."""
    xbar = np.asarray(xbar, float).reshape(instance.n)
    rng = np.random.default_rng(seed)
    params = MoreauParams(r, 1e-13)
    xs = xbar + radius * _ball(rng, instance.n, samples)
    ys = xbar + radius * _ball(rng, instance.n, samples)
    worst = 0.0
    for x, y in zip(xs, ys):
        vx = envelope(instance, params, x)[1]
        vy = envelope(instance, params, y)[1]
        dv = np.linalg.norm(vx - vy)
        if dv > 1e-12:
            worst = max(worst, float(np.linalg.norm(x - y) / dv))
    return worst


def newton_estimate_probe(instance: ProblemInstance, xbar, kappa: float, radius: float = 1e-2,
                          samples: int = 1000, seed: int = 0) -> ProbeReport:
    """Check ``|x - xbar - d| <= kappa |grad(x) - grad(xbar) - H (x - xbar)|``.

    ``d`` is the coderivative direction at ``x`` and ``H`` the selection it
    used.  A rounding allowance of ``64 eps |x - xbar|`` is added on the
    right.  ``worst_ratio`` is the largest left/right quotient seen.
    """
    xbar = np.asarray(xbar, float).reshape(instance.n)
    rng = np.random.default_rng(seed)
    g0 = np.asarray(instance.gradient(xbar), float)
    xs = xbar + radius * _ball(rng, instance.n, samples)
    violations = 0
    worst = 0.0
    for x in xs:
        try:
            d, idx = direction_coderivative(instance, x)
        except SingularSelection:
            continue
        H = np.asarray(instance.hessian_selections(x)[idx], float)
        h = x - xbar
        lhs = float(np.linalg.norm(h - d))
        rhs = kappa * float(np.linalg.norm(np.asarray(instance.gradient(x), float) - g0 - H @ h))
        allowance = 64 * _EPS * float(np.linalg.norm(h))
        if lhs > rhs + allowance:
            violations += 1
        if rhs + allowance > 0:
            worst = max(worst, lhs / (rhs + allowance))
    return ProbeReport(samples, violations, worst, estimated_kappa=kappa)


def unit_step_mu_bound(ell: float, kappa: float) -> float:
    """Armijo parameters ``mu`` below ``1 / (4 ell kappa)`` are expected to accept unit steps.

    With sampled ``ell`` and ``kappa`` this is only a guide, not a guarantee.
    """
    if not ell > 0 or not kappa > 0:
        return float("inf")
    return 1.0 / (4.0 * ell * kappa)
