"""Experiment runner: JSON configs in, trace CSVs and JSON reports out.

A config names one problem, the starting points, a list of Newton variants
and a list of probes.  Every (variant, start) pair becomes one run; a run
that raises is recorded with status ``"Error"`` and the others continue.

``report.json`` holds only quantities that are deterministic given the
config and seed.  Wall-clock times go to ``timings.json``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import jsonschema
import numpy as np

from .diagnostics import (
    estimate_constants,
    newton_estimate_probe,
    semismoothstar_probe,
    superlinear_ratios,
    tilt_probe,
    to_builtin,
    unit_step_mu_bound,
)
from .envelope import MoreauParams, default_r, envelope
from .exceptions import ConfigInvalid, TiltNewtonError, UnsupportedSet
from .newton import LineSearchParams, NewtonOptions, Variant, run_newton
from .problems import Kind, ProblemInstance, load_problem, problem_from_dict
from .qpsolver import solve_qp
from .secondorder import _lagrangian_hessian, nlp_form

__all__ = [
    "CONFIG_SCHEMA",
    "REPORT_SCHEMA",
    "load_config",
    "validate_config",
    "run_experiment",
    "run_probes",
    "dumps_report",
    "report_ok",
    "compare_sqp_subproblems",
]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VECTOR = {"type": "array", "items": _NUM}

_VARIANT = {
    "type": "object",
    "required": ["variant"],
    "additionalProperties": False,
    "properties": {
        "variant": {"enum": [v.value for v in Variant]},
        "r": _POS,
        "grad_tol": _POS,
        "max_iters": {"type": "integer", "minimum": 0},
        "inner_tol": _POS,
        "line_search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "alpha_min": _POS,
            },
        },
    },
}

_PROBE = {
    "type": "object",
    "required": ["type"],
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["tilt", "semismoothstar", "constants", "newton_estimate"]},
        "kappa": _POS,
        "radius": _POS,
        "radii": {"type": "array", "items": _POS, "minItems": 1},
        "samples": {"type": "integer", "minimum": 1},
        "r": _POS,
    },
    "allOf": [
        {"if": {"properties": {"type": {"enum": ["tilt", "newton_estimate"]}}},
         "then": {"required": ["kappa"]}},
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tiltnewton experiment",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "problem": {"type": "object"},
        "problem_file": {"type": "string"},
        "reference": _VECTOR,
        "starts": {"type": "array", "items": _VECTOR, "minItems": 1},
        "variants": {"type": "array", "items": _VARIANT},
        "probes": {"type": "array", "items": _PROBE},
        "compare_sqp": {
            "type": "object",
            "required": ["x"],
            "additionalProperties": False,
            "properties": {"x": _VECTOR, "lambda": _VECTOR, "r": _POS},
        },
        "seed": {"type": "integer", "minimum": 0},
        "outdir": {"type": "string"},
    },
    "oneOf": [{"required": ["problem"]}, {"required": ["problem_file"]}],
    "anyOf": [
        {"required": ["variants"], "properties": {"variants": {"minItems": 1}}},
        {"required": ["probes"], "properties": {"probes": {"minItems": 1}}},
        {"required": ["compare_sqp"]},
    ],
}

_NULLNUM = {"type": ["number", "null"]}
_NULLVEC = {"type": ["array", "null"], "items": _NULLNUM}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tiltnewton run report",
    "type": "object",
    "required": ["name", "problem", "seed", "runs", "probes"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "problem": {
            "type": "object",
            "required": ["name", "kind", "n"],
            "properties": {"name": {"type": "string"}, "kind": {"type": "string"},
                           "n": {"type": "integer"}},
        },
        "reference": _NULLVEC,
        "runs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "variant", "label", "start_index", "status"],
                "properties": {
                    "index": {"type": "integer"},
                    "variant": {"type": "string"},
                    "label": {"type": "string"},
                    "start_index": {"type": "integer"},
                    "x0": _NULLVEC,
                    "status": {"enum": ["Stationary", "MaxIter", "SubproblemFailed", "Diverged",
                                        "Error"]},
                    "iterations": {"type": ["integer", "null"]},
                    "final_x": _NULLVEC,
                    "final_grad_norm": _NULLNUM,
                    "oscillating": {"type": ["boolean", "null"]},
                    "message": {"type": "string"},
                    "mu_advisory": {
                        "type": "object",
                        "required": ["mu", "bound", "satisfied"],
                        "properties": {"mu": {"type": "number"}, "bound": _NULLNUM,
                                       "satisfied": {"type": "boolean"}},
                    },
                    "rates": {
                        "type": ["object", "null"],
                        "properties": {"ratios": _NULLVEC,
                                       "superlinear_verdict": {"type": "boolean"},
                                       "final_ratio": _NULLNUM},
                    },
                },
            },
        },
        "probes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "type", "status"],
                "properties": {
                    "index": {"type": "integer"},
                    "type": {"type": "string"},
                    "status": {"enum": ["ok", "Error"]},
                    "message": {"type": "string"},
                    "report": {"type": ["object", "null"]},
                },
            },
        },
        "compare_sqp": {"type": ["object", "null"]},
    },
}


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"config field {where}: {exc.message}") from exc


def load_config(path) -> dict:
    """Read and validate a config file; ``problem_file`` is resolved against it."""
    path = Path(path)
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigInvalid(f"{path}: {exc.strerror}") from exc
    validate_config(cfg)
    if "problem_file" in cfg:
        cfg["problem_file"] = str((path.parent / cfg["problem_file"]).resolve())
    return cfg


def _instance(cfg: dict) -> ProblemInstance:
    if "problem" in cfg:
        return problem_from_dict(cfg["problem"])
    return load_problem(cfg["problem_file"])


def _vector(v, n, what):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.size != n:
        raise ConfigInvalid(f"{what} has length {a.size}, problem dimension is {n}")
    return a


def _starts(cfg, inst):
    if "starts" in cfg:
        return [_vector(s, inst.n, f"starts/{i}") for i, s in enumerate(cfg["starts"])]
    if inst.start is not None:
        return [None]
    if cfg.get("variants"):
        raise ConfigInvalid("config field starts: required for this problem")
    return []


def _options(spec: dict) -> NewtonOptions:
    ls = spec.get("line_search")
    try:
        return NewtonOptions(
            Variant(spec["variant"]), r=spec.get("r"), grad_tol=spec.get("grad_tol", 1e-10),
            max_iters=spec.get("max_iters", 50),
            line_search=None if ls is None else LineSearchParams(**ls),
            inner_tol=spec.get("inner_tol"))
    except ValueError as exc:
        raise ConfigInvalid(f"variant {spec['variant']}: {exc}") from exc


def _labels(variant_specs):
    seen: dict = {}
    labels = []
    for spec in variant_specs:
        base = spec["variant"]
        k = seen.get(base, 0)
        labels.append(base if k == 0 else f"{base}_{k}")
        seen[base] = k + 1
    return labels


_RUN_ERRORS = (TiltNewtonError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def _run_one(inst, opts, x0, reference):
    trace = run_newton(inst, x0, opts)
    rates = None
    if reference is not None and trace.records:
        rates = superlinear_ratios(trace, reference).to_dict()
    entry = {
        "status": trace.terminal_status.value,
        "iterations": trace.iterations,
        "final_x": to_builtin(list(map(float, trace.final_x))),
        "final_grad_norm": to_builtin(float(trace.final_grad_norm)),
        "oscillating": bool(trace.oscillating),
        "message": trace.message,
        "rates": rates,
    }
    return trace, entry


def _probe_one(inst, spec, reference, seed):
    typ = spec["type"]
    if reference is None:
        raise ConfigInvalid("probes need a reference point (config 'reference' or known_solution)")
    kw = {k: spec[k] for k in ("radius", "samples") if k in spec}
    if typ == "tilt":
        return tilt_probe(inst, reference, spec["kappa"], seed=seed, r=spec.get("r"), **kw)
    if typ == "semismoothstar":
        if inst.hessian_selections is None:
            raise UnsupportedSet(f"{inst.kind.value} has no Hessian selections")
        return semismoothstar_probe(inst, reference, spec.get("radii"),
                                    seed=seed, **{k: v for k, v in kw.items() if k == "samples"})
    if typ == "constants":
        return estimate_constants(inst, reference, seed=seed, r=spec.get("r"), **kw)
    if inst.gradient is None:
        raise UnsupportedSet(f"{inst.kind.value} has no gradient")
    return newton_estimate_probe(inst, reference, spec["kappa"], seed=seed, **kw)


def _reference(cfg, inst):
    if "reference" in cfg:
        return _vector(cfg["reference"], inst.n, "reference")
    if inst.known_solution is not None:
        return np.asarray(inst.known_solution, dtype=float)
    return None


def run_probes(cfg: dict, seed: int | None = None) -> tuple:
    """Run the configured probes only; returns ``(entries, seconds)``."""
    inst = _instance(cfg)
    seed = cfg.get("seed", 0) if seed is None else seed
    reference = _reference(cfg, inst)
    entries, secs = [], []
    for i, spec in enumerate(cfg.get("probes", [])):
        t0 = time.perf_counter()
        entry = {"index": i, "type": spec["type"]}
        try:
            entry.update(status="ok", message="",
                         report=_probe_one(inst, spec, reference, seed).to_dict())
        except _RUN_ERRORS as exc:
            entry.update(status="Error", message=f"{type(exc).__name__}: {exc}", report=None)
        entries.append(entry)
        secs.append(time.perf_counter() - t0)
    return entries, secs


def _attach_mu_advisory(runs, variant_specs, probes):
    """Compare each line-search ``mu`` with ``1/(4 ell kappa)`` from the probes.

    Only done when a tilt probe and a constants probe both produced
    estimates; the comparison is advisory since both constants are sampled.
    """
    kappa = ell = None
    for p in probes:
        rep = p.get("report") or {}
        if p["type"] == "tilt" and rep.get("estimated_kappa"):
            kappa = rep["estimated_kappa"]
        if p["type"] == "constants" and rep.get("estimated_ell"):
            ell = rep["estimated_ell"]
    if kappa is None or ell is None:
        return
    bound = unit_step_mu_bound(ell, kappa)
    labels = _labels(variant_specs)
    for run in runs:
        spec = variant_specs[labels.index(run["label"])]
        if "line_search" in spec:
            mu = float(spec["line_search"].get("mu", LineSearchParams().mu))
            run["mu_advisory"] = {"mu": mu, "bound": bound, "satisfied": bool(mu < bound)}


def run_experiment(cfg: dict, outdir=None, seed: int | None = None) -> dict:
    """Execute every configured run and probe and write the output files.

    Returns the report dictionary that was written to ``report.json``.
    """
    validate_config(cfg)
    inst = _instance(cfg)
    seed = cfg.get("seed", 0) if seed is None else seed
    outdir = Path(outdir or cfg.get("outdir", "tiltnewton_out"))
    outdir.mkdir(parents=True, exist_ok=True)
    reference = _reference(cfg, inst)
    variant_specs = cfg.get("variants", [])
    options = [_options(spec) for spec in variant_specs]
    starts = _starts(cfg, inst)

    runs, run_secs = [], []
    rate_rows = []
    idx = 0
    for spec, opts, label in zip(variant_specs, options, _labels(variant_specs)):
        with open(outdir / f"trace_{label}.csv", "w", newline="") as fh:
            for j, x0 in enumerate(starts):
                t0 = time.perf_counter()
                x0_list = (list(map(float, x0)) if x0 is not None
                           else list(map(float, np.asarray(inst.start, dtype=float))))
                entry = {"index": idx, "variant": spec["variant"], "label": label,
                         "start_index": j, "x0": to_builtin(x0_list)}
                try:
                    trace, result = _run_one(inst, opts, x0, reference)
                    entry.update(result)
                    trace.to_csv(fh, start_index=j, header=(j == 0))
                    if reference is not None:
                        for rec in trace.records:
                            err = float(np.linalg.norm(rec.x - reference))
                            rate_rows.append([label, j, rec.k,
                                              format(math.log10(err), ".17g") if err > 0 else "-inf"])
                except _RUN_ERRORS as exc:
                    entry.update(status="Error", iterations=None, final_x=None,
                                 final_grad_norm=None, oscillating=None,
                                 message=f"{type(exc).__name__}: {exc}", rates=None)
                runs.append(entry)
                run_secs.append(time.perf_counter() - t0)
                idx += 1

    probes, probe_secs = run_probes(cfg, seed) if cfg.get("probes") else ([], [])
    _attach_mu_advisory(runs, variant_specs, probes)
    report = {
        "name": cfg.get("name", inst.name or inst.kind.value),
        "seed": seed,
        "problem": {"name": inst.name or "", "kind": inst.kind.value, "n": inst.n},
        "reference": None if reference is None else to_builtin(list(map(float, reference))),
        "runs": runs,
        "probes": probes,
        "compare_sqp": None,
    }
    if "compare_sqp" in cfg:
        c = cfg["compare_sqp"]
        try:
            report["compare_sqp"] = compare_sqp_subproblems(inst, c["x"], c.get("lambda"), c.get("r"))
        except _RUN_ERRORS as exc:
            report["compare_sqp"] = {"status": "Error", "message": f"{type(exc).__name__}: {exc}"}

    with open(outdir / "report.json", "w") as fh:
        fh.write(dumps_report(report))
    with open(outdir / "rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "start", "k", "log10_error"])
        writer.writerows(rate_rows)
    with open(outdir / "timings.json", "w") as fh:
        json.dump({"runs": run_secs, "probes": probe_secs}, fh, indent=2)
    return report


def dumps_report(report: dict) -> str:
    """Canonical JSON text of a report (sorted keys, no NaN)."""
    return json.dumps(to_builtin(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_ok(report: dict) -> bool:
    """True when every run and probe produced a classifiable status."""
    return (all(r["status"] != "Error" for r in report.get("runs", []))
            and all(p["status"] != "Error" for p in report.get("probes", []))
            and (report.get("compare_sqp") or {}).get("status") != "Error")


def compare_sqp_subproblems(instance: ProblemInstance, x, lam=None, r: float | None = None) -> dict:
    """Classical SQP subproblem next to the reduced prox-Newton subproblem.

    The SQP side linearizes every constraint at ``x`` and uses the
    Lagrangian Hessian at ``(x, lam)``.  The prox-Newton side works at the
    proximal point ``u = x - r v`` with its own multiplier, imposes
    ``grad f_i(u) w = 0`` on equalities and strongly active inequalities and
    ``grad f_i(u) w <= 0`` on the remaining active ones.  ``lam`` defaults to
    that multiplier.
    """
    if instance.kind is not Kind.NLP:
        raise UnsupportedSet("SQP comparison needs an NLP instance")
    nlp = instance.data
    x = _vector(x, nlp.n, "x")
    r = default_r(instance) if r is None else float(r)

    _, v, pr = envelope(instance, MoreauParams(r, 1e-12), x)
    u = pr.point
    form = nlp_form(nlp, u, v)
    lam_u = form.info["lam"]
    dom = form.domain()
    w = form.model_step(v)
    reduced = {
        "point": u, "gradient": v, "multiplier": lam_u,
        "multiplier_unique": bool(form.info.get("unique", True)),
        "H": form.H, "g": v, "A_eq": dom.eq, "A_in": dom.ineq,
        "solution": w, "step": w - r * v,
    }
    sets = form.info.get("index_sets")
    if sets is not None:
        reduced["active"] = sorted(sets.I)
        reduced["strongly_active"] = sorted(sets.I_plus)

    lam_x = lam_u if lam is None else np.asarray(lam, dtype=float).reshape(nlp.m)
    H = _lagrangian_hessian(nlp, x, lam_x)
    g = np.asarray(nlp.psi_grad(x), dtype=float)
    sqp = {"point": x, "multiplier": lam_x, "H": H, "g": g}
    if nlp.m:
        fx = np.asarray(nlp.f(x), dtype=float).reshape(-1)
        J = np.atleast_2d(np.asarray(nlp.f_jac(x), dtype=float)).reshape(nlp.m, nlp.n)
        s = nlp.s
        sqp.update(A_eq=J[:s], b_eq=-fx[:s], A_in=J[s:], b_in=-fx[s:])
        sol = solve_qp(H, g, J[:s], -fx[:s], J[s:], -fx[s:])
    else:
        sqp.update(A_eq=np.zeros((0, nlp.n)), b_eq=np.zeros(0),
                   A_in=np.zeros((0, nlp.n)), b_in=np.zeros(0))
        sol = solve_qp(H, g)
    sqp.update(status=sol.status.value, solution=sol.w, step=sol.w)
    return to_builtin({"r": r, "sqp": sqp, "reduced": reduced})

