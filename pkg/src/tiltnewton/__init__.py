"""Generalized Newton methods for tilt-stable local minimizers of nonsmooth
functions.

The main entry points are :func:`run_newton` (all variants), the problem
builders in :mod:`tiltnewton.problems`, the Moreau envelope in
:mod:`tiltnewton.envelope` and the probes in :mod:`tiltnewton.diagnostics`.
"""

from .diagnostics import (
    ProbeReport,
    RateReport,
    estimate_constants,
    inverse_gradient_modulus,
    newton_estimate_probe,
    semismoothstar_probe,
    superlinear_ratios,
    tilt_probe,
    unit_step_mu_bound,
)
from .envelope import MoreauParams, envelope, prox
from .exceptions import *  # noqa: F401,F403
from .newton import (
    IterateTrace,
    LineSearchParams,
    NewtonOptions,
    TerminalStatus,
    Variant,
    run_newton,
)
from .problems import (
    AugLagData,
    ELQPData,
    Kind,
    NLPData,
    ProblemInstance,
    load_problem,
    make_auglag,
    make_c11,
    make_elqp,
    make_example_4_6,
    make_nlp,
    make_quadratic,
    make_smooth_poly,
)
from .qpsolver import ConeQP, QPStatus, solve_cone_qp, solve_qp
from .sets import ConeRep, PolyhedralSet, SecondOrderCone

__version__ = "0.1.0"
