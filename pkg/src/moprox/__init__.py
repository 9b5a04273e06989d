"""Multiobjective composite optimization with a proximal Newton-type solver.

Minimizes vector objectives F(x) whose components are F_i = f_i + g_i with
smooth f_i and simple convex g_i. The search direction at each iterate
solves a min-max model built from gradients and Hessians (or a scaled
identity for the first-order variant); a backtracking line search enforces
componentwise sufficient decrease. Diagnostics verify criticality,
convergence order, and step-to-error ratios from recorded traces.
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    EvaluationError,
    InputError,
    InsufficientDataError,
    LineSearchError,
    MoproxError,
    SingularMetricError,
)
from .problems import (
    NonsmoothTerm,
    ProblemInstance,
    SmoothEval,
    SmoothObjective,
    eval_full,
    eval_smooth,
    prox_nonsmooth,
)
from .subproblem import (
    DirectionResult,
    duality_gap,
    inner_minimize,
    model_values,
    project_simplex,
    solve_direction,
)
from .solver import (
    SolveTrace,
    SolverConfig,
    Status,
    TraceRecord,
    armijo_backtrack,
    solve,
)
from .analysis import (
    RateReport,
    Verdict,
    check_descent_bound,
    check_fundamental_inequality_quadratic,
    check_quadratic_termination,
    criticality_measure,
    decreasing_tail,
    estimate_order,
    iterate_errors,
    rate_report,
    refine_reference,
    tau_bracket,
    tau_check,
    tau_sequence,
)
from .zoo import (
    InstanceSpec,
    attach_nonsmooth,
    gen_logsumexp_reg,
    gen_quadratic,
    generate_instance,
    logsumexp_objective,
    quadratic_objective,
)

__version__ = "0.1.0"

__all__ = [
    "MoproxError", "ConfigError", "InputError", "EvaluationError",
    "SingularMetricError", "ConvergenceError", "LineSearchError",
    "InsufficientDataError",
    "SmoothObjective", "NonsmoothTerm", "ProblemInstance", "SmoothEval",
    "eval_full", "eval_smooth", "prox_nonsmooth",
    "DirectionResult", "project_simplex", "model_values", "duality_gap",
    "inner_minimize", "solve_direction",
    "Status", "SolverConfig", "TraceRecord", "SolveTrace",
    "armijo_backtrack", "solve",
    "Verdict", "RateReport", "criticality_measure", "refine_reference",
    "iterate_errors", "decreasing_tail", "estimate_order", "tau_sequence",
    "tau_bracket",
    "tau_check", "rate_report", "check_quadratic_termination",
    "check_fundamental_inequality_quadratic", "check_descent_bound",
    "InstanceSpec", "gen_quadratic", "gen_logsumexp_reg", "attach_nonsmooth",
    "generate_instance", "quadratic_objective", "logsumexp_objective",
    "__version__",
]
