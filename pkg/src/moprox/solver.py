"""Outer loop: direction solve, backtracking line search, step, repeat.

One driver serves two variants that differ only in the metric handed to the
direction subproblem: ``newton`` uses the true Hessians, ``gradient``
replaces every Hessian by ell times the identity (a scaled-identity
majorization). Iterations stop when the direction norm falls below eps; the
full iteration history is recorded in a trace for offline verification.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    ConvergenceError,
    EvaluationError,
    InputError,
    LineSearchError,
    MoproxError,
    SingularMetricError,
)
from .problems import ProblemInstance, SmoothEval, eval_smooth, _as_point
from .subproblem import solve_direction

__all__ = [
    "Status",
    "SolverConfig",
    "TraceRecord",
    "SolveTrace",
    "armijo_backtrack",
    "solve",
]

VARIANT_NEWTON = "newton"
VARIANT_GRADIENT = "gradient"


class Status(enum.Enum):
    """Terminal state of a solve."""

    CRITICAL_REACHED = "critical_reached"
    MAX_ITERS = "max_iters"
    SUBPROBLEM_FAILURE = "subproblem_failure"


@dataclass(frozen=True)
class SolverConfig:
    """Outer-loop parameters.

    eps is the direction-norm stopping threshold, sigma the sufficient
    decrease fraction, gamma the backtracking ratio. variant selects the
    metric ("newton" or "gradient"); ell (> 0) is required for "gradient".
    """

    eps: float = 1e-8
    sigma: float = 0.1
    gamma: float = 0.5
    max_outer: int = 500
    tol_gap: float = 1e-10
    variant: str = VARIANT_NEWTON
    ell: Optional[float] = None
    max_dual_iters: int = 500
    max_inner_iters: int = 10000
    max_halvings: int = 60

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ConfigError(f"eps must be finite and > 0, got {self.eps}")
        if not (0.0 < self.sigma < 1.0):
            raise ConfigError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.max_outer < 0:
            raise ConfigError(f"max_outer must be >= 0, got {self.max_outer}")
        if not (np.isfinite(self.tol_gap) and self.tol_gap > 0):
            raise ConfigError(f"tol_gap must be finite and > 0, got {self.tol_gap}")
        if self.variant not in (VARIANT_NEWTON, VARIANT_GRADIENT):
            raise ConfigError(f"variant must be 'newton' or 'gradient', got {self.variant!r}")
        if self.variant == VARIANT_GRADIENT:
            if self.ell is None or not (np.isfinite(self.ell) and self.ell > 0):
                raise ConfigError("variant 'gradient' requires ell > 0")
        if self.max_dual_iters < 1 or self.max_inner_iters < 1 or self.max_halvings < 1:
            raise ConfigError("iteration caps must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    """State at outer iteration k plus the direction and step taken from it.

    The terminal record carries step 0.0 (no step was taken from it); its
    direction fields are nan when the iteration cap stopped the run before a
    subproblem was solved there.
    """

    k: int
    x: np.ndarray
    objectives: np.ndarray
    direction_norm: float
    theta: float
    step: float
    weights: np.ndarray
    gap: float


@dataclass(frozen=True)
class SolveTrace:
    records: tuple
    status: Status
    config: SolverConfig
    message: str = ""

    @property
    def final_x(self) -> np.ndarray:
        return self.records[-1].x

    @property
    def steps_taken(self) -> int:
        return sum(1 for r in self.records if r.step > 0.0)

    def iterates(self) -> np.ndarray:
        return np.vstack([r.x for r in self.records])


def _full_values(problem: ProblemInstance, se: SmoothEval, x: np.ndarray) -> np.ndarray:
    vals = se.values.copy()
    for i, term in enumerate(problem.nonsmooth):
        vals[i] += term.value(x)
    return vals


def armijo_backtrack(problem: ProblemInstance, x, d, theta: float, sigma: float,
                     gamma: float, max_halvings: int = 60, f_x=None) -> float:
    """Largest step t = gamma^j with componentwise sufficient decrease.

    Accepts t when F_i(x + t d) - F_i(x) <= t * sigma * theta for every i.
    Comparisons involving +inf (an infeasible trial point) fail the test and
    trigger further backtracking. Raises LineSearchError if no power of gamma
    up to max_halvings works, and InputError when d is zero or theta >= 0
    (the test is meaningless without a descent prediction).
    """
    x = _as_point(x, problem.n)
    d = np.asarray(d, dtype=float)
    if not np.any(d != 0.0):
        raise InputError("line search requires a nonzero direction")
    if not (np.isfinite(theta) and theta < 0.0):
        raise InputError(f"line search requires theta < 0, got {theta}")
    from .problems import eval_full

    if f_x is None:
        f_x = eval_full(problem, x)
    f_x = np.asarray(f_x, dtype=float)
    if not np.all(np.isfinite(f_x)):
        raise InputError("line search requires finite objective values at x")
    t = 1.0
    for _ in range(max_halvings + 1):
        trial = eval_full(problem, x + t * d)
        decrease = trial - f_x
        bound = t * sigma * theta
        # nan/inf-robust acceptance: all decreases must provably satisfy the bound
        if np.all(decrease <= bound):
            return t
        t *= gamma
    raise LineSearchError(
        f"no step of the form gamma^j satisfied the decrease test after {max_halvings} halvings"
    )


def _nan_record(k: int, x: np.ndarray, objectives: np.ndarray, m: int) -> TraceRecord:
    return TraceRecord(k=k, x=x.copy(), objectives=objectives.copy(),
                       direction_norm=float("nan"), theta=float("nan"), step=0.0,
                       weights=np.full(m, float("nan")), gap=float("nan"))


def solve(problem: ProblemInstance, config: SolverConfig, x0) -> SolveTrace:
    """Run the solver from x0 and return the full iteration trace.

    Each iteration solves the direction subproblem in the configured metric,
    stops with CRITICAL_REACHED once ||d|| < eps, otherwise backtracks a step
    and moves. Subproblem or line-search failures are recorded in the trace
    (status SUBPROBLEM_FAILURE) rather than raised; exhausting max_outer
    yields MAX_ITERS.
    """
    x = _as_point(x0, problem.n)
    records = []
    m = problem.m

    ell_eye = None
    if config.variant == VARIANT_GRADIENT:
        ell_eye = config.ell * np.eye(problem.n)

    for k in range(config.max_outer):
        try:
            se = eval_smooth(problem, x)
            if ell_eye is not None:
                se = SmoothEval(values=se.values, gradients=se.gradients,
                                hessians=np.broadcast_to(ell_eye, se.hessians.shape))
                strong = config.ell
            else:
                strong = problem.mu
            f_x = _full_values(problem, se, x)
            if not np.all(np.isfinite(f_x)):
                raise InputError("objective values at the current iterate are not finite")
            res = solve_direction(problem, x, tol_gap=config.tol_gap,
                                  max_dual_iters=config.max_dual_iters,
                                  max_inner_iters=config.max_inner_iters,
                                  smooth_eval=se, strong_convexity=strong)
        except (ConvergenceError, SingularMetricError, EvaluationError, InputError) as exc:
            records.append(_nan_record(k, x, _safe_objectives(problem, x, m), m))
            return SolveTrace(records=tuple(records), status=Status.SUBPROBLEM_FAILURE,
                              config=config, message=str(exc))

        dnorm = float(np.linalg.norm(res.direction))
        if dnorm < config.eps:
            records.append(TraceRecord(k=k, x=x.copy(), objectives=f_x,
                                       direction_norm=dnorm, theta=res.theta, step=0.0,
                                       weights=res.weights.copy(), gap=res.gap))
            return SolveTrace(records=tuple(records), status=Status.CRITICAL_REACHED,
                              config=config)

        try:
            t = armijo_backtrack(problem, x, res.direction, res.theta, config.sigma,
                                 config.gamma, config.max_halvings, f_x=f_x)
        except (LineSearchError, InputError, EvaluationError) as exc:
            records.append(TraceRecord(k=k, x=x.copy(), objectives=f_x,
                                       direction_norm=dnorm, theta=res.theta, step=0.0,
                                       weights=res.weights.copy(), gap=res.gap))
            return SolveTrace(records=tuple(records), status=Status.SUBPROBLEM_FAILURE,
                              config=config, message=str(exc))

        records.append(TraceRecord(k=k, x=x.copy(), objectives=f_x,
                                   direction_norm=dnorm, theta=res.theta, step=t,
                                   weights=res.weights.copy(), gap=res.gap))
        x = x + t * res.direction

    records.append(_nan_record(config.max_outer, x, _safe_objectives(problem, x, m), m))
    return SolveTrace(records=tuple(records), status=Status.MAX_ITERS, config=config)


def _safe_objectives(problem: ProblemInstance, x: np.ndarray, m: int) -> np.ndarray:
    from .problems import eval_full

    try:
        return eval_full(problem, x)
    except MoproxError:
        return np.full(m, float("nan"))
