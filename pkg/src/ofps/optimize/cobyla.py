"""Derivative-free constrained minimization by linear approximation.

Thin layer over scipy's COBYLA (Powell's method: ``n + 1`` simplex vertices,
linear interpolation models of the objective and of every constraint
``g_k(x) >= 0``, a trust-region linear subproblem, merit-function acceptance and
a radius shrinking from ``rho_begin`` to ``rho_end``). The layer adds an
evaluation budget, exact box bounds, bookkeeping of the best feasible point
seen, and a final-shrink convergence check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import Bounds, minimize

log = logging.getLogger(__name__)

# radius of the final polishing pass, in units of rho_end
POLISH_SCALE = 1e3
SCIPY_MAXFUN = 2  # scipy's status code for an exhausted evaluation budget


@dataclass(frozen=True)
class CobylaConfig:
    rho_begin: float = 0.5
    rho_end: float = 1e-7
    max_evals: int = 20000
    constraint_tolerance: float = 1e-8
    restarts: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.rho_end < self.rho_begin:
            raise ValueError("need 0 < rho_end < rho_begin")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")


@dataclass
class CobylaResult:
    """Outcome of one minimization.

    ``level_best`` holds the best feasible objective after the main pass and
    after the final polishing shrink; ``history`` is the best-so-far feasible
    objective after every evaluation (nan until a feasible point is seen).
    """

    x: np.ndarray
    fun: float
    status: str
    maxcv: float
    nfev: int
    nit: int
    level_best: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status == "converged"

    def __iter__(self):
        yield self.x
        yield self.fun
        yield self.status


class _Evaluator:
    """Counts evaluations and remembers the best feasible and least-infeasible points."""

    def __init__(self, fun, constraints, tol, lb=None, ub=None):
        self.fun = fun
        self.lb = lb
        self.ub = ub
        self.constraints = constraints
        self.tol = tol
        self.nfev = 0
        self.best_feasible = None  # (f, x, cv)
        self.least_violation = None
        self.history: list[float] = []
        self._last_x = None
        self._last = None

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self._last_x is not None and np.array_equal(x, self._last_x):
            return self._last
        self.nfev += 1
        f = float(self.fun(x))
        if self.constraints:
            c = np.concatenate([np.atleast_1d(np.asarray(g(x), dtype=float)) for g in self.constraints])
        else:
            c = np.zeros(0)
        if not np.isfinite(f) or not np.all(np.isfinite(c)):
            raise FloatingPointError(f"non-finite objective or constraint at x={x}")
        cv = max(0.0, float(-c.min())) if c.size else 0.0
        if self.lb is not None:
            cv = max(cv, float(np.max(self.lb - x)), float(np.max(x - self.ub)))
        if cv <= self.tol and (self.best_feasible is None or f < self.best_feasible[0]):
            self.best_feasible = (f, x.copy(), cv)
        if self.least_violation is None or (cv, f) < (self.least_violation[2], self.least_violation[0]):
            self.least_violation = (f, x.copy(), cv)
        self.history.append(self.best_feasible[0] if self.best_feasible else np.nan)
        self._last_x = x.copy()
        self._last = (f, c, cv)
        return self._last

    def objective(self, x):
        return self.evaluate(x)[0]

    def constraint_values(self, x):
        return self.evaluate(x)[1]


def _pass(ev: _Evaluator, x0, rho_begin, rho_end, budget, bounds, n_con):
    constraints = [{"type": "ineq", "fun": ev.constraint_values}] if n_con else []
    return minimize(
        ev.objective,
        x0,
        method="COBYLA",
        constraints=constraints,
        bounds=bounds,
        options={"rhobeg": rho_begin, "tol": rho_end, "maxiter": max(budget, len(x0) + 2)},
    )


def cobyla_minimize(
    fun: Callable[[np.ndarray], float],
    x0,
    constraints: Sequence[Callable] = (),
    config: CobylaConfig | None = None,
    bounds=None,
) -> CobylaResult:
    """Minimize ``fun`` subject to ``g(x) >= 0`` for every callable in ``constraints``.

    Each constraint callable may return a scalar or a 1-D array. ``bounds`` is an
    optional ``(lower, upper)`` pair enforced exactly. After the main pass a
    short polishing pass restarts from the best point with radius
    ``1000 * rho_end``; both results are recorded in ``level_best``. The best
    feasible point seen is returned; if none is feasible within
    ``constraint_tolerance`` the least-violating point is returned with status
    ``"infeasible"``.
    """
    cfg = config or CobylaConfig()
    x0 = np.asarray(x0, dtype=float).copy()
    n = x0.size
    box = lb = ub = None
    if bounds is not None:
        lb = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        x0 = np.clip(x0, lb, ub)
        box = Bounds(lb, ub)

    ev = _Evaluator(fun, list(constraints), cfg.constraint_tolerance, lb, ub)
    n_con = ev.evaluate(x0)[1].size
    level_best: list[float] = []
    status = "converged"
    nit = 0

    res = _pass(ev, x0, cfg.rho_begin, cfg.rho_end, cfg.max_evals - ev.nfev, box, n_con)
    nit += int(getattr(res, "nit", 0) or 0)
    level_best.append(ev.best_feasible[0] if ev.best_feasible else np.nan)
    if ev.nfev >= cfg.max_evals or res.status == SCIPY_MAXFUN:
        status = "max_evals"
    else:
        polish_rho = min(POLISH_SCALE * cfg.rho_end, cfg.rho_begin)
        if polish_rho > cfg.rho_end and ev.nfev + n + 2 <= cfg.max_evals:
            start = (ev.best_feasible or ev.least_violation)[1]
            res = _pass(ev, start, polish_rho, cfg.rho_end, cfg.max_evals - ev.nfev, box, n_con)
            nit += int(getattr(res, "nit", 0) or 0)
            level_best.append(ev.best_feasible[0] if ev.best_feasible else np.nan)
            if ev.nfev >= cfg.max_evals or res.status == SCIPY_MAXFUN:
                status = "max_evals"

    if ev.best_feasible is not None:
        f_best, x_best, cv_best = ev.best_feasible
    else:
        f_best, x_best, cv_best = ev.least_violation
        status = "infeasible"
        log.warning("no feasible point found; max constraint violation %.3g", cv_best)
    log.debug("cobyla: status=%s f=%.10g nfev=%d", status, f_best, ev.nfev)
    return CobylaResult(
        x=x_best,
        fun=f_best,
        status=status,
        maxcv=cv_best,
        nfev=ev.nfev,
        nit=nit,
        level_best=level_best,
        history=ev.history,
    )
