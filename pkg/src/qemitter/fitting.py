"""Bounded Levenberg-Marquardt least squares.

Minimises ``sum(w * (model(x, params) - y)**2)`` over the free parameters.
Bounds are enforced by projection after every step. The Jacobian is a
central finite difference with relative step 1e-6, one-sided when a
bound is in the way. Parameter uncertainties come from ``(J^T W J)^-1``
scaled by the reduced chi-square; parameters that finish on a bound are
reported as active and left out of the covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateError, RankDeficiencyError, UsageError

REL_STEP = 1e-6
_RANK_TOL = 1e-9


@dataclass(frozen=True)
class FreeParameter:
    initial: float
    lower: float = -math.inf
    upper: float = math.inf
    scale: Optional[float] = None  # typical magnitude, used for the FD step at zero

    def __post_init__(self):
        if not self.lower <= self.initial <= self.upper:
            raise UsageError(f"initial guess {self.initial} outside bounds "
                             f"[{self.lower}, {self.upper}]")


@dataclass
class FitProblem:
    """A model, data and a split of its parameters into free and fixed.

    ``model(x, params)`` receives every parameter (free and fixed) as a
    dict and returns predictions with the shape of ``y``.
    """

    model: Callable[[np.ndarray, Dict[str, float]], np.ndarray]
    x: np.ndarray
    y: np.ndarray
    free: Mapping[str, FreeParameter]
    fixed: Mapping[str, float] = field(default_factory=dict)
    weights: Optional[np.ndarray] = None
    name: str = "model"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if not self.free:
            raise UsageError("no free parameters")
        overlap = set(self.free) & set(self.fixed)
        if overlap:
            raise UsageError(f"parameters both free and fixed: {sorted(overlap)}")
        if self.y.size < len(self.free) + 1:
            raise UsageError(f"{self.y.size} data points cannot constrain "
                             f"{len(self.free)} free parameters")
        if self.weights is None:
            self.weights = np.ones_like(self.y)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.y.shape or np.any(self.weights < 0):
                raise UsageError("weights must be non-negative and match the data")
        if not np.all(np.isfinite(self.y)):
            raise UsageError("data contain non-finite values")

    @property
    def names(self) -> List[str]:
        return list(self.free)

    def params(self, p) -> Dict[str, float]:
        out = dict(self.fixed)
        out.update(zip(self.free, (float(v) for v in p)))
        return out

    def residuals(self, p) -> np.ndarray:
        pred = np.asarray(self.model(self.x, self.params(p)), dtype=float)
        return np.sqrt(self.weights) * (pred - self.y)


@dataclass
class FitResult:
    names: List[str]
    values: Dict[str, float]
    uncertainties: Dict[str, float]
    covariance: np.ndarray
    cost: float
    converged: bool
    iterations: int
    dof: int
    active_bounds: List[str] = field(default_factory=list)
    cost_history: List[float] = field(default_factory=list)
    message: str = ""
    warnings: List[str] = field(default_factory=list)
    residuals: Optional[np.ndarray] = None
    fixed: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[name]

    def sigma(self, name):
        return self.uncertainties[name]

    @property
    def reduced_chi2(self):
        return self.cost / self.dof if self.dof > 0 else math.nan

    def correlation(self):
        d = np.sqrt(np.diag(self.covariance))
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.covariance / np.outer(d, d)


def _steps(p, problem, rel_step):
    h = np.empty_like(p)
    for i, (name, spec) in enumerate(problem.free.items()):
        # the declared scale floors the step so values near zero stay resolvable
        scale = max(abs(p[i]), spec.scale or 0.0)
        if scale == 0:
            scale = abs(spec.initial) or 1.0
        h[i] = rel_step * scale
    return h


def jacobian(problem: FitProblem, p, rel_step=REL_STEP) -> np.ndarray:
    """d residuals / d p by central differences (forward/backward at bounds)."""
    p = np.asarray(p, dtype=float)
    h = _steps(p, problem, rel_step)
    specs = list(problem.free.values())
    cols = []
    r0 = None
    for i, spec in enumerate(specs):
        up, dn = p.copy(), p.copy()
        up[i] += h[i]
        dn[i] -= h[i]
        if dn[i] < spec.lower:
            r0 = problem.residuals(p) if r0 is None else r0
            cols.append((problem.residuals(up) - r0) / h[i])
        elif up[i] > spec.upper:
            r0 = problem.residuals(p) if r0 is None else r0
            cols.append((r0 - problem.residuals(dn)) / h[i])
        else:
            cols.append((problem.residuals(up) - problem.residuals(dn)) / (2 * h[i]))
    return np.column_stack(cols)


def jacobian_five_point(problem: FitProblem, p, rel_step=1e-7) -> np.ndarray:
    """Fourth-order central stencil; reference for checking :func:`jacobian`."""
    p = np.asarray(p, dtype=float)
    h = _steps(p, problem, rel_step)
    cols = []
    for i in range(p.size):
        def r(k):
            q = p.copy()
            q[i] += k * h[i]
            return problem.residuals(q)
        cols.append((-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * h[i]))
    return np.column_stack(cols)


def _project(p, lo, hi):
    return np.minimum(np.maximum(p, lo), hi)


def _null_parameters(jac, names):
    norms = np.linalg.norm(jac, axis=0)
    bad = [n for n, c in zip(names, norms) if c == 0]
    if bad:
        return bad, True
    u, s, vt = np.linalg.svd(jac / norms, full_matrices=False)
    if s[-1] > _RANK_TOL * s[0]:
        return [], False
    null = vt[s <= _RANK_TOL * s[0]]
    weight = np.max(np.abs(null), axis=0)
    return [n for n, w in zip(names, weight) if w > 0.1], True


def fit_least_squares(problem: FitProblem, max_iter: int = 500, ftol: float = 1e-10,
                      gtol: float = 1e-10) -> FitResult:
    names = problem.names
    specs = list(problem.free.values())
    lo = np.array([s.lower for s in specs])
    hi = np.array([s.upper for s in specs])
    p = np.array([s.initial for s in specs], dtype=float)

    r = problem.residuals(p)
    if not np.all(np.isfinite(r)):
        raise UsageError("model is not finite at the initial guess")
    cost = float(r @ r)
    history = [cost]
    # residual at the rounding level of the data counts as exact
    zero_cost = 1e-28 * float(np.sum(problem.weights * problem.y ** 2))
    lam = 1e-3
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        if cost <= zero_cost:
            converged, message = True, "zero residual"
            it -= 1
            break
        jac = jacobian(problem, p)
        grad = jac.T @ r
        col = np.linalg.norm(jac, axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            gscaled = np.where(col > 0, np.abs(grad) / (col * math.sqrt(cost)), 0.0)
        # a component pushing against an active bound is not a descent direction
        at_lo = (p <= lo) & (grad > 0)
        at_hi = (p >= hi) & (grad < 0)
        gscaled[at_lo | at_hi] = 0.0
        if np.max(gscaled) < gtol:
            converged, message = True, "gradient below tolerance"
            break
        # parameters held on a bound by the gradient sit out this step
        move = ~(at_lo | at_hi)
        a = jac[:, move].T @ jac[:, move]
        g = grad[move]
        diag = np.maximum(np.diag(a), 1e-12 * max(np.max(np.diag(a)), 1e-300))
        while True:
            try:
                sub = np.linalg.solve(a + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                sub = np.linalg.lstsq(a + lam * np.diag(diag), -g, rcond=None)[0]
            step = np.zeros_like(p)
            step[move] = sub
            trial = _project(p + step, lo, hi)
            r_new = problem.residuals(trial)
            new_cost = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if new_cost <= cost:
                break
            lam *= 10.0
            if lam > 1e16:
                trial = None
                break
        if trial is None:
            converged, message = True, "no further decrease possible"
            break
        decrease = cost - new_cost
        p, r, cost = trial, r_new, new_cost
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if decrease <= ftol * history[-2]:
            converged, message = True, "relative cost change below tolerance"
            break

    active = [n for n, v, a, b in zip(names, p, lo, hi) if v <= a or v >= b]
    free_idx = [i for i, n in enumerate(names) if n not in active]
    dof = problem.y.size - len(free_idx)
    values = dict(zip(names, (float(v) for v in p)))
    cov = np.full((len(names), len(names)), np.nan)
    unc = {n: math.nan for n in names}
    result = FitResult(names, values, unc, cov, cost, converged, it, dof, active,
                       history, message, [], r / np.where(problem.weights > 0,
                                                          np.sqrt(problem.weights), 1.0),
                       dict(problem.fixed))
    if active:
        result.warnings.append(f"parameters on a bound: {', '.join(active)}")
    if not converged:
        result.warnings.append(message)
    if not free_idx:
        return result

    jac = jacobian(problem, p)[:, free_idx]
    sub_names = [names[i] for i in free_idx]
    degenerate, singular = _null_parameters(jac, sub_names)
    if singular:
        raise RankDeficiencyError(
            f"normal matrix is singular; degenerate parameters: {', '.join(degenerate)}",
            degenerate, result)
    s2 = cost / dof if dof > 0 else 1.0
    sub_cov = np.linalg.inv(jac.T @ jac) * s2
    sub_cov = 0.5 * (sub_cov + sub_cov.T)
    for a_i, i in enumerate(free_idx):
        for b_i, j in enumerate(free_idx):
            cov[i, j] = sub_cov[a_i, b_i]
        unc[names[i]] = float(math.sqrt(max(sub_cov[a_i, a_i], 0.0)))
    return result


def poisson_weights(counts) -> np.ndarray:
    return 1.0 / np.maximum(np.asarray(counts, dtype=float), 1.0)


def require_signal(y, what="trace"):
    y = np.asarray(y, dtype=float)
    if y.size == 0 or not np.any(y != 0):
        raise DegenerateError(f"{what} contains no signal")
