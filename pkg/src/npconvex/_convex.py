"""Certified small convex programs over a box.

Every program the pipeline needs has the shape

    minimize   F(x)
    subject to C_k(x) <= b_k,   lo <= x <= hi,

where each of F and C_k is a convex expectation composed with a reflection
and a shift, ``rho(sign * x + shift)``.  Polyhedral terms enter as their
affine pieces, smooth (entropic) terms through values and gradients.

The incumbent comes from an exact LP when all terms are polyhedral and from
SLSQP on the epigraph reformulation otherwise.  Either way the answer is
certified by a cutting-plane lower bound: the LP that replaces every smooth
term by its tangent cuts and keeps every polyhedral term exactly.  The LP
duals double as Lagrange multipliers and as weights on the objective's
pieces.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .risk import ConvexExpectation

_HIGHS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True)
class Term:
    """x -> rho(sign * x + shift)."""

    rho: ConvexExpectation
    sign: float = 1.0
    shift: float = 0.0

    @property
    def polyhedral(self) -> bool:
        return self.rho.polyhedral

    def _arg(self, x):
        return self.sign * x + self.shift

    def value(self, x) -> float:
        return self.rho.value(self._arg(x))

    def grad(self, x) -> np.ndarray:
        return self.sign * self.rho.space.mu * self.rho.argmax_density(self._arg(x))

    def cut(self, x):
        g = self.grad(x)
        return self.value(x) - g @ x, g

    def pieces(self):
        """Offsets a_j and slopes g_j with term(x) = max_j (a_j + g_j . x)."""
        rows, costs = self.rho.pieces()
        mu = self.rho.space.mu
        slopes = self.sign * rows * mu
        offsets = (rows * mu) @ (np.ones(mu.size) * self.shift) - costs
        return offsets, slopes


@dataclass
class ConvexResult:
    x: np.ndarray
    value: float
    lower_bound: float
    multipliers: np.ndarray
    objective_weights: np.ndarray | None
    violation: float
    certified: bool
    iterations: int
    method: str
    history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.value - self.lower_bound


def _cut_rows(term: Term, points):
    if term.polyhedral:
        return term.pieces()
    offs, grads = [], []
    for p in points:
        a, g = term.cut(p)
        offs.append(a)
        grads.append(g)
    return np.array(offs), np.array(grads)


def _master_lp(objective, constraints, lo, hi, points):
    """Cutting-plane model LP; returns (lower bound, x, multipliers, objective weights)."""
    n = lo.size
    obj_off, obj_slope = _cut_rows(objective, points)
    rows, rhs, owner = [], [], []
    for a, g in zip(obj_off, obj_slope):
        rows.append(np.concatenate([g, [-1.0]]))
        rhs.append(-a)
        owner.append(-1)
    for k, (term, bound) in enumerate(constraints):
        offs, slopes = _cut_rows(term, points)
        for a, g in zip(offs, slopes):
            rows.append(np.concatenate([g, [0.0]]))
            rhs.append(bound - a)
            owner.append(k)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    bounds = list(zip(lo, hi)) + [(None, None)]
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs", options=_HIGHS)
    if res.status != 0:
        return None
    owner = np.array(owner)
    marg = -np.asarray(res.ineqlin.marginals)
    mults = np.array([marg[owner == k].sum() for k in range(len(constraints))])
    weights = marg[owner == -1]
    return float(res.fun), np.clip(res.x[:n], lo, hi), mults, weights


def _violation(constraints, x):
    worst = 0.0
    for term, bound in constraints:
        worst = max(worst, term.value(x) - bound)
    return worst


def _slsqp(objective, constraints, lo, hi, x0, maxiter):
    n = lo.size
    obj_poly = objective.polyhedral
    if obj_poly:
        offs, slopes = objective.pieces()
        z0 = np.concatenate([x0, [objective.value(x0)]])

        def fun(z):
            return z[-1]

        def jac(z):
            g = np.zeros(n + 1)
            g[-1] = 1.0
            return g

        cons = [
            {
                "type": "ineq",
                "fun": lambda z, o=offs, s=slopes: z[-1] - o - s @ z[:n],
                "jac": lambda z, s=slopes: np.hstack([-s, np.ones((s.shape[0], 1))]),
            }
        ]
        bounds = list(zip(lo, hi)) + [(None, None)]
    else:
        z0 = x0.copy()

        def fun(z):
            return objective.value(z[:n])

        def jac(z):
            return objective.grad(z[:n])

        cons = []
        bounds = list(zip(lo, hi))
    pad = 1 if obj_poly else 0
    for term, bound in constraints:
        if term.polyhedral:
            offs, slopes = term.pieces()
            padded = np.hstack([slopes, np.zeros((slopes.shape[0], pad))])
            cons.append(
                {
                    "type": "ineq",
                    "fun": lambda z, o=offs, s=slopes, b=bound: b - o - s @ z[:n],
                    "jac": lambda z, p=padded: -p,
                }
            )
        else:
            cons.append(
                {
                    "type": "ineq",
                    "fun": lambda z, t=term, b=bound: np.atleast_1d(b - t.value(z[:n])),
                    "jac": lambda z, t=term: np.atleast_2d(np.concatenate([-t.grad(z[:n]), np.zeros(pad)])),
                }
            )
    with warnings.catch_warnings():
        # SLSQP clips stray iterates back into the box itself
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = minimize(
            fun,
            z0,
            jac=jac,
            bounds=bounds,
            constraints=cons,
            method="SLSQP",
            options={"ftol": 1e-15, "maxiter": maxiter},
        )
    return np.clip(res.x[:n], lo, hi), int(res.nit)


def solve_convex(
    objective: Term,
    constraints,
    lo,
    hi,
    x0=None,
    tol: float = 1e-8,
    tol_feas: float = 1e-9,
    max_outer_iter: int = 50,
    max_inner_iter: int = 500,
) -> ConvexResult:
    """Minimize ``objective`` over the box subject to ``term(x) <= bound`` constraints."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    constraints = list(constraints)
    x0 = np.clip(np.asarray(lo if x0 is None else x0, dtype=float), lo, hi)
    all_poly = objective.polyhedral and all(t.polyhedral for t, _ in constraints)

    if all_poly:
        master = _master_lp(objective, constraints, lo, hi, [])
        if master is None:
            x = x0
            return ConvexResult(x, objective.value(x), -np.inf, np.zeros(len(constraints)), None,
                                _violation(constraints, x), False, 1, "lp")
        lb, x, mults, weights = master
        value = objective.value(x)
        viol = _violation(constraints, x)
        ok = value - lb <= tol and viol <= tol_feas
        return ConvexResult(x, value, lb, mults, weights, viol, ok, 1, "lp")

    points = [x0]
    x, nit = _slsqp(objective, constraints, lo, hi, x0, max_inner_iter)
    best_x, best_val = None, np.inf
    history = []
    lb, mults, weights = -np.inf, np.zeros(len(constraints)), None
    for outer in range(1, max_outer_iter + 1):
        viol = _violation(constraints, x)
        val = objective.value(x)
        if viol <= tol_feas and val < best_val:
            best_x, best_val = x, val
        points.append(x)
        master = _master_lp(objective, constraints, lo, hi, points)
        if master is not None:
            lb = max(lb, master[0])
            mults, weights = master[2], master[3]
            x_lp = master[1]
        history.append((outer, best_val, lb))
        if best_x is not None and best_val - lb <= tol:
            # duals from the tangent model at the incumbent itself
            final = _master_lp(objective, constraints, lo, hi, [best_x])
            if final is not None:
                mults, weights = final[2], final[3]
            return ConvexResult(best_x, best_val, lb, mults, weights, _violation(constraints, best_x), True,
                                outer, "slsqp+cuts", history)
        if master is None:
            break
        # Kelley step: cut at the model minimizer, then re-polish from it
        points.append(x_lp)
        x, more = _slsqp(objective, constraints, lo, hi, x_lp, max_inner_iter)
        nit += more
    if best_x is None:
        best_x = x
        best_val = objective.value(x)
    return ConvexResult(best_x, best_val, lb, mults, weights, _violation(constraints, best_x), False,
                        max_outer_iter, "slsqp+cuts", history)
