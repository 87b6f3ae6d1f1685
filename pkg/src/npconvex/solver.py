"""Generalized Neyman-Pearson pipeline under convex expectations.

Given rho1 (the level constraint) and rho2 (the loss), the pipeline

1. minimizes rho2(k2 - X) over tests k1 <= X <= k2 with rho1(X) <= alpha,
2. finds alpha*, the smallest rho1-level among optimal tests,
3. finds the least-favorable Q* for rho2 and the budget gamma,
4. finds the least-favorable P* for rho1 given (Q*, gamma),
5. builds the randomized threshold test between P* and Q*.

Every stage returns certified bounds; see ``_convex`` for the mechanics.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from ._convex import Term, _master_lp, solve_convex
from .errors import (
    ContractViolationError,
    InfeasibleProblemError,
    InternalConsistencyError,
    InvalidInputError,
    SaddleFailureError,
    UnverifiedError,
)
from .risk import ConvexExpectation, Entropic, Linear, hull_penalty
from .space import DensityVector, FiniteProbSpace, Partition, RandomVariable, partition_arrays

_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class SolverConfig:
    tol_opt: float = 1e-8
    tol_feas: float = 1e-9
    tau_eq: float = 1e-9
    max_outer_iter: int = 200
    max_inner_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        for name in ("tol_opt", "tol_feas", "tau_eq"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.max_outer_iter < 1 or self.max_inner_iter < 1:
            raise InvalidInputError("iteration limits must be at least 1")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    space: FiniteProbSpace
    rho1: ConvexExpectation
    rho2: ConvexExpectation
    k1: float
    k2: float
    alpha: float

    def __post_init__(self):
        for name in ("rho1", "rho2"):
            rho = getattr(self, name)
            if rho.space != self.space:
                raise InvalidInputError(f"{name} is defined on a different space")
        if not (np.isfinite(self.k1) and np.isfinite(self.k2) and np.isfinite(self.alpha)):
            raise InvalidInputError("k1, k2 and alpha must be finite")
        if not self.k1 < self.k2:
            raise InvalidInputError("k1 must be strictly smaller than k2")

    @property
    def n(self) -> int:
        return self.space.n

    def lo(self) -> np.ndarray:
        return np.full(self.n, float(self.k1))

    def hi(self) -> np.ndarray:
        return np.full(self.n, float(self.k2))

    def alpha_range(self, tol: float = 1e-9) -> str:
        """'below' if rho1(k1) > alpha, 'vacuous' if alpha >= rho1(k2), else 'ok'."""
        if self.rho1.value(self.lo()) > self.alpha + tol:
            return "below"
        if self.alpha >= self.rho1.value(self.hi()):
            return "vacuous"
        return "ok"

    def standard_range(self) -> bool:
        """Whether 0 <= k1 < k2 as assumed throughout the theory."""
        return self.k1 >= 0.0

    def with_alpha(self, alpha: float) -> "ProblemSpec":
        return ProblemSpec(self.space, self.rho1, self.rho2, self.k1, self.k2, alpha)


class TestFunction:
    """Randomized test with k1 <= X <= k2, clamped on construction."""

    __test__ = False  # not a pytest class
    __slots__ = ("x", "k1", "k2")

    def __init__(self, x: RandomVariable, k1: float, k2: float):
        values = x.values
        slack = 1e-6 * max(1.0, k2 - k1)
        if np.any(values < k1 - slack) or np.any(values > k2 + slack):
            raise InvalidInputError("test values fall outside [k1, k2]")
        object.__setattr__(self, "x", RandomVariable(x.space, np.clip(values, k1, k2)))
        object.__setattr__(self, "k1", float(k1))
        object.__setattr__(self, "k2", float(k2))

    def __setattr__(self, name, value):
        raise AttributeError("TestFunction is immutable")

    @classmethod
    def from_array(cls, space: FiniteProbSpace, values, k1: float, k2: float) -> "TestFunction":
        return cls(RandomVariable(space, values), k1, k2)

    @property
    def values(self) -> np.ndarray:
        return self.x.values

    @property
    def space(self) -> FiniteProbSpace:
        return self.x.space

    def __repr__(self) -> str:
        return f"TestFunction({self.values.tolist()}, k1={self.k1}, k2={self.k2})"


# -- stage results ----------------------------------------------------------


class PrimalSolution(NamedTuple):
    x_star: TestFunction
    beta: float
    lower_bound: float
    multiplier: float
    iterations: int


class AlphaRefinement(NamedTuple):
    alpha_star: float
    x_star_refined: TestFunction
    method: str
    multiplier: float


class SupportValue(NamedTuple):
    value: float
    maximizer: np.ndarray


class BoxLinearMax(NamedTuple):
    value: float
    maximizer: TestFunction


class QStar(NamedTuple):
    q_star: DensityVector
    gamma: float
    saddle_value: float
    penalty: float
    x_compressed: TestFunction
    beta_compressed: float
    lower_bound: float
    iterations: int
    method: str


class PStar(NamedTuple):
    p_star: DensityVector
    value: float
    penalty: float
    rho1_min: float
    lower_bound: float
    x_dual: TestFunction
    iterations: int
    method: str


class Threshold(NamedTuple):
    z: float
    boundary_randomization: dict
    x_star: TestFunction
    partition: Partition


@dataclass
class ThresholdReport:
    passed: bool
    partition: Partition
    residuals: list
    max_residual: float

    def to_dict(self):
        return {
            "passed": self.passed,
            "partition": {k: list(v) for k, v in self.partition._asdict().items()},
            "residuals": self.residuals,
            "max_residual": self.max_residual,
        }


@dataclass
class NpSolution:
    x_star: TestFunction
    beta: float
    alpha_star: float
    gamma: float
    q_star: DensityVector
    p_star: DensityVector
    z: float
    boundary_randomization: dict
    duality_gap: float
    saddle_value: float
    rho2_penalty: float
    rho1_penalty: float
    status: str = "ok"
    diagnostics: dict = field(default_factory=dict)


# -- helpers ------------------------------------------------------------------


def _certified(res, stage: str):
    if not res.certified:
        raise UnverifiedError(
            f"{stage}: optimality gap {res.gap:.3e} not closed (violation {res.violation:.3e})",
            lower_bound=res.lower_bound,
            upper_bound=res.value,
            result=res,
        )
    return res


def _solve(objective, constraints, lo, hi, x0, config):
    return solve_convex(
        objective,
        constraints,
        lo,
        hi,
        x0=x0,
        tol=config.tol_opt,
        tol_feas=config.tol_feas,
        max_outer_iter=config.max_outer_iter,
        max_inner_iter=config.max_inner_iter,
    )


def _check_level(spec: ProblemSpec, level: float, config: SolverConfig) -> None:
    floor = spec.rho1.value(spec.lo())
    if floor > level + config.tol_feas:
        raise InfeasibleProblemError(
            f"rho1(k1) = {floor:.12g} exceeds the significance level {level:.12g}"
        )


# -- stage 1: primal ------------------------------------------------------------


def solve_primal(spec: ProblemSpec, config: SolverConfig | None = None) -> PrimalSolution:
    """Minimize rho2(k2 - X) over k1 <= X <= k2 with rho1(X) <= alpha."""
    config = config or SolverConfig()
    _check_level(spec, spec.alpha, config)
    res = _certified(
        _solve(Term(spec.rho2, -1.0, spec.k2), [(Term(spec.rho1), spec.alpha)], spec.lo(), spec.hi(), spec.lo(), config),
        "primal",
    )
    x = TestFunction.from_array(spec.space, res.x, spec.k1, spec.k2)
    return PrimalSolution(x, res.value, res.lower_bound, float(res.multipliers[0]), res.iterations)


# -- stage 2: alpha* ------------------------------------------------------------


def _level_multiplier(spec: ProblemSpec, x: np.ndarray) -> float:
    """Lagrange multiplier of the level constraint in the tangent model at x."""
    master = _master_lp(Term(spec.rho2, -1.0, spec.k2), [(Term(spec.rho1), spec.alpha)], spec.lo(), spec.hi(), [x])
    return 0.0 if master is None else float(master[2][0])


def refine_alpha_star(
    spec: ProblemSpec, x_star: TestFunction, beta: float, config: SolverConfig | None = None
) -> AlphaRefinement:
    """Smallest rho1-level among (near-)optimal tests.

    If the level constraint carries a strictly positive multiplier at the
    optimum, complementary slackness forces rho1(X) = alpha on every optimal
    test and alpha* = alpha exactly.  Otherwise minimize rho1 over the slice
    {rho2(k2 - X) <= beta + tol_opt}; the slice value is corrected by the
    first-order sensitivity ``multiplier * tol_opt``, which keeps it a lower
    bound on alpha* while removing the O(tol_opt) bias.
    """
    config = config or SolverConfig()
    x = x_star.values
    level = spec.rho1.value(x)
    mult = _level_multiplier(spec, x)
    if level >= spec.alpha - config.tol_feas and mult > 1e-7:
        return AlphaRefinement(float(spec.alpha), x_star, "binding-multiplier", mult)
    slack = config.tol_opt
    res = _certified(
        _solve(
            Term(spec.rho1),
            [(Term(spec.rho1), spec.alpha), (Term(spec.rho2, -1.0, spec.k2), beta + slack)],
            spec.lo(),
            spec.hi(),
            x,
            config,
        ),
        "alpha* refinement",
    )
    sensitivity = float(res.multipliers[1])
    alpha_star = min(float(spec.alpha), res.value + sensitivity * slack)
    if level <= alpha_star + slack:
        # the optimal test already sits at the refined level; the slice minimizer only trades optimality for it
        return AlphaRefinement(alpha_star, x_star, "slice", sensitivity)
    refined = TestFunction.from_array(spec.space, res.x, spec.k1, spec.k2)
    if spec.rho2.value(spec.k2 - refined.values) > beta + 2 * slack:
        raise UnverifiedError("refined test left the optimal slice", lower_bound=beta, upper_bound=None)
    return AlphaRefinement(alpha_star, refined, "slice", sensitivity)


# -- support functions ----------------------------------------------------------


def _greedy_fill(gain: np.ndarray, cost: np.ndarray, budget: float, width: float) -> np.ndarray:
    """Fractional knapsack on [0, width]^n: maximize gain.y subject to cost.y <= budget.

    Atoms are taken by descending gain/cost ratio, zero-cost atoms first,
    ties by ascending index.
    """
    n = gain.size
    y = np.zeros(n)
    if budget < 0:
        return y
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cost > 0, gain / np.where(cost > 0, cost, 1.0), np.inf)
    order = np.argsort(-ratio, kind="stable")
    remaining = float(budget)
    for i in order:
        if cost[i] <= 0:
            y[i] = width
            continue
        full = cost[i] * width
        if remaining >= full:
            y[i] = width
            remaining -= full
        else:
            y[i] = max(remaining, 0.0) / cost[i]
            remaining = 0.0
            break
    return y


def inner_sup_box_linear(p: DensityVector, q_star: DensityVector, bound: float, k1: float, k2: float) -> BoxLinearMax:
    """Maximize E_P[Y] over 0 <= Y <= k2 - k1 with E_{Q*}[Y] <= bound (exact greedy)."""
    if p.space != q_star.space:
        raise InvalidInputError("densities live on different spaces")
    mu = p.space.mu
    width = float(k2 - k1)
    y = _greedy_fill(mu * p.values, mu * q_star.values, float(bound), width)
    return BoxLinearMax(float((mu * p.values) @ y), TestFunction.from_array(p.space, y, 0.0, width))


def _entropic_support(pi: np.ndarray, w: np.ndarray, level: float, k1: float, k2: float) -> np.ndarray:
    """argmax pi.x over the box with ln sum w e^x <= level, by KKT water-filling.

    Optimal atoms satisfy x_i = clip(ln(pi_i / w_i) + c, k1, k2) for a scalar
    c found by bisection; atoms outside supp(w) are free and go to k2, atoms
    with pi_i = 0 stay at k1.
    """
    free = w <= 0
    active = (~free) & (pi > 0)
    x = np.full(pi.size, k1)
    x[free] = k2
    target = np.exp(level)

    def spend(c):
        xs = x.copy()
        xs[active] = np.clip(np.log(pi[active] / w[active]) + c, k1, k2)
        return xs, float(w @ np.exp(xs))

    top, cost_top = spend(np.inf)
    if cost_top <= target:
        return top
    logs = np.log(pi[active] / w[active])
    lo_c = k1 - logs.max() - 1.0
    hi_c = k2 - logs.min() + 1.0
    for _ in range(200):
        mid = 0.5 * (lo_c + hi_c)
        if mid == lo_c or mid == hi_c:
            break
        if spend(mid)[1] <= target:
            lo_c = mid
        else:
            hi_c = mid
    return spend(lo_c)[0]


def _support_arrays(spec: ProblemSpec, level: float, q: np.ndarray) -> SupportValue:
    mu = spec.space.mu
    pi = mu * q
    rho1 = spec.rho1
    k1, k2 = float(spec.k1), float(spec.k2)
    if isinstance(rho1, Linear):
        y = _greedy_fill(pi, rho1.p.weights, level - k1, k2 - k1)
        x = k1 + y
    elif isinstance(rho1, Entropic):
        x = _entropic_support(pi, rho1.q0.weights, level, k1, k2)
    elif rho1.polyhedral:
        rows, costs = rho1.pieces()
        res = linprog(
            -pi,
            A_ub=rows * mu,
            b_ub=level + costs,
            bounds=[(k1, k2)] * spec.n,
            method="highs",
            options=_HIGHS,
        )
        if res.status != 0:
            raise InfeasibleProblemError("level set of rho1 is empty")
        x = np.clip(res.x, k1, k2)
    else:  # generic variant: certified convex program
        res = _certified(
            solve_convex(Term(Linear(DensityVector(spec.space, q)), -1.0, 0.0), [(Term(rho1), level)], spec.lo(), spec.hi()),
            "support function",
        )
        x = res.x
    return SupportValue(float(pi @ x), x)


def support_function(
    spec: ProblemSpec, alpha_star: float, q: DensityVector, config: SolverConfig | None = None
) -> SupportValue:
    """sup of E_Q[X] over k1 <= X <= k2 with rho1(X) <= alpha*."""
    config = config or SolverConfig()
    if q.space != spec.space:
        raise InvalidInputError("density lives on a different space")
    _check_level(spec, alpha_star, config)
    return _support_arrays(spec, alpha_star, q.values)


# -- least-favorable searches -----------------------------------------------------


class _Domain:
    """Finite-penalty densities of a convex expectation, parametrized by simplex weights.

    Entropic: weights are atom probabilities on supp(Q0), penalty is KL.
    Polyhedral: weights mix the generators, penalty is the mixed cost (an
    upper bound on rho* whose minimum over representations is exact).
    """

    def __init__(self, rho: ConvexExpectation):
        self.rho = rho
        mu = rho.space.mu
        if isinstance(rho, Entropic):
            self.kind = "entropic"
            self.ref = rho.q0.weights
            self.support = self.ref > 0
            self.dim = int(self.support.sum())
        elif rho.polyhedral:
            self.kind = "polyhedral"
            self.rows, self.costs = rho.pieces()
            self.dim = self.rows.shape[0]
        else:
            raise InvalidInputError(f"no least-favorable domain for {rho.kind}")
        self.mu = mu

    def density(self, w: np.ndarray) -> np.ndarray:
        if self.kind == "entropic":
            pi = np.zeros(self.mu.size)
            pi[self.support] = w
            return pi / self.mu
        return w @ self.rows

    def weights_of(self, q: np.ndarray) -> np.ndarray:
        if self.kind == "entropic":
            return (self.mu * q)[self.support]
        _, lam = hull_penalty(self.rows, self.costs, q)
        if lam is None:
            raise ContractViolationError("density is outside the generator hull")
        return lam / lam.sum()

    def penalty(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        if self.kind == "entropic":
            ref = self.ref[self.support]
            safe = np.maximum(w, 1e-300)
            val = float(np.sum(np.where(w > 0, w * np.log(safe / ref), 0.0)))
            return val, np.log(safe / ref) + 1.0
        return float(self.costs @ w), self.costs.copy()

    def linear_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient in w of E_{Q(w)}[x]."""
        if self.kind == "entropic":
            return x[self.support]
        return (self.rows * self.mu) @ x


def _kelley_simplex(oracle, w0: np.ndarray, lower_floor: float, tol: float, max_iter: int):
    """Minimize a convex function over the simplex by cutting planes.

    ``oracle(w) -> (value, subgradient)``.  Returns (best_w, best_value,
    lower_bound, iterations).  ``lower_floor`` is an externally certified
    lower bound (weak duality) that can close the gap early.
    """
    d = w0.size
    best_w = w0
    best_val, g0 = oracle(w0)
    cuts = [(best_val, g0, w0)]
    lower = lower_floor
    if best_val - lower <= tol or d == 1:
        return best_w, best_val, lower, 0
    for it in range(1, max_iter + 1):
        A = np.array([np.concatenate([g, [-1.0]]) for _, g, _ in cuts])
        b = np.array([g @ w - v for v, g, w in cuts])
        c = np.zeros(d + 1)
        c[-1] = 1.0
        res = linprog(
            c,
            A_ub=A,
            b_ub=b,
            A_eq=np.concatenate([np.ones(d), [0.0]])[None, :],
            b_eq=[1.0],
            bounds=[(0, 1)] * d + [(None, None)],
            method="highs",
            options=_HIGHS,
        )
        if res.status != 0:
            break
        lower = max(lower, float(res.fun))
        w = np.clip(res.x[:d], 0.0, 1.0)
        w = w / w.sum()
        val, g = oracle(w)
        if val < best_val:
            best_w, best_val = w, val
        cuts.append((val, g, w))
        if best_val - lower <= tol:
            return best_w, best_val, lower, it
    return best_w, best_val, lower, max_iter


def _candidate_from_dual(rho: ConvexExpectation, x_point: np.ndarray, weights) -> np.ndarray:
    """A maximizing density of rho at x_point, preferring LP dual weights on the pieces."""
    if isinstance(rho, Linear):
        return rho.p.values
    if rho.polyhedral and weights is not None and weights.sum() > 0:
        rows, _ = rho.pieces()
        lam = np.clip(weights, 0.0, None)
        return (lam / lam.sum()) @ rows
    return rho.argmax_density(x_point)


def _as_density(space: FiniteProbSpace, q: np.ndarray) -> DensityVector:
    q = np.clip(q, 0.0, None)
    return DensityVector(space, q / float(space.mu @ q))


def find_q_star(
    spec: ProblemSpec, alpha_star: float, config: SolverConfig | None = None, beta: float | None = None
) -> QStar:
    """Least-favorable Q* minimizing support(Q) + rho2*(Q), with gamma = support(Q*).

    The compressed problem (level alpha*) is solved first; its optimum X^
    gives the warm start Q in the subdifferential of rho2 at k2 - X^ and the
    weak-duality floor g(Q) >= k2 - rho2(k2 - X^).  Cutting planes over the
    finite-penalty domain take over when the warm start does not close the
    gap.
    """
    config = config or SolverConfig()
    _check_level(spec, alpha_star, config)
    space, k2 = spec.space, float(spec.k2)
    objective = Term(spec.rho2, -1.0, k2)
    comp = _certified(
        _solve(objective, [(Term(spec.rho1), alpha_star)], spec.lo(), spec.hi(), spec.lo(), config),
        "compressed primal",
    )
    beta_c = comp.value
    target = beta_c if beta is None else beta
    floor = k2 - beta_c

    q0 = _candidate_from_dual(spec.rho2, k2 - comp.x, comp.objective_weights)
    q0 = _as_density(space, q0).values

    def g_of(q):
        sup = _support_arrays(spec, alpha_star, q)
        return sup, spec.rho2.penalty_array(q)

    sup, pen = g_of(q0)
    best_q, best_val = q0, sup.value + pen
    method, iters = "warm-start", 0
    if best_val - floor > config.tol_opt and not isinstance(spec.rho2, Linear):
        domain = _Domain(spec.rho2)

        def oracle(w):
            q = domain.density(w)
            s = _support_arrays(spec, alpha_star, q)
            pv, pg = domain.penalty(w)
            return s.value + pv, domain.linear_grad(s.maximizer) + pg

        w0 = domain.weights_of(q0)
        w, val, lower, iters = _kelley_simplex(oracle, w0, floor, config.tol_opt, config.max_outer_iter)
        q = _as_density(space, domain.density(w)).values
        sup_q, pen_q = g_of(q)
        if sup_q.value + pen_q < best_val:
            best_q, best_val, sup, pen = q, sup_q.value + pen_q, sup_q, pen_q
        floor = max(floor, lower)
        method = "cutting-plane"

    q_star = DensityVector(space, best_q)
    gap = abs(k2 - best_val - target)
    if gap > 10 * config.tol_opt:
        raise SaddleFailureError(
            f"Q* search: duality gap {gap:.3e} exceeds {10 * config.tol_opt:.1e}",
            lower_bound=floor,
            upper_bound=best_val,
        )
    x_comp = TestFunction.from_array(space, comp.x, spec.k1, spec.k2)
    return QStar(q_star, sup.value, best_val, pen, x_comp, beta_c, floor, iters, method)


def find_p_star(
    spec: ProblemSpec,
    q_star: DensityVector,
    gamma: float,
    config: SolverConfig | None = None,
    x_star: TestFunction | None = None,
) -> PStar:
    """Least-favorable P* minimizing h(P) = sup_{Y in budget box} E_P[Y] + rho1*(P).

    The inner sup runs over 0 <= Y <= k2 - k1 with E_{Q*}[Y] <= k2 - gamma.
    Its dual problem, min rho1(X) over {k1 <= X <= k2, E_{Q*}[X] >= gamma},
    supplies the warm start and the floor h >= k2 - min rho1.
    """
    config = config or SolverConfig()
    space, k1, k2 = spec.space, float(spec.k1), float(spec.k2)
    budget_term = Term(Linear(q_star), -1.0, 0.0)
    dual = _certified(
        _solve(Term(spec.rho1), [(budget_term, -gamma)], spec.lo(), spec.hi(), spec.hi(), config),
        "P* dual program",
    )
    floor = k2 - dual.value
    bound = k2 - gamma
    mu = space.mu

    def h_of(p):
        y = _greedy_fill(mu * p, q_star.weights, bound, k2 - k1)
        return float((mu * p) @ y), y, spec.rho1.penalty_array(p)

    p0 = _as_density(space, _candidate_from_dual(spec.rho1, dual.x, dual.objective_weights)).values
    inner, _, pen = h_of(p0)
    best_p, best_val = p0, inner + pen
    method, iters = "warm-start", 0
    if best_val - floor > config.tol_opt and not isinstance(spec.rho1, Linear):
        domain = _Domain(spec.rho1)

        def oracle(w):
            p = domain.density(w)
            val, y, _ = h_of(p)
            pv, pg = domain.penalty(w)
            return val + pv, domain.linear_grad(y) + pg

        w, val, lower, iters = _kelley_simplex(oracle, domain.weights_of(p0), floor, config.tol_opt, config.max_outer_iter)
        p = _as_density(space, domain.density(w)).values
        inner_p, _, pen_p = h_of(p)
        if inner_p + pen_p < best_val:
            best_p, best_val, pen = p, inner_p + pen_p, pen_p
        floor = max(floor, lower)
        method = "cutting-plane"

    p_star = DensityVector(space, best_p)
    x_ref = dual.x if x_star is None else x_star.values
    attained = float((mu * best_p) @ (k2 - x_ref)) + pen
    gap = max(abs(best_val - floor), abs(best_val - attained))
    if gap > 10 * config.tol_opt:
        raise SaddleFailureError(
            f"P* search: gap {gap:.3e} exceeds {10 * config.tol_opt:.1e}",
            lower_bound=floor,
            upper_bound=best_val,
        )
    x_dual = TestFunction.from_array(space, dual.x, k1, k2)
    return PStar(p_star, best_val, pen, dual.value, floor, x_dual, iters, method)


# -- threshold test ---------------------------------------------------------------


def _candidate_ratios(g: np.ndarray, h: np.ndarray, tau_eq: float) -> list:
    ratios = sorted({0.0} | {float(gi / hi) for gi, hi in zip(g, h) if hi > 0}, reverse=True)
    merged = []
    for r in ratios:
        if merged and abs(merged[-1] - r) <= tau_eq * max(1.0, abs(r)):
            continue
        merged.append(r)
    return merged


def construct_threshold_test(
    p_star: DensityVector,
    q_star: DensityVector,
    gamma: float,
    k1: float,
    k2: float,
    config: SolverConfig | None = None,
) -> Threshold:
    """Randomized likelihood-ratio test between P* and Q* meeting E_{Q*}[X] = gamma.

    Scans the candidate thresholds {0} u {g_i / h_i} from the top and keeps
    the largest z whose pure test brackets gamma; one constant B on the tie
    event {z h = g} closes the budget.
    """
    config = config or SolverConfig()
    if p_star.space != q_star.space:
        raise InvalidInputError("densities live on different spaces")
    space = p_star.space
    g, h = p_star.values, q_star.values
    qmass = space.mu * h
    total = float(qmass.sum())
    tol = config.tol_opt
    if gamma < k1 * total - tol or gamma > k2 * total + tol:
        raise ContractViolationError(f"budget {gamma!r} is outside the achievable range [{k1}, {k2}]")
    for z in _candidate_ratios(g, h, config.tau_eq):
        part = partition_arrays(g, h, z, config.tau_eq)
        greater = float(qmass[list(part.greater)].sum())
        tie = float(qmass[list(part.equal)].sum())
        lower = k2 * greater + k1 * (total - greater)
        upper = lower + (k2 - k1) * tie
        if lower - tol <= gamma <= upper + tol:
            break
    else:
        raise ContractViolationError("no threshold brackets the budget")
    if tie > 0:
        b = k1 + (gamma - lower) / tie
    else:
        b = k1
    b = float(np.clip(b, k1, k2))
    snap = config.tau_eq * (k2 - k1)
    if b - k1 <= snap:
        b = k1
    elif k2 - b <= snap:
        b = k2
    x = np.full(space.n, k1)
    x[list(part.greater)] = k2
    x[list(part.equal)] = b
    boundary = {space.labels[i]: b for i in part.equal}
    return Threshold(float(z), boundary, TestFunction.from_array(space, x, k1, k2), part)


def verify_threshold_form(
    x_star: TestFunction,
    p_star: DensityVector,
    q_star: DensityVector,
    z: float,
    config: SolverConfig | None = None,
) -> ThresholdReport:
    """Check X = k2 on {z H > G} and X = k1 on {z H < G}, atom by atom."""
    config = config or SolverConfig()
    part = partition_arrays(p_star.values, q_star.values, float(z), config.tau_eq)
    x = x_star.values
    width = x_star.k2 - x_star.k1
    residuals = [0.0] * x.size
    for i in part.greater:
        residuals[i] = float(abs(x[i] - x_star.k2))
    for i in part.less:
        residuals[i] = float(abs(x[i] - x_star.k1))
    worst = max(residuals) if residuals else 0.0
    return ThresholdReport(worst <= config.tau_eq * width, part, residuals, worst)


# -- full pipeline ------------------------------------------------------------------


def _check_candidate(spec, x, beta, alpha_star, q_star, gamma, config):
    loss = spec.rho2.value(spec.k2 - x)
    level = spec.rho1.value(x)
    budget = float(q_star.weights @ x)
    problems = []
    if loss > beta + config.tol_opt:
        problems.append(f"rho2(k2 - X) = {loss!r} exceeds beta + tol ({beta!r})")
    if level > alpha_star + config.tol_feas:
        problems.append(f"rho1(X) = {level!r} exceeds alpha* + tol_feas ({alpha_star!r})")
    if abs(budget - gamma) > config.tol_opt:
        problems.append(f"E_Q*[X] = {budget!r} differs from gamma = {gamma!r}")
    return problems


def _bands(config: SolverConfig):
    """Equality bands to try: tau_eq, then decades up to sqrt(tol_opt)."""
    cap = max(config.tau_eq, float(np.sqrt(config.tol_opt)))
    band = config.tau_eq
    while band <= cap * (1 + 1e-12):
        yield band
        band *= 10.0


def _threshold_test(spec, beta, alpha_star, qs, ps, config, diagnostics):
    """Threshold test meeting every solution invariant.

    Likelihood ratios that tie in exact arithmetic only agree to the
    accuracy of the computed P*, Q*, so the tie band is widened by decades
    until the test checks out.  On each band the single-constant B is tried
    first, then the compressed optimum's own values on the tie event.
    """
    space = spec.space
    failures = {}
    for band in _bands(config):
        cfg = replace(config, tau_eq=band)
        try:
            thr = construct_threshold_test(ps.p_star, qs.q_star, qs.gamma, spec.k1, spec.k2, cfg)
        except ContractViolationError as exc:
            failures[band] = [str(exc)]
            continue
        eq = list(thr.partition.equal)
        varying = thr.x_star.values.copy()
        varying[eq] = qs.x_compressed.values[eq]
        candidates = (
            ("threshold", thr.x_star.values),
            ("threshold-varying-B", varying),
            ("compressed-primal", qs.x_compressed.values),
        )
        for source, cand in candidates:
            problems = _check_candidate(spec, cand, beta, alpha_star, qs.q_star, qs.gamma, config)
            test = TestFunction.from_array(space, cand, spec.k1, spec.k2)
            report = verify_threshold_form(test, ps.p_star, qs.q_star, thr.z, cfg)
            if not report.passed:
                problems.append(f"not of threshold form (max residual {report.max_residual!r})")
            if not problems:
                if source == "threshold":
                    boundary = thr.boundary_randomization
                else:
                    boundary = {space.labels[i]: float(cand[i]) for i in eq}
                if failures:
                    diagnostics["threshold_rejected"] = {f"{k:.0e}": v for k, v in failures.items()}
                return thr, test, boundary, source, band, report
            failures.setdefault(band, []).extend(f"{source}: {p}" for p in problems)
    raise InternalConsistencyError(
        "no test satisfies the solution invariants",
        {**diagnostics, "threshold_rejected": {f"{k:.0e}": v for k, v in failures.items()}},
    )


def solve(spec: ProblemSpec, config: SolverConfig | None = None) -> NpSolution:
    """Run all five stages and assemble a checked NpSolution."""
    config = config or SolverConfig()
    diagnostics = {
        "alpha_range": spec.alpha_range(config.tol_feas),
        "standard_range": spec.standard_range(),
    }
    primal = solve_primal(spec, config)
    diagnostics["primal"] = {
        "beta": primal.beta,
        "lower_bound": primal.lower_bound,
        "multiplier": primal.multiplier,
        "iterations": primal.iterations,
    }
    refine = refine_alpha_star(spec, primal.x_star, primal.beta, config)
    diagnostics["alpha_star"] = {"method": refine.method, "multiplier": refine.multiplier}
    qs = find_q_star(spec, refine.alpha_star, config, beta=primal.beta)
    diagnostics["q_star"] = {
        "method": qs.method,
        "iterations": qs.iterations,
        "lower_bound": qs.lower_bound,
        "beta_compressed": qs.beta_compressed,
    }
    ps = find_p_star(spec, qs.q_star, qs.gamma, config)
    diagnostics["p_star"] = {
        "method": ps.method,
        "iterations": ps.iterations,
        "value": ps.value,
        "lower_bound": ps.lower_bound,
        "rho1_min": ps.rho1_min,
    }
    beta = primal.beta
    thr, x_final, boundary, source, band, report = _threshold_test(spec, primal.beta, refine.alpha_star, qs, ps, config, diagnostics)
    diagnostics["threshold"] = {
        "source": source,
        "tau_eq_used": band,
        "partition": {k: [spec.space.labels[i] for i in v] for k, v in thr.partition._asdict().items()},
        "max_residual": report.max_residual,
    }
    duality_gap = abs(spec.k2 - qs.saddle_value - beta)
    return NpSolution(
        x_star=x_final,
        beta=beta,
        alpha_star=refine.alpha_star,
        gamma=qs.gamma,
        q_star=qs.q_star,
        p_star=ps.p_star,
        z=thr.z,
        boundary_randomization=boundary,
        duality_gap=duality_gap,
        saddle_value=qs.saddle_value,
        rho2_penalty=qs.penalty,
        rho1_penalty=ps.penalty,
        diagnostics=diagnostics,
    )
