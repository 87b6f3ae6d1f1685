"""Brute-force ground truth for tiny instances.

Nothing here calls the solver's optimization code: the primal is a plain
grid search, support functions come from polytope vertices (polyhedral
rho1) or a vectorized bisection (entropic rho1), and the least-favorable
searches scan simplex grids of the finite-penalty domains.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rel_entr

from ._grid import box_grid_chunks, polytope_vertices, simplex_grid, simplex_grid_size
from .errors import GridBudgetError, InvalidInputError, NpConvexError
from .risk import ConvexExpectation, Entropic, Linear
from .solver import ProblemSpec, SolverConfig, TestFunction, solve, verify_threshold_form
from .space import DensityVector

DEFAULT_BUDGET = 10**8
MAX_PRIMAL_ATOMS = 4
MAX_SIMPLEX_ATOMS = 3


def default_budget() -> int:
    raw = os.environ.get("NPCONVEX_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        value = int(float(raw))
    except ValueError:
        raise InvalidInputError(f"NPCONVEX_BUDGET={raw!r} is not a number") from None
    if value < 1:
        raise InvalidInputError("NPCONVEX_BUDGET must be positive")
    return value


@dataclass(frozen=True)
class GridSpec:
    test_resolution: int = 101
    simplex_resolution: int = 200
    budget: int | None = None

    def __post_init__(self):
        if self.test_resolution < 2 or self.simplex_resolution < 2:
            raise InvalidInputError("grid resolutions must be at least 2")

    @property
    def limit(self) -> int:
        return default_budget() if self.budget is None else self.budget


class OracleResult(dict):
    """Plain mapping so reports serialize directly; attribute access for convenience."""

    __getattr__ = dict.__getitem__


def _refuse(what: str, required: int, budget: int):
    raise GridBudgetError(f"{what} needs {required} evaluations, budget is {budget}", required, budget)


# -- primal -------------------------------------------------------------------------


def oracle_primal(spec: ProblemSpec, grid: GridSpec | None = None) -> OracleResult:
    """Exhaustive search over the m**n grid of tests.

    Rounding an optimal test down to the grid keeps it feasible (rho1 is
    monotone) and costs at most L * (k2 - k1) / (m - 1) in the objective.
    """
    grid = grid or GridSpec()
    n, m = spec.n, grid.test_resolution
    required = m**n
    if n > MAX_PRIMAL_ATOMS:
        _refuse(f"primal oracle on {n} atoms (limit {MAX_PRIMAL_ATOMS})", required, grid.limit)
    if required > grid.limit:
        _refuse("primal oracle", required, grid.limit)
    levels = np.linspace(spec.k1, spec.k2, m)
    best_val, best_x = np.inf, None
    for _, xs in box_grid_chunks(n, levels):
        ok = spec.rho1.value_batch(xs) <= spec.alpha + 1e-12
        if not ok.any():
            continue
        vals = np.where(ok, spec.rho2.value_batch(spec.k2 - xs), np.inf)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_x = float(vals[i]), xs[i].copy()
    if best_x is None:
        raise NpConvexError("no grid test meets the level")
    lip = spec.rho2.lipschitz_bound()
    bound = lip * (spec.k2 - spec.k1) / (m - 1)
    return OracleResult(
        value=best_val,
        argmin=TestFunction.from_array(spec.space, best_x, spec.k1, spec.k2),
        error_bound=bound,
        lipschitz=lip,
        evaluations=required,
    )


# -- support functions without the solver ---------------------------------------------


def _box_polytope(n: int, lo: float, hi: float):
    eye = np.eye(n)
    return np.vstack([eye, -eye]), np.concatenate([np.full(n, hi), np.full(n, -lo)])


def _polyhedral_support(rho: ConvexExpectation, level: float, lo: float, hi: float):
    """Vertices of {lo <= x <= hi, rho(x) <= level} for polyhedral rho."""
    rows, costs = rho.pieces()
    A_box, b_box = _box_polytope(rho.space.n, lo, hi)
    A = np.vstack([A_box, rows * rho.space.mu])
    b = np.concatenate([b_box, level + costs])
    verts = polytope_vertices(A, b)
    if verts.size == 0:
        raise NpConvexError("level set is empty")
    return verts


def _entropic_support_batch(pis: np.ndarray, w: np.ndarray, level: float, lo: float, hi: float) -> np.ndarray:
    """Row-wise sup of pi.x over the box with ln sum w e^x <= level."""
    N, n = pis.shape
    target = np.exp(level)
    free = w <= 0
    active = (pis > 0) & ~free[None, :]
    with np.errstate(divide="ignore"):
        logs = np.where(active, np.log(np.where(active, pis, 1.0) / np.where(free, 1.0, w)[None, :]), 0.0)

    def fill(c):
        x = np.where(active, np.clip(logs + c[:, None], lo, hi), lo)
        return np.where(free[None, :], hi, x)

    def cost(x):
        return (np.exp(x) * w[None, :]).sum(axis=1)

    top = fill(np.full(N, np.inf))
    done = cost(top) <= target
    c_lo = np.full(N, lo - logs.max(initial=0.0) - 1.0 - abs(lo) - abs(hi))
    c_hi = np.full(N, hi - logs.min(initial=0.0) + 1.0 + abs(lo) + abs(hi))
    for _ in range(120):
        mid = 0.5 * (c_lo + c_hi)
        under = cost(fill(mid)) <= target
        c_lo = np.where(under, mid, c_lo)
        c_hi = np.where(under, c_hi, mid)
    x = np.where(done[:, None], top, fill(c_lo))
    return (pis * x).sum(axis=1)


def _support_batch(spec: ProblemSpec, level: float, qs: np.ndarray) -> np.ndarray:
    pis = qs * spec.space.mu[None, :]
    if isinstance(spec.rho1, Entropic):
        return _entropic_support_batch(pis, spec.rho1.q0.weights, level, spec.k1, spec.k2)
    verts = _polyhedral_support(spec.rho1, level, spec.k1, spec.k2)
    return (pis @ verts.T).max(axis=1)


# -- finite-penalty domains ----------------------------------------------------------


def _domain_grid(rho: ConvexExpectation, s: int, limit: int, what: str):
    """Densities on a simplex grid of the finite-penalty domain, with their penalties.

    Returns (densities, penalties).
    """
    space = rho.space
    if isinstance(rho, Linear):
        return rho.p.values[None, :], np.zeros(1)
    if isinstance(rho, Entropic):
        ref = rho.q0.weights
        support = np.flatnonzero(ref > 0)
        required = simplex_grid_size(support.size, s)
        if required > limit:
            _refuse(what, required, limit)
        weights = np.zeros((required, space.n))
        weights[:, support] = simplex_grid(support.size, s)
        pens = rel_entr(weights, ref[None, :]).sum(axis=1)
        return weights / space.mu[None, :], pens
    if rho.polyhedral:
        rows, costs = rho.pieces()
        required = simplex_grid_size(rows.shape[0], s)
        if required > limit:
            _refuse(what, required, limit)
        lam = simplex_grid(rows.shape[0], s)
        return lam @ rows, lam @ costs
    raise InvalidInputError(f"no oracle domain for {rho.kind}")


def _value_bound(rho, density, k_scale: float, s: int) -> float:
    """Reported grid error: (Lipschitz of the objective near the argmin) * dim / s."""
    n = rho.space.n
    if isinstance(rho, Linear):
        return 0.0
    if isinstance(rho, Entropic):
        w = rho.space.mu * density
        ref = rho.q0.weights
        pos = w > 0
        slope = np.max(np.abs(np.log(np.maximum(w[pos], 1.0 / s) / ref[pos]) + 1.0))
        return (k_scale + slope) * n / s
    rows, costs = rho.pieces()
    return (k_scale * float(np.abs(rows).max()) + float(costs.max())) * rows.shape[0] / s


def oracle_q_star(spec: ProblemSpec, alpha_star: float, grid: GridSpec | None = None) -> OracleResult:
    """Grid minimum of support(Q) + rho2*(Q) over the finite-penalty domain of rho2."""
    grid = grid or GridSpec()
    if spec.n > MAX_SIMPLEX_ATOMS:
        _refuse(f"Q* oracle on {spec.n} atoms (limit {MAX_SIMPLEX_ATOMS})", simplex_grid_size(spec.n, grid.simplex_resolution), grid.limit)
    qs, pens = _domain_grid(spec.rho2, grid.simplex_resolution, grid.limit, "Q* oracle")
    vals = _support_batch(spec, alpha_star, qs) + pens
    i = int(np.argmin(vals))
    k_scale = max(abs(spec.k1), abs(spec.k2))
    q = qs[i]
    return OracleResult(
        value=float(vals[i]),
        argmin=DensityVector(spec.space, q / float(spec.space.mu @ q)),
        error_bound=_value_bound(spec.rho2, q, k_scale, grid.simplex_resolution),
        evaluations=len(vals),
    )


def oracle_p_star(spec: ProblemSpec, q_star: DensityVector, gamma: float, grid: GridSpec | None = None) -> OracleResult:
    """Grid minimum of sup_Y E_P[Y] + rho1*(P), Y in the Q*-budget box, over rho1's domain."""
    grid = grid or GridSpec()
    if spec.n > MAX_SIMPLEX_ATOMS:
        _refuse(f"P* oracle on {spec.n} atoms (limit {MAX_SIMPLEX_ATOMS})", simplex_grid_size(spec.n, grid.simplex_resolution), grid.limit)
    ps, pens = _domain_grid(spec.rho1, grid.simplex_resolution, grid.limit, "P* oracle")
    n = spec.n
    A_box, b_box = _box_polytope(n, 0.0, spec.k2 - spec.k1)
    A = np.vstack([A_box, q_star.weights[None, :]])
    b = np.concatenate([b_box, [max(spec.k2 - gamma, 0.0)]])
    verts = polytope_vertices(A, b)
    vals = ((ps * spec.space.mu[None, :]) @ verts.T).max(axis=1) + pens
    i = int(np.argmin(vals))
    p = ps[i]
    return OracleResult(
        value=float(vals[i]),
        argmin=DensityVector(spec.space, p / float(spec.space.mu @ p)),
        error_bound=_value_bound(spec.rho1, p, spec.k2 - spec.k1, grid.simplex_resolution),
        evaluations=len(vals),
    )


# -- cross check ------------------------------------------------------------------------


@dataclass
class CrossCheckReport:
    passed: bool
    checks: list = field(default_factory=list)
    error: str | None = None

    def to_dict(self):
        return {"passed": self.passed, "checks": self.checks, "error": self.error}


def _location_tolerance(gap: float, tol: float) -> float:
    # KL is 1-strongly convex in the l1 norm (Pinsker), so g(pi) >= g* + |pi - pi*|^2 / 2
    return float(np.sqrt(2.0 * max(0.0, gap) + 2.0 * tol))


def cross_check(spec: ProblemSpec, config: SolverConfig | None = None, grid: GridSpec | None = None) -> CrossCheckReport:
    """Solve, run the oracles, and compare value by value.

    Argmin locations are compared only where the penalty is strictly convex
    (entropic), using the strong-convexity tolerance above.
    """
    config = config or SolverConfig()
    grid = grid or GridSpec()
    checks = []

    def record(name, ok, solver_value, oracle_value, tolerance):
        checks.append(
            {
                "name": name,
                "passed": bool(ok),
                "solver": solver_value,
                "oracle": oracle_value,
                "tolerance": tolerance,
            }
        )

    # size limits are enforced before the (possibly expensive) solve
    if spec.n > MAX_PRIMAL_ATOMS:
        _refuse(f"oracle on {spec.n} atoms (limit {MAX_PRIMAL_ATOMS})", grid.test_resolution**spec.n, grid.limit)
    try:
        sol = solve(spec, config)
    except NpConvexError as exc:
        return CrossCheckReport(False, checks, f"{type(exc).__name__}: {exc}")

    primal = oracle_primal(spec, grid)
    tol = primal.error_bound + config.tol_opt
    record("beta", abs(sol.beta - primal.value) <= tol, sol.beta, primal.value, tol)
    record("beta_lower", primal.value >= sol.beta - config.tol_opt, sol.beta, primal.value, config.tol_opt)

    if spec.n <= MAX_SIMPLEX_ATOMS:
        oq = oracle_q_star(spec, sol.alpha_star, grid)
        tol = oq.error_bound + config.tol_opt
        record("q_value", abs(sol.saddle_value - oq.value) <= tol, sol.saddle_value, oq.value, tol)
        if isinstance(spec.rho2, Entropic):
            dist = float(np.abs(oq.argmin.weights - sol.q_star.weights).sum())
            loc = _location_tolerance(oq.value - sol.saddle_value, config.tol_opt) + 1.0 / grid.simplex_resolution
            record("q_location_l1", dist <= loc, sol.q_star.weights.tolist(), oq.argmin.weights.tolist(), loc)
        elif isinstance(spec.rho2, Linear):
            record("q_location", np.allclose(sol.q_star.values, oq.argmin.values, atol=1e-9),
                   sol.q_star.values.tolist(), oq.argmin.values.tolist(), 1e-9)

        op = oracle_p_star(spec, sol.q_star, sol.gamma, grid)
        h_solver = float(sol.p_star.weights @ (spec.k2 - sol.x_star.values)) + sol.rho1_penalty
        tol = op.error_bound + 10 * config.tol_opt
        record("p_value", abs(h_solver - op.value) <= tol, h_solver, op.value, tol)
        if isinstance(spec.rho1, Entropic):
            dist = float(np.abs(op.argmin.weights - sol.p_star.weights).sum())
            loc = _location_tolerance(op.value - h_solver, config.tol_opt) + 1.0 / grid.simplex_resolution
            record("p_location_l1", dist <= loc, sol.p_star.weights.tolist(), op.argmin.weights.tolist(), loc)

    form = verify_threshold_form(sol.x_star, sol.p_star, sol.q_star, sol.z,
                                 SolverConfig(tau_eq=sol.diagnostics["threshold"]["tau_eq_used"]))
    record("threshold_form", form.passed, form.max_residual, 0.0, 0.0)
    return CrossCheckReport(all(c["passed"] for c in checks), checks)
