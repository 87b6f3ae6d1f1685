"""Convex expectations, their penalty functions, and property certification.

A convex expectation is monotone, translation invariant and convex.  On a
finite space each one admits ``rho(X) = max_Q (E_Q[X] - rho*(Q))``; the four
variants here differ in how the maximum and the penalty ``rho*`` are computed.

Internally everything works on plain arrays: ``x`` is a vector of atom
values and densities are taken with respect to the space's ``mu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp, rel_entr

from ._grid import simplex_grid, simplex_grid_size
from .errors import DimensionError, GridBudgetError, IndeterminateError, InvalidInputError
from .space import DensityVector, FiniteProbSpace, RandomVariable

HULL_TOL = 1e-9
_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class ConvexExpectation:
    """Common interface of the four variants.

    Subclasses provide ``value`` (array in, float out), ``argmax_density`` (a
    maximizing density in the dual representation, i.e. a subgradient) and
    ``penalty_array``.  Polyhedral variants also expose ``pieces``.
    """

    kind: str = ""
    space: FiniteProbSpace

    # -- array level -------------------------------------------------------
    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def value_batch(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def argmax_density(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def penalty_array(self, q: np.ndarray) -> float:
        raise NotImplementedError

    @property
    def polyhedral(self) -> bool:
        return False

    def pieces(self) -> tuple[np.ndarray, np.ndarray]:
        """Generator densities (rows) and offsets with rho(X) = max_j (E_{Q_j}[X] - c_j)."""
        raise TypeError(f"{self.kind} expectation is not polyhedral")

    def lipschitz_bound(self) -> float:
        """Largest reference or generator density value."""
        raise NotImplementedError

    # -- typed surface -----------------------------------------------------
    def evaluate(self, x: RandomVariable) -> float:
        _check_space(self.space, x.space)
        return self.value(x.values)

    def penalty(self, q: DensityVector) -> float:
        _check_space(self.space, q.space)
        return self.penalty_array(q.values)

    def rho0(self) -> float:
        return self.value(np.zeros(self.space.n))


def _check_space(a: FiniteProbSpace, b: FiniteProbSpace) -> None:
    if a is not b and a != b:
        raise DimensionError("risk measure and argument live on different spaces")


def _densities(space: FiniteProbSpace, items: Sequence[DensityVector], what: str) -> np.ndarray:
    if len(items) == 0:
        raise InvalidInputError(f"{what} must be nonempty")
    for d in items:
        if not isinstance(d, DensityVector):
            raise InvalidInputError(f"{what} must hold DensityVector entries")
        _check_space(space, d.space)
    rows = np.array([d.values for d in items])
    rows.setflags(write=False)
    return rows


@dataclass(frozen=True, eq=False)
class Linear(ConvexExpectation):
    """rho(X) = E_P[X]."""

    p: DensityVector
    kind = "linear"

    @property
    def space(self) -> FiniteProbSpace:
        return self.p.space

    def value(self, x):
        return float(self.p.weights @ x)

    def value_batch(self, xs):
        return xs @ self.p.weights

    def argmax_density(self, x):
        return self.p.values

    def penalty_array(self, q, tau_eq: float = 1e-9):
        p = self.p.values
        close = np.abs(q - p) <= tau_eq * np.maximum(1.0, np.abs(p))
        return 0.0 if bool(np.all(close)) else np.inf

    @property
    def polyhedral(self):
        return True

    def pieces(self):
        return self.p.values[None, :], np.zeros(1)

    def lipschitz_bound(self):
        return float(self.p.values.max())


@dataclass(frozen=True, eq=False)
class Entropic(ConvexExpectation):
    """rho(X) = ln E_{Q0}[exp X]; its penalty is the relative entropy to Q0."""

    q0: DensityVector
    kind = "entropic"

    @property
    def space(self) -> FiniteProbSpace:
        return self.q0.space

    def value(self, x):
        return float(logsumexp(x, b=self.q0.weights))

    def value_batch(self, xs):
        return logsumexp(xs, b=self.q0.weights[None, :], axis=1)

    def argmax_density(self, x):
        w = self.q0.weights
        support = w > 0
        shift = np.max(x[support])
        tilted = np.where(support, w * np.exp(np.where(support, x - shift, 0.0)), 0.0)
        return tilted / tilted.sum() / self.space.mu

    def penalty_array(self, q):
        mu = self.space.mu
        return float(np.sum(rel_entr(mu * q, self.q0.weights)))

    def lipschitz_bound(self):
        return float(self.q0.values.max())


@dataclass(frozen=True, eq=False)
class WorstCase(ConvexExpectation):
    """rho(X) = max over a finite family of E_P[X]."""

    family: tuple
    kind = "worst_case"
    _rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "family", tuple(self.family))
        object.__setattr__(self, "_rows", _densities(self.space, self.family, "family"))

    @property
    def space(self) -> FiniteProbSpace:
        return self.family[0].space if self.family else None

    def value(self, x):
        return float(np.max(self._rows @ (self.space.mu * x)))

    def value_batch(self, xs):
        return np.max((xs * self.space.mu) @ self._rows.T, axis=1)

    def argmax_density(self, x):
        return self._rows[int(np.argmax(self._rows @ (self.space.mu * x)))]

    def penalty_array(self, q):
        value, _ = hull_penalty(self._rows, np.zeros(len(self._rows)), q)
        return 0.0 if np.isfinite(value) else np.inf

    @property
    def polyhedral(self):
        return True

    def pieces(self):
        return self._rows, np.zeros(len(self._rows))

    def lipschitz_bound(self):
        return float(self._rows.max())


@dataclass(frozen=True, eq=False)
class FinitelyGenerated(ConvexExpectation):
    """rho(X) = max_j (E_{Q_j}[X] - c_j) with c_j >= 0.

    The penalty is the least convex function consistent with the generators:
    ``min { sum l_j c_j : l in simplex, sum l_j Q_j = Q }``.
    """

    generators: tuple
    kind = "finitely_generated"
    _rows: np.ndarray = field(init=False, repr=False)
    _costs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple((d, float(c)) for d, c in self.generators)
        if not gens:
            raise InvalidInputError("generators must be nonempty")
        costs = np.array([c for _, c in gens])
        if not np.all(np.isfinite(costs)) or np.any(costs < 0):
            raise InvalidInputError("generator penalties must be finite and nonnegative")
        costs.setflags(write=False)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "_rows", _densities(gens[0][0].space, [d for d, _ in gens], "generators"))
        object.__setattr__(self, "_costs", costs)

    @property
    def space(self) -> FiniteProbSpace:
        return self.generators[0][0].space

    def value(self, x):
        return float(np.max(self._rows @ (self.space.mu * x) - self._costs))

    def value_batch(self, xs):
        return np.max((xs * self.space.mu) @ self._rows.T - self._costs, axis=1)

    def argmax_density(self, x):
        return self._rows[int(np.argmax(self._rows @ (self.space.mu * x) - self._costs))]

    def penalty_array(self, q):
        value, _ = hull_penalty(self._rows, self._costs, q)
        return value

    @property
    def polyhedral(self):
        return True

    def pieces(self):
        return self._rows, self._costs

    def lipschitz_bound(self):
        return float(self._rows.max())


def hull_penalty(rows: np.ndarray, costs: np.ndarray, q: np.ndarray, tol: float = HULL_TOL):
    """Cheapest convex combination of ``rows`` reproducing density ``q``.

    Returns ``(value, weights)``; ``(inf, None)`` when q is farther than
    ``tol`` (sup norm, density units) from the hull.
    """
    J, n = rows.shape
    if J == 1:
        if np.all(np.abs(rows[0] - q) <= tol * np.maximum(1.0, np.abs(q))):
            return float(costs[0]), np.ones(1)
        return np.inf, None
    # phase 1: smallest sup-norm residual
    c1 = np.zeros(J + 1)
    c1[-1] = 1.0
    A = np.hstack([rows.T, -np.ones((n, 1))])
    B = np.hstack([-rows.T, -np.ones((n, 1))])
    res = linprog(
        c1,
        A_ub=np.vstack([A, B]),
        b_ub=np.concatenate([q, -q]),
        A_eq=np.concatenate([np.ones(J), [0.0]])[None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * (J + 1),
        method="highs",
        options=_HIGHS,
    )
    if res.status != 0 or res.x[-1] > tol * max(1.0, float(np.abs(q).max())):
        return np.inf, None
    slack = max(res.x[-1], 0.0) + 1e-12
    res2 = linprog(
        costs,
        A_ub=np.vstack([rows.T, -rows.T]),
        b_ub=np.concatenate([q + slack, -q + slack]),
        A_eq=np.ones((1, J)),
        b_eq=[1.0],
        bounds=[(0, None)] * J,
        method="highs",
        options=_HIGHS,
    )
    if res2.status != 0:
        lam = res.x[:J]
        return float(costs @ lam), lam
    return float(res2.fun), res2.x


# -- public operations ------------------------------------------------------


def evaluate(rho: ConvexExpectation, x: RandomVariable) -> float:
    return rho.evaluate(x)


def penalty(rho: ConvexExpectation, q: DensityVector) -> float:
    """Closed-form or LP penalty rho*(Q); ``inf`` outside the domain."""
    return rho.penalty(q)


@dataclass(frozen=True)
class PenaltyConfig:
    tol_pen: float = 1e-7
    max_iter: int = 100_000
    divergence_scale: float = 1e6
    start_radius: float = 10.0


def penalty_numeric(rho: ConvexExpectation, q: DensityVector, config: PenaltyConfig | None = None) -> float:
    """rho*(Q) = sup_X (E_Q[X] - rho(X)) by cutting-plane supergradient ascent.

    Starts at X = 0 inside a box of radius R.  Each evaluated point adds the
    cut rho(Y) >= rho(X_k) + <s_k, Y - X_k> (``s_k`` a supergradient of the
    concave objective), so the LP over the cuts gives an upper bound and the
    best evaluated point a lower bound.  The box is widened tenfold whenever
    the LP maximizer sits on its boundary.  Reaching the divergence radius
    while the objective is still climbing is reported as ``inf``.
    The returned finite value is always an attained objective value, hence
    never above the true penalty.
    """
    config = config or PenaltyConfig()
    _check_space(rho.space, q.space)
    mu = rho.space.mu
    n = rho.space.n
    pi = q.weights
    r_div = config.divergence_scale * (1.0 + float(q.values.max()))

    # translation invariance: pin the heaviest atom at zero
    anchor = int(np.argmax(pi))

    def objective(x):
        return float(pi @ x) - rho.value(x)

    x = np.zeros(n)
    best = objective(x)
    cut_points = []
    cut_values = []
    cut_grads = []

    def add_cut(point):
        cut_points.append(point)
        cut_values.append(rho.value(point))
        cut_grads.append(mu * rho.argmax_density(point))

    add_cut(x)
    radius = config.start_radius
    best_at_radius = {}
    for it in range(config.max_iter):
        G = np.array(cut_grads)
        off = np.array(cut_values) - np.einsum("ij,ij->i", G, np.array(cut_points))
        # maximize t  s.t.  t <= pi.x - (off_k + G_k.x)
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A = np.hstack([G - pi, np.ones((G.shape[0], 1))])
        bounds = [(-radius, radius)] * n + [(None, None)]
        bounds[anchor] = (0.0, 0.0)
        res = linprog(c, A_ub=A, b_ub=-off, bounds=bounds, method="highs")
        if res.status != 0:
            raise IndeterminateError("cutting-plane master failed", best)
        upper = -res.fun
        x_new = res.x[:n]
        val = objective(x_new)
        best = max(best, val)
        converged = upper - best <= config.tol_pen
        on_boundary = np.max(np.abs(x_new)) >= radius * (1 - 1e-9)
        if converged and not on_boundary:
            return best
        if on_boundary:
            if converged:
                # the box binds; a value that no longer moves with the radius is the sup
                previous = best_at_radius.get(radius / 10.0)
                best_at_radius[radius] = best
                if previous is not None and best - previous <= config.tol_pen:
                    return best
            if radius >= r_div:
                previous = best_at_radius.get(radius / 10.0, -np.inf)
                if best >= previous + 1.0:
                    return np.inf
                if converged:
                    return best
                raise IndeterminateError("objective flat at divergence radius without converging", best)
            if not converged:
                best_at_radius[radius] = best
            radius = min(radius * 10.0, r_div)
        add_cut(x_new)
    raise IndeterminateError(f"no convergence within {config.max_iter} iterations", best)


# -- certification ----------------------------------------------------------


@dataclass
class PropertyCheck:
    name: str
    passed: bool
    trials: int
    failures: int = 0
    worst_violation: float = 0.0
    counterexample: dict | None = None


@dataclass
class AxiomReport:
    passed: bool
    checks: list

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": [vars(c) for c in self.checks],
        }


def certify_axioms(rho, trials: int = 1000, seed: int = 0, tol: float = 1e-9, scale: float = 5.0) -> AxiomReport:
    """Random-trial check of monotonicity, translation invariance and convexity.

    ``rho`` only needs ``space`` and ``evaluate``; failures are returned as
    report content with the first counterexample found.
    """
    rng = np.random.default_rng(seed)
    space = rho.space
    n = space.n
    checks = {
        "monotonicity": PropertyCheck("monotonicity", True, trials),
        "translation_invariance": PropertyCheck("translation_invariance", True, trials),
        "convexity": PropertyCheck("convexity", True, trials),
    }

    def record(name, violation, example):
        chk = checks[name]
        if violation > tol:
            chk.failures += 1
            chk.passed = False
            if chk.counterexample is None:
                chk.counterexample = example
        chk.worst_violation = max(chk.worst_violation, float(violation))

    for _ in range(trials):
        x = rng.uniform(-scale, scale, n)
        y = x - rng.uniform(0.0, scale, n)
        z = rng.uniform(-scale, scale, n)
        c = float(rng.uniform(-scale, scale))
        lam = float(rng.uniform())
        X, Y, Z = (RandomVariable(space, v) for v in (x, y, z))
        rx, ry, rz = rho.evaluate(X), rho.evaluate(Y), rho.evaluate(Z)
        record("monotonicity", ry - rx, {"X": x.tolist(), "Y": y.tolist(), "rho_X": rx, "rho_Y": ry})
        rxc = rho.evaluate(RandomVariable(space, x + c))
        record(
            "translation_invariance",
            abs(rxc - rx - c),
            {"X": x.tolist(), "c": c, "rho_X": rx, "rho_X_plus_c": rxc},
        )
        mix = rho.evaluate(RandomVariable(space, lam * x + (1 - lam) * z))
        record(
            "convexity",
            mix - (lam * rx + (1 - lam) * rz),
            {"X": x.tolist(), "Y": z.tolist(), "lambda": lam, "rho_mix": mix},
        )
    ordered = [checks[k] for k in ("monotonicity", "translation_invariance", "convexity")]
    return AxiomReport(all(c.passed for c in ordered), ordered)


@dataclass
class RepresentationReport:
    passed: bool
    value: float
    grid_max: float
    deviation: float
    tolerance: float
    maximizer: list
    grid_points: int

    def to_dict(self):
        return dict(vars(self))


def certify_representation(
    rho: ConvexExpectation,
    x: RandomVariable,
    grid_step: float = 1e-3,
    budget: int = 10**8,
) -> RepresentationReport:
    """Check rho(X) = max_Q (E_Q[X] - rho*(Q)) over a simplex grid.

    Polyhedral variants are checked over their generators, where the
    maximum of the dual representation is attained exactly.
    """
    _check_space(rho.space, x.space)
    space = rho.space
    if space.n > 4:
        raise DimensionError("representation grid is limited to spaces with at most 4 atoms")
    xv = x.values
    value = rho.value(xv)
    if rho.polyhedral:
        rows, costs = rho.pieces()
        dens = rows
        pens = np.array([rho.penalty_array(r) for r in rows])
        scores = dens @ (space.mu * xv) - pens
        count = len(rows)
    else:
        resolution = int(round(1.0 / grid_step))
        count = simplex_grid_size(space.n, resolution)
        if count > budget:
            raise GridBudgetError(f"representation grid needs {count} points", count, budget)
        weights = simplex_grid(space.n, resolution)
        dens = weights / space.mu
        if isinstance(rho, Entropic):
            pens = np.sum(rel_entr(weights, rho.q0.weights[None, :]), axis=1)
        else:
            pens = np.array([rho.penalty_array(d) for d in dens])
        with np.errstate(invalid="ignore"):
            scores = np.where(np.isfinite(pens), weights @ xv - pens, -np.inf)
    k = int(np.argmax(scores))
    grid_max = float(scores[k])
    tolerance = grid_step * float(xv.max() - xv.min()) + 1e-6
    deviation = value - grid_max
    passed = grid_max <= value + 1e-9 and abs(deviation) <= tolerance
    return RepresentationReport(bool(passed), value, grid_max, float(deviation), tolerance, dens[k].tolist(), int(count))
