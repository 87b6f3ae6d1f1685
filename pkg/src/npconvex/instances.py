"""Built-in worked instances and seeded random instance generators.

Irrational constants are computed here at full double precision, never
typed in as decimals.
"""

from __future__ import annotations

from math import e, log

import numpy as np

from .risk import ConvexExpectation, Entropic, FinitelyGenerated, Linear, WorstCase
from .solver import ProblemSpec
from .space import FiniteProbSpace

EXAMPLE_NAMES = ("ex21", "ex31", "ex32", "ex33", "ex41")

# level shared by the two entropic-level instances
ALPHA_ENTROPIC = log(e + 3) - 2 * log(2)
# breakpoint of the piecewise-constant densities on [0, 1]
EX41_BREAK = (e - 2) / (e - 1)
EX41_ALPHA = (3 - e) / (e - 1)
EX41_P = ((e + 1) / (e - 1), (3 - e) / (e - 1))

COMMENTS = {
    "ex21": "point masses P = I{0}, Q = I{1} over a uniform reference; any alpha > 0 works",
    "ex31": "rho1 = E_mu, rho2 entropic with reference Q0 = (3/4, 1/4)",
    "ex32": "rho1 entropic with reference P0 = (1/4, 3/4), rho2 = E_mu",
    "ex33": "both entropic: P0 = (1/4, 3/4) for rho1, Q0 = (3/4, 1/4) for rho2",
    "ex41": (
        "two-atom reduction of the Lebesgue instance on [0, 1]: the densities are constant on "
        "[0, (e-2)/(e-1)] and on ((e-2)/(e-1), 1], so the problem collapses to two atoms of "
        "mu-mass (e-2)/(e-1) and 1/(e-1)"
    ),
}


def _half_space() -> FiniteProbSpace:
    return FiniteProbSpace([0.5, 0.5], labels=("0", "1"))


def ex21(alpha: float = 0.3) -> ProblemSpec:
    space = _half_space()
    p = space.density([2.0, 0.0])
    q = space.density([0.0, 2.0])
    return ProblemSpec(space, Linear(p), Linear(q), 0.0, 1.0, alpha)


def ex31() -> ProblemSpec:
    space = _half_space()
    q0 = space.density([1.5, 0.5])
    return ProblemSpec(space, Linear(space.reference()), Entropic(q0), 0.0, 1.0, 0.5)


def ex32() -> ProblemSpec:
    space = _half_space()
    p0 = space.density([0.5, 1.5])
    return ProblemSpec(space, Entropic(p0), Linear(space.reference()), 0.0, 1.0, ALPHA_ENTROPIC)


def ex33() -> ProblemSpec:
    space = _half_space()
    p0 = space.density([0.5, 1.5])
    q0 = space.density([1.5, 0.5])
    return ProblemSpec(space, Entropic(p0), Entropic(q0), 0.0, 1.0, ALPHA_ENTROPIC)


def ex41(alpha: float = EX41_ALPHA) -> ProblemSpec:
    space = FiniteProbSpace([EX41_BREAK, 1.0 - EX41_BREAK], labels=("low", "high"))
    p = space.density(list(EX41_P))
    return ProblemSpec(space, Linear(p), Entropic(space.reference()), 0.0, 1.0, alpha)


def ex41_discretized(cells: int = 200, alpha: float = EX41_ALPHA) -> ProblemSpec:
    """Uniform grid of ``cells`` intervals on [0, 1] with exact cell averages of dP/dmu."""
    edges = np.linspace(0.0, 1.0, cells + 1)
    left, right = edges[:-1], edges[1:]
    low_len = np.clip(np.minimum(right, EX41_BREAK) - left, 0.0, None)
    dens = (EX41_P[0] * low_len + EX41_P[1] * (right - left - low_len)) / (right - left)
    space = FiniteProbSpace(np.full(cells, 1.0 / cells))
    p = space.density(dens / float(space.mu @ dens))
    return ProblemSpec(space, Linear(p), Entropic(space.reference()), 0.0, 1.0, alpha)


BUILTIN = {"ex21": ex21, "ex31": ex31, "ex32": ex32, "ex33": ex33, "ex41": ex41}


def example(name: str) -> ProblemSpec:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown example {name!r}; valid names: {', '.join(EXAMPLE_NAMES)}") from None


# -- random instances ------------------------------------------------------------


def _random_space(rng: np.random.Generator, n: int) -> FiniteProbSpace:
    w = rng.uniform(0.2, 1.0, n)
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return FiniteProbSpace(w)


def _random_density(rng: np.random.Generator, space: FiniteProbSpace, floor: float = 0.05):
    probs = rng.dirichlet(np.ones(space.n)) + floor
    probs = probs / probs.sum()
    return space.density_from_probabilities(probs)


def _random_rho(rng, space, kind: str) -> ConvexExpectation:
    if kind == "linear":
        return Linear(_random_density(rng, space))
    if kind == "entropic":
        return Entropic(_random_density(rng, space))
    if kind == "worst_case":
        return WorstCase(tuple(_random_density(rng, space) for _ in range(int(rng.integers(2, 4)))))
    if kind == "finitely_generated":
        count = int(rng.integers(2, 4))
        return FinitelyGenerated(
            tuple((_random_density(rng, space), float(rng.uniform(0.0, 0.3))) for _ in range(count))
        )
    raise ValueError(f"unknown variant {kind!r}")


def random_instance(seed: int, n: int = 2, rho1_kind: str = "entropic", rho2_kind: str = "entropic") -> ProblemSpec:
    """Seeded instance with k1 = 0, k2 = 1 and alpha strictly inside (rho1(0), rho1(1))."""
    rng = np.random.default_rng(seed)
    space = _random_space(rng, n)
    rho1 = _random_rho(rng, space, rho1_kind)
    rho2 = _random_rho(rng, space, rho2_kind)
    lo = rho1.value(np.zeros(n))
    hi = rho1.value(np.ones(n))
    alpha = lo + float(rng.uniform(0.2, 0.8)) * (hi - lo)
    return ProblemSpec(space, rho1, rho2, 0.0, 1.0, alpha)
