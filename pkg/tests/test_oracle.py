import itertools
from math import e, log

import numpy as np
import pytest

from npconvex import FiniteProbSpace, GridBudgetError, Linear, ProblemSpec, SolverConfig
from npconvex._grid import box_grid_chunks, polytope_vertices, simplex_grid, simplex_grid_size
from npconvex.instances import ex21, ex31, ex41, example, EXAMPLE_NAMES, random_instance
from npconvex.oracle import GridSpec, cross_check, oracle_p_star, oracle_primal, oracle_q_star

ALPHA41_EXACT = (3 - e) / (e - 1) ** 2


def test_box_grid_is_lexicographic_in_any_chunking():
    levels = np.linspace(0, 1, 4)
    expected = np.array(list(itertools.product(levels, repeat=3)))
    for rows in (1, 7, 64, 1000):
        got = np.vstack([c for _, c in box_grid_chunks(3, levels, rows)])
        assert np.array_equal(got, expected)


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert g.shape == (simplex_grid_size(3, 4), 3) == (15, 3)
    assert np.allclose(g.sum(axis=1), 1.0, rtol=0.0)
    assert np.array_equal(g[0], [0, 0, 1]) and np.array_equal(g[-1], [1, 0, 0])


def test_polytope_vertices_square_cut():
    A = np.array([[1, 0], [0, 1], [-1, 0], [0, -1], [1, 1]], dtype=float)
    b = np.array([1, 1, 0, 0, 1.5])
    v = {tuple(np.round(r, 9)) for r in polytope_vertices(A, b)}
    assert v == {(0, 0), (1, 0), (0, 1), (1, 0.5), (0.5, 1)}


def test_primal_example31():
    res = oracle_primal(ex31(), GridSpec(101))
    assert abs(res.value - (log(e + 3) - 2 * log(2))) <= 0.02
    assert np.allclose(res.argmin.values, [1.0, 0.0], atol=0.01, rtol=0.0)


def test_primal_vacuous_level_hits_top():
    res = oracle_primal(ex31().with_alpha(3.0), GridSpec(11))
    assert np.array_equal(res.argmin.values, [1.0, 1.0])


def test_primal_single_atom_exact():
    space = FiniteProbSpace([1.0])
    rho = Linear(space.reference())
    res = oracle_primal(ProblemSpec(space, rho, rho, 0.0, 2.0, 1.0), GridSpec(21))
    assert res.value == 1.0


def test_primal_first_minimum_kept():
    # rho2(1 - X) = 1 - x_1 does not depend on x_0: the lexicographically first point wins
    res = oracle_primal(ex21(), GridSpec(11))
    assert np.array_equal(res.argmin.values, [0.0, 1.0])


def test_primal_monotone_in_resolution():
    for seed in range(5):
        spec = random_instance(seed, 2)
        coarse = oracle_primal(spec, GridSpec(11))
        fine = oracle_primal(spec, GridSpec(101))
        finer = oracle_primal(spec, GridSpec(151))
        # 11-point levels are a subset of the 101-point levels
        assert fine.value <= coarse.value
        assert finer.value <= fine.value + fine.error_bound


def test_q_star_example31():
    res = oracle_q_star(ex31(), 0.5, GridSpec(simplex_resolution=10_000))
    assert abs(res.argmin.weights[0] - 3 / (e + 3)) <= 2e-4


def test_q_star_linear_is_the_point():
    spec = ex31()
    swapped = ProblemSpec(spec.space, spec.rho1, Linear(spec.space.density([1.2, 0.8])), 0.0, 1.0, 0.5)
    res = oracle_q_star(swapped, 0.5, GridSpec())
    assert np.array_equal(res.argmin.values, [1.2, 0.8])


def test_q_star_example41_reduction():
    res = oracle_q_star(ex41(ALPHA41_EXACT), ALPHA41_EXACT, GridSpec(simplex_resolution=10_000))
    assert np.allclose(res.argmin.values, [e / (e - 1), 1 / (e - 1)], atol=2e-4, rtol=0.0)


def test_p_star_example32():
    from npconvex.instances import ex32

    spec = ex32()
    res = oracle_p_star(spec, spec.space.reference(), 0.5, GridSpec(simplex_resolution=10_000))
    assert abs(res.argmin.weights[0] - e / (e + 3)) <= 2e-4


def test_budget_refusals(monkeypatch):
    space = FiniteProbSpace.uniform(5)
    rho = Linear(space.reference())
    spec = ProblemSpec(space, rho, rho, 0.0, 1.0, 0.5)
    with pytest.raises(GridBudgetError):
        oracle_primal(spec)
    with pytest.raises(GridBudgetError):
        cross_check(spec)
    monkeypatch.setenv("NPCONVEX_BUDGET", "1000")
    with pytest.raises(GridBudgetError) as info:
        oracle_primal(ex31(), GridSpec(101))
    assert info.value.required == 101**2 and info.value.budget == 1000


@pytest.mark.parametrize("name", EXAMPLE_NAMES)
def test_cross_check_builtin(name):
    report = cross_check(example(name))
    assert report.passed, report.to_dict()


@pytest.mark.parametrize("seed", range(10))
def test_cross_check_random_entropic(seed):
    report = cross_check(random_instance(seed, 2, "entropic", "entropic"))
    assert report.passed, report.to_dict()


@pytest.mark.parametrize("seed", range(5))
def test_cross_check_random_finitely_generated(seed):
    report = cross_check(random_instance(500 + seed, 3, "finitely_generated", "finitely_generated"))
    assert report.passed, report.to_dict()


def test_cross_check_reports_discrepancy(monkeypatch):
    from dataclasses import replace

    import npconvex.oracle as oracle_mod

    real = oracle_mod.solve
    monkeypatch.setattr(oracle_mod, "solve", lambda spec, cfg: replace(real(spec, cfg), beta=real(spec, cfg).beta + 0.1))
    report = cross_check(ex31())
    assert not report.passed
    failed = {c["name"] for c in report.checks if not c["passed"]}
    assert "beta" in failed
