import numpy as np
import pytest

from singular_functions.bvp import (
    CStar,
    LimitKind,
    _merge_roots,
    c_star_bound,
    classify_limit,
    family_member_gap,
    find_c_star,
    newton_fd,
    regularized_bracket,
    solve_regularized_bvp,
    sweep_family,
    v_of_c,
)
from singular_functions.construct import bump_solution, derive_datum
from singular_functions.errors import Inconclusive, InvalidParameter, NoSolution
from singular_functions.grid import Grid, GridFn
from singular_functions.nonlinearity import constant, power, truncate
from singular_functions.verify import zero_threshold


@pytest.fixture(scope="module")
def coarse_pair():
    """x(1-x), |s|^(-1/3), a = 1 and the derived datum on N = 256."""
    grid = Grid(1.0, 256)
    phi = power(1.0, 1.0 / 3.0)
    a = GridFn.constant(grid, 1.0)
    u = bump_solution(1.0, 1.0, grid)
    return grid, phi, a, u, derive_datum(a, u, phi, 0.0)


@pytest.fixture(scope="module")
def c_star(coarse_pair):
    grid, phi, a, _, g = coarse_pair
    return find_c_star(a, g, phi, grid, (0.0, 3.0))


class TestRegularized:
    def test_constant_datum_gives_vanishing_solution(self, phi_third):
        grid = Grid(1.0, 256)
        a = GridFn.constant(grid, 1.0)
        g = GridFn.constant(grid, 1.0)
        solutions = solve_regularized_bvp(a, g, truncate(phi_third, 10.0), grid, cross_check=False)
        assert len(solutions) == 1
        assert solutions[0].c == pytest.approx(-11.0, abs=1e-6)
        assert np.max(np.abs(solutions[0].u.values)) <= np.sqrt(grid.dx)
        assert solutions.scan.samples == 64
        assert solutions[0].report.energy_gap <= solutions[0].report.tol

    def test_linear_problem_with_cross_check(self, grid, a_one):
        g = GridFn.from_function(grid, lambda x: 1.0 - 2.0 * x)
        solutions = solve_regularized_bvp(a_one, g, constant(0.0), grid)
        assert len(solutions) == 1
        solution = solutions[0]
        assert solution.c == pytest.approx(0.0, abs=1e-8)
        np.testing.assert_allclose(solution.u.values, grid.nodes * (1.0 - grid.nodes), atol=1e-9)
        assert solution.cross_check["converged"]
        assert solution.cross_check["sup_distance"] <= solution.cross_check["limit"]
        assert solution.u.zero_left and solution.u.zero_right

    def test_nearby_roots_merge(self):
        merged = _merge_roots([(-10.934, 1e-6), (-9.347, 1e-6), (-10.934000005, 1e-6)])
        assert merged == pytest.approx([-10.934, -9.347], abs=1e-8)

    def test_large_truncation_recovers_the_constructed_pair(self, coarse_pair):
        grid, phi, a, u, g = coarse_pair
        solutions = solve_regularized_bvp(a, g, truncate(phi, 1000.0), grid, cross_check=False)
        assert solutions
        closest = min(np.max(np.abs(s.u.values - u.values)) for s in solutions)
        assert closest <= 1e-2

    def test_bracket(self, grid, a_one, phi_third):
        g = GridFn.constant(grid, 1.0)
        assert regularized_bracket(a_one, g, truncate(phi_third, 10.0)) == pytest.approx(2.0 * 11.0 * 1.01)

    def test_needs_bounded_member(self, grid, a_one, phi_third):
        with pytest.raises(InvalidParameter):
            solve_regularized_bvp(a_one, GridFn.constant(grid, 1.0), phi_third, grid)

    def test_newton_on_linear_problem(self, grid, a_one):
        g = GridFn.from_function(grid, lambda x: 1.0 - 2.0 * x)
        u, c = newton_fd(a_one, g, constant(0.0), GridFn.constant(grid, 0.0), 0.5)
        assert c == pytest.approx(0.0, abs=1e-8)
        np.testing.assert_allclose(u.values, grid.nodes * (1.0 - grid.nodes), atol=1e-9)


class TestCriticalValue:
    def test_bounded_below_datum_has_no_solution(self, grid, a_one, phi_third):
        outcome = find_c_star(a_one, GridFn.constant(grid, 1.0), phi_third, grid, (-2.0, 2.0))
        assert isinstance(outcome, NoSolution)
        assert outcome.to_dict()["no_solution"] is True

    def test_constructed_pair(self, coarse_pair, c_star):
        grid, phi, a, _, g = coarse_pair
        assert isinstance(c_star, CStar)
        assert c_star.hi - c_star.lo <= 1e-3
        # c = 0 is admissible by construction
        assert c_star.value >= 0.0
        assert c_star.within_bound
        assert c_star.value <= c_star_bound(a, g, phi) + c_star.tau

    def test_reproducible_under_refinement(self, phi_third):
        values = []
        bracket = (0.0, 3.0)
        for n in (1024, 4096):
            grid = Grid(1.0, n)
            a = GridFn.constant(grid, 1.0)
            g = derive_datum(a, bump_solution(1.0, 1.0, grid), phi_third, 0.0)
            found = find_c_star(a, g, phi_third, grid, bracket, width=1e-2)
            assert isinstance(found, CStar)
            values.append(found.value)
            bracket = (found.value - 0.5, found.value + 0.5)
        assert abs(values[1] - values[0]) <= 10.0 * zero_threshold(Grid(1.0, 1024))

    def test_bracket_order(self, coarse_pair):
        grid, phi, a, _, g = coarse_pair
        with pytest.raises(InvalidParameter):
            find_c_star(a, g, phi, grid, (1.0, -1.0))


class TestFamily:
    def test_ordered_family_below_c_star(self, coarse_pair, c_star):
        grid, phi, a, _, g = coarse_pair
        c_list = [c_star.value - 4.0, c_star.value - 2.0, c_star.value - 1.0, c_star.value]
        record = sweep_family(a, g, phi, grid, c_list, c_star=c_star)
        assert all(s.admissible for s in record.samples)
        assert record.ordering_verdict
        assert record.vanishing_trend_ok
        tau = np.sqrt(grid.dx)
        for sample in record.samples:
            assert sample.endpoint >= -tau
            assert np.min(sample.u.values) >= -tau
        assert record.to_dict()["c_star"]["c_star"] == c_star.value

    def test_c_list_must_ascend(self, coarse_pair):
        grid, phi, a, _, g = coarse_pair
        with pytest.raises(InvalidParameter):
            sweep_family(a, g, phi, grid, [0.0, -1.0])

    def test_member_gap(self, coarse_pair):
        _, phi, a, u, g = coarse_pair
        c, gap = family_member_gap(a, u, g, phi)
        assert c == pytest.approx(0.0, abs=1e-6)
        assert gap <= 1e-2

    def test_member_gap_on_the_reference_grid(self, fine_grid, phi_third):
        a = GridFn.constant(fine_grid, 1.0)
        u = bump_solution(1.0, 1.0, fine_grid)
        g = derive_datum(a, u, phi_third, 0.0)
        c, gap = family_member_gap(a, u, g, phi_third)
        assert c == pytest.approx(0.0, abs=1e-9)
        assert gap <= 1e-2

    def test_members_stay_nonnegative_far_below_c_star(self, coarse_pair, c_star):
        grid, phi, a, _, g = coarse_pair
        v = v_of_c(a, g, phi, c_star.value - 8.0, grid).v
        assert np.min(v.values) >= 0.0


class TestClassifyLimit:
    def test_zero_limit(self, grid, phi_third):
        zero = GridFn(grid, np.zeros(grid.N + 1))
        run = [(n, zero, -(n + 1.0), truncate(phi_third, n)) for n in (10.0, 100.0, 1000.0)]
        result = classify_limit(run)
        assert result.verdict is LimitKind.ZERO
        assert result.to_dict()["verdict"] == "ZeroLimit"

    def test_weak_limit(self, grid, parabola, phi_third):
        run = [(n, parabola, 0.0, truncate(phi_third, n)) for n in (100.0, 1000.0, 10000.0)]
        assert classify_limit(run).verdict is LimitKind.WEAK

    def test_mixed_trends(self, grid, parabola, phi_third):
        run = [(n, parabola, c, truncate(phi_third, n)) for n, c in ((100.0, 0.0), (1000.0, 10.0), (10000.0, -10.0))]
        with pytest.raises(Inconclusive):
            classify_limit(run)

    def test_needs_two_entries(self, parabola, phi_third):
        with pytest.raises(Inconclusive):
            classify_limit([(10.0, parabola, 0.0, truncate(phi_third, 10.0))])
