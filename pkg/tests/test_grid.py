import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singular_functions.errors import DomainMismatch, InvalidParameter, NonFinite
from singular_functions.grid import (
    Grid,
    GridFn,
    differentiate,
    graded_increments,
    integrate,
    norms,
    resample,
    summarize_graded,
)

node_values = st.floats(min_value=-10.0, max_value=10.0).map(lambda v: round(v, 6))


class TestGrid:
    def test_nodes_and_spacing(self):
        grid = Grid(2.0, 16)
        assert grid.dx == pytest.approx(0.125)
        assert grid.nodes[0] == 0.0
        assert grid.nodes[-1] == 2.0
        assert grid.nodes.size == 17
        np.testing.assert_allclose(grid.midpoints[:2], [0.0625, 0.1875])

    @pytest.mark.parametrize("L,N", [(0.0, 16), (-1.0, 16), (math.inf, 16), (1.0, 4), (1.0, 10.5)])
    def test_rejects_bad_grids(self, L, N):
        with pytest.raises(InvalidParameter):
            Grid(L, N)

    def test_prefix(self):
        grid = Grid(1.0, 64)
        sub = grid.prefix(48)
        assert sub.N == 48
        assert sub.L == pytest.approx(0.75)
        assert sub.dx == pytest.approx(grid.dx)

    def test_node_index(self):
        grid = Grid(1.0, 10 * 8)
        assert grid.node_index(0.3) == 24


class TestGridFn:
    def test_boundary_flags_follow_end_values(self, grid):
        u = GridFn.from_function(grid, lambda x: x * (1.0 - x))
        assert u.zero_left and u.zero_right
        shifted = u.shifted(1.0)
        assert not shifted.zero_left

    def test_rejects_non_finite_values(self, grid):
        values = np.zeros(grid.N + 1)
        values[3] = np.nan
        with pytest.raises(NonFinite):
            GridFn(grid, values)

    def test_rejects_wrong_shape(self, grid):
        with pytest.raises(InvalidParameter):
            GridFn(grid, np.zeros(grid.N))

    def test_from_cells_averages_neighbours(self):
        grid = Grid(1.0, 8)
        cells = np.arange(8, dtype=float)
        g = GridFn.from_cells(grid, cells)
        assert g.values[0] == 0.0
        assert g.values[4] == pytest.approx(3.5)
        assert g.values[-1] == 7.0
        np.testing.assert_array_equal(g.midpoint_values(), cells)

    def test_restrict(self, grid):
        u = GridFn.from_function(grid, np.sin)
        part = u.restrict(100)
        assert part.grid.N == 100
        np.testing.assert_array_equal(part.values, u.values[:101])
        np.testing.assert_array_equal(part.cell_values, u.cell_values[:100])


class TestOperations:
    def test_differentiate_square(self, grid):
        u = GridFn.from_function(grid, lambda x: x * x, cells=False)
        d = differentiate(u)
        np.testing.assert_allclose(d.cell_values, 2.0 * grid.midpoints, rtol=1e-12, atol=1e-12)

    def test_integrate_constant(self):
        grid = Grid(3.0, 32)
        assert integrate(GridFn.constant(grid, 2.0)) == pytest.approx(6.0)

    def test_integrate_node_array(self, grid):
        assert integrate(grid.nodes, grid) == pytest.approx(0.5)

    def test_integrate_needs_grid_for_arrays(self, grid):
        with pytest.raises(InvalidParameter):
            integrate(np.ones(grid.N))

    def test_graded_integral_of_singular_callable(self, grid):
        value = integrate(lambda x: (x * (1.0 - x)) ** (-1.0 / 3.0), grid, graded=True)
        # Beta(2/3, 2/3)
        expected = math.gamma(2.0 / 3.0) ** 2 / math.gamma(4.0 / 3.0)
        assert value == pytest.approx(expected, rel=1e-6)

    def test_graded_integral_rejects_divergence(self, grid):
        with pytest.raises(NonFinite):
            integrate(lambda x: 1.0 / (x * (1.0 - x)), grid, graded=True)

    def test_norms_of_parabola(self, parabola):
        n = norms(parabola)
        assert n.sup == pytest.approx(0.25, rel=1e-5)
        assert n.l2 == pytest.approx(math.sqrt(1.0 / 30.0), rel=1e-4)
        assert n.h1_semi == pytest.approx(math.sqrt(1.0 / 3.0), rel=1e-4)
        # |u(x) - u(0)| / sqrt(x) peaks near x = 1/3
        assert n.holder_half == pytest.approx(2.0 / 3.0 / math.sqrt(3.0), rel=1e-2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(node_values, min_size=31, max_size=31))
    def test_poincare_and_morrey_bounds(self, interior):
        grid = Grid(2.0, 32)
        n = norms(GridFn(grid, np.array([0.0, *interior, 0.0])))
        assert n.l2 <= grid.L * n.h1_semi * (1.0 + 1e-12)
        assert n.sup <= math.sqrt(grid.L) * n.h1_semi * (1.0 + 1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(node_values, min_size=32, max_size=32))
    def test_morrey_needs_only_the_left_zero(self, tail):
        grid = Grid(1.0, 32)
        n = norms(GridFn(grid, np.array([0.0, *tail])))
        assert n.sup <= math.sqrt(grid.L) * n.h1_semi * (1.0 + 1e-12)

    def test_resample_linear_function_is_exact(self):
        u = GridFn.from_function(Grid(1.0, 16), lambda x: 3.0 * x)
        fine = resample(u, Grid(1.0, 64))
        np.testing.assert_allclose(fine.values, 3.0 * fine.x, atol=1e-14)

    def test_resample_needs_same_interval(self):
        u = GridFn.constant(Grid(1.0, 16), 1.0)
        with pytest.raises(DomainMismatch):
            resample(u, Grid(2.0, 16))


class TestGradedSums:
    def test_convergent_power(self):
        increments = graded_increments(lambda x: x ** -0.5, 0.0, 1.0)
        summary = summarize_graded(increments)
        assert not summary.divergent
        assert summary.total == pytest.approx(2.0, rel=1e-6)

    def test_divergent_power(self):
        summary = summarize_graded(graded_increments(lambda x: x ** -1.5, 0.0, 1.0))
        assert summary.divergent
        assert summary.total == math.inf

    def test_grading_from_the_right(self):
        increments = graded_increments(lambda x: (1.0 - x) ** -0.5, 1.0, -1.0)
        assert summarize_graded(-increments).total == pytest.approx(2.0, rel=1e-6)
