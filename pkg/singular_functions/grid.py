"""
Grid module for the singular flux lab.
Handles uniform grids on [0, L], grid functions, differentiation,
endpoint-singular quadrature and the discrete norms used by every estimate.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .errors import DomainMismatch, InvalidParameter, NonFinite

logger = logging.getLogger(__name__)

# Graded quadrature toward a singular point
GRADED_LEVELS = 40
GRADED_RATIO = 0.5
DIVERGENCE_STEPS = 4
DIVERGENCE_REL = 0.01
TAIL_RATIO_LIMIT = 0.95

# Hoelder seminorm uses every node offset up to this size
HOLDER_FULL_LIMIT = 8192


@lru_cache(maxsize=None)
def unit_rule(order: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


# =====================================================================
# Graded sums
# =====================================================================

@dataclass(frozen=True)
class GradedSum:
    """Outcome of a geometric refinement toward a singular point."""

    increments: np.ndarray
    partial: float
    tail: float
    divergent: bool
    inconclusive: bool

    @property
    def total(self) -> float:
        if self.divergent:
            return math.inf
        return self.partial + self.tail


def graded_increments(
    f: Callable[[np.ndarray], np.ndarray],
    start: float,
    width: float,
    levels: int = GRADED_LEVELS,
    order: int = 8,
) -> np.ndarray:
    """
    Integrate f over the geometric pieces start + width*[r^(k+1), r^k].

    The pieces accumulate toward `start`, which is never evaluated. A negative
    width grades toward `start` from the right; each returned increment is then
    the oriented integral from start+width*r^(k+1) to start+width*r^k.

    Args:
        f: Vectorized integrand
        start: Singular point
        width: Signed length of the graded interval
        levels: Number of geometric pieces
        order: Gauss-Legendre order on each piece

    Returns:
        Array of per-level integrals, coarsest first
    """
    x01, w01 = unit_rule(order)
    hi = width * GRADED_RATIO ** np.arange(levels)
    lo = hi * GRADED_RATIO
    points = start + lo[:, None] + (hi - lo)[:, None] * x01[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        values = np.asarray(f(points), dtype=float)
    return (values @ w01) * (hi - lo)


def summarize_graded(increments: np.ndarray, base: float = 0.0) -> GradedSum:
    """
    Sum graded increments, extrapolate the geometric tail and test divergence.

    Divergent when each of the last four refinements grows the partial
    integral by more than 1% in relative terms.
    """
    increments = np.asarray(increments, dtype=float)
    if not np.all(np.isfinite(increments)):
        return GradedSum(increments, math.inf, 0.0, True, False)

    partial_sums = base + np.cumsum(increments)
    last = np.abs(increments[-DIVERGENCE_STEPS:])
    reference = np.maximum(np.abs(partial_sums[-DIVERGENCE_STEPS:]), 1e-300)
    divergent = bool(np.all(last > DIVERGENCE_REL * reference))

    ratio = 0.0
    if increments[-2] != 0.0:
        ratio = increments[-1] / increments[-2]
    tail = 0.0
    if 0.0 < ratio < 1.0:
        tail = increments[-1] * ratio / (1.0 - ratio)

    partial = float(partial_sums[-1])
    inconclusive = (
        not divergent
        and ratio > TAIL_RATIO_LIMIT
        and abs(tail) > DIVERGENCE_REL * max(abs(partial + tail), 1e-300)
    )
    return GradedSum(increments, partial, float(tail), divergent, bool(inconclusive))


# =====================================================================
# Grid and grid functions
# =====================================================================

@dataclass(frozen=True)
class Grid:
    """Uniform grid with N cells on [0, L]."""

    L: float
    N: int

    def __post_init__(self):
        if not (self.L > 0.0 and math.isfinite(self.L)):
            raise InvalidParameter(f"Grid length must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 8:
            raise InvalidParameter(f"Grid needs at least 8 cells, got {self.N}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dx(self) -> float:
        return self.L / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.N + 1) * self.dx
        x[-1] = self.L
        x.setflags(write=False)
        return x

    @cached_property
    def midpoints(self) -> np.ndarray:
        m = (np.arange(self.N) + 0.5) * self.dx
        m.setflags(write=False)
        return m

    def node_index(self, x: float) -> int:
        """Nearest node to x."""
        return int(round(x / self.dx))

    def prefix(self, cells: int) -> "Grid":
        """Grid covering the first `cells` cells."""
        return Grid(cells * self.dx, cells)


def _frozen(array, shape, name: str) -> np.ndarray:
    out = np.array(array, dtype=float)
    if out.shape != shape:
        raise InvalidParameter(f"{name} has shape {out.shape}, expected {shape}")
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"{name} contains non-finite values")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GridFn:
    """
    Real function sampled at the nodes of a grid.

    `cell_values` optionally carries one sample per cell (midpoint or cell
    mean). Boundary flags record whether u(0)=0 and u(L)=0 are asserted and
    default to whether the end values are exactly zero.
    """

    grid: Grid
    values: np.ndarray
    cell_values: Optional[np.ndarray] = None
    zero_left: Optional[bool] = None
    zero_right: Optional[bool] = None

    def __post_init__(self):
        n = self.grid.N
        values = _frozen(self.values, (n + 1,), "values")
        object.__setattr__(self, "values", values)
        if self.cell_values is not None:
            object.__setattr__(self, "cell_values", _frozen(self.cell_values, (n,), "cell_values"))
        if self.zero_left is None:
            object.__setattr__(self, "zero_left", bool(values[0] == 0.0))
        if self.zero_right is None:
            object.__setattr__(self, "zero_right", bool(values[-1] == 0.0))

    @classmethod
    def from_function(cls, grid: Grid, f: Callable[[np.ndarray], np.ndarray], cells: bool = True) -> "GridFn":
        """Sample f at the nodes (and at the midpoints when `cells` is set)."""
        cell_values = np.asarray(f(grid.midpoints), dtype=float) if cells else None
        return cls(grid, np.asarray(f(grid.nodes), dtype=float), cell_values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "GridFn":
        return cls(grid, np.full(grid.N + 1, float(value)), np.full(grid.N, float(value)))

    @classmethod
    def from_cells(cls, grid: Grid, cell_values: np.ndarray, **flags) -> "GridFn":
        """Build node values by averaging neighbouring cells; ends copy the nearest cell."""
        cell_values = np.asarray(cell_values, dtype=float)
        nodes = np.empty(grid.N + 1)
        nodes[1:-1] = 0.5 * (cell_values[:-1] + cell_values[1:])
        nodes[0] = cell_values[0]
        nodes[-1] = cell_values[-1]
        return cls(grid, nodes, cell_values, **flags)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def midpoint_values(self) -> np.ndarray:
        """Cell samples, falling back to the average of the two nodes."""
        if self.cell_values is not None:
            return self.cell_values
        return 0.5 * (self.values[:-1] + self.values[1:])

    def shifted(self, offset: float) -> "GridFn":
        cells = None if self.cell_values is None else self.cell_values + offset
        return GridFn(self.grid, self.values + offset, cells)

    def restrict(self, cells: int) -> "GridFn":
        """Restriction to the first `cells` cells."""
        sub = self.grid.prefix(cells)
        cell_values = None if self.cell_values is None else self.cell_values[:cells]
        return GridFn(sub, self.values[: cells + 1], cell_values, zero_left=self.zero_left)


# =====================================================================
# Operations
# =====================================================================

def differentiate(f: GridFn) -> GridFn:
    """
    Derivative of a grid function.

    Cell values hold the cell differences; node values use centered
    differences inside and one-sided differences at the ends.
    """
    dx = f.grid.dx
    cells = np.diff(f.values) / dx
    nodes = np.gradient(f.values, dx)
    return GridFn(f.grid, nodes, cells, zero_left=False, zero_right=False)


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFinite("Quadrature sample is not finite")


def _graded_cell_pair(f: Callable, grid: Grid, order: int = 4) -> float:
    """Gauss-Legendre on interior cells, geometric grading inside both end cells."""
    dx = grid.dx
    x01, w01 = unit_rule(order)
    left = grid.nodes[1:-2]
    points = left[:, None] + dx * x01[None, :]
    values = np.asarray(f(points), dtype=float)
    _check_finite(values)
    interior = float(np.sum(values @ w01) * dx)

    total = interior
    for start, width in ((0.0, dx), (grid.L, -dx)):
        summary = summarize_graded(np.sign(width) * graded_increments(f, start, width))
        if summary.divergent or not math.isfinite(summary.total):
            raise NonFinite(f"Graded quadrature diverges at x={start}")
        total += summary.total
    return total


def integrate(f: Union[GridFn, np.ndarray, Callable], grid: Optional[Grid] = None, graded: bool = False) -> float:
    """
    Integral over [0, L].

    Args:
        f: GridFn, array of cell-midpoint values, or a vectorized callable
        grid: Grid for array and callable inputs
        graded: Refine geometrically toward both endpoints (callable input)

    Returns:
        Midpoint-rule integral, or the graded quadrature for callables
    """
    if isinstance(f, GridFn):
        values = f.midpoint_values()
        _check_finite(values)
        return float(np.sum(values) * f.grid.dx)

    if grid is None:
        raise InvalidParameter("integrate needs a grid for array or callable input")

    if callable(f):
        if graded:
            return _graded_cell_pair(f, grid)
        values = np.asarray(f(grid.midpoints), dtype=float)
    else:
        values = np.asarray(f, dtype=float)
        if values.shape == (grid.N + 1,):
            values = 0.5 * (values[:-1] + values[1:])
        elif values.shape != (grid.N,):
            raise InvalidParameter(f"Expected {grid.N} cell values, got shape {values.shape}")
    _check_finite(values)
    return float(np.sum(values) * grid.dx)


@dataclass(frozen=True)
class Norms:
    l2: float
    h1_semi: float
    sup: float
    holder_half: float


def l2_cells(f: GridFn) -> float:
    """L2 norm from cell samples (midpoint rule)."""
    values = f.midpoint_values()
    return float(math.sqrt(np.sum(values * values) * f.grid.dx))


def holder_half(u: GridFn) -> float:
    """Max over node pairs of |u(x)-u(y)|/sqrt|x-y|."""
    v = u.values
    n = u.grid.N
    if n <= HOLDER_FULL_LIMIT:
        offsets = range(1, n + 1)
    else:
        offsets = sorted(set(list(range(1, 257)) + list(np.unique(np.geomspace(256, n, 512).astype(int)))))
    best = 0.0
    for k in offsets:
        diff = np.max(np.abs(v[k:] - v[:-k]))
        best = max(best, diff / math.sqrt(k * u.grid.dx))
    return float(best)


def norms(u: GridFn) -> Norms:
    """Discrete L2, H1 seminorm, sup and Hoelder-1/2 seminorm."""
    dx = u.grid.dx
    v = u.values
    l2_squared = dx * (np.sum(v * v) - 0.5 * (v[0] ** 2 + v[-1] ** 2))
    slopes = np.diff(v) / dx
    return Norms(
        l2=float(math.sqrt(max(l2_squared, 0.0))),
        h1_semi=float(math.sqrt(np.sum(slopes * slopes) * dx)),
        sup=float(np.max(np.abs(v))),
        holder_half=holder_half(u),
    )


def resample(u: GridFn, target: Grid) -> GridFn:
    """Piecewise-linear interpolation onto another grid over the same interval."""
    if not math.isclose(u.grid.L, target.L, rel_tol=1e-12, abs_tol=0.0):
        raise DomainMismatch(f"Cannot resample from L={u.grid.L} to L={target.L}")
    values = np.interp(target.nodes, u.grid.nodes, u.values)
    return GridFn(target, values, zero_left=u.zero_left, zero_right=u.zero_right)
