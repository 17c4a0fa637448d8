"""
Construction module for the singular flux lab.
Handles explicit admissible profiles (power seams and bumps), derived data,
the tail fix of a datum near x = L and the stability and instability
schedules of regularized data.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import LADDER_DEPTH, SCAN_SAMPLES, ZERO_KAPPA
from .errors import (
    BudgetExceeded,
    ExponentOutOfWindow,
    InvalidParameter,
    MembershipFailure,
    SignClash,
    ZeroAtSplice,
)
from .grid import Grid, GridFn, l2_cells, norms
from .bvp import BvpSolution, RunEntry, as_boundary_solution, solve_regularized_bvp
from .nonlinearity import ApproxFamily, Nonlinearity, mirror, plus_shift, zeta_for_plus
from .ode import solve_ivp
from .verify import (
    WeakSolutionReport,
    cell_averages,
    cell_profile,
    membership_U,
    recover_constant_c,
    weak_solution_report,
    zero_threshold,
)

logger = logging.getLogger(__name__)

# Tail fix
SHRINK_BUDGET = 4


# =====================================================================
# Power seams
# =====================================================================

@dataclass(frozen=True)
class SeamSpec:
    """
    Interior zeros x_1 < ... < x_n of a profile with power-law seams.

    Segment i runs from x_i to x_(i+1), with x_0 = 0 and x_(n+1) = L. Its left
    end behaves like K_right[i] (x - x_i)^lambda_right[i] and its right end like
    K_left[i] (x_(i+1) - x)^lambda_left[i]. Without a splice radius the segment
    is the product K_right[i] (x - x_i)^lambda_right[i] (x_(i+1) - x)^lambda_left[i];
    with one, the two power laws cover [x_i, x_i + delta] and
    [x_(i+1) - delta, x_(i+1)] and a cubic connector joins them.
    """

    points: Tuple[float, ...]
    lambda_right: Tuple[float, ...]
    lambda_left: Tuple[float, ...]
    K_right: Tuple[float, ...]
    K_left: Tuple[float, ...]
    delta: Optional[float] = None
    connector_eta: Optional[float] = None

    def __post_init__(self):
        for name in ("points", "lambda_right", "lambda_left", "K_right", "K_left"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        segments = len(self.points) + 1
        for name in ("lambda_right", "lambda_left", "K_right", "K_left"):
            if len(getattr(self, name)) != segments:
                raise InvalidParameter(
                    f"{name} needs one entry per segment ({segments}), got {len(getattr(self, name))}"
                )
        if self.delta is not None and not self.delta > 0:
            raise InvalidParameter(f"Splice radius must be positive, got {self.delta}")
        if self.connector_eta is not None and not self.connector_eta > 0:
            raise InvalidParameter(f"Connector floor must be positive, got {self.connector_eta}")

    @property
    def segments(self) -> int:
        return len(self.points) + 1

    def breakpoints(self, L: float) -> Tuple[float, ...]:
        return (0.0, *self.points, float(L))


def exponent_window(gamma: float) -> Tuple[float, float]:
    """Open interval (1/2, 1/(2 gamma)) of admissible seam exponents."""
    return 0.5, 0.5 / gamma


def validate_seam(spec: SeamSpec, phi: Nonlinearity, L: float) -> None:
    """
    Check the sign condition, the exponent windows and the splice radius.

    The window of a seam uses the exponent of phi on the side where the
    profile lives: gamma_right for a positive amplitude, gamma_left otherwise.

    Raises:
        InvalidParameter: points not increasing inside (0, L), infeasible radius, or phi without a power model
        SignClash: K_right[i] K_left[i] <= 0 on some segment
        ExponentOutOfWindow: a seam exponent outside its window
    """
    if phi.model is None:
        raise InvalidParameter(f"Seam windows need a power-model nonlinearity, got {phi.label}")
    bounds = spec.breakpoints(L)
    if any(lo >= hi for lo, hi in zip(bounds, bounds[1:])):
        raise InvalidParameter(f"Seam points must increase strictly inside (0, {L:g}), got {list(spec.points)}")

    for i in range(spec.segments):
        if not spec.K_right[i] * spec.K_left[i] > 0:
            raise SignClash(
                f"Segment {i} has amplitudes of different sign ({spec.K_right[i]:g}, {spec.K_left[i]:g})",
                segment=i,
            )
        for side, lam, K in (("right", spec.lambda_right[i], spec.K_right[i]), ("left", spec.lambda_left[i], spec.K_left[i])):
            gamma = phi.model.gamma_right if K > 0 else phi.model.gamma_left
            lo, hi = exponent_window(gamma)
            if not lo < lam < hi:
                raise ExponentOutOfWindow(
                    f"Exponent {lam:g} on segment {i} ({side}) is outside ({lo:g}, {hi:g})",
                    segment=i,
                    side=side,
                    window=[lo, hi],
                )

    if spec.delta is not None:
        for i, (lo, hi) in enumerate(zip(bounds, bounds[1:])):
            if not lo + spec.delta < hi - spec.delta:
                raise InvalidParameter(f"Splice radius {spec.delta:g} does not fit segment {i} [{lo:g}, {hi:g}]")


def _connector(A: float, B: float, t: np.ndarray, eta: float) -> np.ndarray:
    """Cubic Hermite from A to B with zero end slopes, kept at |value| >= eta."""
    values = A + (B - A) * t * t * (3.0 - 2.0 * t)
    return math.copysign(1.0, A) * np.maximum(np.abs(values), eta)


def _segment_values(spec: SeamSpec, i: int, lo: float, hi: float, x: np.ndarray) -> np.ndarray:
    Kr, Kl = spec.K_right[i], spec.K_left[i]
    lr, ll = spec.lambda_right[i], spec.lambda_left[i]
    left = np.maximum(x - lo, 0.0)
    right = np.maximum(hi - x, 0.0)
    if spec.delta is None:
        return Kr * left ** lr * right ** ll

    delta = spec.delta
    A = Kr * delta ** lr
    B = Kl * delta ** ll
    eta = spec.connector_eta if spec.connector_eta is not None else 0.5 * min(abs(A), abs(B))
    out = np.empty_like(x)
    near_left = x <= lo + delta
    near_right = x >= hi - delta
    middle = ~(near_left | near_right)
    out[near_left] = Kr * left[near_left] ** lr
    out[near_right] = Kl * right[near_right] ** ll
    t = (x[middle] - lo - delta) / (hi - lo - 2.0 * delta)
    out[middle] = _connector(A, B, t, eta)
    return out


def power_seam_solution(spec: SeamSpec, grid: Grid, phi: Nonlinearity) -> GridFn:
    """
    Admissible profile with prescribed zeros and power-law seams.

    Seam points are moved to their nearest grid nodes, where the profile is
    exactly zero, as it is at 0 and L.

    Args:
        spec: Seam specification
        grid: Grid
        phi: Power-model nonlinearity whose exponents set the windows

    Returns:
        GridFn with zero boundary values

    Raises:
        SignClash: amplitudes of a segment differ in sign
        ExponentOutOfWindow: a seam exponent outside (1/2, 1/(2 gamma))
    """
    validate_seam(spec, phi, grid.L)
    indices = [0, *(grid.node_index(p) for p in spec.points), grid.N]
    if any(lo >= hi for lo, hi in zip(indices, indices[1:])):
        raise InvalidParameter(f"Seam points {list(spec.points)} collide on a grid with N={grid.N}")
    snapped = [float(grid.nodes[j]) for j in indices]

    values = np.zeros(grid.N + 1)
    for i, (j0, j1) in enumerate(zip(indices, indices[1:])):
        inner = np.arange(j0 + 1, j1)
        values[inner] = _segment_values(spec, i, snapped[i], snapped[i + 1], grid.nodes[inner])
    values[indices] = 0.0
    w = GridFn(grid, values, zero_left=True, zero_right=True)
    logger.info(f"Power seam with {len(spec.points)} interior zero(s) on N={grid.N}, sup {np.max(np.abs(values)):.4g}")
    return w


def bump_solution(K: float, lam: float, grid: Grid) -> GridFn:
    """u = K x^lam (L - x)^lam, the seam profile without interior zeros."""
    if K == 0 or not lam > 0:
        raise InvalidParameter(f"Bump needs K != 0 and lam > 0, got K={K}, lam={lam}")
    x = grid.nodes
    values = K * x ** lam * (grid.L - x) ** lam
    values[0] = values[-1] = 0.0
    return GridFn(grid, values, zero_left=True, zero_right=True)


# =====================================================================
# Derived data
# =====================================================================

def _datum_cells(a: GridFn, w: GridFn, phi: Nonlinearity, c: float) -> np.ndarray:
    """Cell averages of a w' - phi(w) - c."""
    slopes = np.diff(w.values) / w.grid.dx
    return a.midpoint_values() * slopes - cell_averages(phi, w) - c


def derive_datum(a: GridFn, w: GridFn, phi: Nonlinearity, c: float = 0.0) -> GridFn:
    """
    Datum g = a w' - phi(w) - c for which w is a weak solution.

    Cell values carry a w' at the midpoint (the cell mean of w' is the slope)
    minus the x-average of phi(w), graded toward zeros of w; node values
    average the neighbouring cells.

    Raises:
        MembershipFailure: w is not admissible for phi
    """
    membership = membership_U(phi, w)
    if not membership:
        raise MembershipFailure(f"w is not admissible for {phi.label}", membership=membership.to_dict())
    g = GridFn.from_cells(w.grid, _datum_cells(a, w, phi, c))
    logger.info(f"Derived datum for {phi.label} with c={c:g}: min {np.min(g.cell_values):.4g}, max {np.max(g.cell_values):.4g}")
    return g


# =====================================================================
# Tail fix
# =====================================================================

@dataclass(frozen=True, eq=False)
class TailFix:
    """Modified datum g_hat equal to g on [0, L - delta] and its weak solution u_hat."""

    g_hat: GridFn
    u_hat: GridFn
    delta: float
    splice_index: int
    splice_value: float
    K: float
    report: WeakSolutionReport

    def to_dict(self) -> Dict[str, Any]:
        tail = max(1, self.g_hat.grid.N // 10)
        return {
            "delta": self.delta,
            "splice_index": self.splice_index,
            "splice_value": self.splice_value,
            "K": self.K,
            "g_hat_tail_min": float(np.min(self.g_hat.cell_values[-tail:])),
            "report": self.report.to_dict(),
        }


def zeta_bridge(phi: Nonlinearity, splice_value: float, delta: float, distances: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Profile joining splice_value at distance delta from L to zero at L.

    Solves zeta(w) = K d in the distance d to L with K = zeta(|splice_value|)/delta,
    using phi_plus for a positive splice value and s -> phi_plus(-s) with the
    sign flipped for a negative one.

    Returns:
        (w at the given distances, K)
    """
    if splice_value == 0.0:
        raise ZeroAtSplice("Cannot bridge from a zero splice value")
    phi_plus, _, _ = plus_shift(phi)
    branch = phi_plus if splice_value > 0 else mirror(phi_plus)
    sign = math.copysign(1.0, splice_value)
    size = abs(splice_value)
    table = zeta_for_plus(branch, size)
    K = table.zeta(size) / delta

    distances = np.asarray(distances, dtype=float)
    z = np.clip(K * distances, 0.0, table.zeta_max)
    w = sign * np.asarray(table.zeta_inv(z), dtype=float)
    w[distances <= 0.0] = 0.0
    w[distances >= delta] = splice_value
    return w, float(K)


def tail_fix(
    a: GridFn,
    g: GridFn,
    phi: Nonlinearity,
    delta: float,
    grid: Grid,
    kappa: float = ZERO_KAPPA,
    ladder_depth: int = LADDER_DEPTH,
    shrink_budget: int = SHRINK_BUDGET,
) -> TailFix:
    """
    Replace g on (L - delta, L] so that the modified problem has a weak solution.

    The Cauchy solution v on [0, L - delta] is continued by a zeta bridge down
    to zero at L; the new tail of the datum is derived from the bridge with
    c = 0. The radius is halved while |v(L - delta)| stays below tau_L.

    Args:
        a: Coefficient
        g: Datum
        phi: Singular nonlinearity
        delta: Initial splice radius
        grid: Grid
        kappa: Zero threshold factor
        ladder_depth: Regularization ladder depth for the Cauchy solve
        shrink_budget: Number of halvings allowed

    Returns:
        TailFix with g_hat, u_hat and the weak-solution report

    Raises:
        ZeroAtSplice: the splice value stays below tau_L after all halvings
    """
    if not phi.singular_at_zero:
        raise InvalidParameter(f"Tail fix needs a nonlinearity singular at 0, got {phi.label}")
    if not 0.0 < delta < grid.L:
        raise InvalidParameter(f"Splice radius must lie in (0, {grid.L:g}), got {delta}")
    tau = zero_threshold(grid, kappa)

    for attempt in range(shrink_budget + 1):
        j_s = int(round((grid.L - delta) / grid.dx))
        if j_s < 8 or j_s >= grid.N:
            raise InvalidParameter(f"Splice radius {delta:g} leaves {j_s} of {grid.N} cells before the splice")
        v = solve_ivp(a.restrict(j_s), g.restrict(j_s), phi, grid.prefix(j_s), ladder_depth)
        v_s = v.endpoint
        if abs(v_s) >= tau:
            break
        if attempt == shrink_budget:
            raise ZeroAtSplice(f"|v(L - delta)| = {abs(v_s):.3e} < tau = {tau:.3e} after {shrink_budget} halvings", delta=delta)
        logger.warning(f"Splice value {v_s:.3e} is below tau = {tau:.3e}; halving delta to {delta / 2:g}")
        delta /= 2.0

    distances = (grid.N - np.arange(j_s, grid.N + 1)) * grid.dx
    bridge, K = zeta_bridge(phi, v_s, distances[0], distances)
    values = np.concatenate([v.v.values, bridge[1:]])
    values[-1] = 0.0
    u_hat = GridFn(grid, values, zero_left=True, zero_right=True)

    tail_cells = _datum_cells(a, u_hat, phi, 0.0)[j_s:]
    if not np.all(np.isfinite(tail_cells)):
        raise MembershipFailure(f"The bridge for {phi.label} is not admissible near L")
    cells = np.concatenate([g.midpoint_values()[:j_s], tail_cells])
    nodes = np.empty(grid.N + 1)
    nodes[: j_s + 1] = g.values[: j_s + 1]
    nodes[j_s + 1 : -1] = 0.5 * (cells[j_s:-1] + cells[j_s + 1 :])
    nodes[-1] = cells[-1]
    g_hat = GridFn(grid, nodes, cells)

    report = weak_solution_report(a, u_hat, g_hat, phi)
    logger.info(f"Tail fix at x={grid.nodes[j_s]:.6g}: v={v_s:.6g}, K={K:.6g}, verdict={report.verdict}")
    return TailFix(g_hat, u_hat, float(distances[0]), j_s, float(v_s), K, report)


# =====================================================================
# Stability and instability schedules
# =====================================================================

def stability_datum(g: GridFn, phi: Nonlinearity, phi_n: Nonlinearity, u: GridFn) -> GridFn:
    """
    g_n = phi(u) - phi_n(u) + g as cell averages along the profile of u for phi.

    Cells where phi and phi_n agree on the range of u keep g exactly.
    """
    if phi_n is phi:
        return g
    profile = cell_profile(u, singular=phi.singular_at_zero)
    exact, approx = cell_averages(phi, u, profile), cell_averages(phi_n, u, profile)
    with np.errstate(invalid="ignore"):
        diff = np.where(exact == approx, 0.0, exact - approx)
    if not np.any(diff):
        return g
    return GridFn(u.grid, g.values + GridFn.from_cells(u.grid, diff).values, g.midpoint_values() + diff)


@dataclass(frozen=True, eq=False)
class StabilityStep:
    n: float
    phi_n: Nonlinearity
    solution: Optional[BvpSolution]
    datum_distance: float
    sup_distance: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "c": None if self.solution is None else self.solution.c,
            "datum_distance": self.datum_distance,
            "sup_distance": self.sup_distance,
        }


def stability_run(
    a: GridFn,
    g: GridFn,
    phi: Nonlinearity,
    family: ApproxFamily,
    u: GridFn,
    ladder_depth: int = LADDER_DEPTH,
) -> List[StabilityStep]:
    """
    Solve the regularized problems with the data g_n of stability_datum.

    The pair (u, g_n) solves the member's equation with the constant c of
    (u, g), so each member is re-solved as the Cauchy solution V_n(c) with its
    endpoint set to zero. Shooting on c is not used: for large n the endpoint
    map is nearly flat in c near the root. ||g_n - g||_2 and the sup distance
    to u are recorded.
    """
    c_n = recover_constant_c(a, u, g, phi)
    steps = []
    for n, phi_n in family.members():
        g_n = stability_datum(g, phi, phi_n, u)
        datum_distance = l2_cells(GridFn(u.grid, g_n.values - g.values, g_n.midpoint_values() - g.midpoint_values()))
        v = solve_ivp(a, g_n.shifted(c_n), phi_n, u.grid, ladder_depth).v
        distance = float(np.max(np.abs(v.values - u.values)))
        u_n = as_boundary_solution(v)
        solution = BvpSolution(u_n, c_n, weak_solution_report(a, u_n, g_n, phi_n))
        logger.info(f"Stability step n={n:g}: c_n={c_n:.6g}, ||g_n - g||_2={datum_distance:.3e}, sup distance {distance:.3e}")
        steps.append(StabilityStep(n, phi_n, solution, datum_distance, distance))
    return steps


def clipped_data(g: GridFn, levels: Sequence[float]) -> List[GridFn]:
    """
    Bounded data clip(g, -b, b), one per level b.

    With g from derive_datum and rising levels these approach g in L2 while
    every member stays bounded below.

    Raises:
        InvalidParameter: a level is not positive
    """
    if any(not b > 0 for b in levels):
        raise InvalidParameter(f"Clip levels must be positive, got {list(levels)}")
    data = []
    for b in levels:
        cells = np.clip(g.midpoint_values(), -b, b)
        data.append(GridFn(g.grid, np.clip(g.values, -b, b), cells))
    return data


class InstabilitySchedule(list):
    """List of (n, k) pairs that also carries the diagonal run for classify_limit."""

    def __init__(self, pairs: Sequence[Tuple[int, float]] = (), diagonal: Sequence[RunEntry] = (), raw: Sequence[int] = ()):
        super().__init__(pairs)
        self.diagonal = list(diagonal)
        self.raw = list(raw)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schedule": [list(pair) for pair in self],
            "raw_positions": self.raw,
            "diagonal_c": [entry[2] for entry in self.diagonal],
        }


def instability_schedule(
    g_bar: Sequence[GridFn],
    phi_family: ApproxFamily,
    eps: Sequence[float],
    a: GridFn,
    grid: Grid,
    samples: int = SCAN_SAMPLES,
) -> InstabilitySchedule:
    """
    Regularization indices k(n) with ||v_n^k||_2 <= eps_n, strictly increasing in n.

    For each datum g_bar[n-1] the members of the family are tried in schedule
    order until the (phi_k, g_bar) problem has a solution of L2 norm at most
    eps_n; of several solutions the one of smallest norm is used. The minimal
    positions are then made strictly increasing by taking max(raw, previous + 1).

    Args:
        g_bar: Bounded data, one per n
        phi_family: Approximation family; its schedule is the k budget
        eps: Positive tolerances decreasing to 0
        a: Coefficient
        grid: Grid
        samples: Scan samples of each regularized solve

    Returns:
        InstabilitySchedule of (n, k) with the diagonal run in `.diagonal`

    Raises:
        BudgetExceeded: no admissible k for some n, or the repaired schedule runs past the family
    """
    if len(g_bar) != len(eps):
        raise InvalidParameter(f"Need one eps per datum, got {len(g_bar)} data and {len(eps)} eps")
    if any(e <= 0 for e in eps):
        raise InvalidParameter("eps must be positive")
    members = phi_family.members()
    cache: Dict[Tuple[int, int], Optional[BvpSolution]] = {}

    def first_solution(i: int, position: int) -> Optional[BvpSolution]:
        key = (i, position)
        if key not in cache:
            solutions = solve_regularized_bvp(a, g_bar[i], members[position][1], grid, samples, cross_check=False)
            cache[key] = min(solutions, key=lambda s: norms(s.u).l2) if solutions else None
        return cache[key]

    raw, repaired = [], []
    previous = -1
    for i, bound in enumerate(eps):
        found = None
        for position in range(len(members)):
            solution = first_solution(i, position)
            if solution is not None and norms(solution.u).l2 <= bound:
                found = position
                break
        if found is None:
            raise BudgetExceeded(f"No member of the family reaches ||v||_2 <= {bound:g} for n={i + 1}", n=i + 1)
        position = max(found, previous + 1)
        if position >= len(members) or first_solution(i, position) is None:
            raise BudgetExceeded(f"Repaired index {position} for n={i + 1} is outside the family budget", n=i + 1)
        raw.append(found)
        repaired.append(position)
        previous = position
        logger.debug(f"Instability schedule n={i + 1}: raw position {found}, repaired {position}")

    pairs = [(i + 1, members[p][0]) for i, p in enumerate(repaired)]
    diagonal = []
    for i, p in enumerate(repaired):
        solution = first_solution(i, p)
        diagonal.append((members[p][0], solution, solution.c, members[p][1]))
    logger.info(f"Instability schedule: {pairs}")
    return InstabilitySchedule(pairs, diagonal, raw)
