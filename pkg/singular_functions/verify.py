"""
Verification module for the singular flux lab.
Handles weak-solution reports, recovery of the constant c, membership in the
admissible set, non-existence diagnostics and the forbidden-cone check.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .config import ZERO_KAPPA
from .errors import Inconclusive, MembershipFailure, NonIntegrableSingularity
from .grid import GRADED_LEVELS, Grid, GridFn, graded_increments, l2_cells, summarize_graded, unit_rule
from .nonlinearity import IntegrabilityClass, Nonlinearity, antiderivative_psi, integrability_class

logger = logging.getLogger(__name__)

# Tolerances
BASE_TOL = 1e-3
REFERENCE_CELLS = 4096
RATIO_SLACK = 1e-6

# Block sizes for the bounded-below test, coarsest first
BLOCK_SIZES = (16, 8, 4, 2, 1)
BLOCK_DROP_REL = 0.01

# Cell kinds
REGULAR = 0
ZERO_LEFT = 1
ZERO_RIGHT = 2
SIGN_CHANGE = 3
BOTH_ZERO = 4


def default_tolerance(grid: Grid) -> float:
    """1e-3 at N=4096 cells per unit length, scaling as sqrt(dx)."""
    return BASE_TOL * math.sqrt(grid.dx / (grid.L / REFERENCE_CELLS))


def zero_threshold(grid: Grid, kappa: float = ZERO_KAPPA) -> float:
    """Discrete zero threshold tau_L = kappa*sqrt(dx)."""
    return kappa * math.sqrt(grid.dx)


# =====================================================================
# Cell profiles
# =====================================================================

@dataclass(frozen=True, eq=False)
class CellProfile:
    """
    Cell-by-cell shape of a grid function.

    A cell with one zero node carries the power law anchor*(t/dx)^exponent in
    the distance t from the zero; every other cell is linear.
    """

    kind: np.ndarray
    exponent: np.ndarray
    anchor: np.ndarray

    @property
    def kappa(self) -> np.ndarray:
        """Energy factor lambda^2/(2 lambda - 1) of each cell (1 on linear cells)."""
        lam = self.exponent
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(lam > 0.5, lam * lam / (2.0 * lam - 1.0), math.inf)
        return np.where(lam == 1.0, 1.0, k)

    @property
    def zero_cells(self) -> np.ndarray:
        return np.flatnonzero((self.kind == ZERO_LEFT) | (self.kind == ZERO_RIGHT))


def cell_profile(u: GridFn, singular: bool = True) -> CellProfile:
    """
    Classify the cells of u.

    Args:
        u: Grid function
        singular: Fit power laws at zero nodes; linear cells everywhere otherwise

    Returns:
        CellProfile with one entry per cell
    """
    v = u.values
    n = u.grid.N
    left, right = v[:-1], v[1:]
    kind = np.full(n, REGULAR, dtype=int)
    kind[(left == 0.0) & (right != 0.0)] = ZERO_LEFT
    kind[(left != 0.0) & (right == 0.0)] = ZERO_RIGHT
    kind[np.sign(left) * np.sign(right) < 0] = SIGN_CHANGE
    kind[(left == 0.0) & (right == 0.0)] = BOTH_ZERO

    exponent = np.ones(n)
    anchor = np.zeros(n)
    for j in np.flatnonzero(kind == ZERO_LEFT):
        anchor[j] = v[j + 1]
        if singular and j + 2 <= n:
            ratio = v[j + 2] / v[j + 1]
            if ratio > 1.0:
                exponent[j] = math.log2(ratio)
    for j in np.flatnonzero(kind == ZERO_RIGHT):
        anchor[j] = v[j]
        if singular and j >= 1:
            ratio = v[j - 1] / v[j]
            if ratio > 1.0:
                exponent[j] = math.log2(ratio)
    return CellProfile(kind, exponent, anchor)


def _profile_for(phi: Nonlinearity, u: GridFn) -> CellProfile:
    return cell_profile(u, singular=phi.singular_at_zero)


def cell_averages(phi: Nonlinearity, u: GridFn, profile: Optional[CellProfile] = None) -> np.ndarray:
    """
    x-average of phi(u) over each cell.

    Same-sign cells use 8-point Gauss-Legendre on the linear interpolant, so
    two nonlinearities that agree on the range of a cell give identical
    averages there. Cells touching a zero are graded along their power law;
    cells with both nodes at zero take phi(0). A divergent cell is inf.
    The profile defaults to the one phi implies for u.
    """
    profile = _profile_for(phi, u) if profile is None else profile
    integrals = cell_power_integrals(phi, u, profile)
    return integrals.values / u.grid.dx


# =====================================================================
# Graded cell integrals
# =====================================================================

@dataclass(frozen=True)
class CellIntegrals:
    """x-integrals of F(u) per cell plus the aggregated refinement test."""

    values: np.ndarray
    divergent: bool
    inconclusive: bool

    @property
    def total(self) -> float:
        if self.divergent:
            return math.inf
        return float(np.sum(self.values))


def cell_power_integrals(
    F: Callable[[np.ndarray], np.ndarray],
    u: GridFn,
    profile: CellProfile,
    divergent_at_zero: bool = False,
) -> CellIntegrals:
    """
    Integrate F(u(x)) over every cell, grading toward zeros of u.

    Zero cells follow the power-law profile, sign-change cells are split at
    the linear zero. The per-level increments of all graded cells are added
    up before the divergence test; each cell's own tail is extrapolated.
    With divergent_at_zero every cell touching a zero of u is divergent.
    """
    dx = u.grid.dx
    v = u.values
    left, right = v[:-1], v[1:]
    kind = profile.kind
    x01, w01 = unit_rule(8)
    values = np.zeros(u.grid.N)

    regular = kind == REGULAR
    points = left[regular, None] + (right - left)[regular, None] * x01[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        values[regular] = (np.asarray(F(points), dtype=float) @ w01) * dx
        values[kind == BOTH_ZERO] = dx * float(F(np.array(0.0)))

    levels = np.zeros(GRADED_LEVELS)
    for j in np.flatnonzero(kind != REGULAR):
        if kind[j] == BOTH_ZERO:
            continue
        if divergent_at_zero:
            values[j] = math.inf
            continue
        if kind[j] == SIGN_CHANGE:
            l1 = dx * left[j] / (left[j] - right[j])
            pieces = ((left[j], l1, 1.0), (right[j], dx - l1, 1.0))
        else:
            pieces = ((profile.anchor[j], dx, profile.exponent[j]),)
        increments = np.zeros(GRADED_LEVELS)
        for end_value, length, lam in pieces:
            if length <= 0.0:
                continue
            increments += graded_increments(
                lambda t, e=end_value, h=length, p=lam: F(e * (t / h) ** p), 0.0, length
            )
        summary = summarize_graded(increments)
        values[j] = summary.total
        levels += increments

    if not np.all(np.isfinite(values)):
        return CellIntegrals(values, True, False)
    base = float(np.sum(values) - np.sum(levels))
    aggregate = summarize_graded(levels, base=base)
    return CellIntegrals(values, aggregate.divergent, aggregate.inconclusive)


# =====================================================================
# Membership
# =====================================================================

@dataclass(frozen=True)
class MembershipReport:
    passed: bool
    zero_endpoints: bool
    phi_l2_squared: float
    divergent: bool
    inconclusive: bool
    h1_finite: bool
    min_zero_exponent: Optional[float]

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "zero_endpoints": self.zero_endpoints,
            "phi_l2_squared": self.phi_l2_squared,
            "divergent": self.divergent,
            "inconclusive": self.inconclusive,
            "h1_finite": self.h1_finite,
            "min_zero_exponent": self.min_zero_exponent,
        }


def membership_U(phi: Nonlinearity, u: GridFn) -> MembershipReport:
    """
    Grid surrogate of u in H1_0 with phi(u) in L2.

    Passes when u has zero endpoints, the graded refinement of the integral of
    phi(u)^2 settles, and every zero of u is approached with an exponent above
    1/2. An unresolved refinement is reported as inconclusive and fails.
    """
    profile = _profile_for(phi, u)
    zero_endpoints = bool(u.values[0] == 0.0 and u.values[-1] == 0.0)
    squared = cell_power_integrals(lambda s: phi(s) ** 2, u, profile)
    zero_cells = profile.zero_cells
    min_exponent = float(np.min(profile.exponent[zero_cells])) if zero_cells.size else None
    h1_finite = bool(np.all(np.isfinite(profile.kappa)))

    passed = zero_endpoints and h1_finite and not squared.divergent and not squared.inconclusive
    if squared.inconclusive:
        logger.warning(f"Membership of u for {phi.label} is inconclusive: phi(u)^2 refinement has a slow tail")
    report = MembershipReport(
        passed=bool(passed),
        zero_endpoints=zero_endpoints,
        phi_l2_squared=squared.total,
        divergent=squared.divergent,
        inconclusive=squared.inconclusive,
        h1_finite=h1_finite,
        min_zero_exponent=min_exponent,
    )
    logger.debug(f"Membership for {phi.label}: {report.to_dict()}")
    return report


# =====================================================================
# Constant recovery and weak-solution report
# =====================================================================

def _recover_from_means(a_cells: np.ndarray, means: np.ndarray, g_cells: np.ndarray) -> float:
    return float(-np.sum((means + g_cells) / a_cells) / np.sum(1.0 / a_cells))


def recover_constant_c(a: GridFn, u: GridFn, g: GridFn, phi: Nonlinearity) -> float:
    """
    The constant c of a u' = phi(u) + g + c.

    c = -(int phi(u)/a + int g/a) / int 1/a, with phi(u) taken as its graded
    x-average over each cell.

    Raises:
        MembershipFailure: u is not admissible for phi
    """
    membership = membership_U(phi, u)
    if not membership:
        raise MembershipFailure(f"u is not admissible for {phi.label}", membership=membership.to_dict())
    means = cell_averages(phi, u)
    return _recover_from_means(a.midpoint_values(), means, g.midpoint_values())


@dataclass(frozen=True)
class WeakSolutionReport:
    residual_sup: float
    recovered_c: float
    energy_gap: float
    apriori_ratio_h1: float
    apriori_ratio_sup: float
    chain_rule_gap: float
    membership: bool
    verdict: bool
    tol: float
    membership_detail: Optional[MembershipReport] = field(default=None, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "residual_sup": self.residual_sup,
            "recovered_c": self.recovered_c,
            "energy_gap": self.energy_gap,
            "apriori_ratio_h1": self.apriori_ratio_h1,
            "apriori_ratio_sup": self.apriori_ratio_sup,
            "chain_rule_gap": self.chain_rule_gap,
            "membership": self.membership,
            "verdict": self.verdict,
            "tol": self.tol,
        }
        if self.membership_detail is not None:
            out["membership_detail"] = self.membership_detail.to_dict()
        return out


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0.0:
        return 0.0 if numerator == 0.0 else math.inf
    return numerator / denominator


def _psi_finite_at_zeros(phi: Nonlinearity, u: GridFn, profile: CellProfile) -> bool:
    """Whether psi is finite on the nodes of every cell touching a zero of u."""
    touching = np.flatnonzero(np.isin(profile.kind, (ZERO_LEFT, ZERO_RIGHT, SIGN_CHANGE)))
    ends = np.concatenate([u.values[touching], u.values[touching + 1]])
    ends = ends[ends != 0.0]
    try:
        antiderivative_psi(phi, ends)
    except (NonIntegrableSingularity, Inconclusive):
        return False
    return True


def chain_rule_gap(phi: Nonlinearity, u: GridFn) -> float:
    """
    |int phi(u) u' - (psi(u(L)) - psi(u(0)))| with graded cell integrals.

    Infinite when phi is not integrable at a zero that u touches.
    """
    profile = _profile_for(phi, u)
    integrable = _psi_finite_at_zeros(phi, u, profile)
    integrals = cell_power_integrals(phi, u, profile, divergent_at_zero=not integrable)
    if integrals.divergent:
        return math.inf
    try:
        ends = antiderivative_psi(phi, float(u.values[-1])) - antiderivative_psi(phi, float(u.values[0]))
    except (NonIntegrableSingularity, Inconclusive):
        return math.inf
    lhs = float(np.sum(integrals.values / u.grid.dx * np.diff(u.values)))
    return abs(lhs - ends)


def energy_terms(a: GridFn, u: GridFn) -> Tuple[float, float]:
    """int a u'^2 and int u'^2 of the piecewise linear interpolant of u."""
    dx = u.grid.dx
    slopes = np.diff(u.values) / dx
    weighted = slopes * slopes * dx
    return float(np.sum(a.midpoint_values() * weighted)), float(np.sum(weighted))


def weak_solution_report(
    a: GridFn,
    u: GridFn,
    g: GridFn,
    phi: Nonlinearity,
    tol: Optional[float] = None,
    alpha: Optional[float] = None,
) -> WeakSolutionReport:
    """
    Check that u is a weak solution for (a, g, phi).

    Args:
        a: Coefficient
        u: Candidate with u(0) = u(L) = 0
        g: Datum
        phi: Nonlinearity
        tol: Tolerance for the residual and the energy gap (default scales with sqrt(dx))
        alpha: Coercivity constant (default min a)

    Returns:
        WeakSolutionReport; failures are encoded in the verdict
    """
    grid = u.grid
    dx = grid.dx
    tol = default_tolerance(grid) if tol is None else tol
    a_cells = a.midpoint_values()
    g_cells = g.midpoint_values()
    alpha = float(min(np.min(a.values), np.min(a_cells))) if alpha is None else alpha

    membership = membership_U(phi, u)
    try:
        means = cell_averages(phi, u)
    except (NonIntegrableSingularity, Inconclusive):
        means = np.full(grid.N, math.inf)
    if np.all(np.isfinite(means)):
        c = _recover_from_means(a_cells, means, g_cells)
        flux = (means + g_cells + c) / a_cells * dx
        predicted = np.concatenate([[0.0], np.cumsum(flux)])
        residual = float(np.max(np.abs(u.values - predicted)))
    else:
        c, residual = math.nan, math.inf

    energy_a, energy_1 = energy_terms(a, u)
    work = float(np.sum(g_cells * np.diff(u.values)))
    energy_gap = abs(energy_a - work) if math.isfinite(energy_a) else math.inf

    g_l2 = l2_cells(g)
    h1 = math.sqrt(energy_1) if math.isfinite(energy_1) else math.inf
    sup = float(np.max(np.abs(u.values)))
    ratio_h1 = _ratio(alpha * h1, g_l2)
    ratio_sup = _ratio(alpha * sup, math.sqrt(grid.L) * g_l2)
    chain_gap = chain_rule_gap(phi, u)

    verdict = (
        residual <= tol
        and membership.passed
        and energy_gap <= tol
        and ratio_h1 <= 1.0 + RATIO_SLACK
        and ratio_sup <= 1.0 + RATIO_SLACK
    )
    report = WeakSolutionReport(
        residual_sup=residual,
        recovered_c=c,
        energy_gap=energy_gap,
        apriori_ratio_h1=ratio_h1,
        apriori_ratio_sup=ratio_sup,
        chain_rule_gap=chain_gap,
        membership=membership.passed,
        verdict=bool(verdict),
        tol=tol,
        membership_detail=membership,
    )
    logger.info(
        f"Weak-solution report for {phi.label} on N={grid.N}: verdict={report.verdict}, "
        f"residual={residual:.3e}, energy_gap={energy_gap:.3e}, c={c:.6g}"
    )
    return report


# =====================================================================
# Non-existence diagnostics
# =====================================================================

class SignClass(str, Enum):
    UNRESTRICTED = "Unrestricted"
    NONPOSITIVE_ONLY = "NonpositiveOnly"
    NONNEGATIVE_ONLY = "NonnegativeOnly"
    EMPTY = "Empty"


_SIGN_CLASS = {
    IntegrabilityClass.BOTH: SignClass.UNRESTRICTED,
    IntegrabilityClass.LEFT_ONLY: SignClass.NONPOSITIVE_ONLY,
    IntegrabilityClass.RIGHT_ONLY: SignClass.NONNEGATIVE_ONLY,
    IntegrabilityClass.NONE: SignClass.EMPTY,
}


@dataclass(frozen=True)
class NonexistenceFlags:
    bounded_below: bool
    sign_class: SignClass
    u_empty: bool
    block_minima: Tuple[float, ...]
    integrability: IntegrabilityClass

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bounded_below": self.bounded_below,
            "sign_class": self.sign_class.value,
            "u_empty": self.u_empty,
            "block_minima": list(self.block_minima),
            "integrability": self.integrability.value,
        }


def block_minima(values: np.ndarray) -> Tuple[float, ...]:
    """Minimum of block means of the cell values for each block size, coarsest first."""
    out = []
    for size in BLOCK_SIZES:
        starts = np.arange(0, values.size, size)
        sums = np.add.reduceat(values, starts)
        counts = np.diff(np.append(starts, values.size))
        out.append(float(np.min(sums / counts)))
    return tuple(out)


def nonexistence_flags(g: GridFn, phi: Nonlinearity) -> NonexistenceFlags:
    """
    Diagnostics that rule weak solutions out.

    g counts as unbounded below when every halving of the block size drops the
    minimal block mean by more than 1% of max(1, |min|); otherwise it is
    bounded below, and with phi(0) = +inf no weak solution exists.

    Raises:
        Inconclusive: propagated from integrability_class
    """
    minima = block_minima(g.midpoint_values())
    drops = [
        minima[i] - minima[i + 1] > BLOCK_DROP_REL * max(1.0, abs(minima[i]))
        for i in range(len(minima) - 1)
    ]
    bounded_below = not all(drops)
    integrability = integrability_class(phi)
    sign_class = _SIGN_CLASS[integrability]
    flags = NonexistenceFlags(
        bounded_below=bounded_below,
        sign_class=sign_class,
        u_empty=integrability is IntegrabilityClass.NONE,
        block_minima=minima,
        integrability=integrability,
    )
    logger.info(f"Non-existence flags for {phi.label}: {flags.to_dict()}")
    return flags


# =====================================================================
# Forbidden cone
# =====================================================================

@dataclass(frozen=True)
class ConeReport:
    x0: float
    k: float
    delta: Optional[float]
    from_nodes: bool

    @property
    def passed(self) -> bool:
        return self.delta is not None and self.delta > 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {"x0": self.x0, "k": self.k, "delta": self.delta if self.passed else "Fail", "from_nodes": self.from_nodes}


def _side_reach(values: np.ndarray, i0: int, step: int, k: float, dx: float) -> int:
    """Number of consecutive nodes from x0 outward that stay outside the cone."""
    count = 0
    i = i0 + step
    while 0 <= i < values.size:
        distance = abs(i - i0) * dx
        if step * values[i] < k * distance:
            break
        count += 1
        i += step
    return count


def _subcell_reach(values: np.ndarray, i0: int, step: int, k: float, dx: float) -> Optional[float]:
    """Cone reach below one cell from the power law through the first two nodes."""
    i1, i2 = i0 + step, i0 + 2 * step
    if not (0 <= i1 < values.size):
        return None
    w1 = step * values[i1]
    if w1 <= 0.0:
        return None
    lam = 1.0
    if 0 <= i2 < values.size and step * values[i2] > w1:
        lam = math.log2(step * values[i2] / w1)
    if lam >= 1.0:
        return None
    return min(dx, (w1 / (k * dx ** lam)) ** (1.0 / (1.0 - lam)))


def forbidden_cone_check(w: GridFn, x0: float, k: float) -> ConeReport:
    """
    Largest delta with w >= k(x - x0) right of x0 and w <= k(x - x0) left of it.

    Nodes are scanned outward from x0; when no node qualifies the reach is
    estimated inside the first cell from the local power law.
    """
    grid = w.grid
    dx = grid.dx
    i0 = grid.node_index(x0)
    values = w.values
    sides = [step for step in (1, -1) if 0 <= i0 + step <= grid.N]

    reaches = []
    from_nodes = True
    for step in sides:
        count = _side_reach(values, i0, step, k, dx)
        if count > 0:
            reaches.append(count * dx)
            continue
        from_nodes = False
        sub = _subcell_reach(values, i0, step, k, dx)
        if sub is None or sub <= 0.0:
            logger.debug(f"Forbidden cone at x0={x0} with k={k} fails on side {step:+d}")
            return ConeReport(float(grid.nodes[i0]), k, None, False)
        reaches.append(sub)
    if not reaches:
        return ConeReport(float(grid.nodes[i0]), k, None, False)
    return ConeReport(float(grid.nodes[i0]), k, float(min(reaches)), from_nodes)
