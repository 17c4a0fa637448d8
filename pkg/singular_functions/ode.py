"""
ODE module for the singular flux lab.
Handles the singular Cauchy problem a v' = phi(v) + h, v(0) = 0, solved along a
ladder of bounded regularizations, the pure zeta-transform solve and the
a priori bound C_R.
"""

import logging
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate

from .config import LADDER_DEPTH
from .errors import CoercivityViolation, InvalidParameter, NoConvergence, NoRootInBracket, RangeExceeded
from .grid import Grid, GridFn, l2_cells, norms
from .nonlinearity import Nonlinearity, ZetaTransform, cap_at, l1_norm_on, sup_outside, truncate, zeta_for_plus

logger = logging.getLogger(__name__)

# Scalar solves
SECANT_TOL = 1e-12
SECANT_MAX_ITER = 200
BRANCH_OFFSET = 1e-12
NEAREST_PIECES = 16

# Regularization ladder: truncation at 4^k, clamp radius 2^k times the previous sup
TRUNCATION_BASE = 4.0
CAP_BASE = 2.0
CONTRACTION_WINDOW = 3
CONTRACTION_FLOOR = 1e-12

# zeta table growth for pure_zeta_solve
ZETA_DOUBLINGS = 60


@dataclass(frozen=True, eq=False)
class IvpSolution:
    """Solution of a v' = phi(v) + h, v(0) = 0, with ladder diagnostics."""

    v: GridFn
    phi_of_v: GridFn
    ladder_trace: Tuple[Tuple[int, float], ...]
    positivity_certificate: bool
    phi_l2_estimate: float
    zeta_steps: int = 0

    @property
    def endpoint(self) -> float:
        return float(self.v.values[-1])

    def h1_norm(self) -> float:
        n = norms(self.v)
        return math.sqrt(n.l2 ** 2 + n.h1_semi ** 2)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "endpoint": self.endpoint,
            "ladder_trace": [list(step) for step in self.ladder_trace],
            "positivity_certificate": self.positivity_certificate,
            "phi_l2_estimate": self.phi_l2_estimate,
            "zeta_steps": self.zeta_steps,
        }


# =====================================================================
# Scalar root finding
# =====================================================================

def safeguarded_secant(
    F: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = SECANT_TOL,
    max_iter: int = SECANT_MAX_ITER,
) -> float:
    """
    Root of F between lo and hi by the Illinois variant of regula falsi.

    The end order does not matter. Iterates falling outside the bracket are
    replaced by the midpoint.

    Raises:
        NoRootInBracket: F has the same sign at both ends
    """
    f_lo, f_hi = F(lo), F(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise NoRootInBracket(f"No sign change on [{lo:.6g}, {hi:.6g}]", f_lo=f_lo, f_hi=f_hi)

    side = 0
    x = lo
    for _ in range(max_iter):
        x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not min(lo, hi) < x < max(lo, hi):
            x = 0.5 * (lo + hi)
        fx = F(x)
        if abs(fx) <= tol:
            return x
        if fx * f_hi > 0.0:
            hi, f_hi = x, fx
            if side == -1:
                f_lo *= 0.5
            side = -1
        else:
            lo, f_lo = x, fx
            if side == 1:
                f_hi *= 0.5
            side = 1
        if abs(hi - lo) <= 4.0 * sys.float_info.epsilon * max(1.0, abs(x)):
            return x
    return x


# =====================================================================
# Stepping
# =====================================================================

def _zeta_step(phi: Callable[[float], float], v: float, a: float, h_mid: float, h_jump: float, dx: float) -> Optional[float]:
    """
    Exact step of a w' = phi(w) + h with a and h frozen on the cell.

    Solves integral of 1/(phi + h) from v to w = dx/a. Returns None when the
    frozen problem is not safely positive on the cell.
    """
    p0 = phi(v) + h_mid
    if not p0 > 0.0 or h_jump > p0:
        return None
    w_hi = v + p0 * dx / a
    if not phi(w_hi) + h_mid > 0.0:
        return None
    target = dx / a

    def G(w: float) -> float:
        value, _ = integrate.quad(lambda s: 1.0 / (phi(s) + h_mid), v, w, limit=100)
        return value - target

    try:
        return safeguarded_secant(G, v, w_hi)
    except NoRootInBracket:
        return None


def _nearest_root(F: Callable[[float], float], v: float, far: float) -> float:
    """Root of F closest to v on the segment toward far, where F(v) and F(far) differ in sign."""
    f_v = F(v)
    start = v
    for k in range(1, NEAREST_PIECES + 1):
        end = v + (far - v) * k / NEAREST_PIECES
        f_end = F(end)
        if f_end == 0.0:
            return end
        if f_end * f_v < 0.0:
            return safeguarded_secant(F, start, end)
        start = end
    raise NoRootInBracket(f"No root between {v:.6g} and {far:.6g}")


def _midpoint_step(
    phi: Callable[[float], float], v: float, a: float, h: float, bound: float, dx: float, monotone: bool
) -> float:
    """
    Implicit midpoint step a(w - v)/dx = phi((v + w)/2) + h.

    The root taken is the one nearest to v in the direction of phi(v) + h.
    With phi non-increasing on s > 0 and v >= 0 the positive-midpoint branch
    holds a single root, which is bracketed directly.
    """
    r = 2.0 * (bound + abs(h)) * dx / a + BRANCH_OFFSET * (1.0 + abs(v))

    def F(w: float) -> float:
        return a * (w - v) / dx - phi(0.5 * (v + w)) - h

    f_v = F(v)
    if f_v == 0.0:
        return v
    upward = f_v < 0.0
    far = v + r if upward else v - r
    if monotone and v >= 0.0:
        if upward:
            return safeguarded_secant(F, v, far)
        lower = max(far, -v + BRANCH_OFFSET * (1.0 + v))
        if lower < v and F(lower) < 0.0:
            return safeguarded_secant(F, lower, v)
    return _nearest_root(F, v, far)


def _march(
    a_cells: np.ndarray,
    h_cells: np.ndarray,
    h_nodes: np.ndarray,
    member: Nonlinearity,
    grid: Grid,
    monotone: bool,
    hold_at_zero: bool,
):
    """
    One left-to-right pass with a bounded nonlinearity.

    With hold_at_zero a step from v >= 0 never ends below zero: the maximal
    solution of a singular problem stays at 0 while phi(0) + h <= 0.
    """
    dx = grid.dx
    n = grid.N
    phi = member.scalar
    bound = float(member.bound)
    small = math.sqrt(dx)
    v = np.zeros(n + 1)
    phi_cells = np.empty(n)
    zeta_steps = 0
    for j in range(n):
        vj, aj, hj = v[j], a_cells[j], h_cells[j]
        w = None
        if 0.0 <= vj < small and phi(vj) + hj > 0.0:
            w = _zeta_step(phi, vj, aj, hj, abs(h_nodes[j + 1] - h_nodes[j]), dx)
            if w is not None:
                zeta_steps += 1
        if w is None:
            w = _midpoint_step(phi, vj, aj, hj, bound, dx, monotone)
        if hold_at_zero and vj >= 0.0 and w < 0.0:
            w = 0.0
        v[j + 1] = w
        phi_cells[j] = aj * (w - vj) / dx - hj
    return v, phi_cells, zeta_steps


def _check_grid(f: GridFn, grid: Grid, name: str) -> None:
    if f.grid.N != grid.N or not math.isclose(f.grid.L, grid.L, rel_tol=1e-12):
        raise InvalidParameter(f"{name} lives on N={f.grid.N}, L={f.grid.L}; expected N={grid.N}, L={grid.L}")


def coercivity_constants(a: GridFn) -> Tuple[float, float]:
    """(alpha, beta) = (min a, max a) over nodes and cells."""
    cells = a.midpoint_values()
    return float(min(np.min(a.values), np.min(cells))), float(max(np.max(a.values), np.max(cells)))


def ladder_member(phi: Nonlinearity, k: int, previous_sup: float) -> Nonlinearity:
    """Bounded member of level k: truncation at 4^k, then clamp at 2^k*max(1, previous sup)."""
    return cap_at(truncate(phi, TRUNCATION_BASE ** k), CAP_BASE ** k * max(1.0, previous_sup))


def solve_ivp(
    a: GridFn,
    h: GridFn,
    phi: Nonlinearity,
    grid: Grid,
    ladder_depth: int = LADDER_DEPTH,
    alpha: Optional[float] = None,
) -> IvpSolution:
    """
    Solve a v' = phi(v) + h on [0, L] with v(0) = 0.

    A bounded phi is integrated directly. Otherwise the bounded members
    cap(truncate(phi, 4^k), M_k) are integrated for k = 1..ladder_depth and the
    deepest level is returned. Steps are implicit midpoint, replaced by the
    frozen-coefficient zeta step near v = 0 when phi(v) + h > 0 there. For a
    phi singular at 0 the levels follow the maximal solution: a step from
    v >= 0 never ends below zero.

    Args:
        a: Coefficient, bounded below by a positive constant
        h: Right-hand side
        phi: Nonlinearity
        grid: Grid
        ladder_depth: Number of regularization levels
        alpha: Optional lower bound required of a

    Returns:
        IvpSolution of the deepest level

    Raises:
        CoercivityViolation: a <= 0 or a < alpha somewhere
        NoConvergence: the ladder distances stop contracting
    """
    _check_grid(a, grid, "a")
    _check_grid(h, grid, "h")
    a_min, _ = coercivity_constants(a)
    if a_min <= 0.0 or (alpha is not None and a_min < alpha):
        raise CoercivityViolation(f"a has minimum {a_min:g}", alpha=alpha)
    if ladder_depth < 1:
        raise InvalidParameter(f"ladder_depth must be at least 1, got {ladder_depth}")

    a_cells = a.midpoint_values()
    h_cells = h.midpoint_values()
    monotone = phi.monotone_nonincreasing_on_positive

    trace = []
    if phi.bounded:
        v, phi_cells, zeta_steps = _march(a_cells, h_cells, h.values, phi, grid, monotone, False)
    else:
        v = None
        for k in range(1, ladder_depth + 1):
            previous_sup = 0.0 if v is None else float(np.max(np.abs(v)))
            member = ladder_member(phi, k, previous_sup)
            level, phi_cells, zeta_steps = _march(a_cells, h_cells, h.values, member, grid, monotone, phi.singular_at_zero)
            if v is not None:
                distance = float(np.max(np.abs(level - v)))
                trace.append((k, distance))
                logger.debug(f"Ladder level {k} for {phi.label}: sup distance {distance:.3e}")
            v = level
        distances = [d for _, d in trace]
        if len(distances) >= CONTRACTION_WINDOW:
            last = distances[-CONTRACTION_WINDOW:]
            floor = CONTRACTION_FLOOR * (1.0 + float(np.max(np.abs(v))))
            if all(x <= y for x, y in zip(last, last[1:])) and last[-1] > floor:
                raise NoConvergence(f"Ladder for {phi.label} does not contract", ladder_trace=trace)

    v_fn = GridFn(grid, v, zero_left=True)
    phi_of_v = GridFn.from_cells(grid, phi_cells)
    solution = IvpSolution(
        v=v_fn,
        phi_of_v=phi_of_v,
        ladder_trace=tuple(trace),
        positivity_certificate=bool(np.all(v[1:-1] > 0.0)),
        phi_l2_estimate=l2_cells(phi_of_v),
        zeta_steps=zeta_steps,
    )
    logger.debug(f"IVP for {phi.label} on N={grid.N}: v(L)={solution.endpoint:.6g}, zeta steps={zeta_steps}")
    return solution


# =====================================================================
# Pure zeta solve and a priori bound
# =====================================================================

def zeta_covering(phi_plus: Nonlinearity, target: float) -> ZetaTransform:
    """zeta table of phi_plus whose range reaches target, doubling s_max from 1."""
    s_max = 1.0
    for _ in range(ZETA_DOUBLINGS):
        table = zeta_for_plus(phi_plus, s_max)
        if table.zeta_max >= target:
            return table
        s_max *= 2.0
    raise RangeExceeded(f"zeta of {phi_plus.label} does not reach {target:g}")


def pure_zeta_solve(K: float, phi_plus: Nonlinearity, grid: Grid) -> GridFn:
    """
    w(x) = zeta_inv(K x), the solution of w' = K phi_plus(w) with w(0) = 0.

    Raises:
        RangeExceeded: K L is outside the reachable zeta range
    """
    if not K >= 0.0:
        raise InvalidParameter(f"K must be non-negative, got {K}")
    table = zeta_covering(phi_plus, K * grid.L)
    w = np.asarray(table.zeta_inv(np.minimum(K * grid.nodes, table.zeta_max)), dtype=float)
    w[0] = 0.0
    return GridFn(grid, w, zero_left=True)


def apriori_bound_C_R(phi: Nonlinearity, h: GridFn, alpha: float, L: float, R: float) -> float:
    """
    C_R = (L+1)[(sqrt(L) sup_{|s|>=R}|phi| + ||h||_2)/alpha + sqrt(||phi||_L1(-R,R))/sqrt(alpha)].

    Raises:
        NonIntegrableSingularity: phi is not integrable on (-R, R)
    """
    if not alpha > 0.0 or not R > 0.0:
        raise InvalidParameter(f"alpha and R must be positive, got alpha={alpha}, R={R}")
    l1 = l1_norm_on(phi, R)
    outside = sup_outside(phi, R)
    h_norm = l2_cells(h)
    return (L + 1.0) * ((math.sqrt(L) * outside + h_norm) / alpha + math.sqrt(l1) / math.sqrt(alpha))
