"""
BVP module for the singular flux lab.
Handles the regularized two-point problems, the endpoint map V(c), the critical
value c*, the ordered solution family and the classification of regularized limits.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, sparse
from scipy.sparse.linalg import spsolve

from .config import LADDER_DEPTH, SCAN_SAMPLES, ZERO_KAPPA
from .errors import (
    BracketTooNarrow,
    CrossCheckMismatch,
    Inconclusive,
    InvalidParameter,
    MembershipFailure,
    NoConvergence,
    NoSolution,
)
from .grid import Grid, GridFn, l2_cells
from .nonlinearity import Nonlinearity, infimum_of
from .ode import IvpSolution, coercivity_constants, solve_ivp
from .verify import WeakSolutionReport, nonexistence_flags, recover_constant_c, weak_solution_report, zero_threshold

logger = logging.getLogger(__name__)

# Root scan
BRACKET_MARGIN = 1.01
ROOT_XTOL = 1e-10
ROOT_MERGE_FACTOR = 10.0
CROSS_CHECK_FACTOR = 10.0

# Newton cross-check
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-9
NEWTON_DAMPING = 3.0
NEWTON_MAX_DAMPING = 30
NEWTON_PERTURBATION = 0.05

# c* search
CSTAR_WIDTH = 1e-3
CSTAR_EXPANSIONS = 8

# Limit classification
SLOPE_REL = 0.05
STABLE_REL = 0.05


class BvpMethod(str, Enum):
    SHOOT_SCAN = "ShootScan"
    NEWTON_FD = "NewtonFD"


@dataclass(frozen=True, eq=False)
class BvpSolution:
    """u with u(0) = u(L) = 0, its constant c and a verification report."""

    u: GridFn
    c: float
    report: WeakSolutionReport
    method: BvpMethod = BvpMethod.SHOOT_SCAN
    cross_check: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {"c": self.c, "method": self.method.value, "report": self.report.to_dict()}
        if self.cross_check is not None:
            out["cross_check"] = self.cross_check
        return out


@dataclass(frozen=True)
class ScanReport:
    bracket: Tuple[float, float]
    samples: int
    endpoints: Tuple[float, ...]
    sign_changes: Tuple[Tuple[float, float], ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bracket": list(self.bracket),
            "samples": self.samples,
            "sign_changes": [list(pair) for pair in self.sign_changes],
        }


class BvpSolutions(list):
    """List of BvpSolution that also carries the scan settings."""

    def __init__(self, solutions: Sequence[BvpSolution] = (), scan: Optional[ScanReport] = None):
        super().__init__(solutions)
        self.scan = scan


# =====================================================================
# Endpoint map
# =====================================================================

def v_of_c(a: GridFn, g: GridFn, phi: Nonlinearity, c: float, grid: Grid, ladder_depth: int = LADDER_DEPTH) -> IvpSolution:
    """
    Cauchy solution V(c) of a v' = phi(v) + g + c, v(0) = 0.

    Raises:
        NoConvergence: for a singular phi, V(c)(L) falls below -tau_L
    """
    solution = solve_ivp(a, g.shifted(c), phi, grid, ladder_depth)
    logger.debug(f"V({c:.10g})(L) = {solution.endpoint:.6g}")
    if phi.singular_at_zero:
        tau = zero_threshold(grid)
        if solution.endpoint < -tau:
            raise NoConvergence(f"V({c:.6g})(L) = {solution.endpoint:.3e} is below -tau = {-tau:.3e}", c=c)
    return solution


def regularized_bracket(a: GridFn, g: GridFn, phi_n: Nonlinearity) -> float:
    """B with V(-B)(L) < 0 < V(B)(L) for a bounded phi_n."""
    alpha, beta = coercivity_constants(a)
    B = (beta / alpha + 1.0) * (l2_cells(g) / math.sqrt(g.grid.L) + phi_n.bound) * BRACKET_MARGIN
    return max(B, 1.0)


def as_boundary_solution(v: GridFn) -> GridFn:
    values = np.array(v.values)
    values[-1] = 0.0
    return GridFn(v.grid, values, zero_left=True, zero_right=True)


# =====================================================================
# Newton cross-check
# =====================================================================

def _fd_derivative(phi: Nonlinearity, s: np.ndarray) -> np.ndarray:
    eps = 1e-7 * (1.0 + np.abs(s))
    return (phi(s + eps) - phi(s - eps)) / (2.0 * eps)


def newton_fd(a: GridFn, g: GridFn, phi_n: Nonlinearity, u0: GridFn, c0: float) -> Tuple[GridFn, float]:
    """
    Damped Newton on the midpoint finite-difference system.

    Unknowns are the interior node values and c; each cell contributes
    a (u_j+1 - u_j)/dx - phi((u_j + u_j+1)/2) - g - c = 0.

    Raises:
        NoConvergence: no decrease of the residual or no convergence in budget
    """
    grid = u0.grid
    dx, n = grid.dx, grid.N
    a_cells = a.midpoint_values()
    g_cells = g.midpoint_values()

    def unpack(x: np.ndarray) -> Tuple[np.ndarray, float]:
        return np.concatenate([[0.0], x[:-1], [0.0]]), x[-1]

    def residual(x: np.ndarray) -> np.ndarray:
        u, c = unpack(x)
        return a_cells * np.diff(u) / dx - phi_n(0.5 * (u[:-1] + u[1:])) - g_cells - c

    rows = np.arange(n)
    x = np.concatenate([u0.values[1:-1], [c0]])
    r = residual(x)
    for iteration in range(NEWTON_MAX_ITER):
        norm = float(np.max(np.abs(r)))
        if norm <= NEWTON_TOL:
            u, c = unpack(x)
            logger.debug(f"NewtonFD converged in {iteration} iterations")
            return GridFn(grid, u, zero_left=True, zero_right=True), float(c)
        u, _ = unpack(x)
        slope = 0.5 * _fd_derivative(phi_n, 0.5 * (u[:-1] + u[1:]))
        lower = -a_cells / dx - slope
        upper = a_cells / dx - slope
        data = np.concatenate([lower[1:], upper[:-1], -np.ones(n)])
        r_idx = np.concatenate([rows[1:], rows[:-1], rows])
        c_idx = np.concatenate([rows[1:] - 1, rows[:-1], np.full(n, n - 1)])
        jacobian = sparse.csc_matrix((data, (r_idx, c_idx)), shape=(n, n))
        step = spsolve(jacobian, -r)

        t = 1.0
        for _ in range(NEWTON_MAX_DAMPING):
            trial = x + t * step
            r_trial = residual(trial)
            if float(np.max(np.abs(r_trial))) < norm:
                break
            t /= NEWTON_DAMPING
        else:
            raise NoConvergence("NewtonFD damping found no residual decrease", iteration=iteration)
        x, r = trial, r_trial
    raise NoConvergence(f"NewtonFD did not converge in {NEWTON_MAX_ITER} iterations")


def _cross_check(a: GridFn, g: GridFn, phi_n: Nonlinearity, solutions: List[BvpSolution]) -> Dict[str, Any]:
    first = solutions[0]
    grid = first.u.grid
    start = first.u.values * (1.0 + NEWTON_PERTURBATION * np.sin(np.pi * grid.nodes / grid.L))
    c0 = first.c + NEWTON_PERTURBATION * (1.0 + abs(first.c))
    try:
        u_newton, c_newton = newton_fd(a, g, phi_n, GridFn(grid, start), c0)
    except NoConvergence as e:
        logger.warning(f"NewtonFD cross-check did not converge for {phi_n.label}: {e}")
        return {"method": BvpMethod.NEWTON_FD.value, "converged": False, "error": str(e)}

    nearest = min(solutions, key=lambda s: abs(s.c - c_newton))
    distance = float(np.max(np.abs(u_newton.values - nearest.u.values)))
    limit = CROSS_CHECK_FACTOR * grid.dx
    record = {
        "method": BvpMethod.NEWTON_FD.value,
        "converged": True,
        "c": c_newton,
        "sup_distance": distance,
        "limit": limit,
    }
    if distance > limit:
        raise CrossCheckMismatch(f"ShootScan and NewtonFD differ by {distance:.3e} > {limit:.3e}", **record)
    return record


# =====================================================================
# Regularized problems
# =====================================================================

def solve_regularized_bvp(
    a: GridFn,
    g: GridFn,
    phi_n: Nonlinearity,
    grid: Grid,
    samples: int = SCAN_SAMPLES,
    cross_check: bool = True,
) -> BvpSolutions:
    """
    All solutions found by shooting for -(a u')' = -(phi_n(u))' - g' with bounded phi_n.

    Scans c over [-B, B] from the a priori bounds and refines every sign change
    of c -> V(c)(L) with brentq. Roots within a few tolerances of each other
    are merged, and each root is kept only when its profile satisfies the
    energy identity and equals V at its recovered constant. The first kept
    root is cross-checked with NewtonFD.

    Args:
        a: Coercive coefficient
        g: Datum
        phi_n: Bounded nonlinearity
        grid: Grid
        samples: Number of scan points
        cross_check: Run the NewtonFD comparison

    Returns:
        BvpSolutions (possibly empty) with the scan settings in `.scan`

    Raises:
        CrossCheckMismatch: ShootScan and NewtonFD disagree by more than 10 dx
    """
    if not phi_n.bounded:
        raise InvalidParameter(f"{phi_n.label} is not bounded; pass a member of an approximation family")
    if samples < 2:
        raise InvalidParameter(f"Need at least two scan samples, got {samples}")

    B = regularized_bracket(a, g, phi_n)
    cs = np.linspace(-B, B, samples)

    def endpoint(c: float) -> float:
        return v_of_c(a, g, phi_n, c, grid).endpoint

    values = [endpoint(c) for c in cs]
    roots, changes = [], []
    for i in range(samples - 1):
        e0, e1 = values[i], values[i + 1]
        xtol = ROOT_XTOL * (1.0 + max(abs(cs[i]), abs(cs[i + 1])))
        if e0 == 0.0:
            roots.append((float(cs[i]), xtol))
        elif e0 * e1 < 0.0:
            changes.append((float(cs[i]), float(cs[i + 1])))
            roots.append((float(optimize.brentq(endpoint, cs[i], cs[i + 1], xtol=xtol)), xtol))
    if values[-1] == 0.0:
        roots.append((float(cs[-1]), ROOT_XTOL * (1.0 + B)))
    scan = ScanReport((float(-B), float(B)), samples, tuple(values), tuple(changes))

    solutions = []
    for c in _merge_roots(roots):
        solution = _verified_root(a, g, phi_n, c, grid)
        if solution is not None:
            solutions.append(solution)

    if not solutions:
        logger.warning(f"No verified root of V(c)(L) for {phi_n.label} on [{-B:.4g}, {B:.4g}] with {samples} samples")
        return BvpSolutions([], scan)

    if cross_check:
        solutions[0] = replace(solutions[0], cross_check=_cross_check(a, g, phi_n, solutions))
    logger.info(f"Regularized BVP for {phi_n.label}: {len(solutions)} solution(s), c = {[round(s.c, 10) for s in solutions]}")
    return BvpSolutions(solutions, scan)


def _merge_roots(roots: Sequence[Tuple[float, float]]) -> List[float]:
    """Ascending roots with those closer than ROOT_MERGE_FACTOR times their tolerance merged."""
    merged: List[Tuple[float, float]] = []
    for c, xtol in sorted(roots):
        if merged and c - merged[-1][0] <= ROOT_MERGE_FACTOR * max(xtol, merged[-1][1]):
            continue
        merged.append((c, xtol))
    return [c for c, _ in merged]


def _verified_root(a: GridFn, g: GridFn, phi_n: Nonlinearity, c: float, grid: Grid) -> Optional[BvpSolution]:
    """
    BvpSolution for a root of c -> V(c)(L), or None when it fails re-verification.

    The root must satisfy the energy identity within the report tolerance and
    equal V at its own recovered constant within tau_L.
    """
    u = as_boundary_solution(v_of_c(a, g, phi_n, c, grid).v)
    report = weak_solution_report(a, u, g, phi_n)
    tau = zero_threshold(grid)
    try:
        recovered, gap = family_member_gap(a, u, g, phi_n)
    except MembershipFailure as e:
        logger.warning(f"Root c={c:.10g} for {phi_n.label} is not admissible: {e}")
        return None
    if not report.energy_gap <= report.tol or not gap <= tau:
        logger.warning(
            f"Dropping root c={c:.10g} for {phi_n.label}: energy gap {report.energy_gap:.3e} "
            f"(tol {report.tol:.3e}), gap to V({recovered:.6g}) {gap:.3e} (tau {tau:.3e})"
        )
        return None
    return BvpSolution(u, c, report)


# =====================================================================
# Critical value and family
# =====================================================================

@dataclass(frozen=True)
class CStar:
    value: float
    lo: float
    hi: float
    bound: float
    tau: float
    within_bound: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c_star": self.value,
            "lo": self.lo,
            "hi": self.hi,
            "bound": self.bound,
            "tau": self.tau,
            "within_bound": self.within_bound,
        }


def c_star_bound(a: GridFn, g: GridFn, phi: Nonlinearity) -> float:
    """(1/sqrt(L))(beta/alpha + 1)||g||_2 - inf phi."""
    alpha, beta = coercivity_constants(a)
    inf_phi, _ = infimum_of(phi)
    return (beta / alpha + 1.0) * l2_cells(g) / math.sqrt(g.grid.L) - inf_phi


def find_c_star(
    a: GridFn,
    g: GridFn,
    phi: Nonlinearity,
    grid: Grid,
    bracket: Tuple[float, float],
    kappa: float = ZERO_KAPPA,
    ladder_depth: int = LADDER_DEPTH,
    width: float = CSTAR_WIDTH,
) -> Union[CStar, NoSolution]:
    """
    Largest c with V(c)(L) <= tau_L, located by bisection.

    Returns NoSolution when g is bounded below. The bracket is widened by
    doubling steps when the indicator does not change across it.

    Raises:
        BracketTooNarrow: no change of the indicator within the expansion budget
    """
    flags = nonexistence_flags(g, phi)
    if flags.bounded_below and phi.singular_at_zero:
        logger.info(f"g is bounded below; no weak solution exists for {phi.label}")
        return NoSolution("g is bounded below, so no weak solution exists")

    lo, hi = (float(b) for b in bracket)
    if not lo < hi:
        raise InvalidParameter(f"Bracket must satisfy lo < hi, got {bracket}")
    tau = zero_threshold(grid, kappa)

    def passes(c: float) -> bool:
        return v_of_c(a, g, phi, c, grid, ladder_depth).endpoint <= tau

    span = hi - lo
    for k in range(CSTAR_EXPANSIONS + 1):
        if passes(lo):
            break
        if k == CSTAR_EXPANSIONS:
            raise BracketTooNarrow(f"V(c)(L) > tau for every tested c down to {lo:g}", bracket=[lo, hi])
        lo, hi = lo - span * 2 ** k, lo
    for k in range(CSTAR_EXPANSIONS + 1):
        if not passes(hi):
            break
        if k == CSTAR_EXPANSIONS:
            raise BracketTooNarrow(f"V(c)(L) <= tau for every tested c up to {hi:g}", bracket=[lo, hi])
        lo, hi = hi, hi + span * 2 ** k

    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid

    bound = c_star_bound(a, g, phi)
    result = CStar(value=lo, lo=lo, hi=hi, bound=bound, tau=tau, within_bound=bool(lo <= bound + tau))
    logger.info(f"c* for {phi.label} in [{lo:.6g}, {hi:.6g}], bound {bound:.6g}")
    return result


@dataclass(frozen=True, eq=False)
class FamilySample:
    c: float
    u: GridFn
    endpoint: float
    admissible: bool


@dataclass(frozen=True, eq=False)
class FamilyRecord:
    """Sampled map c -> U(c) with ordering and limit diagnostics."""

    c_star: Union[CStar, NoSolution, None]
    samples: Tuple[FamilySample, ...]
    ordering_verdict: bool
    vanishing_limit_trend: Tuple[Tuple[float, float], ...]
    continuity_moduli: Tuple[Tuple[float, float, float], ...]
    tau: float

    @property
    def vanishing_trend_ok(self) -> bool:
        """Sup norms do not increase as c decreases."""
        sups = [s for _, s in self.vanishing_limit_trend]
        return all(x <= y * (1.0 + 1e-12) for x, y in zip(sups, sups[1:]))

    def to_dict(self) -> Dict[str, Any]:
        c_star = None if self.c_star is None else self.c_star.to_dict()
        return {
            "c_star": c_star,
            "samples": [{"c": s.c, "endpoint": s.endpoint, "admissible": s.admissible} for s in self.samples],
            "ordering_verdict": self.ordering_verdict,
            "vanishing_limit_trend": [list(p) for p in self.vanishing_limit_trend],
            "vanishing_trend_ok": self.vanishing_trend_ok,
            "continuity_moduli": [list(m) for m in self.continuity_moduli],
            "tau": self.tau,
        }


def sweep_family(
    a: GridFn,
    g: GridFn,
    phi: Nonlinearity,
    grid: Grid,
    c_list: Sequence[float],
    kappa: float = ZERO_KAPPA,
    ladder_depth: int = LADDER_DEPTH,
    c_star: Union[CStar, NoSolution, None] = None,
) -> FamilyRecord:
    """
    U(c) = V(c) for each c, with the ordering verdict and the vanishing trend.

    Consecutive admissible samples (V(c)(L) <= tau) must be strictly ordered at
    every interior node.
    """
    c_values = [float(c) for c in c_list]
    if any(x >= y for x, y in zip(c_values, c_values[1:])):
        raise InvalidParameter(f"c_list must be strictly ascending, got {c_values}")
    tau = zero_threshold(grid, kappa)

    samples = []
    for c in c_values:
        v = v_of_c(a, g, phi, c, grid, ladder_depth).v
        end = float(v.values[-1])
        samples.append(FamilySample(c, v, end, end <= tau))

    admissible = [s for s in samples if s.admissible]
    ordering = all(
        bool(np.all(lower.u.values[1:-1] < upper.u.values[1:-1]))
        for lower, upper in zip(admissible, admissible[1:])
    )
    trend = tuple((s.c, float(np.max(np.abs(s.u.values)))) for s in admissible)
    moduli = tuple(
        (lower.c, upper.c, float(np.max(np.abs(upper.u.values - lower.u.values))))
        for lower, upper in zip(samples, samples[1:])
    )
    record = FamilyRecord(c_star, tuple(samples), ordering, trend, moduli, tau)
    logger.info(f"Family sweep over {len(samples)} values of c: ordering={ordering}, {len(admissible)} admissible")
    return record


def family_member_gap(
    a: GridFn, u: GridFn, g: GridFn, phi: Nonlinearity, ladder_depth: int = LADDER_DEPTH
) -> Tuple[float, float]:
    """Recover c for u, re-solve V(c) and return (c, sup |V(c) - u|)."""
    c = recover_constant_c(a, u, g, phi)
    v = v_of_c(a, g, phi, c, u.grid, ladder_depth).v
    return c, float(np.max(np.abs(v.values - u.values)))


# =====================================================================
# Limits of regularized runs
# =====================================================================

class LimitKind(str, Enum):
    ZERO = "ZeroLimit"
    WEAK = "WeakLimit"


@dataclass(frozen=True)
class LimitClassification:
    verdict: LimitKind
    evidence: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {"verdict": self.verdict.value, "evidence": self.evidence}


RunEntry = Tuple[float, Union[GridFn, BvpSolution], float, Nonlinearity]


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def classify_limit(run: Sequence[RunEntry], tau: Optional[float] = None) -> LimitClassification:
    """
    ZeroLimit or WeakLimit from the trends of a regularized run.

    Each entry is (n, u_n, c_n, phi_n). Trends are least-squares slopes against
    log10 n over the last half of the run.

    Raises:
        Inconclusive: the trends match neither pattern
    """
    entries = sorted(run, key=lambda e: e[0])
    if len(entries) < 2:
        raise Inconclusive("classify_limit needs at least two entries")
    ns, sups, cs, min_phi, phi_l2 = [], [], [], [], []
    for n, u, c, phi_n in entries:
        if isinstance(u, BvpSolution):
            u = u.u
        values = phi_n(u.midpoint_values())
        grid = u.grid
        ns.append(float(n))
        sups.append(float(np.max(np.abs(u.values))))
        cs.append(float(c))
        min_phi.append(float(np.min(values)))
        phi_l2.append(float(math.sqrt(np.sum(values * values) * u.grid.dx)))
    if tau is None:
        tau = zero_threshold(grid)

    half = max(2, math.ceil(len(ns) / 2))
    x = np.log10(np.asarray(ns[-half:]))

    def trend(values: List[float]) -> Tuple[float, float]:
        y = np.asarray(values[-half:])
        return _slope(x, y), max(1.0, float(np.mean(np.abs(y))))

    sup_slope, sup_scale = trend(sups)
    c_slope, c_scale = trend(cs)
    phi_slope, phi_scale = trend(min_phi)
    evidence = {
        "n": ns,
        "sup_norm": sups,
        "c": cs,
        "min_phi": min_phi,
        "phi_l2": phi_l2,
        "slopes": {"sup_norm": sup_slope, "c": c_slope, "min_phi": phi_slope},
        "tau": tau,
    }

    vanishing = sups[-1] <= tau or sup_slope < -SLOPE_REL * sup_scale
    if vanishing and c_slope < -SLOPE_REL * c_scale and phi_slope > SLOPE_REL * phi_scale:
        logger.info(f"Regularized run over n={ns} classifies as ZeroLimit")
        return LimitClassification(LimitKind.ZERO, evidence)

    c_stable = abs(cs[-1] - cs[-2]) <= STABLE_REL * max(1.0, abs(cs[-1]))
    l2_stable = abs(phi_l2[-1] - phi_l2[-2]) <= STABLE_REL * max(1.0, phi_l2[-1])
    if c_stable and l2_stable:
        logger.info(f"Regularized run over n={ns} classifies as WeakLimit")
        return LimitClassification(LimitKind.WEAK, evidence)

    logger.warning(f"Regularized run over n={ns} has mixed trends")
    raise Inconclusive("Limit trends match neither the zero nor the weak pattern", **evidence)
