"""
Scenario module for the singular flux lab.
Handles scenario files (TOML), builds the objects they describe and runs one
experiment per scenario kind, writing CSV and JSON artifacts.
"""

import logging
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as poly

from . import config
from .bvp import (
    BvpSolution,
    classify_limit,
    family_member_gap,
    find_c_star,
    solve_regularized_bvp,
    sweep_family,
)
from .construct import (
    SeamSpec,
    bump_solution,
    clipped_data,
    derive_datum,
    instability_schedule,
    power_seam_solution,
    stability_run,
    tail_fix,
)
from .emit import emit_plot_data, save_json, write_ivp, write_pair, write_profile, write_sweep
from .errors import ConfigError, Inconclusive, LabError, NoSolution
from .grid import Grid, GridFn, l2_cells
from .nonlinearity import (
    ApproxFamily,
    ApproxKind,
    Nonlinearity,
    cap_at,
    constant,
    power,
    shifted,
    tabulated,
)
from .ode import apriori_bound_C_R, coercivity_constants, solve_ivp
from .verify import (
    forbidden_cone_check,
    membership_U,
    nonexistence_flags,
    recover_constant_c,
    weak_solution_report,
    zero_threshold,
)

logger = logging.getLogger(__name__)

KINDS = (
    "solve-ivp",
    "solve-bvp",
    "sweep-c",
    "find-cstar",
    "construct",
    "tail-fix",
    "verify",
    "alternative",
    "stability",
    "instability",
)

# Grid sizes allowed in scenario files
MIN_GRID_POWER = 5
MAX_GRID_POWER = 16

# Exit codes
EXIT_OK = 0
EXIT_VERIFICATION = 2
EXIT_NO_SOLUTION = 3

# Defaults for [run]
DEFAULT_BRACKET = (-1.0, 1.0)
DEFAULT_STABILITY_TOL = 1e-2


# =====================================================================
# Scenario files
# =====================================================================

@dataclass
class Scenario:
    """Parsed scenario file."""

    name: str
    kind: str
    grid: Grid
    phi: Dict[str, Any]
    a: Dict[str, Any] = field(default_factory=lambda: {"value": 1.0})
    g: Dict[str, Any] = field(default_factory=dict)
    seam: Optional[Dict[str, Any]] = None
    u: Optional[Dict[str, Any]] = None
    family: Optional[Dict[str, Any]] = None
    run: Dict[str, Any] = field(default_factory=dict)
    expect_solution: bool = True
    source: Optional[Path] = None

    @property
    def ladder_depth(self) -> int:
        return int(self.run.get("ladder_depth", config.LADDER_DEPTH))

    @property
    def kappa(self) -> float:
        return float(self.run.get("kappa", config.ZERO_KAPPA))

    @property
    def samples(self) -> int:
        return int(self.run.get("samples", config.SCAN_SAMPLES))

    @property
    def tol(self) -> Optional[float]:
        tol = self.run.get("tol")
        return None if tol is None else float(tol)


def _require(table: Dict[str, Any], key: str, where: str) -> Any:
    if key not in table:
        raise ConfigError(f"Missing field '{where}.{key}'", field=f"{where}.{key}")
    return table[key]


def _table(data: Dict[str, Any], key: str, required: bool = False) -> Optional[Dict[str, Any]]:
    value = data.get(key)
    if value is None:
        if required:
            raise ConfigError(f"Missing table [{key}]", field=key)
        return None
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be a table", field=key)
    return value


def _check_grid_size(N: int) -> None:
    if N < 2 ** MIN_GRID_POWER or N > 2 ** MAX_GRID_POWER or N & (N - 1):
        raise ConfigError(
            f"grid.N must be a power of two between 2^{MIN_GRID_POWER} and 2^{MAX_GRID_POWER}, got {N}",
            field="grid.N",
        )


def parse_scenario(data: Dict[str, Any], grid_n: Optional[int] = None, source: Optional[Path] = None) -> Scenario:
    """
    Validate a scenario mapping.

    Args:
        data: Parsed TOML document
        grid_n: Override for grid.N
        source: File the mapping came from

    Raises:
        ConfigError: missing or malformed fields
    """
    name = _require(data, "name", "scenario")
    kind = _require(data, "kind", "scenario")
    if kind not in KINDS:
        raise ConfigError(f"Unknown scenario kind '{kind}', expected one of {', '.join(KINDS)}", field="kind")

    grid_table = _table(data, "grid") or {}
    N = int(grid_n if grid_n is not None else grid_table.get("N", config.DEFAULT_GRID_N))
    _check_grid_size(N)
    L = float(grid_table.get("L", 1.0))
    if not L > 0:
        raise ConfigError(f"grid.L must be positive, got {L}", field="grid.L")

    phi = _table(data, "phi", required=True)
    _require(phi, "kind", "phi")
    scenario = Scenario(
        name=str(name),
        kind=kind,
        grid=Grid(L, N),
        phi=phi,
        a=_table(data, "a") or {"value": 1.0},
        g=_table(data, "g") or {},
        seam=_table(data, "seam"),
        u=_table(data, "u"),
        family=_table(data, "family"),
        run=_table(data, "run") or {},
        expect_solution=bool(data.get("expect_solution", True)),
        source=source,
    )
    # Building here surfaces field errors before any numerics run
    build_phi(scenario.phi)
    if scenario.family is not None:
        build_family(scenario.family, build_phi(scenario.phi))
    return scenario


def load_scenario(path: Path, grid_n: Optional[int] = None) -> Scenario:
    """
    Read and validate a TOML scenario file.

    Raises:
        ConfigError: unreadable file, TOML syntax errors (with line and column) or invalid fields
    """
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"Scenario file not found: {path}", path=str(path)) from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}", path=str(path)) from e
    scenario = parse_scenario(data, grid_n, source=path)
    logger.info(f"Loaded scenario '{scenario.name}' ({scenario.kind}) with N={scenario.grid.N}")
    return scenario


# =====================================================================
# Builders
# =====================================================================

def build_phi(table: Dict[str, Any]) -> Nonlinearity:
    """
    Nonlinearity from a [phi] table.

    Kinds: power, piecewise-power, tabulated, constant and capped (with a
    nested `base` table). Any kind accepts `cap_M`.
    """
    kind = _require(table, "kind", "phi")
    smooth = tuple(float(v) for v in table.get("smooth_part", ()))
    try:
        if kind == "power":
            phi = power(float(table.get("c", 1.0)), float(_require(table, "gamma", "phi")), smooth_part=smooth)
        elif kind == "piecewise-power":
            phi = power(
                float(table.get("c", 1.0)),
                gamma_left=float(_require(table, "gamma_left", "phi")),
                gamma_right=float(_require(table, "gamma_right", "phi")),
                smooth_part=smooth,
            )
        elif kind == "tabulated":
            phi = tabulated(_require(table, "table_s", "phi"), _require(table, "table_phi", "phi"))
        elif kind == "constant":
            phi = constant(float(_require(table, "value", "phi")))
        elif kind == "capped":
            phi = build_phi(_require(table, "base", "phi"))
            if "cap_M" not in table:
                raise ConfigError("Missing field 'phi.cap_M'", field="phi.cap_M")
        else:
            raise ConfigError(f"Unknown phi kind '{kind}'", field="phi.kind")
        if "cap_M" in table:
            phi = cap_at(phi, float(table["cap_M"]))
    except ConfigError:
        raise
    except (LabError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid [phi] table: {e}", field="phi") from e
    return phi


def _alternating(base: Nonlinearity, n: float) -> Nonlinearity:
    return shifted(base, (-1.0) ** int(n))


FAMILY_BUILDERS: Dict[str, Callable[[Nonlinearity, float], Nonlinearity]] = {
    "alternating": _alternating,
}


def build_family(table: Dict[str, Any], phi: Nonlinearity) -> ApproxFamily:
    """ApproxFamily from a [family] table with `kind` and `schedule`."""
    kind = _require(table, "kind", "family")
    schedule = tuple(float(n) for n in _require(table, "schedule", "family"))
    try:
        if kind in FAMILY_BUILDERS:
            return ApproxFamily(ApproxKind.CUSTOM, phi, schedule, builder=FAMILY_BUILDERS[kind])
        return ApproxFamily(ApproxKind(kind), phi, schedule)
    except ValueError as e:
        raise ConfigError(f"Unknown family kind '{kind}'", field="family.kind") from e
    except LabError as e:
        raise ConfigError(f"Invalid [family] table: {e}", field="family") from e


def build_function(table: Dict[str, Any], grid: Grid, where: str) -> GridFn:
    """Constant (`value`) or polynomial (`coeffs`, lowest degree first) grid function."""
    if "value" in table:
        return GridFn.constant(grid, float(table["value"]))
    if "coeffs" in table:
        coeffs = [float(v) for v in table["coeffs"]]
        return GridFn.from_function(grid, lambda x: poly.polyval(x, coeffs))
    raise ConfigError(f"[{where}] needs 'value' or 'coeffs'", field=where)


def build_seam(table: Dict[str, Any]) -> SeamSpec:
    """SeamSpec from a [seam] table; scalar entries apply to every segment."""
    points = tuple(float(p) for p in table.get("points", ()))
    segments = len(points) + 1

    def per_segment(key: str) -> Tuple[float, ...]:
        value = _require(table, key, "seam")
        if isinstance(value, (int, float)):
            return (float(value),) * segments
        return tuple(float(v) for v in value)

    try:
        return SeamSpec(
            points=points,
            lambda_right=per_segment("lambda_right"),
            lambda_left=per_segment("lambda_left"),
            K_right=per_segment("K_right"),
            K_left=per_segment("K_left"),
            delta=table.get("delta"),
            connector_eta=table.get("connector_eta"),
        )
    except LabError as e:
        raise ConfigError(f"Invalid [seam] table: {e}", field="seam") from e


def build_profile(table: Dict[str, Any], grid: Grid) -> GridFn:
    """Profile from a [u] table; only `kind = "bump"` (K, lambda) is supported."""
    kind = _require(table, "kind", "u")
    if kind != "bump":
        raise ConfigError(f"Unknown profile kind '{kind}'", field="u.kind")
    try:
        return bump_solution(float(table.get("K", 1.0)), float(_require(table, "lambda", "u")), grid)
    except LabError as e:
        raise ConfigError(f"Invalid [u] table: {e}", field="u") from e


@dataclass
class Problem:
    """Objects built from a scenario."""

    grid: Grid
    phi: Nonlinearity
    a: GridFn
    g: Optional[GridFn]
    family: Optional[ApproxFamily]
    u: Optional[GridFn] = None
    injected_c: Optional[float] = None


def build_problem(scenario: Scenario) -> Problem:
    """
    Grid functions and nonlinearity of a scenario.

    The profile u comes from [seam] or from [u]. With `g.from = "construct"`
    g is derived from u with the constant `g.c`.
    """
    grid = scenario.grid
    phi = build_phi(scenario.phi)
    a = build_function(scenario.a, grid, "a")
    family = None if scenario.family is None else build_family(scenario.family, phi)
    problem = Problem(grid, phi, a, None, family)

    if scenario.seam is not None:
        problem.u = power_seam_solution(build_seam(scenario.seam), grid, phi)
    elif scenario.u is not None:
        problem.u = build_profile(scenario.u, grid)
    if scenario.g.get("from") == "construct":
        if problem.u is None:
            raise ConfigError("g.from = 'construct' needs a [seam] or [u] table", field="g.from")
        problem.injected_c = float(scenario.g.get("c", 0.0))
        problem.g = derive_datum(a, problem.u, phi, problem.injected_c)
    elif scenario.g:
        problem.g = build_function(scenario.g, grid, "g")
    return problem


def _need(value, what: str):
    if value is None:
        raise ConfigError(f"This scenario kind needs {what}", field=what)
    return value


def _run_list(scenario: Scenario, key: str) -> List[float]:
    return [float(v) for v in _require(scenario.run, key, "run")]


# =====================================================================
# Runners
# =====================================================================

RunResult = Tuple[Dict[str, Any], int]


def _verdict_exit(ok: bool) -> int:
    return EXIT_OK if ok else EXIT_VERIFICATION


def _no_solution(scenario: Scenario, outcome: NoSolution, result: Dict[str, Any]) -> RunResult:
    result.update(outcome.to_dict())
    if scenario.expect_solution:
        logger.warning(f"Scenario '{scenario.name}' expected a solution: {outcome.reason}")
        result["success"] = False
        return result, EXIT_NO_SOLUTION
    result["success"] = True
    return result, EXIT_OK


def run_solve_ivp(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    g = _need(problem.g, "g")
    c = float(scenario.run.get("c", 0.0))
    h = g.shifted(c)
    solution = solve_ivp(problem.a, h, problem.phi, problem.grid, scenario.ladder_depth)
    write_ivp(out_dir / f"{scenario.name}__ivp.csv", solution)
    alpha, _ = coercivity_constants(problem.a)
    R = float(scenario.run.get("R", 1.0))
    try:
        bound = apriori_bound_C_R(problem.phi, h, alpha, problem.grid.L, R)
    except LabError as e:
        logger.warning(f"No a priori bound for {problem.phi.label}: {e}")
        bound = None
    sup = float(np.max(np.abs(solution.v.values)))
    within = bound is None or sup <= bound
    result = {"success": within, "c": c, "ivp": solution.to_dict(), "sup_norm": sup, "C_R": bound, "R": R}
    return result, _verdict_exit(within)


def _members(problem: Problem) -> List[Tuple[float, Nonlinearity]]:
    if problem.family is not None:
        return problem.family.members()
    if not problem.phi.bounded:
        raise ConfigError("A singular phi needs a [family] of bounded approximations", field="family")
    return [(1.0, problem.phi)]


def run_solve_bvp(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    g = _need(problem.g, "g")
    cross_check = bool(scenario.run.get("cross_check", True))
    entries, all_ok = [], True
    for n, phi_n in _members(problem):
        solutions = solve_regularized_bvp(problem.a, g, phi_n, problem.grid, scenario.samples, cross_check)
        for i, solution in enumerate(solutions):
            write_profile(out_dir / f"{scenario.name}__u_n{n:g}_{i}.csv", solution.u)
            all_ok = all_ok and solution.report.verdict
        entries.append({"n": n, "label": phi_n.label, "scan": solutions.scan.to_dict(), "solutions": [s.to_dict() for s in solutions]})
        if not solutions:
            return _no_solution(scenario, NoSolution(f"No solution found for {phi_n.label}"), {"runs": entries})
    return {"success": all_ok, "runs": entries}, _verdict_exit(all_ok)


def _c_star(scenario: Scenario, problem: Problem, g: GridFn):
    bracket = tuple(float(b) for b in scenario.run.get("bracket", DEFAULT_BRACKET))
    return find_c_star(problem.a, g, problem.phi, problem.grid, bracket, scenario.kappa, scenario.ladder_depth)


def _recovered(problem: Problem, g: GridFn, u: GridFn) -> float:
    values = np.array(u.values)
    values[-1] = 0.0
    try:
        return recover_constant_c(problem.a, GridFn(u.grid, values), g, problem.phi)
    except LabError:
        return math.nan


def run_find_cstar(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    g = _need(problem.g, "g")
    outcome = _c_star(scenario, problem, g)
    result: Dict[str, Any] = {"flags": nonexistence_flags(g, problem.phi).to_dict()}
    if isinstance(outcome, NoSolution):
        return _no_solution(scenario, outcome, result)
    result["c_star"] = outcome.to_dict()
    ok = outcome.within_bound
    if problem.injected_c is not None:
        result["recovered_c"] = problem.injected_c
        ok = ok and outcome.hi >= problem.injected_c
    result["success"] = ok
    return result, _verdict_exit(ok)


def run_sweep_c(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    g = _need(problem.g, "g")
    c_star = None
    if "c_offsets" in scenario.run:
        c_star = _c_star(scenario, problem, g)
        if isinstance(c_star, NoSolution):
            return _no_solution(scenario, c_star, {"samples": []})
        c_list = [c_star.value + float(d) for d in scenario.run["c_offsets"]]
    else:
        c_list = _run_list(scenario, "c_list")
    record = sweep_family(problem.a, g, problem.phi, problem.grid, c_list, scenario.kappa, scenario.ladder_depth, c_star)
    recovered = [_recovered(problem, g, s.u) if s.admissible else math.nan for s in record.samples]
    write_sweep(out_dir / f"{scenario.name}__sweep.csv", record, recovered)
    for i, sample in enumerate(record.samples):
        write_profile(out_dir / f"{scenario.name}__u_c{i:02d}.csv", sample.u)
    if config.WRITE_PLOT_DATA:
        emit_plot_data(record, out_dir, scenario.name)
    ok = record.ordering_verdict and record.vanishing_trend_ok
    result = {"success": ok, "family": record.to_dict(), "recovered_c": recovered}
    return result, _verdict_exit(ok)


def run_construct(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    u = _need(problem.u, "seam")
    c = float(scenario.g.get("c", scenario.run.get("c", 0.0)))
    g = problem.g if problem.injected_c is not None else derive_datum(problem.a, u, problem.phi, c)
    report = weak_solution_report(problem.a, u, g, problem.phi, scenario.tol)
    write_pair(out_dir, scenario.name, u, g)
    if config.WRITE_PLOT_DATA:
        emit_plot_data(report, out_dir, scenario.name, profile=u)
    ok = report.verdict and abs(report.recovered_c - c) <= report.tol
    return {"success": ok, "injected_c": c, "report": report.to_dict()}, _verdict_exit(ok)


def run_tail_fix(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    g = _need(problem.g, "g")
    delta = float(_require(scenario.run, "delta", "run"))
    fix = tail_fix(problem.a, g, problem.phi, delta, problem.grid, scenario.kappa, scenario.ladder_depth)
    write_pair(out_dir, scenario.name, fix.u_hat, fix.g_hat)
    if config.WRITE_PLOT_DATA:
        emit_plot_data(fix.report, out_dir, scenario.name, profile=fix.u_hat)
    ok = fix.report.verdict and fix.u_hat.values[-1] == 0.0
    return {"success": ok, "tail_fix": fix.to_dict()}, _verdict_exit(ok)


def run_verify(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    g = _need(problem.g, "g")
    flags = nonexistence_flags(g, problem.phi)
    result: Dict[str, Any] = {"flags": flags.to_dict()}
    if problem.u is None:
        # Without a candidate only the data-level diagnostics apply
        ok = not (flags.bounded_below and problem.phi.singular_at_zero)
        result["success"] = ok == scenario.expect_solution
        return result, _verdict_exit(result["success"])

    u = problem.u
    report = weak_solution_report(problem.a, u, g, problem.phi, scenario.tol)
    result["membership"] = membership_U(problem.phi, u).to_dict()
    result["report"] = report.to_dict()
    if "cone_x0" in scenario.run:
        cone = forbidden_cone_check(u, float(scenario.run["cone_x0"]), float(scenario.run.get("cone_k", 1.0)))
        result["cone"] = cone.to_dict()
        if config.WRITE_PLOT_DATA:
            emit_plot_data(cone, out_dir, scenario.name, profile=u)
    if scenario.run.get("member_gap", False) and report.membership:
        c, gap = family_member_gap(problem.a, u, g, problem.phi, scenario.ladder_depth)
        result["member_gap"] = {"c": c, "gap": gap}
    write_profile(out_dir / f"{scenario.name}__u.csv", u)
    result["success"] = report.verdict == scenario.expect_solution
    return result, _verdict_exit(result["success"])


def _first_solution(problem: Problem, g: GridFn, phi_n: Nonlinearity, samples: int) -> Optional[BvpSolution]:
    solutions = solve_regularized_bvp(problem.a, g, phi_n, problem.grid, samples, cross_check=False)
    return solutions[0] if solutions else None


def _classify(entries, tau: float) -> Dict[str, Any]:
    try:
        return classify_limit(entries, tau).to_dict()
    except Inconclusive as e:
        return {"verdict": "Inconclusive", "evidence": e.details}


def _trends(classification: Dict[str, Any]) -> Dict[str, List[Tuple[float, float]]]:
    evidence = classification["evidence"]
    ns = evidence.get("n", [])
    return {name: list(zip(ns, evidence[name])) for name in ("sup_norm", "c", "min_phi", "phi_l2") if name in evidence}


def run_alternative(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    g = _need(problem.g, "g")
    family = _need(problem.family, "family")
    entries = []
    for n, phi_n in family.members():
        solution = _first_solution(problem, g, phi_n, scenario.samples)
        if solution is None:
            logger.warning(f"No regularized solution for n={n:g}; dropped from the run")
            continue
        write_profile(out_dir / f"{scenario.name}__u_n{n:g}.csv", solution.u)
        entries.append((n, solution, solution.c, phi_n))
    tau = zero_threshold(problem.grid, scenario.kappa)
    classification = _classify(entries, tau)
    if config.WRITE_PLOT_DATA and entries:
        emit_plot_data(_trends(classification), out_dir, scenario.name)
    expected = scenario.run.get("expect_verdict")
    ok = classification["verdict"] != "Inconclusive" and (expected is None or classification["verdict"] == expected)
    result = {"success": ok, "verdict": classification["verdict"], "classification": classification}
    return result, _verdict_exit(ok)


def _stability_half(scenario: Scenario, problem: Problem, out_dir: Path) -> Tuple[bool, Dict[str, Any]]:
    u = _need(problem.u, "seam")
    g = _need(problem.g, "g")
    family = _need(problem.family, "family")
    steps = stability_run(problem.a, g, problem.phi, family, u)
    tol = float(scenario.run.get("stability_tol", DEFAULT_STABILITY_TOL))
    for step in steps:
        if step.solution is not None:
            write_profile(out_dir / f"{scenario.name}__u_n{step.n:g}.csv", step.solution.u)
    trends = {
        "datum_distance": [(s.n, s.datum_distance) for s in steps],
        "sup_distance": [(s.n, s.sup_distance) for s in steps],
    }
    if config.WRITE_PLOT_DATA:
        emit_plot_data(trends, out_dir, scenario.name)
    ok = bool(steps) and steps[-1].sup_distance <= tol
    return ok, {"steps": [s.to_dict() for s in steps], "tol": tol}


def run_stability(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    ok, result = _stability_half(scenario, problem, out_dir)
    return {"success": ok, **result}, _verdict_exit(ok)


def run_instability(scenario: Scenario, problem: Problem, out_dir: Path) -> RunResult:
    """
    Stability and instability on the same constructed pair (u, g).

    The instability data clip g at the levels of run.clip (default 2^n), so
    each one is bounded below and they approach g in L2 as the levels rise.
    """
    g = _need(problem.g, "g")
    family = _need(problem.family, "family")
    if "eps" in scenario.run:
        eps = _run_list(scenario, "eps")
    else:
        eps = [2.0 ** -n for n in range(1, int(scenario.run.get("count", 4)) + 1)]
    levels = _run_list(scenario, "clip") if "clip" in scenario.run else [2.0 ** n for n in range(1, len(eps) + 1)]
    if len(levels) != len(eps):
        raise ConfigError(f"run.clip needs one level per eps, got {len(levels)} and {len(eps)}", field="run.clip")

    stable, stability = _stability_half(scenario, problem, out_dir)
    g_bar = clipped_data(g, levels)
    schedule = instability_schedule(g_bar, family, eps, problem.a, problem.grid, scenario.samples)
    classification = _classify(schedule.diagonal, zero_threshold(problem.grid, scenario.kappa))
    distances = [
        l2_cells(GridFn(problem.grid, d.values - g.values, d.midpoint_values() - g.midpoint_values())) for d in g_bar
    ]
    for (n, k), entry in zip(schedule, schedule.diagonal):
        write_profile(out_dir / f"{scenario.name}__v_n{n}_k{k:g}.csv", entry[1].u)
    if config.WRITE_PLOT_DATA:
        emit_plot_data(_trends(classification), out_dir, f"{scenario.name}_diagonal")
    ok = stable and classification["verdict"] == "ZeroLimit"
    result = {
        "success": ok,
        "stability": stability,
        "instability": {
            "clip": levels,
            "datum_distance": distances,
            "schedule": schedule.to_dict(),
            "verdict": classification["verdict"],
            "classification": classification,
        },
    }
    return result, _verdict_exit(ok)


RUNNERS: Dict[str, Callable[[Scenario, Problem, Path], RunResult]] = {
    "solve-ivp": run_solve_ivp,
    "solve-bvp": run_solve_bvp,
    "sweep-c": run_sweep_c,
    "find-cstar": run_find_cstar,
    "construct": run_construct,
    "tail-fix": run_tail_fix,
    "verify": run_verify,
    "alternative": run_alternative,
    "stability": run_stability,
    "instability": run_instability,
}


def run_loaded(scenario: Scenario, out: Optional[str] = None) -> Tuple[int, Dict[str, Any]]:
    """
    Run a parsed scenario and write summary.json next to its artifacts.

    Errors raised by the numerics are recorded in the summary with their code.
    """
    out_dir = Path(config.resolve_out_dir(out)) / scenario.name
    summary: Dict[str, Any] = {
        "name": scenario.name,
        "kind": scenario.kind,
        "grid": {"L": scenario.grid.L, "N": scenario.grid.N},
        "expect_solution": scenario.expect_solution,
    }
    try:
        problem = build_problem(scenario)
        summary["phi"] = problem.phi.label
        result, exit_code = RUNNERS[scenario.kind](scenario, problem, out_dir)
    except ConfigError:
        raise
    except LabError as e:
        logger.error(f"Scenario '{scenario.name}' failed: {e}")
        result, exit_code = {"success": False, **e.to_dict()}, e.exit_code
    summary.update(result)
    summary["exit_code"] = exit_code
    save_json(out_dir / "summary.json", summary)
    logger.info(f"Scenario '{scenario.name}' finished with exit code {exit_code}")
    return exit_code, summary


def run_scenario(path: Path, out: Optional[str] = None, grid_n: Optional[int] = None, kind: Optional[str] = None) -> int:
    """
    Load and run one scenario file.

    Args:
        path: Scenario TOML file
        out: Output directory from the command line
        grid_n: Override for grid.N
        kind: Kind requested on the command line, which must match the file

    Returns:
        Exit code: 0 success, 2 verification failure, 3 unexpected NoSolution,
        64 configuration error, 1 other failures
    """
    try:
        scenario = load_scenario(path, grid_n)
        if kind is not None and kind != scenario.kind:
            raise ConfigError(f"Command kind '{kind}' does not match scenario kind '{scenario.kind}'", field="kind")
        exit_code, _ = run_loaded(scenario, out)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return e.exit_code
    return exit_code
