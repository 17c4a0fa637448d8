"""Singular flux lab: solvers, constructions and checks for -(a u')' = -(phi(u))' - g'."""

# Errors
from .errors import (
    LabError,
    ConfigError,
    InvalidParameter,
    NoSolution,
)

# Nonlinearities
from .nonlinearity import (
    ApproxFamily,
    ApproxKind,
    IntegrabilityClass,
    Nonlinearity,
    PowerModel,
    ZetaTransform,
    antiderivative_psi,
    cap_at,
    check_reasonable_family,
    constant,
    eval_phi,
    integrability_class,
    make_approx,
    plus_shift_and_zeta,
    power,
    reflect,
    tabulated
)

# Grids
from .grid import (
    Grid,
    GridFn,
    Norms,
    differentiate,
    integrate,
    norms,
    resample
)

# Cauchy problems
from .ode import (
    IvpSolution,
    apriori_bound_C_R,
    pure_zeta_solve,
    solve_ivp
)

# Two-point problems
from .bvp import (
    BvpSolution,
    CStar,
    FamilyRecord,
    LimitKind,
    classify_limit,
    family_member_gap,
    find_c_star,
    solve_regularized_bvp,
    sweep_family,
    v_of_c
)

# Constructions
from .construct import (
    SeamSpec,
    TailFix,
    bump_solution,
    clipped_data,
    derive_datum,
    instability_schedule,
    power_seam_solution,
    stability_datum,
    stability_run,
    tail_fix
)

# Verification
from .verify import (
    ConeReport,
    MembershipReport,
    NonexistenceFlags,
    WeakSolutionReport,
    chain_rule_gap,
    forbidden_cone_check,
    membership_U,
    nonexistence_flags,
    recover_constant_c,
    weak_solution_report
)

# Scenarios and output
from .scenarios import (
    Scenario,
    load_scenario,
    run_scenario
)
from .emit import (
    emit_plot_data,
    save_json
)

__all__ = [
    # Errors
    "LabError",
    "ConfigError",
    "InvalidParameter",
    "NoSolution",
    # Nonlinearities
    "ApproxFamily",
    "ApproxKind",
    "IntegrabilityClass",
    "Nonlinearity",
    "PowerModel",
    "ZetaTransform",
    "antiderivative_psi",
    "cap_at",
    "check_reasonable_family",
    "constant",
    "eval_phi",
    "integrability_class",
    "make_approx",
    "plus_shift_and_zeta",
    "power",
    "reflect",
    "tabulated",
    # Grids
    "Grid",
    "GridFn",
    "Norms",
    "differentiate",
    "integrate",
    "norms",
    "resample",
    # Cauchy problems
    "IvpSolution",
    "apriori_bound_C_R",
    "pure_zeta_solve",
    "solve_ivp",
    # Two-point problems
    "BvpSolution",
    "CStar",
    "FamilyRecord",
    "LimitKind",
    "classify_limit",
    "family_member_gap",
    "find_c_star",
    "solve_regularized_bvp",
    "sweep_family",
    "v_of_c",
    # Constructions
    "SeamSpec",
    "TailFix",
    "bump_solution",
    "clipped_data",
    "derive_datum",
    "instability_schedule",
    "power_seam_solution",
    "stability_datum",
    "stability_run",
    "tail_fix",
    # Verification
    "ConeReport",
    "MembershipReport",
    "NonexistenceFlags",
    "WeakSolutionReport",
    "chain_rule_gap",
    "forbidden_cone_check",
    "membership_U",
    "nonexistence_flags",
    "recover_constant_c",
    "weak_solution_report",
    # Scenarios and output
    "Scenario",
    "load_scenario",
    "run_scenario",
    "emit_plot_data",
    "save_json"
]
