"""
Nonlinearity module for the singular flux lab.
Handles singular nonlinearities phi, their antiderivative psi, the shifted
reciprocal transform (phi_plus, zeta, zeta_inv) and approximation families.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as poly
from scipy import integrate

from .errors import (
    Inconclusive,
    InfiniteInfimum,
    InvalidParameter,
    NonIntegrableSingularity,
    RangeExceeded,
    UnsupportedKind,
)
from .grid import GRADED_LEVELS, graded_increments, summarize_graded, unit_rule

logger = logging.getLogger(__name__)

ScalarFn = Callable[[float], float]
ArrayFn = Callable[[np.ndarray], np.ndarray]

# Infimum scan for non-model nonlinearities
SCAN_RADIUS = 1e6
SCAN_POINTS = 4000

# zeta table
ZETA_LEVELS = 40
ZETA_PANELS = 256

# Mollifier quadrature
MOLLIFIER_ORDER = 48


# =====================================================================
# Types
# =====================================================================

@dataclass(frozen=True)
class PowerModel:
    """phi(s) = c/|s|^gamma + smooth(s), with gamma allowed to differ by side."""

    c: float
    gamma_left: float
    gamma_right: float
    smooth_part: Tuple[float, ...] = ()

    @property
    def symmetric(self) -> bool:
        return self.gamma_left == self.gamma_right

    def gamma_for(self, s: float) -> float:
        return self.gamma_right if s > 0 else self.gamma_left

    def smooth(self, s):
        if not self.smooth_part:
            return np.zeros_like(s, dtype=float) if np.ndim(s) else 0.0
        return poly.polyval(s, self.smooth_part)


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """
    Evaluable phi: R -> R u {+inf} with structural metadata.

    `func` is the vectorized evaluation and `scalar` the per-point one; both
    return the extended value at s=0.
    """

    func: ArrayFn
    scalar: ScalarFn
    label: str
    singular_at_zero: bool = False
    model: Optional[PowerModel] = None
    tail_bound_radius: float = 1.0
    tail_bounded: bool = True
    monotone_nonincreasing_on_positive: bool = False
    bound: Optional[float] = None
    infimum: Optional[float] = None

    def __call__(self, s):
        if np.ndim(s) == 0:
            return self.scalar(float(s))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(self.func(np.asarray(s, dtype=float)), dtype=float)

    @property
    def left_gamma(self) -> Optional[float]:
        return None if self.model is None else self.model.gamma_left

    @property
    def right_gamma(self) -> Optional[float]:
        return None if self.model is None else self.model.gamma_right

    @property
    def bounded(self) -> bool:
        return self.bound is not None


class ApproxKind(str, Enum):
    TRUNCATION = "truncation"
    HOMOGRAPHIC = "homographic"
    IDENTITY = "identity"
    EXPONENT_DRIFT = "exponent-drift"
    MOLLIFIED = "mollified"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class ApproxFamily:
    """
    A schedule of approximations phi_n of a base nonlinearity.

    `drift` maps n to the (c_n, gamma_n) pair of an exponent-drift member;
    `builder` maps (base, n) to a member for the custom kind.
    """

    kind: ApproxKind
    base: Nonlinearity
    index_schedule: Tuple[float, ...]
    drift: Optional[Callable[[float], Tuple[float, float]]] = None
    builder: Optional[Callable[[Nonlinearity, float], Nonlinearity]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ApproxKind(self.kind))
        object.__setattr__(self, "index_schedule", tuple(self.index_schedule))
        if any(n <= 0 for n in self.index_schedule):
            raise InvalidParameter("Approximation indices must be positive")

    def members(self) -> List[Tuple[float, Nonlinearity]]:
        return [(n, make_approx(self, n)) for n in self.index_schedule]


class IntegrabilityClass(str, Enum):
    BOTH = "BothIntegrable"
    RIGHT_ONLY = "RightOnly"
    LEFT_ONLY = "LeftOnly"
    NONE = "NoneIntegrable"


# =====================================================================
# Constructors
# =====================================================================

def _model_label(model: PowerModel) -> str:
    if model.symmetric:
        core = f"{model.c:g}/|s|^{model.gamma_right:g}"
    else:
        core = f"{model.c:g}/|s|^({model.gamma_left:g}|{model.gamma_right:g})"
    if model.smooth_part:
        core += f"+poly{list(model.smooth_part)}"
    return core


def from_model(model: PowerModel, label: Optional[str] = None) -> Nonlinearity:
    """Nonlinearity for a (possibly piecewise) power model."""
    c, gl, gr = model.c, model.gamma_left, model.gamma_right
    coeffs = model.smooth_part
    at_zero = math.copysign(math.inf, c)

    def scalar(s: float) -> float:
        try:
            if s > 0.0:
                core = c * s ** -gr
            elif s < 0.0:
                core = c * (-s) ** -gl
            else:
                return at_zero
        except OverflowError:
            return at_zero
        return core + float(model.smooth(s))

    def func(s: np.ndarray) -> np.ndarray:
        a = np.abs(s)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            core = c * np.where(s > 0, a ** -gr, a ** -gl)
        core = np.where(s == 0, at_zero, core)
        return core + model.smooth(s)

    higher = coeffs[1:]
    infimum = None
    if c > 0 and len(coeffs) <= 1:
        infimum = coeffs[0] if coeffs else 0.0
    return Nonlinearity(
        func=func,
        scalar=scalar,
        label=label or _model_label(model),
        singular_at_zero=c > 0,
        model=model,
        tail_bound_radius=1.0,
        tail_bounded=len(coeffs) <= 1,
        monotone_nonincreasing_on_positive=c > 0 and all(a <= 0 for a in higher),
        bound=None,
        infimum=infimum,
    )


def power(
    c: float,
    gamma: Optional[float] = None,
    *,
    gamma_left: Optional[float] = None,
    gamma_right: Optional[float] = None,
    smooth_part: Sequence[float] = (),
) -> Nonlinearity:
    """
    Model nonlinearity c/|s|^gamma + smooth_part(s).

    Args:
        c: Nonzero amplitude (negative values describe the phi(0) = -inf variant)
        gamma: Exponent on both sides
        gamma_left: Exponent for s < 0, overrides gamma
        gamma_right: Exponent for s > 0, overrides gamma
        smooth_part: Polynomial coefficients, lowest degree first

    Returns:
        Nonlinearity carrying its PowerModel
    """
    gl = gamma_left if gamma_left is not None else gamma
    gr = gamma_right if gamma_right is not None else gamma
    if gl is None or gr is None:
        raise InvalidParameter("power model needs gamma or both gamma_left and gamma_right")
    if c == 0 or gl <= 0 or gr <= 0:
        raise InvalidParameter(f"power model needs c != 0 and positive exponents, got c={c}, gamma=({gl}, {gr})")
    model = PowerModel(float(c), float(gl), float(gr), tuple(float(a) for a in smooth_part))
    return from_model(model)


def constant(value: float) -> Nonlinearity:
    """phi(s) = value for every s."""
    value = float(value)
    return Nonlinearity(
        func=lambda s: np.full(np.shape(s), value),
        scalar=lambda s: value,
        label=f"const({value:g})",
        monotone_nonincreasing_on_positive=True,
        bound=abs(value),
        infimum=value,
    )


def tabulated(s_points: Sequence[float], phi_values: Sequence[float]) -> Nonlinearity:
    """Piecewise-linear phi through sample pairs, constant outside the table."""
    xs = np.asarray(s_points, dtype=float)
    ys = np.asarray(phi_values, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise InvalidParameter("tabulated phi needs matching 1-D sample lists with at least two points")
    if not np.all(np.diff(xs) > 0):
        raise InvalidParameter("tabulated phi needs strictly increasing s values")
    if not np.all(np.isfinite(ys)):
        raise InvalidParameter("tabulated phi values must be finite")
    positive = ys[xs >= 0]
    return Nonlinearity(
        func=lambda s: np.interp(s, xs, ys),
        scalar=lambda s: float(np.interp(s, xs, ys)),
        label=f"table[{xs.size}]",
        tail_bound_radius=float(max(abs(xs[0]), abs(xs[-1]))),
        monotone_nonincreasing_on_positive=bool(np.all(np.diff(positive) <= 0)),
        bound=float(np.max(np.abs(ys))),
        infimum=float(np.min(ys)),
    )


def from_callable(f: ScalarFn, label: str = "callable", vectorized: bool = False, **flags: Any) -> Nonlinearity:
    """Wrap a user function; flags are passed to Nonlinearity."""
    func = f if vectorized else np.vectorize(f, otypes=[float])
    return Nonlinearity(func=func, scalar=lambda s: float(f(s)), label=label, **flags)


def shifted(phi: Nonlinearity, offset: float) -> Nonlinearity:
    """phi + offset."""
    offset = float(offset)
    model = phi.model
    if model is not None:
        coeffs = list(model.smooth_part) or [0.0]
        coeffs[0] += offset
        return replace(from_model(replace(model, smooth_part=tuple(coeffs))), label=f"{phi.label}{offset:+g}")
    base_func, base_scalar = phi.func, phi.scalar
    return replace(
        phi,
        func=lambda s: base_func(s) + offset,
        scalar=lambda s: base_scalar(s) + offset,
        label=f"{phi.label}{offset:+g}",
        bound=None if phi.bound is None else phi.bound + abs(offset),
        infimum=None if phi.infimum is None else phi.infimum + offset,
    )


def eval_phi(phi: Nonlinearity, s):
    """phi(s); the +inf value appears only at s=0 for singular phi."""
    return phi(s)


def cap_at(phi: Nonlinearity, M: float) -> Nonlinearity:
    """phi evaluated at clamp(s, -M, M)."""
    if not M > 0:
        raise InvalidParameter(f"cap radius must be positive, got {M}")
    M = float(M)
    base_func, base_scalar = phi.func, phi.scalar

    def scalar(s: float) -> float:
        return base_scalar(M if s > M else (-M if s < -M else s))

    bound = phi.bound
    if bound is None and not phi.singular_at_zero and math.isfinite(base_scalar(0.0)):
        samples = np.linspace(-M, M, 4097)
        bound = float(np.max(np.abs(base_func(samples))))
    return Nonlinearity(
        func=lambda s: base_func(np.clip(s, -M, M)),
        scalar=scalar,
        label=f"cap({phi.label},{M:g})",
        singular_at_zero=phi.singular_at_zero,
        model=None,
        tail_bound_radius=min(phi.tail_bound_radius, M),
        tail_bounded=True,
        monotone_nonincreasing_on_positive=phi.monotone_nonincreasing_on_positive,
        bound=bound,
        infimum=None,
    )


def reflect(phi: Nonlinearity) -> Nonlinearity:
    """
    s -> -phi(-s).

    Turns a nonlinearity with phi(0) = -inf into one with phi(0) = +inf. The
    data transform with it: a solution u for datum g becomes -u for -g.
    """
    if phi.model is not None:
        m = phi.model
        smooth = tuple(a if k % 2 == 1 else -a for k, a in enumerate(m.smooth_part))
        reflected = PowerModel(-m.c, m.gamma_right, m.gamma_left, smooth)
        return replace(from_model(reflected), label=f"reflect({phi.label})")
    if not phi.scalar(0.0) == -math.inf:
        logger.debug(f"Reflecting {phi.label}, which is not -inf at 0")
    base_func, base_scalar = phi.func, phi.scalar
    return Nonlinearity(
        func=lambda s: -base_func(-s),
        scalar=lambda s: -base_scalar(-s),
        label=f"reflect({phi.label})",
        singular_at_zero=base_scalar(0.0) == -math.inf,
        tail_bound_radius=phi.tail_bound_radius,
        tail_bounded=phi.tail_bounded,
        bound=phi.bound,
    )


def mirror(phi: Nonlinearity) -> Nonlinearity:
    """s -> phi(-s)."""
    base_func, base_scalar = phi.func, phi.scalar
    return Nonlinearity(
        func=lambda s: base_func(-s),
        scalar=lambda s: base_scalar(-s),
        label=f"mirror({phi.label})",
        singular_at_zero=phi.singular_at_zero,
        tail_bound_radius=phi.tail_bound_radius,
        tail_bounded=phi.tail_bounded,
        bound=phi.bound,
        infimum=phi.infimum,
    )


# =====================================================================
# Approximation families
# =====================================================================

def truncate(phi: Nonlinearity, n: float) -> Nonlinearity:
    """T_n(phi): phi clipped to [-n, n]."""
    n = float(n)
    base_func, base_scalar = phi.func, phi.scalar

    def scalar(s: float) -> float:
        v = base_scalar(s)
        return n if v > n else (-n if v < -n else v)

    return Nonlinearity(
        func=lambda s: np.clip(base_func(s), -n, n),
        scalar=scalar,
        label=f"T{n:g}({phi.label})",
        tail_bound_radius=phi.tail_bound_radius,
        tail_bounded=True,
        monotone_nonincreasing_on_positive=phi.monotone_nonincreasing_on_positive,
        bound=n if phi.bound is None else min(n, phi.bound),
        infimum=None if phi.infimum is None else max(phi.infimum, -n),
    )


def homographic(phi: Nonlinearity, n: float) -> Nonlinearity:
    """phi/(1 + |phi|/n), equal to n where phi is +inf."""
    n = float(n)
    base_func, base_scalar = phi.func, phi.scalar

    def scalar(s: float) -> float:
        v = base_scalar(s)
        if math.isinf(v):
            return math.copysign(n, v)
        return v / (1.0 + abs(v) / n)

    def func(s):
        v = base_func(s)
        with np.errstate(invalid="ignore"):
            out = v / (1.0 + np.abs(v) / n)
        return np.where(np.isinf(v), np.sign(v) * n, out)

    bound = n if phi.bound is None else phi.bound / (1.0 + phi.bound / n)
    return Nonlinearity(
        func=func,
        scalar=scalar,
        label=f"H{n:g}({phi.label})",
        tail_bound_radius=phi.tail_bound_radius,
        tail_bounded=True,
        monotone_nonincreasing_on_positive=phi.monotone_nonincreasing_on_positive,
        bound=bound,
    )


def default_drift(n: float) -> Tuple[float, float]:
    """Multipliers (c_n/c, gamma_n/gamma) of the default exponent drift."""
    return 1.0 + 1.0 / n, n / (n + 1.0)


def exponent_drift(phi: Nonlinearity, n: float, drift: Optional[Callable] = None) -> Nonlinearity:
    """c_n/|s|^gamma_n + smooth part, with (c_n, gamma_n) -> (c, gamma)."""
    if phi.model is None:
        raise UnsupportedKind("exponent drift needs a power-model base")
    c_factor, gamma_factor = (drift or default_drift)(n)
    m = phi.model
    drifted = PowerModel(m.c * c_factor, m.gamma_left * gamma_factor, m.gamma_right * gamma_factor, m.smooth_part)
    return from_model(drifted)


def _mollifier_rule() -> Tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(MOLLIFIER_ORDER)
    rho = np.exp(-1.0 / (1.0 - t * t))
    weights = w * rho
    return t, weights / np.sum(weights)


def mollify(phi: Nonlinearity, n: float) -> Nonlinearity:
    """phi * rho_(1/n) with the standard bump kernel; continuous phi only."""
    if phi.singular_at_zero or not math.isfinite(phi.scalar(0.0)):
        raise UnsupportedKind("convolution is defined only for a continuous phi")
    n = float(n)
    t, weights = _mollifier_rule()
    base_func = phi.func

    def func(s):
        s = np.asarray(s, dtype=float)
        return base_func(s[..., None] - t / n) @ weights

    return Nonlinearity(
        func=func,
        scalar=lambda s: float(func(np.asarray(s, dtype=float))),
        label=f"M{n:g}({phi.label})",
        tail_bound_radius=phi.tail_bound_radius,
        tail_bounded=phi.tail_bounded,
        bound=phi.bound,
    )


def make_approx(family: ApproxFamily, n: float) -> Nonlinearity:
    """
    Member phi_n of an approximation family.

    Args:
        family: Approximation family
        n: Index, which must appear in the family schedule

    Returns:
        The member nonlinearity
    """
    if n not in family.index_schedule:
        raise InvalidParameter(f"Index {n} is not in the schedule {family.index_schedule}")
    base = family.base
    if family.kind is ApproxKind.TRUNCATION:
        return truncate(base, n)
    if family.kind is ApproxKind.HOMOGRAPHIC:
        return homographic(base, n)
    if family.kind is ApproxKind.IDENTITY:
        return base
    if family.kind is ApproxKind.EXPONENT_DRIFT:
        return exponent_drift(base, n, family.drift)
    if family.kind is ApproxKind.MOLLIFIED:
        return mollify(base, n)
    if family.builder is None:
        raise UnsupportedKind("custom family needs a builder")
    return family.builder(base, n)


# =====================================================================
# Antiderivative and integrability
# =====================================================================

def _psi_model(model: PowerModel, s: float) -> float:
    gamma = model.gamma_for(s)
    if gamma >= 1.0:
        side = "right" if s > 0 else "left"
        raise NonIntegrableSingularity(f"c/|s|^{gamma:g} is not integrable on the {side} of 0")
    core = math.copysign(1.0, s) * model.c * abs(s) ** (1.0 - gamma) / (1.0 - gamma)
    if model.smooth_part:
        core += float(poly.polyval(s, poly.polyint(model.smooth_part)))
    return core


def _graded_side(phi: Nonlinearity, s: float):
    return summarize_graded(graded_increments(phi.func, 0.0, s))


def antiderivative_psi(phi: Nonlinearity, s):
    """
    psi(s) = integral of phi from 0 to s.

    Closed form for power models; otherwise graded quadrature toward 0
    (40 halving levels with a geometric tail) for singular phi and adaptive
    quadrature for continuous phi.

    Raises:
        NonIntegrableSingularity: the graded quadrature diverges
        Inconclusive: divergence cannot be separated from a slow tail
    """
    if np.ndim(s) > 0:
        flat = [antiderivative_psi(phi, float(x)) for x in np.ravel(s)]
        return np.asarray(flat, dtype=float).reshape(np.shape(s))
    s = float(s)
    if s == 0.0:
        return 0.0
    if phi.model is not None:
        return _psi_model(phi.model, s)
    if math.isfinite(phi.scalar(0.0)):
        value, _ = integrate.quad(phi.scalar, 0.0, s, limit=200)
        return float(value)
    summary = _graded_side(phi, s)
    if summary.divergent:
        raise NonIntegrableSingularity(f"graded quadrature of {phi.label} diverges toward 0 from s={s:g}")
    if summary.inconclusive:
        raise Inconclusive(f"graded quadrature of {phi.label} has an unresolved tail at s={s:g}")
    return summary.total


def integrability_class(phi: Nonlinearity, delta: Optional[float] = None) -> IntegrabilityClass:
    """
    Classify the integrability of phi on (0, delta) and (-delta, 0).

    Exact from the exponents for power models; otherwise by divergence
    detection on the graded quadrature.
    """
    if phi.model is not None:
        right = phi.model.gamma_right < 1.0
        left = phi.model.gamma_left < 1.0
    elif math.isfinite(phi.scalar(0.0)):
        right = left = True
    else:
        delta = delta or phi.tail_bound_radius
        sides = []
        for s in (delta, -delta):
            summary = _graded_side(phi, s)
            if summary.inconclusive:
                raise Inconclusive(f"cannot decide integrability of {phi.label} near 0", side=s)
            sides.append(not summary.divergent)
        right, left = sides
    if right and left:
        return IntegrabilityClass.BOTH
    if right:
        return IntegrabilityClass.RIGHT_ONLY
    if left:
        return IntegrabilityClass.LEFT_ONLY
    return IntegrabilityClass.NONE


def l1_norm_on(phi: Nonlinearity, R: float) -> float:
    """Integral of |phi| over (-R, R)."""
    m = phi.model
    if m is not None and not m.smooth_part and m.gamma_left < 1.0 and m.gamma_right < 1.0:
        c = abs(m.c)
        return c * (R ** (1.0 - m.gamma_right) / (1.0 - m.gamma_right) + R ** (1.0 - m.gamma_left) / (1.0 - m.gamma_left))
    if math.isfinite(phi.scalar(0.0)):
        value, _ = integrate.quad(lambda s: abs(phi.scalar(s)), -R, R, limit=200)
        return float(value)
    total = 0.0
    for s in (R, -R):
        summary = summarize_graded(np.abs(graded_increments(lambda x: np.abs(phi(x)), 0.0, s)))
        if summary.divergent:
            raise NonIntegrableSingularity(f"{phi.label} is not integrable near 0")
        total += summary.total
    return float(total)


def sup_outside(phi: Nonlinearity, R: float) -> float:
    """Sup of |phi| over |s| >= R (sampled up to the scan radius for non-models)."""
    m = phi.model
    if m is not None and not m.smooth_part:
        return abs(m.c) * max(R ** -m.gamma_left, R ** -m.gamma_right)
    if not phi.tail_bounded:
        logger.warning(f"{phi.label} has no tail bound; sup outside [-{R:g}, {R:g}] is a sampled estimate")
    s = np.geomspace(R, max(SCAN_RADIUS, 2 * R), 2049)
    return float(np.max(np.abs(np.concatenate([phi(s), phi(-s)]))))


# =====================================================================
# Shifted reciprocal transform
# =====================================================================

def infimum_of(phi: Nonlinearity) -> Tuple[float, float]:
    """
    inf of phi over R and the scan radius used (0 for analytic values).

    Raises:
        InfiniteInfimum: the scan shows phi unbounded below
    """
    if phi.infimum is not None:
        return float(phi.infimum), 0.0
    s = np.geomspace(1e-12, SCAN_RADIUS, SCAN_POINTS)
    points = np.concatenate([-s[::-1], [0.0], s])
    values = phi(points)
    if np.any(np.isnan(values)) or np.any(values == -math.inf):
        raise InfiniteInfimum(f"{phi.label} takes the value -inf")
    radius = np.abs(points)
    mins = [float(np.min(values[radius <= r])) for r in (1e4, 1e5, 1e6)]
    drops = [mins[i] - mins[i + 1] for i in range(2)]
    if all(d > 0.01 * max(1.0, abs(mins[i])) for i, d in enumerate(drops)):
        raise InfiniteInfimum(f"{phi.label} keeps decreasing out to |s|={SCAN_RADIUS:g}", scan=mins)
    return float(np.min(values)), SCAN_RADIUS


def _zeta_knots(s_max: float) -> np.ndarray:
    panels = np.concatenate([[0.0], s_max * 0.5 ** np.arange(ZETA_LEVELS, -1, -1)])
    width = s_max / ZETA_PANELS
    knots = [0.0]
    for lo, hi in zip(panels[:-1], panels[1:]):
        pieces = max(1, int(math.ceil((hi - lo) / width - 1e-9)))
        knots.extend(lo + (hi - lo) * np.arange(1, pieces + 1) / pieces)
    knots = np.asarray(knots)
    knots[-1] = s_max
    return knots


@dataclass(frozen=True, eq=False)
class ZetaTransform:
    """
    zeta(s) = integral of 1/phi_plus over (0, s), tabulated on [0, s_max].

    zeta is strictly increasing with zeta(0) = 0; zeta_inv inverts it by
    bisection on the table.
    """

    phi_plus: Nonlinearity
    s_max: float
    infimum: float
    scan_radius: float
    knots: np.ndarray = field(repr=False)
    table: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, phi_plus: Nonlinearity, s_max: float, infimum: float = math.nan, scan_radius: float = 0.0) -> "ZetaTransform":
        knots = _zeta_knots(float(s_max))
        pieces = _reciprocal_integral(phi_plus, knots[:-1], knots[1:])
        table = np.concatenate([[0.0], np.cumsum(pieces)])
        return cls(phi_plus, float(s_max), infimum, scan_radius, knots, table)

    @property
    def zeta_max(self) -> float:
        return float(self.table[-1])

    def zeta(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(arr < 0) or np.any(arr > self.s_max * (1 + 1e-12)):
            raise RangeExceeded(f"zeta is tabulated on [0, {self.s_max:g}]")
        arr = np.minimum(arr, self.s_max)
        idx = np.clip(np.searchsorted(self.knots, arr, side="right") - 1, 0, len(self.knots) - 2)
        out = self.table[idx] + _reciprocal_integral(self.phi_plus, self.knots[idx], arr)
        return float(out) if np.ndim(s) == 0 else out

    def zeta_inv(self, z):
        arr = np.asarray(z, dtype=float)
        top = self.zeta_max
        if np.any(arr < 0) or np.any(arr > top * (1 + 1e-12)):
            raise RangeExceeded(f"zeta_inv is defined on [0, {top:g}]")
        arr = np.minimum(arr, top)
        idx = np.clip(np.searchsorted(self.table, arr, side="right") - 1, 0, len(self.knots) - 2)
        base = self.knots[idx]
        lo = base.copy()
        hi = self.knots[idx + 1].copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.table[idx] + _reciprocal_integral(self.phi_plus, base, mid) < arr
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(1.0, hi)):
                break
        out = np.where(arr == 0.0, 0.0, 0.5 * (lo + hi))
        return float(out) if np.ndim(z) == 0 else out


def _reciprocal_integral(phi_plus: Nonlinearity, lo, hi) -> np.ndarray:
    """Integral of 1/phi_plus over [lo, hi], elementwise, 8-point Gauss-Legendre."""
    x01, w01 = unit_rule(8)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    points = lo[..., None] + (hi - lo)[..., None] * x01
    with np.errstate(divide="ignore"):
        recip = 1.0 / phi_plus(points)
    return (recip @ w01) * (hi - lo)


def plus_shift(phi: Nonlinearity) -> Tuple[Nonlinearity, float, float]:
    """phi_plus = phi - inf phi + 1, with the infimum and the scan radius used."""
    inf_value, radius = infimum_of(phi)
    phi_plus = replace(shifted(phi, 1.0 - inf_value), label=f"plus({phi.label})", infimum=1.0)
    logger.debug(f"phi_plus for {phi.label}: inf={inf_value:g}, scan radius {radius:g}")
    return phi_plus, inf_value, radius


def plus_shift_and_zeta(phi: Nonlinearity, s_max: float) -> ZetaTransform:
    """
    phi_plus = phi - inf phi + 1 together with zeta and zeta_inv on [0, s_max].

    Raises:
        InfiniteInfimum: phi is unbounded below
    """
    if not s_max > 0:
        raise InvalidParameter(f"s_max must be positive, got {s_max}")
    phi_plus, inf_value, radius = plus_shift(phi)
    return ZetaTransform.build(phi_plus, s_max, infimum=inf_value, scan_radius=radius)


def zeta_for_plus(phi_plus: Nonlinearity, s_max: float) -> ZetaTransform:
    """zeta table of a nonlinearity that is already >= 1."""
    return ZetaTransform.build(phi_plus, s_max, infimum=math.nan)


# =====================================================================
# Reasonable approximations
# =====================================================================

@dataclass(frozen=True)
class ReasonableReport:
    sup_distances: Tuple[Tuple[float, float], ...]
    min_near_zero: Tuple[Tuple[float, float], ...]
    floor_near_zero: float
    converges_off_zero: bool
    diverges_near_zero: bool

    @property
    def verdict(self) -> bool:
        return self.converges_off_zero and self.diverges_near_zero

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sup_distances": [list(p) for p in self.sup_distances],
            "min_near_zero": [list(p) for p in self.min_near_zero],
            "floor_near_zero": self.floor_near_zero,
            "converges_off_zero": self.converges_off_zero,
            "diverges_near_zero": self.diverges_near_zero,
            "verdict": self.verdict,
        }


def _last_half_slope(values: Sequence[float]) -> float:
    tail = np.asarray(values[len(values) // 2 :], dtype=float)
    if tail.size < 2:
        return 0.0
    return float(np.polyfit(np.arange(tail.size), tail, 1)[0])


def check_reasonable_family(family: ApproxFamily, eta: float, R: float, tol: float) -> ReasonableReport:
    """
    Sampled test that a family is a reasonable approximation of its base.

    (i) the sup distance to phi on [eta, R] and [-R, -eta] must fall below tol
    with a non-increasing trend; (ii) when phi(0) = +inf, the minima of the
    members on [-eta, eta] must not decrease along the schedule and the last
    one must reach the infimum of phi there.
    """
    if not 0 < eta < R:
        raise InvalidParameter(f"need 0 < eta < R, got eta={eta}, R={R}")
    base = family.base
    off = np.linspace(eta, R, 513)
    off = np.concatenate([-off[::-1], off])
    near = np.concatenate([eta * 0.5 ** np.arange(GRADED_LEVELS + 1), np.linspace(0.0, eta, 513)])
    near = np.concatenate([-near, near])
    reference = base(off)
    floor = float(np.min(base(near[near != 0.0])))

    distances, minima = [], []
    for n, member in family.members():
        distances.append((n, float(np.max(np.abs(member(off) - reference)))))
        minima.append((n, float(np.min(member(near)))))

    d = [v for _, v in distances]
    converges = d[-1] <= tol and _last_half_slope(d) <= 0.0
    diverges = True
    if base.singular_at_zero:
        m = [v for _, v in minima]
        slack = tol * max(1.0, abs(floor))
        rising = all(later >= earlier - slack for earlier, later in zip(m, m[1:]))
        diverges = rising and m[-1] >= floor - slack
    logger.info(f"Reasonable-family check for {family.kind.value} of {base.label}: off-zero={converges}, near-zero={diverges}")
    return ReasonableReport(tuple(distances), tuple(minima), floor, bool(converges), bool(diverges))
