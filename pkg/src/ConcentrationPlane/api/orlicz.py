"""
Orlicz N-Functions
Evaluation, inversion, differentiation, Young-Fenchel conjugation and axiom validation
"""

import csv
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize

from errors import ConfigError, DomainError, UnboundedConjugateError
from schemas import PropertyCheck, ValidationReport
from settings import settings


logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

_ROOT_XTOL = 1e-15
_ROOT_ITERATIONS = 500
_VALIDATION_RTOL = 1e-9
_BETAS = (1.5, 2.0, 4.0, 10.0)


class OrliczKind(str, Enum):
    QUADRATIC = "quadratic"
    SCALED_QUADRATIC = "scaled-quadratic"
    POWER = "power"
    EXP = "exp-type"
    XLOGX = "xlogx"
    TABULATED = "tabulated"
    CUSTOM = "custom"
    CONJUGATE = "conjugate"


class OrliczFunction(BaseModel):
    """
    An even convex gauge phi with phi(0) = 0 and superlinear growth.

    Built-in kinds carry closed forms; `tabulated` stores a convex
    interpolant as knots of a piecewise linear phi'; `custom` wraps a
    vectorized callable; `conjugate` is the numerical Young-Fenchel
    transform of `base`. Instances are immutable.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: OrliczKind
    name: str
    params: Dict[str, float] = {}
    analytic_conjugate: bool = False
    analytic_inverse: bool = False
    func: Optional[Callable[[np.ndarray], Any]] = Field(default=None, exclude=True, repr=False)
    knots: Tuple[float, ...] = Field(default=(), repr=False)
    knot_slopes: Tuple[float, ...] = Field(default=(), repr=False)
    base: Optional["OrliczFunction"] = Field(default=None, exclude=True, repr=False)


OrliczFunction.model_rebuild()


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def quadratic(a: float = 0.5) -> OrliczFunction:
    """phi(x) = a x^2 (a = 1/2 is the sub-Gaussian gauge)"""
    if a <= 0:
        raise DomainError(f"quadratic coefficient must be positive, got {a}")
    name = "quadratic" if a == 0.5 else f"quadratic(a={a:g})"
    return OrliczFunction(
        kind=OrliczKind.QUADRATIC, name=name, params={"a": float(a)},
        analytic_conjugate=True, analytic_inverse=True
    )


def scaled_quadratic() -> OrliczFunction:
    """phi(x) = x^2, normalized so that phi^{-1}(1) = 1"""
    return OrliczFunction(
        kind=OrliczKind.SCALED_QUADRATIC, name="scaled-quadratic", params={"a": 1.0},
        analytic_conjugate=True, analytic_inverse=True
    )


def power(p: float) -> OrliczFunction:
    """phi(x) = |x|^p / p for p > 1"""
    if not p > 1:
        raise DomainError(f"power exponent must exceed 1, got {p}")
    return OrliczFunction(
        kind=OrliczKind.POWER, name=f"power(p={p:g})", params={"p": float(p)},
        analytic_conjugate=True, analytic_inverse=True
    )


def exp_type() -> OrliczFunction:
    """phi(x) = exp|x| - |x| - 1"""
    return OrliczFunction(kind=OrliczKind.EXP, name="exp-type", analytic_conjugate=True)


def xlogx() -> OrliczFunction:
    """phi(x) = (1+|x|) ln(1+|x|) - |x|, the conjugate of exp-type"""
    return OrliczFunction(kind=OrliczKind.XLOGX, name="xlogx", analytic_conjugate=True)


def custom(func: Callable[[np.ndarray], Any], name: str = "custom") -> OrliczFunction:
    """Wrap a vectorized callable; it is evaluated at |x| except by the evenness check"""
    return OrliczFunction(kind=OrliczKind.CUSTOM, name=name, func=func)


def from_table(xs: Sequence[float], values: Sequence[float], name: str = "tabulated") -> OrliczFunction:
    """
    Convex interpolant of tabulated (x, phi(x)) pairs with strictly increasing x >= 0.

    phi' is piecewise linear through (0, 0) and the secant slopes placed
    at segment midpoints, extrapolated linearly past the last midpoint;
    phi is its exact integral. Slopes that decrease are raised to the
    running maximum so the interpolant stays convex.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size < 1:
        raise DomainError("table needs matching one-dimensional x and phi(x) columns")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("table entries must be finite")
    if x[0] < 0 or np.any(np.diff(x) <= 0):
        raise DomainError("table x values must be nonnegative and strictly increasing")
    if x[0] == 0:
        if y[0] != 0:
            raise DomainError(f"phi(0) must be 0, table has {y[0]}")
    else:
        x = np.concatenate([[0.0], x])
        y = np.concatenate([[0.0], y])
    if x.size < 2:
        raise DomainError("table needs at least one positive x")

    slopes = np.diff(y) / np.diff(x)
    if slopes[0] < 0:
        raise DomainError("tabulated phi must be increasing on x > 0")
    convex_slopes = np.maximum.accumulate(slopes)
    corrected = int(np.count_nonzero(convex_slopes != slopes))
    if corrected:
        logger.warning(f"Tabulated {name}: raised {corrected} secant slopes to keep the interpolant convex")

    midpoints = 0.5 * (x[:-1] + x[1:])
    return OrliczFunction(
        kind=OrliczKind.TABULATED, name=name,
        knots=tuple(np.concatenate([[0.0], midpoints]).tolist()),
        knot_slopes=tuple(np.concatenate([[0.0], convex_slopes]).tolist()),
    )


def load_csv(path: Union[str, Path], name: Optional[str] = None) -> OrliczFunction:
    """Load a tabulated function from a CSV of (x, phi(x)) rows; a header row is skipped"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Orlicz table not found: {path}")

    xs, values = [], []
    with path.open(newline="") as handle:
        for row_number, row in enumerate(csv.reader(handle)):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                x, value = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if row_number == 0:
                    continue
                raise DomainError(f"{path}:{row_number + 1}: expected two numeric columns, got {row}")
            xs.append(x)
            values.append(value)

    return from_table(xs, values, name=name or path.stem)


def parse_phi(spec: str) -> OrliczFunction:
    """
    Resolve a textual specification.

    Accepted: quadratic, scaled-quadratic, power:<p>, exp (or exp-type),
    xlogx, csv:<path>.
    """
    head, _, arg = spec.strip().partition(":")
    head = head.lower()
    if head == "quadratic":
        return quadratic(float(arg)) if arg else quadratic()
    if head == "scaled-quadratic":
        return scaled_quadratic()
    if head == "power":
        if not arg:
            raise ConfigError("power needs an exponent, e.g. power:3")
        return power(float(arg))
    if head in ("exp", "exp-type"):
        return exp_type()
    if head == "xlogx":
        return xlogx()
    if head == "csv":
        return load_csv(arg)
    raise ConfigError(f"unknown Orlicz function '{spec}'")


def standard_grid() -> np.ndarray:
    """Log-spaced validation grid on [1e-3, 1e2]"""
    return np.logspace(-3, 2, 121)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _finite_array(x: ArrayLike, what: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")
    return arr


def _result(arr: np.ndarray) -> Union[float, np.ndarray]:
    return float(arr) if np.ndim(arr) == 0 else arr


def _quadratic_coefficient(phi: OrliczFunction) -> float:
    return phi.params.get("a", 0.5 if phi.kind == OrliczKind.QUADRATIC else 1.0)


def _tabulated_pieces(phi: OrliczFunction, ax: np.ndarray):
    knots = np.asarray(phi.knots)
    slopes = np.asarray(phi.knot_slopes)
    gradients = np.empty_like(knots)
    gradients[:-1] = np.diff(slopes) / np.diff(knots)
    gradients[-1] = gradients[-2]
    integrals = np.concatenate([[0.0], np.cumsum(0.5 * (slopes[:-1] + slopes[1:]) * np.diff(knots))])

    idx = np.clip(np.searchsorted(knots, ax, side="right") - 1, 0, knots.size - 1)
    dx = ax - knots[idx]
    return integrals[idx], slopes[idx], gradients[idx], dx


def _evaluate_abs(phi: OrliczFunction, ax: np.ndarray) -> np.ndarray:
    kind = phi.kind
    with np.errstate(over="ignore", invalid="ignore"):
        if kind in (OrliczKind.QUADRATIC, OrliczKind.SCALED_QUADRATIC):
            return _quadratic_coefficient(phi) * ax ** 2
        if kind == OrliczKind.POWER:
            p = phi.params["p"]
            return ax ** p / p
        if kind == OrliczKind.EXP:
            return np.expm1(ax) - ax
        if kind == OrliczKind.XLOGX:
            return (1.0 + ax) * np.log1p(ax) - ax
        if kind == OrliczKind.TABULATED:
            integral, slope, gradient, dx = _tabulated_pieces(phi, ax)
            return integral + slope * dx + 0.5 * gradient * dx ** 2
        if kind == OrliczKind.CUSTOM:
            return np.asarray(phi.func(ax), dtype=float)
        if kind == OrliczKind.CONJUGATE:
            return _numeric_conjugate(phi.base, ax)[0]
    raise DomainError(f"unsupported Orlicz kind {kind}")


def evaluate(phi: OrliczFunction, x: ArrayLike) -> Union[float, np.ndarray]:
    """phi(|x|); accepts scalars or arrays"""
    arr = _finite_array(x)
    return _result(_evaluate_abs(phi, np.abs(arr)))


def _raw(phi: OrliczFunction, x: np.ndarray) -> np.ndarray:
    """Evaluation without folding x to |x| (custom callables only differ)"""
    if phi.kind == OrliczKind.CUSTOM:
        return np.asarray(phi.func(x), dtype=float)
    return _evaluate_abs(phi, np.abs(x))


def derivative(phi: OrliczFunction, x: ArrayLike) -> Union[float, np.ndarray]:
    """phi'(x), odd in x"""
    arr = _finite_array(x)
    ax = np.abs(arr)
    sign = np.sign(arr)
    kind = phi.kind

    with np.errstate(over="ignore", invalid="ignore"):
        if kind in (OrliczKind.QUADRATIC, OrliczKind.SCALED_QUADRATIC):
            out = 2.0 * _quadratic_coefficient(phi) * ax
        elif kind == OrliczKind.POWER:
            out = ax ** (phi.params["p"] - 1.0)
        elif kind == OrliczKind.EXP:
            out = np.expm1(ax)
        elif kind == OrliczKind.XLOGX:
            out = np.log1p(ax)
        elif kind == OrliczKind.TABULATED:
            _, slope, gradient, dx = _tabulated_pieces(phi, ax)
            out = slope + gradient * dx
        elif kind == OrliczKind.CONJUGATE:
            out = _numeric_conjugate(phi.base, ax)[1]
        else:
            h = settings.derivative_rel_step * np.maximum(1.0, ax)
            return _result((_raw(phi, arr + h) - _raw(phi, arr - h)) / (2.0 * h))

    return _result(sign * out)


# ---------------------------------------------------------------------------
# Inversion
# ---------------------------------------------------------------------------

def _doubling_bracket(short: Callable[[np.ndarray], np.ndarray], size: np.ndarray) -> np.ndarray:
    """Upper ends doubled from 1 while short(hi) holds, stopping at the bracket cap"""
    hi = np.ones_like(size, dtype=float)
    cap = settings.conjugate_bracket_cap
    while True:
        grow = short(hi) & (hi < cap)
        if not grow.any():
            return hi
        hi = np.where(grow, 2.0 * hi, hi)


def _scalar(fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[float], float]:
    return lambda x: float(np.asarray(fn(np.array([x])), dtype=float)[0])


def _solve_increasing(fn: Callable[[np.ndarray], np.ndarray], target: np.ndarray, what: str) -> np.ndarray:
    """Solve fn(x) = target for x >= 0 with fn nondecreasing: doubling bracket, then brentq per element"""
    target = np.asarray(target, dtype=float)
    hi = _doubling_bracket(lambda x: fn(x) < target, target)
    if np.any(fn(hi) < target):
        raise DomainError(f"{what}: target {np.max(target):g} not reached below x={settings.conjugate_bracket_cap:g}")

    f = _scalar(fn)
    out = np.zeros_like(target)
    for i, (y, upper) in enumerate(zip(target.flat, hi.flat)):
        if y == 0:
            continue
        lower = 0.5 * upper if upper > 1.0 else 0.0
        out.flat[i] = optimize.brentq(
            lambda x: f(x) - y, lower, upper, xtol=_ROOT_XTOL, rtol=settings.inverse_rtol, maxiter=_ROOT_ITERATIONS
        )
    return out


def inverse(phi: OrliczFunction, y: ArrayLike) -> Union[float, np.ndarray]:
    """The unique x >= 0 with phi(x) = y"""
    arr = _finite_array(y, "y")
    if np.any(arr < 0):
        raise DomainError(f"inverse needs y >= 0, got {np.min(arr):g}")

    if phi.kind in (OrliczKind.QUADRATIC, OrliczKind.SCALED_QUADRATIC):
        return _result(np.sqrt(arr / _quadratic_coefficient(phi)))
    if phi.kind == OrliczKind.POWER:
        p = phi.params["p"]
        return _result((p * arr) ** (1.0 / p))

    return _result(_solve_increasing(lambda x: _evaluate_abs(phi, x), arr, f"inverse of {phi.name}"))


def derivative_inverse(phi: OrliczFunction, y: ArrayLike) -> Union[float, np.ndarray]:
    """(phi')^{-1}(y) for y >= 0: the point where the slope of phi reaches y"""
    arr = _finite_array(y, "y")
    if np.any(arr < 0):
        raise DomainError(f"derivative_inverse needs y >= 0, got {np.min(arr):g}")

    kind = phi.kind
    with np.errstate(over="ignore"):
        if kind in (OrliczKind.QUADRATIC, OrliczKind.SCALED_QUADRATIC):
            return _result(arr / (2.0 * _quadratic_coefficient(phi)))
        if kind == OrliczKind.POWER:
            return _result(arr ** (1.0 / (phi.params["p"] - 1.0)))
        if kind == OrliczKind.EXP:
            return _result(np.log1p(arr))
        if kind == OrliczKind.XLOGX:
            return _result(np.expm1(arr))
        if kind == OrliczKind.CONJUGATE:
            return _result(np.asarray(derivative(phi.base, arr), dtype=float))

    return _result(_solve_increasing(
        lambda x: np.asarray(derivative(phi, x), dtype=float), arr, f"slope inverse of {phi.name}"
    ))


# ---------------------------------------------------------------------------
# Young-Fenchel transform
# ---------------------------------------------------------------------------

def _numeric_conjugate(phi: OrliczFunction, ay: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(phi*(|y|), maximizer) by doubling bracket on the slope sign, then a bounded scalar maximization"""
    ay = np.atleast_1d(np.asarray(ay, dtype=float))

    def ascending(x: np.ndarray) -> np.ndarray:
        return ay - np.asarray(derivative(phi, x), dtype=float) > 0

    hi = _doubling_bracket(ascending, ay)
    if np.any(ascending(hi)):
        worst = float(ay[ascending(hi)].max())
        raise UnboundedConjugateError(
            f"conjugate of {phi.name} diverges at y={worst:g}: slope never exceeds y below x={settings.conjugate_bracket_cap:g}"
        )

    f = _scalar(lambda x: _evaluate_abs(phi, x))
    x_star = np.zeros_like(ay)
    for i, (y, upper) in enumerate(zip(ay, hi)):
        if y == 0:
            continue
        lower = 0.5 * upper if upper > 1.0 else 0.0
        result = optimize.minimize_scalar(
            lambda x: f(x) - y * x, bounds=(lower, upper), method="bounded",
            options={"xatol": _ROOT_XTOL * max(1.0, upper), "maxiter": _ROOT_ITERATIONS}
        )
        x_star[i] = result.x
    values = np.maximum(ay * x_star - _evaluate_abs(phi, x_star), 0.0)
    return values, x_star


def conjugate(phi: OrliczFunction, y: ArrayLike, numeric: bool = False) -> Union[float, np.ndarray]:
    """
    phi*(y) = sup_x (x y - phi(x)).

    Closed forms are used for built-ins unless numeric=True; otherwise the
    concave maximization runs on a bracket [0, B] with B doubled from 1
    until the slope of x y - phi(x) turns negative.
    """
    arr = _finite_array(y, "y")
    ay = np.abs(arr)

    if phi.analytic_conjugate and not numeric:
        kind = phi.kind
        with np.errstate(over="ignore"):
            if kind in (OrliczKind.QUADRATIC, OrliczKind.SCALED_QUADRATIC):
                out = ay ** 2 / (4.0 * _quadratic_coefficient(phi))
            elif kind == OrliczKind.POWER:
                p = phi.params["p"]
                q = p / (p - 1.0)
                out = ay ** q / q
            elif kind == OrliczKind.EXP:
                out = (1.0 + ay) * np.log1p(ay) - ay
            else:
                out = np.expm1(ay) - ay
        return _result(out)

    values, _ = _numeric_conjugate(phi, ay.reshape(-1))
    return _result(values.reshape(ay.shape))


def conjugate_function(phi: OrliczFunction, numeric: bool = False) -> OrliczFunction:
    """phi* as an OrliczFunction: the analytic partner for built-ins, a numeric wrapper otherwise"""
    if phi.analytic_conjugate and not numeric:
        kind = phi.kind
        if kind in (OrliczKind.QUADRATIC, OrliczKind.SCALED_QUADRATIC):
            return quadratic(1.0 / (4.0 * _quadratic_coefficient(phi)))
        if kind == OrliczKind.POWER:
            p = phi.params["p"]
            return power(p / (p - 1.0))
        if kind == OrliczKind.EXP:
            return xlogx()
        if kind == OrliczKind.XLOGX:
            return exp_type()

    return OrliczFunction(kind=OrliczKind.CONJUGATE, name=f"conjugate({phi.name})", base=phi)


def is_strictly_convex(phi: OrliczFunction) -> bool:
    """Built-ins are strictly convex; other kinds are probed for a strictly increasing slope"""
    if phi.kind not in (OrliczKind.TABULATED, OrliczKind.CUSTOM):
        return True
    probe = np.logspace(-3, 3, 61)
    slopes = np.asarray(derivative(phi, probe), dtype=float)
    return bool(np.all(np.diff(slopes) > 0))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _le(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """lhs <= rhs up to a relative tolerance; overflowed values compare as equal"""
    with np.errstate(invalid="ignore"):
        return (lhs <= rhs + _VALIDATION_RTOL * np.maximum(1.0, np.abs(rhs))) | (np.isinf(lhs) & np.isinf(rhs))


def _first_failure(mask: np.ndarray, *coords: np.ndarray) -> list:
    idx = np.argwhere(~mask)
    if idx.size == 0:
        return []
    first = tuple(idx[0])
    return [float(c[first]) for c in coords]


def validate_n_function(phi: OrliczFunction, grid: ArrayLike) -> ValidationReport:
    """
    Check the N-function axioms and the four standard N-function properties on a grid.

    Failures are report entries, each with a witnessing point.
    """
    g = _finite_array(grid, "grid").reshape(-1)
    xs = np.unique(np.abs(g[g != 0]))
    if xs.size == 0:
        raise DomainError("validation grid needs at least one nonzero point")

    checks = []
    with np.errstate(over="ignore", invalid="ignore"):
        vals = _evaluate_abs(phi, xs)

        pos, neg = _raw(phi, xs), _raw(phi, -xs)
        even = np.isclose(pos, neg, rtol=_VALIDATION_RTOL, atol=1e-12) | (np.isinf(pos) & np.isinf(neg))
        checks.append(PropertyCheck(name="even", passed=bool(even.all()), witness=_first_failure(even, xs)))

        at_zero = float(_raw(phi, np.zeros(1))[0])
        checks.append(PropertyCheck(
            name="zero_at_origin", passed=abs(at_zero) <= 1e-12,
            witness=[] if abs(at_zero) <= 1e-12 else [0.0, at_zero]
        ))

        rising = (vals[1:] > vals[:-1]) | (np.isinf(vals[1:]) & np.isinf(vals[:-1]))
        rising = np.concatenate([[vals[0] > 0], rising])
        checks.append(PropertyCheck(name="strictly_increasing", passed=bool(rising.all()), witness=_first_failure(rising, xs)))

        small = float(_evaluate_abs(phi, np.array([1e-6]))[0]) / 1e-6
        checks.append(PropertyCheck(
            name="ratio_vanishes_at_zero", passed=small < 1e-3,
            witness=[] if small < 1e-3 else [1e-6, small], detail=f"phi(x)/x at 1e-6 = {small:.3g}"
        ))

        large = float(_evaluate_abs(phi, np.array([1e6]))[0]) / 1e6
        checks.append(PropertyCheck(
            name="ratio_diverges_at_infinity", passed=large > 1e3,
            witness=[] if large > 1e3 else [1e6, large], detail=f"phi(x)/x at 1e6 = {large:.3g}"
        ))

        full = np.concatenate([-xs[::-1], [0.0], xs])
        f_full = _raw(phi, full)
        mid = _raw(phi, 0.5 * (full[:, None] + full[None, :]))
        convex = _le(mid, 0.5 * (f_full[:, None] + f_full[None, :]))
        a_grid, b_grid = np.meshgrid(full, full, indexing="ij")
        checks.append(PropertyCheck(
            name="midpoint_convex", passed=bool(convex.all()), witness=_first_failure(convex, a_grid, b_grid)
        ))

        betas = np.asarray(_BETAS)[:, None]
        scaled = _evaluate_abs(phi, betas * xs[None, :])
        beta_ok = _le(betas * vals[None, :], scaled)
        beta_grid, x_grid = np.meshgrid(_BETAS, xs, indexing="ij")
        checks.append(PropertyCheck(
            name="beta_scaling", passed=bool(beta_ok.all()), witness=_first_failure(beta_ok, beta_grid, x_grid)
        ))

        beyond = xs[xs > 1.0]
        if beyond.size == 0:
            beyond = np.array([2.0, 10.0])
        ratios = _evaluate_abs(phi, beyond) / beyond
        c_max = float(np.min(ratios))
        checks.append(PropertyCheck(
            name="linear_lower_bound", passed=c_max > 0,
            witness=[float(beyond[np.argmin(ratios)]), c_max],
            detail=f"largest admissible c on grid: {c_max:.6g}"
        ))

        g_ratio = vals / xs
        nondecreasing = _le(g_ratio[:-1], g_ratio[1:])
        checks.append(PropertyCheck(
            name="ratio_nondecreasing", passed=bool(nondecreasing.all()),
            witness=_first_failure(nondecreasing, xs[:-1])
        ))

        summed = _evaluate_abs(phi, xs[:, None] + xs[None, :])
        superadditive = _le(vals[:, None] + vals[None, :], summed)
        x_grid, y_grid = np.meshgrid(xs, xs, indexing="ij")
        checks.append(PropertyCheck(
            name="superadditive", passed=bool(superadditive.all()),
            witness=_first_failure(superadditive, x_grid, y_grid)
        ))

    return ValidationReport(phi=phi.name, properties=checks, passed=all(c.passed for c in checks))
