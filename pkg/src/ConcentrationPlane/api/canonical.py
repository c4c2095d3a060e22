"""
Canonical Process Bounds
N_v(t) maximization and the tail bounds for Y_t = sum t_i X_i (general and i.i.d. forms)

Coefficient vectors are finite; truncating an infinite sequence t is the
caller's responsibility.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from pydantic import BaseModel, field_validator
from scipy import optimize

import orlicz
from errors import ConfigError, DomainError, HypothesisViolatedError, RefusalError
from observability import observability
from orlicz import OrliczFunction
from schemas import BoundReport, CheckReport, NvSolution, Regime
from settings import settings


logger = logging.getLogger(__name__)

PhiSpec = Union[OrliczFunction, Sequence[OrliczFunction]]


class CoefficientVector(BaseModel):
    """Finite coefficient vector t standing in for an element of l2"""

    entries: List[float]

    @field_validator("entries")
    @classmethod
    def _finite(cls, entries: List[float]) -> List[float]:
        if not entries:
            raise ValueError("coefficient vector must be nonempty")
        if not all(math.isfinite(e) for e in entries):
            raise ValueError("coefficient entries must be finite")
        return entries

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    @property
    def l1(self) -> float:
        return float(np.abs(self.array).sum())

    @property
    def l2(self) -> float:
        return float(np.linalg.norm(self.array))

    @property
    def abs_sum(self) -> float:
        return float(abs(self.array.sum()))

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "CoefficientVector":
        """First non-comment row of a CSV file"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"coefficient file not found: {path}")
        with path.open(newline="") as handle:
            for row in csv.reader(handle):
                if row and not row[0].strip().startswith("#"):
                    return cls(entries=[float(x) for x in row if x.strip()])
        raise ConfigError(f"{path} holds no coefficient row")


def as_vector(t: Union[CoefficientVector, Sequence[float], np.ndarray]) -> CoefficientVector:
    if isinstance(t, CoefficientVector):
        return t
    try:
        return CoefficientVector(entries=[float(x) for x in np.asarray(t, dtype=float).reshape(-1)])
    except ValueError as e:
        raise DomainError(str(e))


def _expand_phis(phis: PhiSpec, n: int) -> List[OrliczFunction]:
    if isinstance(phis, OrliczFunction):
        return [phis] * n
    phis = list(phis)
    if len(phis) != n:
        raise DomainError(f"got {len(phis)} Orlicz functions for {n} coefficients")
    return phis


def _coordinatewise(phis: List[OrliczFunction], fn, values: np.ndarray) -> np.ndarray:
    """Apply fn(phi, values[idx]) grouped by identical phi objects"""
    out = np.empty_like(values, dtype=float)
    groups: Dict[int, List[int]] = {}
    for i, phi in enumerate(phis):
        groups.setdefault(id(phi), []).append(i)
    for indices in groups.values():
        idx = np.asarray(indices)
        out[..., idx] = fn(phis[indices[0]], values[..., idx])
    return out


# ---------------------------------------------------------------------------
# N_v(t)
# ---------------------------------------------------------------------------

def _constraint(phis: List[OrliczFunction], b: np.ndarray) -> float:
    return float(_coordinatewise(phis, orlicz.evaluate, b).sum())


def solve_nv(phis: PhiSpec, t: Union[CoefficientVector, Sequence[float]], v: float) -> NvSolution:
    """
    N_v(t) = sup { sum t_i b_i : sum phi_i(b_i) <= v }.

    KKT: |b_i| = (phi_i')^{-1}(|t_i| / mu) with the sign of t_i, and mu
    is bisected (in log scale) until the constraint sum meets v. The
    lower bracket is max_i |t_i| / phi_i'(B_i) with B_i = phi_i^{-1}(v);
    the upper bracket doubles until the constraint drops below v. The
    feasible endpoint is returned. Functions that are not strictly
    convex go to an SLSQP fallback and the solution is flagged.
    """
    vec = as_vector(t)
    tv = vec.array
    phis = _expand_phis(phis, tv.size)
    if not (math.isfinite(v) and v >= 0):
        raise DomainError(f"v must be finite and nonnegative, got {v}")

    if v == 0 or not np.any(tv):
        return NvSolution(value=0.0, maximizer=[0.0] * tv.size, multiplier=0.0, active=v == 0, v=v)

    if not all(orlicz.is_strictly_convex(phi) for phi in phis):
        return _solve_nv_fallback(phis, tv, v)

    at = np.abs(tv)
    nonzero = at > 0

    def maximizer(mu: float) -> np.ndarray:
        b = _coordinatewise(phis, orlicz.derivative_inverse, at / mu)
        return np.where(nonzero, np.sign(tv) * b, 0.0)

    reach = np.array([float(orlicz.inverse(phi, v)) for phi in phis])
    slope = np.abs(_coordinatewise(phis, orlicz.derivative, reach))
    mu_lo = float(np.max(at[nonzero] / slope[nonzero]))
    mu_hi = mu_lo
    while _constraint(phis, maximizer(mu_hi)) >= v:
        mu_hi *= 2.0

    rtol = settings.nv_rtol
    for _ in range(settings.nv_max_iterations):
        mu = math.sqrt(mu_lo * mu_hi)
        if _constraint(phis, maximizer(mu)) > v:
            mu_lo = mu
        else:
            mu_hi = mu
        if _constraint(phis, maximizer(mu_hi)) >= v * (1.0 - rtol) or mu_hi - mu_lo <= 1e-15 * mu_hi:
            break

    b = maximizer(mu_hi)
    return NvSolution(
        value=max(float(np.dot(tv, b)), 0.0), maximizer=b.tolist(), multiplier=mu_hi, active=True, v=v
    )


def _solve_nv_fallback(phis: List[OrliczFunction], tv: np.ndarray, v: float) -> NvSolution:
    logger.warning("N_v(t): an Orlicz function is not strictly convex; using the SLSQP fallback")
    scale = max(float(np.max(np.abs(tv))), 1.0)

    result = optimize.minimize(
        lambda b: -float(np.dot(tv, b)) / scale,
        x0=np.zeros(tv.size),
        jac=lambda b: -tv / scale,
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": lambda b: v - _constraint(phis, b)}],
        options={"maxiter": 500, "ftol": 1e-12},
    )
    b = np.asarray(result.x, dtype=float)
    if _constraint(phis, b) > v:
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if _constraint(phis, mid * b) <= v else (lo, mid)
        b = lo * b

    slopes = _coordinatewise(phis, orlicz.derivative, b)
    denom = float(np.dot(b, slopes))
    multiplier = float(np.dot(np.abs(tv), np.abs(b))) / denom if denom > 0 else 0.0
    return NvSolution(
        value=max(float(np.dot(tv, b)), 0.0), maximizer=b.tolist(), multiplier=multiplier,
        active=_constraint(phis, b) >= v * (1.0 - 1e-6), v=v, fallback=True
    )


def nv_brute_force(
    phis: PhiSpec,
    t: Union[CoefficientVector, Sequence[float]],
    v: float,
    grid_step: float = 1e-3
) -> float:
    """Grid oracle for N_v(t): the first n-1 coordinates on a grid, the last on the constraint boundary"""
    tv = as_vector(t).array
    n = tv.size
    if n > 4:
        raise RefusalError(f"brute-force N_v grid is exponential in dimension; refusing n={n} > 4")
    if v < 0 or grid_step <= 0:
        raise DomainError(f"need v >= 0 and grid_step > 0, got v={v}, grid_step={grid_step}")
    phis = _expand_phis(phis, n)
    if v == 0:
        return 0.0

    reach = [float(orlicz.inverse(phi, v)) for phi in phis]
    axes = [np.arange(-r, r + 0.5 * grid_step, grid_step) for r in reach[:-1]]
    last = phis[-1]

    def best_over(points: np.ndarray) -> float:
        used = np.zeros(points.shape[0])
        for i in range(points.shape[1]):
            used += np.asarray(orlicz.evaluate(phis[i], points[:, i]))
        room = v - used
        feasible = room >= 0
        if not feasible.any():
            return -math.inf
        tail = np.sign(tv[-1]) * np.asarray(orlicz.inverse(last, room[feasible]))
        return float(np.max(points[feasible] @ tv[:-1] + tv[-1] * tail))

    if n == 1:
        return abs(tv[0]) * reach[0]

    rest = np.stack([g.ravel() for g in np.meshgrid(*axes[1:], indexing="ij")], axis=1) if n > 2 else np.empty((1, 0))
    block = max(1, settings.chunk_size // rest.shape[0])
    best = -math.inf
    for start in range(0, axes[0].size, block):
        head = axes[0][start:start + block]
        points = np.concatenate([np.repeat(head, rest.shape[0])[:, None], np.tile(rest, (head.size, 1))], axis=1)
        best = max(best, best_over(points))
    return max(best, 0.0)


def duality_slack(phis: PhiSpec, t: Union[CoefficientVector, Sequence[float]], v: float) -> CheckReport:
    """sum_i phi_i*(v |t_i| / N_v(t)) <= v"""
    tv = as_vector(t).array
    expanded = _expand_phis(phis, tv.size)
    nv = solve_nv(expanded, tv, v)
    if nv.value == 0:
        return CheckReport(name="duality_slack", lhs=0.0, rhs=v, passed=True, detail="N_v(t) = 0")
    lhs = float(_coordinatewise(expanded, orlicz.conjugate, v * np.abs(tv) / nv.value).sum())
    return CheckReport(
        name="duality_slack", lhs=lhs, rhs=v, passed=v - lhs >= -1e-6, extras={"slack": v - lhs, "N_v": nv.value}
    )


# ---------------------------------------------------------------------------
# Tail bounds
# ---------------------------------------------------------------------------

def tail_bound_general(nv: NvSolution, s: float, K: float) -> BoundReport:
    """P(Y_t >= 2 s K N_v(t)) <= exp(-v s), K = max_i tau_{phi_i*}(X_i)"""
    if not s >= 1:
        raise HypothesisViolatedError(f"the tail bound needs s >= 1, got s={s}")
    if not K > 0:
        raise DomainError(f"K must be positive, got {K}")

    report = BoundReport(
        threshold=2.0 * s * K * nv.value,
        probability_bound=min(1.0, math.exp(-nv.v * s)),
        constants={"K": float(K), "s": float(s), "v": nv.v, "N_v": nv.value},
        regime=Regime.GENERAL,
    )
    observability.log_bound("canonical-general", report.threshold, report.probability_bound, report.constants)
    return report


def _iid_terms(z: float, vec: CoefficientVector, phi: OrliczFunction, K1: float, K2: float, l1_mode: str):
    if l1_mode not in ("norm", "abs-sum"):
        raise DomainError(f"l1_mode must be 'norm' or 'abs-sum', got {l1_mode}")
    l1 = vec.l1 if l1_mode == "norm" else vec.abs_sum
    l2 = vec.l2
    if l2 == 0:
        raise DomainError("coefficient vector must be nonzero")
    orlicz_term = float(orlicz.evaluate(phi, z / (K1 * l1))) if l1 > 0 else math.inf
    quadratic_term = z ** 2 / (K2 ** 2 * l2 ** 2)
    return orlicz_term, quadratic_term, l1, l2


def tail_bound_iid(
    z: float,
    t: Union[CoefficientVector, Sequence[float]],
    phi: OrliczFunction,
    K1: float,
    K2: float,
    c: float = 1.0,
    l1_mode: str = "norm"
) -> BoundReport:
    """
    P(Y_t >= z) <= exp(-c min(phi(z / (K1 ||t||_1)), z^2 / (K2^2 ||t||_2^2))).

    l1_mode="abs-sum" replaces ||t||_1 by |sum t_i|.
    """
    if not z > 0:
        raise DomainError(f"z must be positive, got {z}")
    if not (K1 > 0 and K2 > 0):
        raise DomainError(f"K1 and K2 must be positive, got K1={K1}, K2={K2}")
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")

    vec = as_vector(t)
    orlicz_term, quadratic_term, l1, l2 = _iid_terms(z, vec, phi, K1, K2, l1_mode)
    if math.isclose(orlicz_term, quadratic_term, rel_tol=1e-12):
        regime = Regime.MIN_OF_BOTH
    elif orlicz_term < quadratic_term:
        regime = Regime.IID_ORLICZ
    else:
        regime = Regime.IID_QUADRATIC

    exponent = c * min(orlicz_term, quadratic_term)
    report = BoundReport(
        threshold=float(z),
        probability_bound=min(1.0, math.exp(-exponent)),
        constants={
            "K1": float(K1), "K2": float(K2), "c": float(c), "l1": l1, "l2": l2,
            "orlicz_exponent": orlicz_term, "quadratic_exponent": quadratic_term
        },
        regime=regime,
    )
    observability.log_bound("canonical-iid", report.threshold, report.probability_bound, report.constants)
    return report


def regime_switch_point(
    t: Union[CoefficientVector, Sequence[float]],
    phi: OrliczFunction,
    K1: float,
    K2: float,
    l1_mode: str = "norm"
) -> float:
    """The z where both exponents of the i.i.d. bound coincide"""
    vec = as_vector(t)

    def gap(log_z: float) -> float:
        z = math.exp(log_z)
        orlicz_term, quadratic_term, _, _ = _iid_terms(z, vec, phi, K1, K2, l1_mode)
        return math.log(orlicz_term) - math.log(quadratic_term)

    log_grid = np.linspace(math.log(1e-8), math.log(1e8), 161)
    with np.errstate(divide="ignore"):
        gaps = np.array([gap(u) for u in log_grid])
    crossing = np.nonzero(np.sign(gaps[:-1]) * np.sign(gaps[1:]) < 0)[0]
    if crossing.size == 0:
        raise DomainError(f"the exponents of {phi.name} never cross on z in [1e-8, 1e8]")
    i = int(crossing[0])
    return math.exp(optimize.brentq(gap, log_grid[i], log_grid[i + 1], xtol=1e-14))


def bv_moment_check(samples_of_Yt: Sequence[float], v: float, K: float, u: float) -> CheckReport:
    """
    Empirical constant L-hat = ||Y_t||_v / (2 u K).

    The universal constant of the moment bound is unspecified, so the
    check reports the constant the data require and passes while it
    stays under the configured cap.
    """
    y = np.abs(np.asarray(samples_of_Yt, dtype=float).reshape(-1))
    if y.size == 0:
        raise DomainError("samples of Y_t must be nonempty")
    if not v >= 1:
        raise DomainError(f"moment order v must be at least 1, got {v}")
    if not (u >= 1 and K > 0):
        raise DomainError(f"need u >= 1 and K > 0, got u={u}, K={K}")

    norm_v = float(np.mean(y ** v) ** (1.0 / v))
    l_hat = norm_v / (2.0 * u * K)
    return CheckReport(
        name="bv_moment", lhs=l_hat, rhs=settings.l_cap, passed=l_hat <= settings.l_cap,
        extras={"norm_v": norm_v, "v": float(v), "u": float(u), "K": float(K)}
    )
