"""
Functional Concentration
Centered conditional versions, tilted expectations and tail bounds for functions of independent inputs
"""

import json
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize, special

import norms
from errors import ConfigError, DomainError, HypothesisViolatedError, PreconditionError, RefusalError
from observability import observability
from orlicz import OrliczFunction
from schemas import CheckReport, FunctionalBoundInputs


logger = logging.getLogger(__name__)

MAX_ENUMERATION = 1_000_000
_GAUSS_LEGENDRE_NODES = 32


class FiniteDistribution(BaseModel):
    """A finite real distribution (values with probabilities)"""

    model_config = ConfigDict(frozen=True)

    values: Tuple[float, ...]
    probs: Tuple[float, ...]

    @classmethod
    def of(cls, values: Sequence[float], probs: Optional[Sequence[float]] = None) -> "FiniteDistribution":
        v = np.asarray(values, dtype=float).reshape(-1)
        p = np.full(v.size, 1.0 / max(v.size, 1)) if probs is None else np.asarray(probs, dtype=float).reshape(-1)
        if v.size == 0 or v.shape != p.shape:
            raise DomainError("distribution needs matching nonempty values and probabilities")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"probabilities must be nonnegative and sum to 1 within 1e-12, got {p.sum():.15g}")
        return cls(values=tuple(v.tolist()), probs=tuple(p.tolist()))

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def centered(self) -> "FiniteDistribution":
        mu = self.mean
        return FiniteDistribution(values=tuple((np.asarray(self.values) - mu).tolist()), probs=self.probs)

    def as_model(self) -> norms.RandomModel:
        return norms.discrete(self.values, self.probs)


def _sum(points: np.ndarray) -> np.ndarray:
    return points.sum(axis=1)


def _product(points: np.ndarray) -> np.ndarray:
    return points.prod(axis=1)


def _constant(points: np.ndarray) -> np.ndarray:
    return np.ones(points.shape[0])


def _first(points: np.ndarray) -> np.ndarray:
    return points[:, 0].copy()


def _max(points: np.ndarray) -> np.ndarray:
    return points.max(axis=1)


def _euclidean(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points, axis=1)


BUILTIN_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sum": _sum,
    "product": _product,
    "constant": _constant,
    "first": _first,
    "max": _max,
    "euclidean": _euclidean,
}


class DiscreteFunctionModel(BaseModel):
    """
    f(X_1, ..., X_n) for independent finitely supported coordinates

    Features:
    - per-coordinate supports with probabilities
    - f as a built-in name, a lookup table, or a row-vectorized callable
    - exhaustive enumeration of the joint support
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    supports: List[FiniteDistribution]
    f_name: str = "custom"
    f: Callable[[np.ndarray], np.ndarray] = Field(exclude=True, repr=False)

    @property
    def n(self) -> int:
        return len(self.supports)

    @property
    def support_size(self) -> int:
        return int(np.prod([len(s.values) for s in self.supports], dtype=float))

    @classmethod
    def builtin(cls, name: str, supports: Sequence[FiniteDistribution]) -> "DiscreteFunctionModel":
        if name not in BUILTIN_FUNCTIONS:
            raise ConfigError(f"unknown function '{name}'; choose from {sorted(BUILTIN_FUNCTIONS)}")
        return cls(supports=list(supports), f_name=name, f=BUILTIN_FUNCTIONS[name])

    @classmethod
    def from_table(cls, supports: Sequence[FiniteDistribution], rows: Sequence[Sequence[float]]) -> "DiscreteFunctionModel":
        """rows are [x_1, ..., x_n, f(x)]; every support point must be listed"""
        table = {tuple(float(v) for v in row[:-1]): float(row[-1]) for row in rows}

        def lookup(points: np.ndarray) -> np.ndarray:
            try:
                return np.array([table[tuple(p)] for p in points.tolist()])
            except KeyError as e:
                raise DomainError(f"function table has no entry for {e.args[0]}")

        return cls(supports=list(supports), f_name="table", f=lookup)

    @classmethod
    def coins(cls, name: str, n: int, a: float = 1.0) -> "DiscreteFunctionModel":
        """n fair +/-a coins"""
        return cls.builtin(name, [FiniteDistribution.of([-a, a], [0.5, 0.5])] * n)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "DiscreteFunctionModel":
        """{"supports": [{"values": [...], "probs": [...]}, ...], "f": "<builtin>"} or "table": [[x..., f], ...]"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"function model not found: {path}")
        try:
            data = json.loads(path.read_text())
            supports = [FiniteDistribution.of(s["values"], s.get("probs")) for s in data["supports"]]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ConfigError(f"invalid function model {path}: {e}")
        if "table" in data:
            return cls.from_table(supports, data["table"])
        return cls.builtin(data.get("f", "sum"), supports)

    def enumerate(self) -> Tuple[np.ndarray, np.ndarray]:
        """All support points (rows) with their joint probabilities"""
        if self.support_size > MAX_ENUMERATION:
            raise RefusalError(f"joint support has {self.support_size} points; enumeration is capped at {MAX_ENUMERATION}")
        grids = np.meshgrid(*[np.asarray(s.values) for s in self.supports], indexing="ij")
        prob_grids = np.meshgrid(*[np.asarray(s.probs) for s in self.supports], indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=1)
        probs = np.prod(np.stack([g.ravel() for g in prob_grids], axis=1), axis=1)
        return points, probs

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(np.atleast_2d(points)), dtype=float).reshape(-1)


# ---------------------------------------------------------------------------
# Centered conditional versions and tilts
# ---------------------------------------------------------------------------

def centered_conditional(fm: DiscreteFunctionModel, x: Sequence[float], k: int) -> FiniteDistribution:
    """
    Law of f(x with slot k replaced by X_k) minus its mean.

    k is 0-based.
    """
    if not 0 <= k < fm.n:
        raise DomainError(f"coordinate index k must lie in [0, {fm.n - 1}], got {k}")
    point = np.asarray(x, dtype=float).reshape(-1)
    if point.size != fm.n:
        raise DomainError(f"point has {point.size} coordinates, model has {fm.n}")
    for j, (xj, support) in enumerate(zip(point, fm.supports)):
        if not np.any(np.isclose(xj, support.values, rtol=0.0, atol=1e-12)):
            raise DomainError(f"x[{j}] = {xj} is not in the support of coordinate {j}")

    slot = fm.supports[k]
    points = np.tile(point, (len(slot.values), 1))
    points[:, k] = slot.values
    return FiniteDistribution(values=tuple(fm.evaluate(points).tolist()), probs=slot.probs).centered()


def tilted_expectation(values: Sequence[float], tilts: Sequence[float], probs: Sequence[float]) -> float:
    """E[Y e^X] / E[e^X], with the tilts shifted by their maximum"""
    y = np.asarray(values, dtype=float)
    x = np.asarray(tilts, dtype=float)
    p = np.asarray(probs, dtype=float)
    if not (y.shape == x.shape == p.shape) or y.size == 0:
        raise DomainError("values, tilts and probabilities must have equal nonzero length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("probabilities must be nonnegative and sum to 1")
    weights = p * np.exp(x - x.max())
    return float(np.dot(weights, y) / weights.sum())


def tilted_variance(dist: FiniteDistribution, s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Variance of X under the law tilted by exp(s X); vectorized over s"""
    x = np.asarray(dist.values)
    with np.errstate(divide="ignore"):
        log_p = np.log(np.asarray(dist.probs))
    s_arr = np.asarray(s, dtype=float)
    log_w = np.multiply.outer(s_arr, x) + log_p
    w = np.exp(log_w - special.logsumexp(log_w, axis=-1, keepdims=True))
    m = (w * x).sum(axis=-1)
    var = np.maximum((w * (x - m[..., None]) ** 2).sum(axis=-1), 0.0)
    return float(var) if var.ndim == 0 else var


def fe_integral_check(dist: FiniteDistribution, phi: OrliczFunction) -> CheckReport:
    """
    Double integral of the tilted variance against e^2 ||X||^2 / (1 - e ||X||)^2.

    The moment-ratio norm must stay below 1/e and phi must satisfy
    phi^{-1}(1) = 1. The integral over 0 <= t <= s <= 1 uses tensor
    Gauss-Legendre nodes mapped to the triangle.
    """
    scale = max(1.0, max(abs(v) for v in dist.values))
    if abs(dist.mean) > 1e-12 * scale:
        raise PreconditionError(f"distribution must be centered, mean is {dist.mean:.3g}")

    norm = norms.moment_orlicz_norm(dist.as_model(), phi).value
    if norm >= 1.0 / math.e:
        raise HypothesisViolatedError(f"moment-ratio norm {norm:.6g} must be below 1/e = {1.0 / math.e:.6g}")

    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_LEGENDRE_NODES)
    t = 0.5 * (nodes + 1.0)
    t_w = 0.5 * weights
    s = t[:, None] + (1.0 - t[:, None]) * 0.5 * (nodes[None, :] + 1.0)
    s_w = (1.0 - t[:, None]) * 0.5 * weights[None, :]
    lhs = float((t_w[:, None] * s_w * tilted_variance(dist, s)).sum())

    rhs = math.e ** 2 * norm ** 2 / (1.0 - math.e * norm) ** 2
    return CheckReport(name="fe_integral", lhs=lhs, rhs=rhs, passed=lhs <= rhs + 1e-6, extras={"norm": norm})


# ---------------------------------------------------------------------------
# Infimum lemma
# ---------------------------------------------------------------------------

def _check_m20(C1: float, a: float, t: float):
    if not (C1 > 0 and a >= 0 and t > 0):
        raise DomainError(f"need C1 > 0, a >= 0, t > 0; got C1={C1}, a={a}, t={t}")


def m20_rhs(C1: float, a: float, t: float) -> float:
    """-t^2 / (2 (2 C1 + a t))"""
    _check_m20(C1, a, t)
    return -t ** 2 / (2.0 * (2.0 * C1 + a * t))


def m20_lhs_grid(C1: float, a: float, t: float, grid_points: int = 2001) -> float:
    """Grid-plus-refinement minimum of -beta t + C1 beta^2 / (1 - a beta) over beta in [0, 1/a)"""
    _check_m20(C1, a, t)

    def objective(beta):
        return -beta * t + C1 * beta ** 2 / (1.0 - a * beta)

    upper = (1.0 - 1e-12) / a if a > 0 else max(50.0 / t, t / C1)
    betas = np.linspace(0.0, upper, max(grid_points, 3))
    values = objective(betas)
    idx = int(np.argmin(values))
    best = float(values[idx])

    lo, hi = betas[max(idx - 1, 0)], betas[min(idx + 1, betas.size - 1)]
    res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
    return min(best, float(res.fun))


# ---------------------------------------------------------------------------
# Tail bound and its inputs
# ---------------------------------------------------------------------------

def med_tail_bound(t: float, A: float, B: float) -> float:
    """exp(-t^2 / (4 e^2 A + 2 e B t)); with A = B = 0 f does not fluctuate and the bound is 0"""
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if A < 0 or B < 0:
        raise DomainError(f"A and B must be nonnegative, got A={A}, B={B}")
    if A == 0 and B == 0:
        logger.info("Functional bound with A = B = 0: f is constant, tail bound is 0")
        return 0.0
    bound = math.exp(-t ** 2 / (4.0 * math.e ** 2 * A + 2.0 * math.e * B * t))
    observability.log_bound("functional", t, bound, {"A": A, "B": B})
    return bound


def functional_norm_inputs(fm: DiscreteFunctionModel, phi: OrliczFunction) -> FunctionalBoundInputs:
    """
    A = max_x sum_k ||f_k(X)(x)||^2 and B = max_{k,x} ||f_k(X)(x)||, moment-ratio norms.

    f_k depends on x only through the other coordinates, so each k walks
    the distinct contexts; equal conditional laws share one norm evaluation.
    """
    points, _ = fm.enumerate()
    shape = tuple(len(s.values) for s in fm.supports)
    grid = fm.evaluate(points).reshape(shape)

    cache: Dict[Tuple[bytes, bytes], float] = {}
    squared_sum = np.zeros(shape)
    B = 0.0
    for k, support in enumerate(fm.supports):
        probs = np.asarray(support.probs)
        rows = np.moveaxis(grid, k, -1).reshape(-1, shape[k])
        centered_rows = rows - (rows @ probs)[:, None]
        row_norms = np.empty(rows.shape[0])
        for r, row in enumerate(centered_rows):
            key = (np.round(row, 12).tobytes(), probs.tobytes())
            if key not in cache:
                if np.all(np.abs(row) <= 1e-12):
                    cache[key] = 0.0
                else:
                    cache[key] = norms.moment_orlicz_norm(norms.discrete(row, probs), phi).value
            row_norms[r] = cache[key]

        context = np.expand_dims(row_norms.reshape(shape[:k] + shape[k + 1:]), axis=k)
        squared_sum = squared_sum + context ** 2
        B = max(B, float(row_norms.max()))

    return FunctionalBoundInputs(A=float(squared_sum.max()), B=B)


def exhaustive_tail(fm: DiscreteFunctionModel, ts: Sequence[float]) -> np.ndarray:
    """Exact P(f(X) - E f(X) >= t) by enumeration, for each t"""
    points, probs = fm.enumerate()
    deviation = fm.evaluate(points)
    deviation = deviation - float(np.dot(deviation, probs))
    t = np.asarray(ts, dtype=float)
    return np.array([float(probs[deviation >= ti - 1e-12].sum()) for ti in t.reshape(-1)]).reshape(t.shape)


# ---------------------------------------------------------------------------
# Hilbert-space mean
# ---------------------------------------------------------------------------

def _check_vector_mean(n: int, delta: float, norm: float) -> float:
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if norm < 0:
        raise DomainError(f"norm must be nonnegative, got {norm}")
    level = math.log(1.0 / delta)
    if level < 1.0 - 1e-12:
        raise HypothesisViolatedError(f"ln(1/delta) >= 1 fails: ln(1/delta) = {level:.6g}")
    if n < level * (1.0 - 1e-12):
        raise HypothesisViolatedError(f"n >= ln(1/delta) fails: n = {n}, ln(1/delta) = {level:.6g}")
    return level


def vector_mean_bound(n: int, delta: float, norm: float) -> float:
    """6 e ||X_1||_tau sqrt(ln(1/delta) / n), valid when n >= ln(1/delta) >= 1"""
    level = _check_vector_mean(n, delta, norm)
    return 6.0 * math.e * norm * math.sqrt(level / n)


def vector_mean_chain(n: int, delta: float, norm: float) -> CheckReport:
    """
    Terms of the deviation chain for the sum next to the stated bound for the mean.

    The sum is bounded by 2 sqrt(n)||X|| + 2e||X|| sqrt(n ln) + 2e||X|| ln;
    dividing by n and comparing with the stated bound shows whether the
    chain composes for these inputs.
    """
    level = _check_vector_mean(n, delta, norm)
    expectation = 2.0 * math.sqrt(n) * norm
    deviation = 2.0 * math.e * norm * math.sqrt(n * level)
    linear = 2.0 * math.e * norm * level
    chain_mean = (expectation + deviation + linear) / n
    stated = vector_mean_bound(n, delta, norm)
    return CheckReport(
        name="vector_mean_chain", lhs=chain_mean, rhs=stated, passed=chain_mean <= stated + 1e-12,
        extras={"expectation_term": expectation, "deviation_term": deviation, "linear_term": linear}
    )
