"""
Sub-Gaussian Norms
Random models plus the tau_phi, moment-ratio and psi_1 norms, analytic and empirical
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import optimize, special, stats

import orlicz
from errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    HeavyTailError,
    NormalizationError,
    PreconditionError,
    RangeTooWideError,
)
from orlicz import OrliczFunction, OrliczKind
from sampling import DRAWS, make_generator
from schemas import CheckReport, NormEstimate, NormMethod
from settings import settings


logger = logging.getLogger(__name__)

EMPIRICAL_CAVEAT = "lower estimate (plug-in MGF)"
_EXP_OVERFLOW = 700.0
_CHI_NODES = 4001


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform-symmetric"
    RADEMACHER = "rademacher-scaled"
    DISCRETE = "discrete"
    MIXTURE = "mixture"
    EXPONENTIAL = "exponential"
    GAUSSIAN_NORM = "gaussian-norm"
    IID_SUM = "iid-sum"


class RandomModel(BaseModel):
    """
    A named distribution family with a seeded sampler

    Features:
    - gaussian(sigma), uniform on [-a, a], scaled Rademacher, finite discrete
    - weight-w mixture of N(0, sigma^2) and uniform [-a, a]
    - exponential(scale), sigma^r * chi_k^r (norms of Gaussian vectors)
    - sums of `count` independent copies of a base model
    - a deterministic `shift` added to every family
    """

    model_config = ConfigDict(frozen=True)

    family: Family
    params: dict = {}
    values: Tuple[float, ...] = ()
    probs: Tuple[float, ...] = ()
    shift: float = 0.0
    base: Optional["RandomModel"] = None
    count: int = 1

    @property
    def analytic_mgf(self) -> bool:
        if self.family == Family.IID_SUM:
            return self.base.analytic_mgf
        return True

    @property
    def analytic_moments(self) -> bool:
        if self.family == Family.IID_SUM:
            return False
        if self.shift != 0.0:
            return self.family == Family.DISCRETE
        return True

    @property
    def label(self) -> str:
        if self.family == Family.IID_SUM:
            text = f"sum{self.count}({self.base.label})"
        elif self.family == Family.DISCRETE:
            text = f"discrete({len(self.values)} atoms)"
        else:
            text = f"{self.family.value}({', '.join(f'{k}={v:g}' for k, v in self.params.items())})"
        return text if self.shift == 0.0 else f"{text}{self.shift:+g}"


RandomModel.model_rebuild()


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def _positive(value: float, name: str) -> float:
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be positive and finite, got {value}")
    return float(value)


def gaussian(sigma: float = 1.0) -> RandomModel:
    return RandomModel(family=Family.GAUSSIAN, params={"sigma": _positive(sigma, "sigma")})


def uniform(a: float = 1.0) -> RandomModel:
    return RandomModel(family=Family.UNIFORM, params={"a": _positive(a, "a")})


def rademacher(a: float = 1.0) -> RandomModel:
    return RandomModel(family=Family.RADEMACHER, params={"a": _positive(a, "a")})


def discrete(values: Sequence[float], probs: Optional[Sequence[float]] = None) -> RandomModel:
    v = np.asarray(values, dtype=float).reshape(-1)
    p = np.full(v.size, 1.0 / max(v.size, 1)) if probs is None else np.asarray(probs, dtype=float).reshape(-1)
    if v.size == 0 or v.shape != p.shape:
        raise DomainError("discrete model needs matching nonempty values and probabilities")
    if not np.all(np.isfinite(v)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"probabilities must be nonnegative and sum to 1, got sum {p.sum():.12g}")
    return RandomModel(family=Family.DISCRETE, values=tuple(v.tolist()), probs=tuple((p / p.sum()).tolist()))


def constant(c: float) -> RandomModel:
    return discrete([c], [1.0])


def mixture(weight: float, sigma: float = 1.0, a: float = 1.0) -> RandomModel:
    """weight * N(0, sigma^2) + (1 - weight) * U[-a, a]"""
    if not 0.0 <= weight <= 1.0:
        raise DomainError(f"mixture weight must lie in [0, 1], got {weight}")
    return RandomModel(
        family=Family.MIXTURE,
        params={"weight": float(weight), "sigma": _positive(sigma, "sigma"), "a": _positive(a, "a")}
    )


def exponential(scale: float = 1.0) -> RandomModel:
    return RandomModel(family=Family.EXPONENTIAL, params={"scale": _positive(scale, "scale")})


def gaussian_norm(k: int, sigma: float = 1.0, r: float = 1.0) -> RandomModel:
    """|X|^r for X ~ N(0, sigma^2 I_k): r=1 is the Euclidean norm, r=2 its square"""
    if k < 1:
        raise DomainError(f"dimension must be at least 1, got {k}")
    return RandomModel(
        family=Family.GAUSSIAN_NORM,
        params={"k": float(k), "sigma": _positive(sigma, "sigma"), "r": _positive(r, "r")}
    )


def iid_sum(base: RandomModel, count: int) -> RandomModel:
    if count < 1:
        raise DomainError(f"count must be at least 1, got {count}")
    return RandomModel(family=Family.IID_SUM, base=base, count=int(count))


def shifted(model: RandomModel, mu: float) -> RandomModel:
    return model.model_copy(update={"shift": model.shift + float(mu)})


def parse_model(spec: str) -> RandomModel:
    """
    Resolve a textual model: gaussian:1, uniform:1, rademacher:1, exponential:1,
    constant:c, mixture:w,sigma,a, gaussian-norm:k,sigma,r. A trailing
    @mu adds a shift (uniform:1@1 is uniform on [0, 2]).
    """
    body, _, shift = spec.strip().partition("@")
    name, _, arg = body.partition(":")
    try:
        args = [float(a) for a in arg.split(",")] if arg else []
        builders: dict = {
            "gaussian": lambda: gaussian(*args),
            "uniform": lambda: uniform(*args),
            "rademacher": lambda: rademacher(*args),
            "exponential": lambda: exponential(*args),
            "constant": lambda: constant(*args),
            "mixture": lambda: mixture(*args),
            "gaussian-norm": lambda: gaussian_norm(int(args[0]), *args[1:]),
        }
        if name.lower() not in builders:
            raise ConfigError(f"unknown model '{spec}'")
        model = builders[name.lower()]()
        return shifted(model, float(shift)) if shift else model
    except (TypeError, ValueError, IndexError) as e:
        if isinstance(e, DomainError):
            raise
        raise ConfigError(f"cannot parse model '{spec}': {e}")


# ---------------------------------------------------------------------------
# Moments and transforms
# ---------------------------------------------------------------------------

def mean(model: RandomModel) -> float:
    f, p = model.family, model.params
    if f == Family.DISCRETE:
        base = float(np.dot(model.values, model.probs))
    elif f == Family.EXPONENTIAL:
        base = p["scale"]
    elif f == Family.GAUSSIAN_NORM:
        k, r = p["k"], p["r"]
        base = float(np.exp(
            r * np.log(p["sigma"]) + 0.5 * r * np.log(2.0) + special.gammaln((k + r) / 2) - special.gammaln(k / 2)
        ))
    elif f == Family.IID_SUM:
        base = model.count * mean(model.base)
    else:
        base = 0.0
    return base + model.shift


def is_centered(model: RandomModel) -> bool:
    scale = max(1.0, abs(model.shift), max((abs(v) for v in model.values), default=0.0))
    return abs(mean(model)) <= 1e-12 * scale


def centered(model: RandomModel) -> RandomModel:
    return model.model_copy(update={"shift": model.shift - mean(model)})


def scaled(model: RandomModel, c: float) -> RandomModel:
    """The model of c X"""
    if c == 0:
        return constant(0.0)
    f, p = model.family, dict(model.params)
    shift = model.shift * c
    if f == Family.DISCRETE:
        return RandomModel(family=f, values=tuple(np.multiply(model.values, c).tolist()), probs=model.probs, shift=shift)
    if f == Family.IID_SUM:
        return RandomModel(family=f, base=scaled(model.base, c), count=model.count, shift=shift)
    if f in (Family.EXPONENTIAL, Family.GAUSSIAN_NORM) and c < 0:
        raise DomainError(f"{f.value} models only scale by positive factors, got {c}")
    if f == Family.EXPONENTIAL:
        p["scale"] *= c
    elif f == Family.GAUSSIAN_NORM:
        p["sigma"] *= c ** (1.0 / p["r"])
    else:
        for key in ("sigma", "a"):
            if key in p:
                p[key] *= abs(c)
    return RandomModel(family=f, params=p, shift=shift)


def _log_sinhc(x: np.ndarray) -> np.ndarray:
    """log(sinh(x)/x); Taylor series below 0.1 where the closed form cancels"""
    ax = np.abs(x)
    x2 = ax ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        large = ax + np.log(-np.expm1(-2.0 * ax)) - np.log(2.0 * ax)
    return np.where(ax < 0.1, x2 / 6.0 - x2 ** 2 / 180.0 + x2 ** 3 / 2835.0, large)


def _log_cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    x2 = ax ** 2
    series = x2 / 2.0 - x2 ** 2 / 12.0 + x2 ** 3 / 45.0 - 17.0 * x2 ** 4 / 2520.0
    return np.where(ax < 0.1, series, ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0))


def _log_expc(x: np.ndarray) -> np.ndarray:
    """log((e^x - 1)/x) for x >= 0"""
    with np.errstate(divide="ignore", invalid="ignore"):
        large = x + np.log(-np.expm1(-x)) - np.log(x)
    return np.where(x < 1e-3, x / 2.0 + x ** 2 / 24.0 - x ** 4 / 2880.0, large)


def _chi_power_log_mgf(k: float, sigma: float, r: float, lam: np.ndarray) -> np.ndarray:
    """log E exp(lam sigma^r R^r) for R ~ chi_k by quadrature on a fixed grid"""
    if r == 2.0:
        u = 2.0 * lam * sigma ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(u < 1.0, -0.5 * k * np.log1p(-np.minimum(u, 1.0)), np.inf)
    if r > 2.0:
        return np.where(lam <= 0, _chi_power_log_mgf_grid(k, sigma, r, np.minimum(lam, 0.0)), np.inf)
    return _chi_power_log_mgf_grid(k, sigma, r, lam)


def _chi_power_log_mgf_grid(k: float, sigma: float, r: float, lam: np.ndarray) -> np.ndarray:
    reach = math.sqrt(k) + 12.0 + 2.0 * float(np.max(np.abs(lam), initial=0.0)) * sigma ** r
    nodes = np.linspace(0.0, reach, _CHI_NODES)
    log_w = stats.chi.logpdf(nodes, k) + np.log(nodes[1] - nodes[0])
    exponent = np.multiply.outer(lam, sigma ** r * nodes ** r) + log_w
    return special.logsumexp(exponent, axis=-1)


def log_mgf(model: RandomModel, lam: Union[float, np.ndarray]) -> np.ndarray:
    """log E exp(lam X), +inf where the MGF diverges"""
    lam = np.asarray(lam, dtype=float)
    f, p = model.family, model.params
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if f == Family.GAUSSIAN:
            out = 0.5 * (lam * p["sigma"]) ** 2
        elif f == Family.UNIFORM:
            out = _log_sinhc(lam * p["a"])
        elif f == Family.RADEMACHER:
            out = _log_cosh(lam * p["a"])
        elif f == Family.DISCRETE:
            out = special.logsumexp(np.multiply.outer(lam, model.values), b=np.asarray(model.probs), axis=-1)
        elif f == Family.MIXTURE:
            w = p["weight"]
            out = np.logaddexp(
                np.log(w) + 0.5 * (lam * p["sigma"]) ** 2,
                np.log1p(-w) + _log_sinhc(lam * p["a"])
            )
        elif f == Family.EXPONENTIAL:
            u = lam * p["scale"]
            out = np.where(u < 1.0, -np.log1p(-np.minimum(u, 1.0)), np.inf)
        elif f == Family.GAUSSIAN_NORM:
            out = _chi_power_log_mgf(p["k"], p["sigma"], p["r"], lam)
        else:
            out = model.count * log_mgf(model.base, lam)
    return out + lam * model.shift


def log_abs_mgf(model: RandomModel, s: Union[float, np.ndarray]) -> np.ndarray:
    """log E exp(s |X|) for s >= 0"""
    s = np.asarray(s, dtype=float)
    f, p, mu = model.family, model.params, model.shift
    with np.errstate(over="ignore", divide="ignore"):
        if f == Family.GAUSSIAN:
            sigma = p["sigma"]
            quad = 0.5 * (s * sigma) ** 2
            return np.logaddexp(
                s * mu + quad + stats.norm.logcdf(mu / sigma + s * sigma),
                -s * mu + quad + stats.norm.logcdf(-mu / sigma + s * sigma)
            )
        if f == Family.DISCRETE:
            return special.logsumexp(
                np.multiply.outer(s, np.abs(np.add(model.values, mu))), b=np.asarray(model.probs), axis=-1
            )
        if f in (Family.EXPONENTIAL, Family.GAUSSIAN_NORM) and mu == 0.0:
            return log_mgf(model, s)
        if mu == 0.0:
            if f == Family.UNIFORM:
                return _log_expc(s * p["a"])
            if f == Family.RADEMACHER:
                return s * p["a"]
            if f == Family.MIXTURE:
                w, sigma = p["weight"], p["sigma"]
                gauss = np.log(2.0) + 0.5 * (s * sigma) ** 2 + stats.norm.logcdf(s * sigma)
                return np.logaddexp(np.log(w) + gauss, np.log1p(-w) + _log_expc(s * p["a"]))
    raise DomainError(f"no analytic E exp(s|X|) for {model.label}; estimate from samples instead")


def log_abs_moment(model: RandomModel, order: Union[float, np.ndarray]) -> np.ndarray:
    """log E|X|^p"""
    q = np.asarray(order, dtype=float)
    f, p = model.family, model.params
    with np.errstate(divide="ignore"):
        if f == Family.DISCRETE:
            logs = np.log(np.abs(np.add(model.values, model.shift)))
            return special.logsumexp(np.multiply.outer(q, logs), b=np.asarray(model.probs), axis=-1)
        if model.shift != 0.0 or f == Family.IID_SUM:
            raise DomainError(f"no analytic absolute moments for {model.label}; estimate from samples instead")
        if f == Family.GAUSSIAN:
            return _log_gaussian_abs_moment(p["sigma"], q)
        if f == Family.UNIFORM:
            return q * np.log(p["a"]) - np.log1p(q)
        if f == Family.RADEMACHER:
            return q * np.log(p["a"])
        if f == Family.EXPONENTIAL:
            return q * np.log(p["scale"]) + special.gammaln(q + 1.0)
        if f == Family.GAUSSIAN_NORM:
            k, rq = p["k"], p["r"] * q
            return rq * np.log(p["sigma"]) + 0.5 * rq * np.log(2.0) + special.gammaln((k + rq) / 2) - special.gammaln(k / 2)
        w = p["weight"]
        return np.logaddexp(
            np.log(w) + _log_gaussian_abs_moment(p["sigma"], q),
            np.log1p(-w) + q * np.log(p["a"]) - np.log1p(q)
        )


def _log_gaussian_abs_moment(sigma: float, q: np.ndarray) -> np.ndarray:
    return q * np.log(sigma) + 0.5 * q * np.log(2.0) + special.gammaln((q + 1.0) / 2) - 0.5 * np.log(np.pi)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def draw(model: RandomModel, rng: np.random.Generator, shape: Union[int, Tuple[int, ...]]) -> np.ndarray:
    """Draw an array of the given shape from an existing generator"""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    f, p = model.family, model.params
    if f == Family.GAUSSIAN:
        out = rng.normal(0.0, p["sigma"], shape)
    elif f == Family.UNIFORM:
        out = rng.uniform(-p["a"], p["a"], shape)
    elif f == Family.RADEMACHER:
        out = p["a"] * (2.0 * rng.integers(0, 2, shape) - 1.0)
    elif f == Family.DISCRETE:
        out = rng.choice(np.asarray(model.values), size=shape, p=np.asarray(model.probs))
    elif f == Family.MIXTURE:
        pick = rng.random(shape) < p["weight"]
        out = np.where(pick, rng.normal(0.0, p["sigma"], shape), rng.uniform(-p["a"], p["a"], shape))
    elif f == Family.EXPONENTIAL:
        out = rng.exponential(p["scale"], shape)
    elif f == Family.GAUSSIAN_NORM:
        out = (p["sigma"] * np.sqrt(rng.chisquare(p["k"], shape))) ** p["r"]
    else:
        out = draw(model.base, rng, shape + (model.count,)).sum(axis=-1)
    return out + model.shift


def sample(
    model: RandomModel, size: Union[int, Tuple[int, ...]], seed: int = 0, stream: int = 0, substream: int = DRAWS
) -> np.ndarray:
    """Deterministic draws: the same (seed, stream, substream) always yields the same array"""
    return draw(model, make_generator(seed, stream, substream), size)


def load_samples(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"samples file not found: {path}")
    return np.atleast_1d(np.loadtxt(path, delimiter=",", ndmin=1, comments="#"))


def save_samples(path: Union[str, Path], samples: np.ndarray):
    np.savetxt(path, np.asarray(samples, dtype=float).reshape(-1, 1), delimiter=",", fmt="%.17g")


# ---------------------------------------------------------------------------
# tau_phi norm
# ---------------------------------------------------------------------------

def _lambda_grid(lambda_range: Optional[Tuple[float, float]], points: Optional[int]) -> Tuple[np.ndarray, Tuple[float, float]]:
    lo, hi = lambda_range or (settings.lambda_min, settings.lambda_max)
    if not (0 < lo < hi and math.isfinite(hi)):
        raise DomainError(f"lambda range must satisfy 0 < low < high < inf, got ({lo}, {hi})")
    grid = np.logspace(np.log10(lo), np.log10(hi), points or settings.lambda_points)
    return np.concatenate([-grid[::-1], grid]), (float(lo), float(hi))


def _ratio(phi: OrliczFunction, log_mgf_values: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.asarray(orlicz.inverse(phi, np.maximum(log_mgf_values, 0.0)), dtype=float) / np.abs(lam)


def _refined_supremum(
    ratio_at: Callable[[float], float],
    lam: np.ndarray,
    ratios: np.ndarray,
    refine: bool
) -> Tuple[float, float, str]:
    """Grid supremum plus bounded refinement between the argmax's neighbours"""
    idx = int(np.argmax(ratios))
    best, best_lam = float(ratios[idx]), float(lam[idx])
    half = lam.size // 2
    edge_low = idx in (half - 1, half)
    edge_high = idx in (0, lam.size - 1)

    if refine and not (edge_low or edge_high):
        left, right = sorted((abs(lam[idx - 1]), abs(lam[idx + 1])))
        sign = math.copysign(1.0, lam[idx])
        res = optimize.minimize_scalar(
            lambda u: -ratio_at(sign * math.exp(u)),
            bounds=(math.log(left), math.log(right)), method="bounded", options={"xatol": 1e-10}
        )
        if -res.fun > best:
            best, best_lam = float(-res.fun), sign * math.exp(res.x)

    caveat = ""
    if edge_high:
        caveat = f"supremum at search-range edge lambda={best_lam:g}; the norm may be larger"
    elif edge_low:
        caveat = "supremum approached as lambda -> 0"
    return best, best_lam, caveat


def tau_phi_norm(
    model: RandomModel,
    phi: OrliczFunction,
    lambda_range: Optional[Tuple[float, float]] = None,
    points: Optional[int] = None,
    refine: bool = True,
    allow_uncentered: bool = False
) -> NormEstimate:
    """
    tau_phi(X) = sup over lambda != 0 of phi^{-1}(log E exp(lambda X)) / |lambda|.

    Gaussian models with a quadratic phi use the exact constant ratio;
    everything else is a log-spaced two-sided lambda grid refined by a
    bounded scalar search around the best grid point.
    """
    if not allow_uncentered and not is_centered(model):
        raise PreconditionError(f"tau_phi norm needs a centered model; {model.label} has mean {mean(model):.6g}")

    if (model.family == Family.GAUSSIAN and model.shift == 0.0
            and phi.kind in (OrliczKind.QUADRATIC, OrliczKind.SCALED_QUADRATIC)):
        a = phi.params.get("a", 0.5 if phi.kind == OrliczKind.QUADRATIC else 1.0)
        return NormEstimate(value=model.params["sigma"] / math.sqrt(2.0 * a), method=NormMethod.ANALYTIC)

    lam, bounds = _lambda_grid(lambda_range, points)
    values = log_mgf(model, lam)
    if not np.all(np.isfinite(values)):
        bad = lam[~np.isfinite(values)]
        raise HeavyTailError(
            f"MGF of {model.label} diverges at lambda={bad[np.argmin(np.abs(bad))]:g} inside the search range"
        )

    def ratio_at(x: float) -> float:
        return float(_ratio(phi, log_mgf(model, np.array([x])), np.array([x]))[0])

    best, best_lam, caveat = _refined_supremum(ratio_at, lam, _ratio(phi, values, lam), refine)
    return NormEstimate(value=best, method=NormMethod.MGF_GRID, search_range=bounds, argmax=best_lam, caveat=caveat)


def _plug_in_log_mgf(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    block = max(1, settings.chunk_size * 40 // x.size)
    out = np.empty(lam.size)
    for start in range(0, lam.size, block):
        chunk = lam[start:start + block]
        out[start:start + block] = special.logsumexp(np.multiply.outer(chunk, x), axis=1)
    return out - math.log(x.size)


def tau_phi_norm_empirical(
    samples: Sequence[float],
    phi: OrliczFunction,
    lambda_range: Optional[Tuple[float, float]] = None,
    points: Optional[int] = None,
    center: bool = True
) -> NormEstimate:
    """
    Plug-in tau_phi: the same supremum over the log of the sample-mean exponential (a lower estimate).

    With center=True (the default) the sample mean is subtracted first, so
    the estimate targets the centered variable even when the sample mean
    is off by sampling noise. center=False uses the samples as given.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < 1000:
        raise DomainError(f"empirical tau_phi needs at least 1000 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    if center:
        x = x - x.mean()

    lam, bounds = _lambda_grid(lambda_range, points)
    reach = float(np.max(np.abs(x)))
    too_wide = np.abs(lam) * reach > _EXP_OVERFLOW
    if too_wide.any():
        offending = float(np.min(np.abs(lam[too_wide])))
        raise RangeTooWideError(
            f"lambda={offending:g} times max|x|={reach:.4g} overflows the exponential; narrow the range",
            offending_lambda=offending
        )

    values = _plug_in_log_mgf(x, lam)

    def ratio_at(u: float) -> float:
        return float(_ratio(phi, _plug_in_log_mgf(x, np.array([u])), np.array([u]))[0])

    best, best_lam, edge = _refined_supremum(ratio_at, lam, _ratio(phi, values, lam), refine=True)
    caveat = EMPIRICAL_CAVEAT if not edge else f"{EMPIRICAL_CAVEAT}; {edge}"
    return NormEstimate(value=best, method=NormMethod.SAMPLE_PLUG_IN, search_range=bounds, argmax=best_lam, caveat=caveat)


def tau_phi_norm_inf_form(
    model: RandomModel,
    phi: OrliczFunction,
    lambda_range: Optional[Tuple[float, float]] = None,
    points: Optional[int] = None
) -> NormEstimate:
    """inf{a >= 0 : log E exp(lambda X) <= phi(a lambda) on the lambda grid}, by bisection on a"""
    if not is_centered(model):
        raise PreconditionError(f"tau_phi norm needs a centered model; {model.label} has mean {mean(model):.6g}")
    lam, bounds = _lambda_grid(lambda_range, points)
    values = np.maximum(log_mgf(model, lam), 0.0)
    if not np.all(np.isfinite(values)):
        raise HeavyTailError(f"MGF of {model.label} diverges inside the search range")

    def dominates(a: float) -> bool:
        return bool(np.all(values <= np.asarray(orlicz.evaluate(phi, a * lam)) * (1.0 + 1e-13)))

    hi = 1.0
    while not dominates(hi):
        hi *= 2.0
        if hi > settings.conjugate_bracket_cap:
            raise DivergenceError(f"no finite a dominates the MGF of {model.label}")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dominates(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * hi:
            break
    return NormEstimate(value=hi, method=NormMethod.MGF_GRID, search_range=bounds)


def norm_form_agreement(model: RandomModel, phi: OrliczFunction, rtol: float = 1e-6) -> CheckReport:
    """Compare the supremum form of tau_phi with the infimum form on one shared grid"""
    sup_form = tau_phi_norm(model, phi, refine=False).value
    inf_form = tau_phi_norm_inf_form(model, phi).value
    gap = abs(sup_form - inf_form)
    passed = gap <= rtol * max(1.0, sup_form)
    if not passed:
        logger.warning(f"tau_phi forms disagree for {model.label} under {phi.name}: sup={sup_form:.12g}, inf={inf_form:.12g}")
    return CheckReport(
        name="norm_form_agreement", lhs=sup_form, rhs=inf_form, passed=passed,
        detail=f"|sup - inf| = {gap:.3g}"
    )


# ---------------------------------------------------------------------------
# Moment-ratio and psi_1 norms
# ---------------------------------------------------------------------------

def _check_normalized(phi: OrliczFunction):
    at_one = float(orlicz.inverse(phi, 1.0))
    if abs(at_one - 1.0) > 1e-9:
        raise NormalizationError(
            f"{phi.name} has phi^-1(1) = {at_one:.12g}; rescale phi so that phi^-1(1) = 1 (e.g. scaled-quadratic)"
        )


def _moment_supremum(log_norm_at: Callable[[np.ndarray], np.ndarray], phi: OrliczFunction, p_max: float) -> Tuple[float, float]:
    if p_max < 1:
        raise DomainError(f"p_max must be at least 1, got {p_max}")
    step = settings.moment_p_step
    ps = np.arange(1.0, p_max + 0.5 * step, step)

    def ratio(q: np.ndarray) -> np.ndarray:
        return np.exp(log_norm_at(q)) / np.asarray(orlicz.inverse(phi, q), dtype=float)

    ratios = ratio(ps)
    idx = int(np.argmax(ratios))
    best, best_p = float(ratios[idx]), float(ps[idx])
    lo, hi = ps[max(idx - 1, 0)], ps[min(idx + 1, ps.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda q: -float(ratio(np.array([q]))[0]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
        )
        if -res.fun > best:
            best, best_p = float(-res.fun), float(res.x)
    return best, best_p


def moment_orlicz_norm(model: RandomModel, phi: OrliczFunction, p_max: Optional[float] = None) -> NormEstimate:
    """sup over p in [1, p_max] of ||X||_p / phi^{-1}(p); phi must satisfy phi^{-1}(1) = 1"""
    _check_normalized(phi)
    p_max = p_max or settings.moment_p_max
    best, best_p = _moment_supremum(lambda q: log_abs_moment(model, q) / q, phi, p_max)
    return NormEstimate(value=best, method=NormMethod.MOMENT_GRID, search_range=(1.0, float(p_max)), argmax=best_p)


def moment_orlicz_norm_empirical(samples: Sequence[float], phi: OrliczFunction, p_max: Optional[float] = None) -> NormEstimate:
    _check_normalized(phi)
    x = np.abs(np.asarray(samples, dtype=float).reshape(-1))
    if x.size == 0:
        raise DomainError("samples must be nonempty")
    p_max = p_max or settings.moment_p_max
    with np.errstate(divide="ignore"):
        logs = np.log(x)

    def log_norm(q: np.ndarray) -> np.ndarray:
        return (special.logsumexp(np.multiply.outer(q, logs), axis=-1) - math.log(x.size)) / q

    best, best_p = _moment_supremum(log_norm, phi, p_max)
    return NormEstimate(
        value=best, method=NormMethod.MOMENT_GRID, search_range=(1.0, float(p_max)), argmax=best_p,
        caveat="plug-in moments"
    )


def exp_orlicz_norm(model_or_samples: Union[RandomModel, Sequence[float]], threshold: Optional[float] = None) -> NormEstimate:
    """
    ||X||_psi1 = inf{t > 0 : E exp(|X|/t) <= threshold}.

    Works in s = 1/t, where log E exp(s|X|) is increasing, and bisects
    geometrically between the last s below log(threshold) and the first above.
    """
    threshold = threshold or settings.psi1_threshold
    if threshold <= 1:
        raise DomainError(f"psi_1 threshold must exceed 1, got {threshold}")
    target = math.log(threshold)

    if isinstance(model_or_samples, RandomModel):
        model = model_or_samples
        method = NormMethod.ANALYTIC

        def g(s: float) -> float:
            return float(log_abs_mgf(model, s))
    else:
        x = np.abs(np.asarray(model_or_samples, dtype=float).reshape(-1))
        if x.size == 0:
            raise DomainError("samples must be nonempty")
        method = NormMethod.SAMPLE_PLUG_IN
        log_n = math.log(x.size)

        def g(s: float) -> float:
            return float(special.logsumexp(s * x) - log_n)

    if g(1.0) <= 1e-15:
        return NormEstimate(value=0.0, method=method)

    s_lo = 1.0 / settings.psi1_t_cap
    if not g(s_lo) <= target:
        raise DivergenceError(f"E exp(|X|/t) exceeds {threshold:g} for every t <= {settings.psi1_t_cap:g}")
    s_hi = 1.0
    while g(s_hi) <= target:
        s_lo, s_hi = s_hi, 2.0 * s_hi
    for _ in range(200):
        mid = math.sqrt(s_lo * s_hi)
        with np.errstate(over="ignore"):
            above = not g(mid) <= target
        if above:
            s_hi = mid
        else:
            s_lo = mid
        if s_hi - s_lo <= 1e-14 * s_hi:
            break
    return NormEstimate(value=1.0 / math.sqrt(s_lo * s_hi), method=method)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def centering_inflation_check(model: RandomModel, phi: OrliczFunction) -> CheckReport:
    """||X - EX||_tau <= 2 ||X||_tau, the uncentered side taken over the same finite lambda grid"""
    lhs = tau_phi_norm(centered(model), phi).value
    rhs = tau_phi_norm(model, phi, allow_uncentered=True).value
    return CheckReport(
        name="centering_inflation", lhs=lhs, rhs=rhs, passed=lhs <= 2.0 * rhs + 1e-6,
        detail=f"shift {mean(model):.6g}", extras={"ratio": lhs / rhs if rhs > 0 else 0.0}
    )


def conditional_contraction_check(
    values: Sequence[Sequence[float]],
    joint_probs: Sequence[Sequence[float]],
    phi: OrliczFunction
) -> CheckReport:
    """
    ||E[Z | X]||_tau <= ||Z||_tau for a finite joint model.

    values[i][j] is Z when X takes its i-th and X* its j-th value,
    joint_probs[i][j] the probability of that pair. Both variables are
    centered by E Z and evaluated on one shared lambda grid.
    """
    w = np.asarray(values, dtype=float)
    p = np.asarray(joint_probs, dtype=float)
    if w.ndim != 2 or w.shape != p.shape or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("values and joint probabilities must be matching 2-D arrays with probabilities summing to 1")

    ez = float((w * p).sum())
    rows = p.sum(axis=1)
    keep = rows > 0
    conditional = (w * p).sum(axis=1)[keep] / rows[keep]

    joint = discrete(w.ravel() - ez, p.ravel() / p.sum())
    cond = discrete(conditional - ez, rows[keep] / rows[keep].sum())
    lhs = tau_phi_norm(cond, phi, refine=False, allow_uncentered=True).value
    rhs = tau_phi_norm(joint, phi, refine=False, allow_uncentered=True).value
    return CheckReport(name="conditional_contraction", lhs=lhs, rhs=rhs, passed=lhs <= rhs + 1e-8)
