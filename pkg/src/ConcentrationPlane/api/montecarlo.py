"""
Monte Carlo Verification
Seeded campaigns that check each tail bound against empirical tails and calibrate unspecified constants
"""

import hashlib
import logging
import math
import time
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError, field_validator, model_validator

import canonical
import functional
import norms
import orlicz
import randomized
from errors import CalibrationError, ConfigError
from norms import RandomModel
from observability import observability
from sampling import (
    COEFFICIENTS,
    DRAWS,
    UNIFORMS,
    binomial_p_value,
    clopper_pearson,
    confidence_level,
    make_generator,
)
from schemas import CalibrationResult, CampaignResult, CampaignSummary, GridPoint, Provenance
from settings import settings


logger = logging.getLogger(__name__)

MIN_TRIALS = 1000


class BoundKind(str, Enum):
    CANONICAL_GENERAL = "canonical-general"
    CANONICAL_IID = "canonical-iid"
    RANDOMIZED = "randomized"
    FUNCTIONAL = "functional"


class CampaignConfig(BaseModel):
    """
    A dominance-verification campaign

    Config files are key=value lines (one key per field, lists
    comma-separated). Keys that do not apply to the chosen bound are
    ignored; unknown keys are rejected.
    """

    bound: BoundKind
    model: str = "gaussian:1"
    phi: Optional[str] = None
    t: List[float] = []
    dimension: int = 20
    trials: int = 100_000
    seed: int = 0
    stream: int = 0
    ci_multiplier: float = 3.0
    threshold_scale: float = 1.0

    v_grid: List[float] = [1.0, 2.0, 4.0]
    s_grid: List[float] = [1.0, 2.0]
    K: Optional[float] = None

    z_grid: List[float] = []
    K1: Optional[float] = None
    K2: Optional[float] = None
    c: float = 1.0
    l1_mode: str = "norm"

    alpha_grid: List[float] = [0.1]
    n_summands: int = 10
    C: float = 4.0
    tau_mode: str = "sum"

    n_coins: int = 12
    coin: float = 1.0

    @field_validator("t", "v_grid", "s_grid", "z_grid", "alpha_grid", mode="before")
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return [float(x) for x in value.replace(";", ",").split(",") if x.strip()]
        return value

    @model_validator(mode="after")
    def _check(self) -> "CampaignConfig":
        if self.trials < MIN_TRIALS:
            raise ValueError(f"trials must be at least {MIN_TRIALS}, got {self.trials}")
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream must be nonnegative")
        if not self.threshold_scale > 0:
            raise ValueError(f"threshold_scale must be positive, got {self.threshold_scale}")
        grids = {
            BoundKind.CANONICAL_GENERAL: ("v_grid", "s_grid"),
            BoundKind.CANONICAL_IID: ("z_grid",),
            BoundKind.RANDOMIZED: ("alpha_grid",),
            BoundKind.FUNCTIONAL: (),
        }[self.bound]
        for name in grids:
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty for bound {self.bound.value}")
        return self

    @property
    def phi_spec(self) -> str:
        if self.phi:
            return self.phi
        return "scaled-quadratic" if self.bound == BoundKind.FUNCTIONAL else "quadratic"


def load_config(path: Union[str, Path]) -> CampaignConfig:
    """Parse a key=value campaign file"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"campaign config not found: {path}")

    # keys are case-sensitive where fields differ only by case (c and C)
    raw = {k.strip().replace("-", "_"): v for k, v in dotenv_values(path).items() if v is not None}
    folded = {name.lower(): name for name in CampaignConfig.model_fields}
    values, unknown = {}, []
    for key, value in raw.items():
        name = key if key in CampaignConfig.model_fields else folded.get(key.lower())
        if name is None:
            unknown.append(key)
        else:
            values[name] = value
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return CampaignConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid campaign config: {e.errors()[0]['msg']}")


def config_hash(config: CampaignConfig) -> str:
    return hashlib.sha256(config.model_dump_json().encode()).hexdigest()


# ---------------------------------------------------------------------------
# Sampling and empirical tails
# ---------------------------------------------------------------------------

def sample_canonical(
    models: Union[RandomModel, Sequence[RandomModel]],
    t: Union[canonical.CoefficientVector, Sequence[float]],
    n_trials: int,
    seed: int = 0,
    stream: int = 0
) -> np.ndarray:
    """n_trials realizations of Y_t = sum t_i X_i, drawn in chunks from one (seed, stream)"""
    tv = canonical.as_vector(t).array
    n = tv.size
    if isinstance(models, RandomModel):
        models = [models] * n
    models = list(models)
    if len(models) != n:
        raise ConfigError(f"got {len(models)} models for {n} coefficients")
    if n_trials < 1:
        raise ConfigError(f"n_trials must be positive, got {n_trials}")

    rng = make_generator(seed, stream, DRAWS)
    shared = all(m == models[0] for m in models)
    block = max(1, settings.chunk_size // n)
    out = np.empty(n_trials)
    for start in range(0, n_trials, block):
        rows = min(block, n_trials - start)
        if shared:
            draws = norms.draw(models[0], rng, (rows, n))
        else:
            draws = np.stack([norms.draw(m, rng, rows) for m in models], axis=1)
        out[start:start + rows] = draws @ tv
    return out


def empirical_tail(samples: Sequence[float], z: float, multiplier: Optional[float] = None) -> Tuple[float, float, float]:
    """Fraction of samples >= z with its exact binomial interval at +/- multiplier standard errors"""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise ConfigError("samples must be nonempty")
    hits = int(np.count_nonzero(x >= z))
    low, high = clopper_pearson(hits, x.size, confidence_level(multiplier or settings.ci_multiplier))
    return hits / x.size, low, high


def _grid_point(parameters: dict, threshold: float, hits: int, trials: int, bound: float, multiplier: float) -> GridPoint:
    low, high = clopper_pearson(hits, trials, confidence_level(multiplier))
    return GridPoint(
        parameters=parameters,
        threshold=threshold,
        empirical_tail=hits / trials,
        ci_low=low,
        ci_high=high,
        bound=bound,
        dominated=bound >= high,
        p_value=binomial_p_value(hits, trials, bound),
    )


# ---------------------------------------------------------------------------
# Campaign pieces
# ---------------------------------------------------------------------------

def _coefficients(config: CampaignConfig) -> np.ndarray:
    if config.t:
        return np.asarray(config.t, dtype=float)
    rng = make_generator(config.seed, config.stream, COEFFICIENTS)
    return rng.standard_normal(config.dimension)


def _scale_floor(value: float, name: str) -> float:
    if value <= 0:
        logger.warning(f"{name} is 0 for a degenerate model; clamping to {settings.min_scale:g}")
        return settings.min_scale
    return value


def _general_points(config: CampaignConfig, model: RandomModel, phi: orlicz.OrliczFunction) -> List[GridPoint]:
    t = _coefficients(config)
    K = config.K
    if K is None:
        K = norms.tau_phi_norm(norms.centered(model), orlicz.conjugate_function(phi)).value
    K = _scale_floor(K, "K")

    y = sample_canonical(model, t, config.trials, config.seed, config.stream)
    points = []
    for v in config.v_grid:
        nv = canonical.solve_nv(phi, t, v)
        for s in config.s_grid:
            report = canonical.tail_bound_general(nv, s, K)
            threshold = report.threshold * config.threshold_scale
            hits = int(np.count_nonzero(y >= threshold))
            points.append(_grid_point(
                {"v": v, "s": s}, threshold, hits, config.trials, report.probability_bound, config.ci_multiplier
            ))
    return points


def _iid_constants(config: CampaignConfig, model: RandomModel, phi: orlicz.OrliczFunction) -> Tuple[float, float]:
    centered = norms.centered(model)
    K1 = config.K1 if config.K1 is not None else norms.tau_phi_norm(centered, orlicz.conjugate_function(phi)).value
    K2 = config.K2 if config.K2 is not None else norms.exp_orlicz_norm(centered).value
    return _scale_floor(K1, "K1"), _scale_floor(K2, "K2")


def _iid_probability(z: float, t: np.ndarray, phi, K1: float, K2: float, c: float, l1_mode: str) -> float:
    """The i.i.d. tail bound, equal to 1 at z <= 0"""
    if z <= 0:
        return 1.0
    return canonical.tail_bound_iid(z, t, phi, K1, K2, c, l1_mode).probability_bound


def _iid_points(config: CampaignConfig, model: RandomModel, phi: orlicz.OrliczFunction) -> List[GridPoint]:
    t = _coefficients(config)
    K1, K2 = _iid_constants(config, model, phi)
    y = sample_canonical(norms.centered(model), t, config.trials, config.seed, config.stream)
    points = []
    for z in config.z_grid:
        threshold = z * config.threshold_scale
        hits = int(np.count_nonzero(y >= threshold))
        bound = _iid_probability(z, t, phi, K1, K2, config.c, config.l1_mode)
        points.append(_grid_point({"z": z}, threshold, hits, config.trials, bound, config.ci_multiplier))
    return points


def _randomized_points(config: CampaignConfig, model: RandomModel, phi: orlicz.OrliczFunction) -> List[GridPoint]:
    tau = randomized.summand_tau(model, config.n_summands, phi, config.tau_mode) * config.threshold_scale
    points = []
    for alpha in config.alpha_grid:
        result = randomized.randomized_validity_campaign(
            model, config.n_summands, alpha, phi, config.C, config.trials, config.seed, config.tau_mode,
            tau=tau, stream=config.stream
        )
        points.append(_grid_point(
            {"alpha": alpha}, result.mean_thresholds["randomized"], result.violations, config.trials, alpha,
            config.ci_multiplier
        ))
    return points


def _functional_points(config: CampaignConfig, phi: orlicz.OrliczFunction) -> List[GridPoint]:
    fm = functional.DiscreteFunctionModel.coins("sum", config.n_coins, config.coin)
    inputs = functional.functional_norm_inputs(fm, phi)
    z_grid = config.z_grid or np.linspace(config.coin, config.n_coins * config.coin, 50).tolist()

    y = norms.sample(norms.iid_sum(norms.rademacher(config.coin), config.n_coins), config.trials, config.seed, config.stream)
    points = []
    for z in z_grid:
        threshold = z * config.threshold_scale
        hits = int(np.count_nonzero(y >= threshold))
        bound = functional.med_tail_bound(z, inputs.A, inputs.B)
        points.append(_grid_point(
            {"z": z, "A": inputs.A, "B": inputs.B}, threshold, hits, config.trials, bound, config.ci_multiplier
        ))
    return points


def verify_dominance(config: CampaignConfig) -> CampaignResult:
    """
    Run one campaign and mark each grid point dominated (bound >= CI upper endpoint) or violated.

    Identical configs give identical results: every draw comes from the
    configured (seed, stream) Philox keys.
    """
    started = time.perf_counter()
    model = norms.parse_model(config.model)
    phi = orlicz.parse_phi(config.phi_spec)

    if config.bound == BoundKind.CANONICAL_GENERAL:
        points = _general_points(config, model, phi)
    elif config.bound == BoundKind.CANONICAL_IID:
        points = _iid_points(config, model, phi)
    elif config.bound == BoundKind.RANDOMIZED:
        points = _randomized_points(config, model, phi)
    else:
        points = _functional_points(config, phi)

    violations = sum(1 for p in points if not p.dominated)
    worst = min((p.bound - p.ci_high for p in points), default=0.0)
    digest = config_hash(config)
    result = CampaignResult(
        points=points,
        summary=CampaignSummary(points=len(points), violations=violations, worst_margin=worst),
        provenance=Provenance(
            bound=config.bound.value, seed=config.seed, stream=config.stream, trials=config.trials, config_hash=digest
        ),
    )

    observability.log_campaign(
        config.bound.value, digest, config.seed, len(points), violations, int((time.perf_counter() - started) * 1000)
    )
    observability.track_metric("worst_dominance_margin", worst, {"bound": config.bound.value})
    return result


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

def _bisect_feasible(feasible: Callable[[float], bool], largest: bool) -> Tuple[float, bool]:
    """Log-scale bisection for the feasibility boundary inside the calibration range"""
    lo, hi = settings.calibration_low, settings.calibration_high
    edge, other = (hi, lo) if largest else (lo, hi)
    if feasible(edge):
        return edge, True
    if not feasible(other):
        raise CalibrationError(f"no constant in [{lo:g}, {hi:g}] makes the bound dominate")

    good, bad = other, edge
    for _ in range(200):
        mid = math.sqrt(good * bad)
        if feasible(mid):
            good = mid
        else:
            bad = mid
        if abs(bad - good) <= 1e-10 * good:
            break
    return good, False


def _centered_sums(
    model: RandomModel, n_summands: int, trials: int, seed: int, stream: int
) -> Tuple[np.ndarray, np.ndarray]:
    """The (sum, U) draws of a randomized campaign with the same (seed, stream)"""
    mu = norms.mean(model)
    x_rng = make_generator(seed, stream, DRAWS)
    u = 1.0 - make_generator(seed, stream, UNIFORMS).random(trials)
    block = max(1, settings.chunk_size // n_summands)
    sums = np.empty(trials)
    for start in range(0, trials, block):
        rows = min(block, trials - start)
        sums[start:start + rows] = (norms.draw(model, x_rng, (rows, n_summands)) - mu).sum(axis=1)
    return sums, u


def calibrate_constant(config: CampaignConfig, constant_name: str) -> CalibrationResult:
    """
    Largest c (canonical-iid) or smallest C (randomized) that keeps every grid point dominated.

    Draws are made once; the constant is bisected in log scale over the
    configured calibration range. If every value is feasible the range
    end is returned with at_cap set.
    """
    model = norms.parse_model(config.model)
    phi = orlicz.parse_phi(config.phi_spec)
    level = confidence_level(config.ci_multiplier)

    if constant_name == "c" and config.bound == BoundKind.CANONICAL_IID:
        t = _coefficients(config)
        K1, K2 = _iid_constants(config, model, phi)
        y = sample_canonical(norms.centered(model), t, config.trials, config.seed, config.stream)
        ceilings = [
            clopper_pearson(int(np.count_nonzero(y >= z * config.threshold_scale)), config.trials, level)[1]
            for z in config.z_grid
        ]

        def feasible(c: float) -> bool:
            return all(
                _iid_probability(z, t, phi, K1, K2, c, config.l1_mode) >= high
                for z, high in zip(config.z_grid, ceilings)
            )

        value, at_cap = _bisect_feasible(feasible, largest=True)
        grid = list(config.z_grid)

    elif constant_name == "C" and config.bound == BoundKind.RANDOMIZED:
        tau = _scale_floor(randomized.summand_tau(model, config.n_summands, phi, config.tau_mode), "tau")
        sums, u = _centered_sums(model, config.n_summands, config.trials, config.seed, config.stream)

        def feasible(C: float) -> bool:
            for alpha in config.alpha_grid:
                thresholds = randomized.randomized_hoeffding_threshold(alpha, tau, phi, C, u)
                hits = int(np.count_nonzero(sums >= thresholds))
                if clopper_pearson(hits, config.trials, level)[1] > alpha:
                    return False
            return True

        value, at_cap = _bisect_feasible(feasible, largest=False)
        grid = list(config.alpha_grid)

    else:
        raise ConfigError(f"cannot calibrate '{constant_name}' for bound {config.bound.value}; use c with canonical-iid or C with randomized")

    observability.log_calibration(constant_name, value, grid)
    return CalibrationResult(constant=constant_name, value=value, grid=grid, at_cap=at_cap)
