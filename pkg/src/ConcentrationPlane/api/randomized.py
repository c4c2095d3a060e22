"""
Randomized Concentration
Uniformly randomized Markov inequality and randomized Hoeffding thresholds with their U=1 classical forms
"""

import logging
import math
import time
from typing import Optional, Union

import numpy as np

import norms
import orlicz
from errors import DomainError, PreconditionError
from norms import RandomModel
from observability import observability
from orlicz import OrliczFunction
from sampling import DRAWS, UNIFORMS, clopper_pearson, confidence_level, make_generator, proportion_standard_error
from schemas import CheckReport, RandomizedCampaignResult
from settings import settings


logger = logging.getLogger(__name__)

DEFAULT_C = 4.0


def _validate_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def randomized_markov_check(model: RandomModel, a: float, n_trials: int, seed: int = 0, stream: int = 0) -> CheckReport:
    """
    Monte Carlo check of P(X >= U/a) = E[min(aX, 1)] for nonnegative X and U ~ Uniform(0, 1].

    X and U come from separate sub-streams of one (seed, stream) key. The
    check passes when the two estimates differ by at most the configured
    number of combined standard errors.
    """
    if not a > 0:
        raise DomainError(f"a must be positive, got {a}")
    if n_trials < 1:
        raise DomainError(f"n_trials must be positive, got {n_trials}")

    x = norms.sample(model, n_trials, seed=seed, stream=stream, substream=DRAWS)
    if np.any(x < 0):
        raise PreconditionError(f"randomized Markov needs nonnegative X; drew {float(x.min()):.6g} from {model.label}")
    u = 1.0 - make_generator(seed, stream, UNIFORMS).random(n_trials)

    hits = a * x >= u
    lhs = float(hits.mean())
    capped = np.minimum(a * x, 1.0)
    rhs = float(capped.mean())

    se_lhs = proportion_standard_error(lhs, n_trials)
    se_rhs = float(capped.std(ddof=0) / math.sqrt(n_trials))
    se = math.hypot(se_lhs, se_rhs)
    gap = abs(lhs - rhs)
    z = gap / se if se > 0 else (0.0 if gap == 0 else math.inf)

    return CheckReport(
        name="randomized_markov", lhs=lhs, rhs=rhs, passed=z <= settings.ci_multiplier,
        detail=f"|lhs - rhs| = {z:.3g} combined standard errors",
        extras={"se_lhs": se_lhs, "se_rhs": se_rhs, "z": z, "trials": float(n_trials)}
    )


def randomized_hoeffding_threshold(
    alpha: float,
    tau: float,
    phi: OrliczFunction,
    C: float = DEFAULT_C,
    u: Union[float, np.ndarray] = 1.0
) -> Union[float, np.ndarray]:
    """
    C tau (2 ln(1/alpha) + ln u) / phi^{-1}(ln(1/alpha)).

    Vectorized over u. The threshold turns negative once u < alpha^2.
    """
    _validate_alpha(alpha)
    if not C > 0:
        raise DomainError(f"C must be positive, got {C}")
    if not tau >= 0:
        raise DomainError(f"tau must be nonnegative, got {tau}")
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0) or np.any(u_arr > 1):
        raise DomainError("u must lie in (0, 1]")

    level = math.log(1.0 / alpha)
    scale = C * tau / float(orlicz.inverse(phi, level))
    out = scale * (2.0 * level + np.log(u_arr))
    return float(out) if out.ndim == 0 else out


def classical_threshold(alpha: float, tau: float, phi: OrliczFunction, C: float = DEFAULT_C) -> float:
    """The randomized threshold at U = 1"""
    return randomized_hoeffding_threshold(alpha, tau, phi, C, u=1.0)


def expected_tightening(alpha: float, tau: float, phi: OrliczFunction, C: float = DEFAULT_C) -> float:
    """E[randomized - classical] = C tau E[ln U] / phi^{-1}(ln(1/alpha)) with E ln U = -1"""
    _validate_alpha(alpha)
    return -C * tau / float(orlicz.inverse(phi, math.log(1.0 / alpha)))


def subgaussian_mean_threshold(alpha: float, sigma: float, n: int, u: Union[float, np.ndarray] = 1.0):
    """sigma sqrt(2 ln(1/alpha) / n) + sigma ln(u) / sqrt(2 n ln(1/alpha)) for sample means"""
    _validate_alpha(alpha)
    if not (sigma > 0 and n >= 1):
        raise DomainError(f"need sigma > 0 and n >= 1, got sigma={sigma}, n={n}")
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0) or np.any(u_arr > 1):
        raise DomainError("u must lie in (0, 1]")
    level = math.log(1.0 / alpha)
    out = sigma * math.sqrt(2.0 * level / n) + sigma * np.log(u_arr) / math.sqrt(2.0 * n * level)
    return float(out) if out.ndim == 0 else out


def summand_tau(model: RandomModel, n_summands: int, phi: OrliczFunction, tau_mode: str = "sum") -> float:
    """tau_phi of the centered sum (mode 'sum') or of one centered summand (mode 'summand')"""
    if tau_mode not in ("sum", "summand"):
        raise DomainError(f"tau_mode must be 'sum' or 'summand', got {tau_mode}")
    base = norms.centered(model)
    target = norms.iid_sum(base, n_summands) if tau_mode == "sum" else base
    return norms.tau_phi_norm(target, phi).value


def randomized_validity_campaign(
    model: RandomModel,
    n_summands: int,
    alpha: float,
    phi: OrliczFunction,
    C: float = DEFAULT_C,
    n_trials: int = 100_000,
    seed: int = 0,
    tau_mode: str = "sum",
    tau: Optional[float] = None,
    stream: int = 0
) -> RandomizedCampaignResult:
    """
    Per trial draw X_1..X_N and U from separate sub-streams of (seed, stream) and count
    sum (X_i - E X) >= randomized threshold(U).

    Trials whose threshold is negative (U < alpha^2) count as violations,
    the literal reading of the inequality.
    """
    _validate_alpha(alpha)
    if n_trials < 10_000:
        raise DomainError(f"a validity campaign needs at least 10^4 trials, got {n_trials}")
    if n_summands < 1:
        raise DomainError(f"n_summands must be positive, got {n_summands}")

    started = time.perf_counter()
    tau = summand_tau(model, n_summands, phi, tau_mode) if tau is None else tau
    if tau <= 0:
        logger.warning(f"tau of {model.label} is 0; clamping to {settings.min_scale:g}")
        tau = settings.min_scale
    mu = norms.mean(model)

    x_rng = make_generator(seed, stream, DRAWS)
    u = 1.0 - make_generator(seed, stream, UNIFORMS).random(n_trials)
    thresholds = randomized_hoeffding_threshold(alpha, tau, phi, C, u)

    block = max(1, settings.chunk_size // n_summands)
    violations = 0
    for start in range(0, n_trials, block):
        rows = min(block, n_trials - start)
        sums = (norms.draw(model, x_rng, (rows, n_summands)) - mu).sum(axis=1)
        violations += int(np.count_nonzero(sums >= thresholds[start:start + rows]))

    classical = classical_threshold(alpha, tau, phi, C)
    tightening = thresholds - classical
    ci_low, ci_high = clopper_pearson(violations, n_trials, confidence_level(settings.ci_multiplier))

    result = RandomizedCampaignResult(
        alpha=alpha, C=C, mode=tau_mode, tau=tau, violations=violations, trials=n_trials,
        ci_low=ci_low, ci_high=ci_high,
        mean_thresholds={"randomized": float(thresholds.mean()), "classical": classical},
        tightening_mean=float(tightening.mean()),
        tightening_se=float(tightening.std(ddof=1) / math.sqrt(n_trials)),
        expected_tightening=expected_tightening(alpha, tau, phi, C),
    )
    observability.log_campaign(
        "randomized", f"alpha={alpha:g},N={n_summands},mode={tau_mode}", seed, 1, int(ci_high > alpha),
        int((time.perf_counter() - started) * 1000)
    )
    return result
