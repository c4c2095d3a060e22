"""
Learning-Theory Applications
PCA reconstruction-error, Rademacher-complexity and linear-regression bounds with finite-dimensional counterparts
"""

import logging
import math
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from errors import DomainError, HypothesisViolatedError
from observability import observability
from sampling import make_generator
from schemas import CheckReport, MonteCarloEstimate
from settings import settings


logger = logging.getLogger(__name__)

EXPECTED_MINUS_EMPIRICAL = "expected-minus-empirical"
EMPIRICAL_MINUS_EXPECTED = "empirical-minus-expected"


def _confidence_level(n: int, delta: float) -> float:
    """ln(1/delta), after checking n >= ln(1/delta) >= 1"""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    level = math.log(1.0 / delta)
    if level < 1.0 - 1e-12:
        raise HypothesisViolatedError(f"ln(1/delta) >= 1 fails: ln(1/delta) = {level:.6g}")
    if n < level * (1.0 - 1e-12):
        raise HypothesisViolatedError(f"n >= ln(1/delta) fails: n = {n}, ln(1/delta) = {level:.6g}")
    return level


def _nonnegative(**values: float):
    for name, value in values.items():
        if not value >= 0:
            raise DomainError(f"{name} must be nonnegative, got {value}")


def _symmetric(matrix: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(m), initial=0.0))):
        raise DomainError(f"{name} must be symmetric within 1e-12")
    return 0.5 * (m + m.T)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def pca_bound(d: int, n: int, delta: float, K3: float) -> float:
    """12 sqrt(d) e K3 sqrt(ln(1/delta) / n), K3 the moment-ratio norm of ||X||^2"""
    if d < 1:
        raise DomainError(f"subspace rank d must be at least 1, got {d}")
    _nonnegative(K3=K3)
    level = _confidence_level(n, delta)
    bound = 12.0 * math.sqrt(d) * math.e * K3 * math.sqrt(level / n)
    observability.log_bound("pca", bound, delta, {"d": float(d), "n": float(n), "K3": K3})
    return bound


def pca_trace_term_candidates(n: int, delta: float, K3: float, psi1: float) -> Dict[str, float]:
    """Both readings of the trace term: K3 sqrt(ln/n) and ||X||^2_psi1 sqrt(ln/n), with their max"""
    _nonnegative(K3=K3, psi1=psi1)
    root = math.sqrt(_confidence_level(n, delta) / n)
    moment_term, psi1_term = K3 * root, psi1 * root
    return {"moment_term": moment_term, "psi1_term": psi1_term, "max": max(moment_term, psi1_term)}


def top_eigen_sum(matrix: np.ndarray, d: int) -> float:
    """sup over rank-d projections P of <P, M>_HS: the sum of the d largest eigenvalues"""
    m = _symmetric(matrix, "M")
    if not 1 <= d <= m.shape[0]:
        raise DomainError(f"d must lie in [1, {m.shape[0]}], got {d}")
    return float(np.linalg.eigvalsh(m)[-d:].sum())


def pca_gap_from_difference(difference: np.ndarray, d: int, trace_term: float = 0.0) -> float:
    """Top-d eigenvalue sum of a second-moment difference plus the trace term"""
    return top_eigen_sum(difference, d) + trace_term


class PcaInstance(BaseModel):
    """
    A synthetic PCA problem: n sample points in R^m, the population second
    moment S they were drawn under, and the subspace rank d.

    Build through PcaInstance.of, which raises DomainError on bad shapes.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sample: np.ndarray
    population: np.ndarray
    d: int

    @model_validator(mode="after")
    def _check(self) -> "PcaInstance":
        m = self.population.shape[0]
        if self.sample.ndim != 2 or self.sample.shape[1] != m or self.sample.shape[0] < 1:
            raise ValueError(f"sample must be n x {m}, got shape {self.sample.shape}")
        if not 1 <= self.d <= m:
            raise ValueError(f"d must lie in [1, {m}], got {self.d}")
        return self

    @classmethod
    def of(cls, sample: np.ndarray, population: np.ndarray, d: int) -> "PcaInstance":
        s = _symmetric(population, "population second moment")
        x = np.asarray(sample, dtype=float)
        try:
            return cls(sample=x, population=s, d=d)
        except ValidationError as e:
            raise DomainError(str(e.errors()[0]["msg"])) from e

    @property
    def m(self) -> int:
        return self.population.shape[0]

    @property
    def n(self) -> int:
        return self.sample.shape[0]

    @property
    def empirical(self) -> np.ndarray:
        """S_hat = (1/n) sum x_i x_i^T"""
        s_hat = self.sample.T @ self.sample / self.n
        return 0.5 * (s_hat + s_hat.T)


def pca_empirical_gap(inst: PcaInstance, direction: str = EXPECTED_MINUS_EMPIRICAL) -> float:
    """
    Signed sup over rank-d projections of the reconstruction-error gap.

    With S the population and S_hat the empirical second moment, the loss
    ||Px - x||^2 = ||x||^2 - <P, x x^T> gives
      expected - empirical = (tr S - tr S_hat) + top_d(S_hat - S)
      empirical - expected = (tr S_hat - tr S) + top_d(S - S_hat)
    """
    s, s_hat = inst.population, inst.empirical
    if direction == EXPECTED_MINUS_EMPIRICAL:
        return pca_gap_from_difference(s_hat - s, inst.d, float(np.trace(s) - np.trace(s_hat)))
    if direction == EMPIRICAL_MINUS_EXPECTED:
        return pca_gap_from_difference(s - s_hat, inst.d, float(np.trace(s_hat) - np.trace(s)))
    raise DomainError(f"unknown direction '{direction}'")


def random_frames(m: int, d: int, count: int, seed: int = 0, stream: int = 0) -> np.ndarray:
    """count random orthonormal m x d frames (QR of Gaussian matrices)"""
    gaussians = make_generator(seed, stream).standard_normal((count, m, d))
    q, _ = np.linalg.qr(gaussians)
    return q


def eigen_sup_check(matrix: np.ndarray, d: int, n_frames: int = 10_000, seed: int = 0) -> CheckReport:
    """No random rank-d frame beats the top-d eigenvalue sum, and the eigenvector frame attains it"""
    m = _symmetric(matrix, "M")
    target = top_eigen_sum(m, d)

    frames = random_frames(m.shape[0], d, n_frames, seed)
    best = float(np.einsum("fid,ij,fjd->f", frames, m, frames).max())

    _, vectors = np.linalg.eigh(m)
    top = vectors[:, -d:]
    attained = float(np.trace(top.T @ m @ top))
    tol = 1e-9 * max(1.0, abs(target))
    return CheckReport(
        name="eigen_sup", lhs=best, rhs=target,
        passed=best <= target + tol and abs(attained - target) <= tol,
        extras={"eigenvector_frame": attained, "frames": float(n_frames)}
    )


# ---------------------------------------------------------------------------
# Rademacher complexity
# ---------------------------------------------------------------------------

def rademacher_complexity_linear(
    sample: np.ndarray,
    L: float,
    n_eps: int = 10_000,
    seed: int = 0
) -> MonteCarloEstimate:
    """
    Monte Carlo (2/n) E_eps sup_{||w|| <= L} sum eps_i <w, x_i> = (2/n) L E||sum eps_i x_i||.

    Sign vectors come from stream 0 of the seed, drawn in chunks.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 1:
        raise DomainError("sample must hold at least one point")
    _nonnegative(L=L)
    if n_eps < 2:
        raise DomainError(f"n_eps must be at least 2, got {n_eps}")

    rng = make_generator(seed, 0)
    block = max(1, settings.chunk_size // n)
    values = np.empty(n_eps)
    for start in range(0, n_eps, block):
        rows = min(block, n_eps - start)
        signs = 2.0 * rng.integers(0, 2, (rows, n)) - 1.0
        values[start:start + rows] = np.linalg.norm(signs @ x, axis=1)
    values *= 2.0 * L / n

    return MonteCarloEstimate(
        value=float(values.mean()), standard_error=float(values.std(ddof=1) / math.sqrt(n_eps)), draws=n_eps
    )


def rademacher_bound(n: int, delta: float, L: float, normX: float, complexity: float) -> float:
    """complexity + 12 e L ||X||_tau sqrt(ln(1/delta) / n)"""
    _nonnegative(L=L, normX=normX)
    level = _confidence_level(n, delta)
    return complexity + 12.0 * math.e * L * normX * math.sqrt(level / n)


def regression_bound(n: int, delta: float, L: float, normX: float, normY: float) -> float:
    """(12 / sqrt(n)) (L ||X||_tau + ||Y||_tau) (1 + e sqrt(ln(1/delta)))"""
    _nonnegative(L=L, normX=normX, normY=normY)
    level = _confidence_level(n, delta)
    return 12.0 / math.sqrt(n) * (L * normX + normY) * (1.0 + math.e * math.sqrt(level))


def regression_complexity_upper(X: np.ndarray, Y: np.ndarray, L: float) -> float:
    """(2/n) (L sqrt(sum ||X_i||^2) + sqrt(sum Y_i^2))"""
    x = np.asarray(X, dtype=float).reshape(len(X), -1)
    y = np.asarray(Y, dtype=float).reshape(-1)
    if x.shape[0] != y.size or y.size == 0:
        raise DomainError("X and Y must hold the same nonzero number of points")
    _nonnegative(L=L)
    return 2.0 / y.size * (L * math.sqrt(float((x ** 2).sum())) + math.sqrt(float((y ** 2).sum())))


def linear_sup_deviation(sample: np.ndarray, L: float, population_mean: Optional[np.ndarray] = None) -> float:
    """sup over ||w|| <= L of the empirical-minus-expected mean of <w, x>: L ||x_bar - mu||"""
    x = np.asarray(sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    mu = np.zeros(x.shape[1]) if population_mean is None else np.asarray(population_mean, dtype=float)
    return float(L * np.linalg.norm(x.mean(axis=0) - mu))


def w_net(m: int, L: float, size: int, seed: int = 0, stream: int = 0) -> np.ndarray:
    """size points of the radius-L ball in R^m (uniform), with the origin as first row"""
    if m < 1 or size < 1:
        raise DomainError(f"need m >= 1 and size >= 1, got m={m}, size={size}")
    _nonnegative(L=L)
    rng = make_generator(seed, stream)
    directions = rng.standard_normal((size - 1, m))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = L * rng.random(size - 1) ** (1.0 / m)
    return np.vstack([np.zeros((1, m)), directions * radii[:, None]])


def regression_net_sup_deviation(
    X: np.ndarray,
    Y: np.ndarray,
    w_star: np.ndarray,
    noise_sigma: float,
    net: np.ndarray
) -> float:
    """
    Max over a finite w-net of empirical minus population absolute-loss risk.

    The design is standard Gaussian and Y = <w*, X> + noise_sigma * N(0, 1),
    so <w, X> - Y ~ N(0, ||w - w*||^2 + noise_sigma^2) and the population
    risk is sqrt(2/pi) times its standard deviation.
    """
    x = np.asarray(X, dtype=float)
    y = np.asarray(Y, dtype=float).reshape(-1)
    w = np.asarray(net, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.size or w.ndim != 2 or w.shape[1] != x.shape[1]:
        raise DomainError("X must be n x m, Y length n and the net k x m")
    _nonnegative(noise_sigma=noise_sigma)

    empirical = np.abs(x @ w.T - y[:, None]).mean(axis=0)
    spread = np.sqrt(((w - np.asarray(w_star, dtype=float)) ** 2).sum(axis=1) + noise_sigma ** 2)
    population = math.sqrt(2.0 / math.pi) * spread
    return float(np.max(empirical - population))
