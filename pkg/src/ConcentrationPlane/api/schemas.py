"""
Report Schemas
Serializable results shared by the library, the CLI and the HTTP service
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class NormMethod(str, Enum):
    ANALYTIC = "analytic"
    MGF_GRID = "mgf-grid"
    SAMPLE_PLUG_IN = "sample-plug-in"
    MOMENT_GRID = "moment-grid"


class Regime(str, Enum):
    GENERAL = "general"
    IID_ORLICZ = "iid-orlicz"
    IID_QUADRATIC = "iid-quadratic"
    MIN_OF_BOTH = "min-of-both"


class NormEstimate(BaseModel):
    value: float = Field(ge=0.0)
    method: NormMethod
    search_range: Optional[Tuple[float, float]] = None
    argmax: Optional[float] = None
    caveat: str = ""


class CheckReport(BaseModel):
    name: str
    lhs: float
    rhs: float
    passed: bool
    detail: str = ""
    extras: Dict[str, float] = {}


class PropertyCheck(BaseModel):
    name: str
    passed: bool
    witness: List[float] = []
    detail: str = ""


class ValidationReport(BaseModel):
    phi: str
    properties: List[PropertyCheck]
    passed: bool

    def failed(self) -> List[str]:
        return [p.name for p in self.properties if not p.passed]

    def get(self, name: str) -> PropertyCheck:
        for prop in self.properties:
            if prop.name == name:
                return prop
        raise KeyError(name)


class NvSolution(BaseModel):
    """Maximizer of sum t_i b_i under sum phi_i(b_i) <= v"""
    value: float = Field(ge=0.0)
    maximizer: List[float]
    multiplier: float = Field(ge=0.0)
    active: bool
    v: float = Field(ge=0.0)
    fallback: bool = False


class BoundReport(BaseModel):
    threshold: float
    probability_bound: float = Field(ge=0.0, le=1.0)
    constants: Dict[str, float]
    regime: Regime


class MonteCarloEstimate(BaseModel):
    value: float
    standard_error: float = Field(ge=0.0)
    draws: int


class FunctionalBoundInputs(BaseModel):
    A: float = Field(ge=0.0)
    B: float = Field(ge=0.0)


class GridPoint(BaseModel):
    parameters: Dict[str, float]
    threshold: float
    empirical_tail: float
    ci_low: float = Field(ge=0.0, le=1.0)
    ci_high: float = Field(ge=0.0, le=1.0)
    bound: float
    dominated: bool
    p_value: float


class CampaignSummary(BaseModel):
    points: int
    violations: int
    worst_margin: float


class Provenance(BaseModel):
    bound: str
    seed: int
    stream: int
    trials: int
    config_hash: str


class CampaignResult(BaseModel):
    points: List[GridPoint]
    summary: CampaignSummary
    provenance: Provenance

    @property
    def all_dominated(self) -> bool:
        return self.summary.violations == 0


class RandomizedCampaignResult(BaseModel):
    alpha: float
    C: float
    mode: str
    tau: float
    violations: int
    trials: int
    ci_low: float
    ci_high: float
    mean_thresholds: Dict[str, float]
    tightening_mean: float
    tightening_se: float
    expected_tightening: float


class CalibrationResult(BaseModel):
    constant: str
    value: float
    grid: List[float]
    at_cap: bool = False
