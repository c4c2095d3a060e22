"""
Concentration Bounds - Calculation Plane
FastAPI service exposing the bound calculators and verification campaigns
"""

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel
from typing import Callable, Dict, List, Optional, TypeVar
from datetime import datetime, timezone

import applications
import canonical
import functional
import montecarlo
import orlicz
import randomized
from errors import BoundsError, ConfigError, DomainError
from observability import observability
from schemas import BoundReport, CampaignResult, NvSolution
from settings import settings

app = FastAPI(title="Concentration Bounds - Calculation Plane", version="1.0.0")

T = TypeVar("T")


class ConjugateRequest(BaseModel):
    phi: str = "quadratic"
    y: List[float]
    numeric: bool = False

class ConjugateResponse(BaseModel):
    phi: str
    y: List[float]
    values: List[float]

class NvRequest(BaseModel):
    phi: str = "quadratic"
    t: List[float]
    v: float

class GeneralTailRequest(NvRequest):
    s: float
    K: float

class IidTailRequest(BaseModel):
    phi: str = "quadratic"
    t: List[float]
    z: float
    K1: float
    K2: float
    c: float = 1.0
    l1_mode: str = "norm"

class RandomizedRequest(BaseModel):
    alpha: float
    tau: float
    phi: str = "quadratic"
    C: float = randomized.DEFAULT_C
    u: float = 1.0

class ThresholdResponse(BaseModel):
    threshold: float
    classical: float
    expected_tightening: float

class FunctionalBoundRequest(BaseModel):
    phi: str = "scaled-quadratic"
    f: str = "sum"
    coins: int = 12
    coin: float = 1.0
    t: List[float]

class FunctionalBoundPoint(BaseModel):
    t: float
    bound: float
    exact_tail: float

class FunctionalBoundResponse(BaseModel):
    A: float
    B: float
    points: List[FunctionalBoundPoint]

class PcaRequest(BaseModel):
    d: int
    n: int
    delta: float
    K3: float
    psi1: Optional[float] = None

class RademacherRequest(BaseModel):
    n: int
    delta: float
    L: float
    norm_x: float
    complexity: float
    norm_y: Optional[float] = None

class ValueResponse(BaseModel):
    value: float
    details: Dict[str, float] = {}


def _run(operation: str, fn: Callable[[], T]) -> T:
    """Map library errors: config -> 400, domain -> 422, anything else -> 500"""
    try:
        return fn()
    except ConfigError as e:
        observability.log_error(operation, str(e), "ConfigError")
        raise HTTPException(status_code=400, detail=str(e))
    except DomainError as e:
        observability.log_error(operation, str(e), type(e).__name__)
        raise HTTPException(status_code=422, detail=str(e))
    except BoundsError as e:
        observability.log_error(operation, str(e), type(e).__name__)
        raise HTTPException(status_code=500, detail=f"{operation} failed: {str(e)}")


@app.get("/")
async def root():
    return {
        "service": "Concentration Bounds - Calculation Plane",
        "status": "operational",
        "features": [
            "Orlicz N-functions and Young-Fenchel conjugates",
            "Canonical-process tail bounds (general and i.i.d.)",
            "Randomized Hoeffding thresholds",
            "Functional and vector-mean bounds",
            "PCA and Rademacher-complexity bounds",
            "Seeded Monte Carlo dominance campaigns"
        ]
    }

@app.get("/health")
async def health():
    return {
        "status": "healthy",
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "ci_multiplier": settings.ci_multiplier,
        "chunk_size": settings.chunk_size,
    }

@app.post("/conjugate", response_model=ConjugateResponse)
def conjugate(request: ConjugateRequest) -> ConjugateResponse:
    def compute():
        phi = orlicz.parse_phi(request.phi)
        values = orlicz.conjugate(phi, request.y, numeric=request.numeric)
        return ConjugateResponse(phi=phi.name, y=request.y, values=[float(v) for v in values])
    return _run("conjugate", compute)

@app.post("/nv", response_model=NvSolution)
def nv(request: NvRequest) -> NvSolution:
    return _run("nv", lambda: canonical.solve_nv(orlicz.parse_phi(request.phi), request.t, request.v))

@app.post("/tail-bound/general", response_model=BoundReport)
def tail_bound_general(request: GeneralTailRequest) -> BoundReport:
    def compute():
        solution = canonical.solve_nv(orlicz.parse_phi(request.phi), request.t, request.v)
        return canonical.tail_bound_general(solution, request.s, request.K)
    return _run("tail_bound_general", compute)

@app.post("/tail-bound/iid", response_model=BoundReport)
def tail_bound_iid(request: IidTailRequest) -> BoundReport:
    return _run("tail_bound_iid", lambda: canonical.tail_bound_iid(
        request.z, request.t, orlicz.parse_phi(request.phi), request.K1, request.K2, request.c, request.l1_mode
    ))

@app.post("/randomized", response_model=ThresholdResponse)
def randomized_threshold(request: RandomizedRequest) -> ThresholdResponse:
    def compute():
        phi = orlicz.parse_phi(request.phi)
        return ThresholdResponse(
            threshold=randomized.randomized_hoeffding_threshold(request.alpha, request.tau, phi, request.C, request.u),
            classical=randomized.classical_threshold(request.alpha, request.tau, phi, request.C),
            expected_tightening=randomized.expected_tightening(request.alpha, request.tau, phi, request.C),
        )
    return _run("randomized", compute)

@app.post("/functional-bound", response_model=FunctionalBoundResponse)
def functional_bound(request: FunctionalBoundRequest) -> FunctionalBoundResponse:
    """
    Functional tail bound for a builtin f over fair +/-coin inputs,
    next to the exact enumerated tail.
    """
    def compute():
        if request.f not in functional.BUILTIN_FUNCTIONS:
            raise ConfigError(f"unknown function '{request.f}'")
        fm = functional.DiscreteFunctionModel.coins(request.f, request.coins, request.coin)
        inputs = functional.functional_norm_inputs(fm, orlicz.parse_phi(request.phi))
        exact = functional.exhaustive_tail(fm, request.t)
        return FunctionalBoundResponse(
            A=inputs.A, B=inputs.B,
            points=[
                FunctionalBoundPoint(t=t, bound=functional.med_tail_bound(t, inputs.A, inputs.B), exact_tail=float(p))
                for t, p in zip(request.t, exact)
            ]
        )
    return _run("functional_bound", compute)

@app.post("/pca", response_model=ValueResponse)
def pca(request: PcaRequest) -> ValueResponse:
    def compute():
        bound = applications.pca_bound(request.d, request.n, request.delta, request.K3)
        details = {}
        if request.psi1 is not None:
            details = applications.pca_trace_term_candidates(request.n, request.delta, request.K3, request.psi1)
        return ValueResponse(value=bound, details=details)
    return _run("pca", compute)

@app.post("/rademacher", response_model=ValueResponse)
def rademacher(request: RademacherRequest) -> ValueResponse:
    def compute():
        bound = applications.rademacher_bound(request.n, request.delta, request.L, request.norm_x, request.complexity)
        details = {}
        if request.norm_y is not None:
            details["regression_bound"] = applications.regression_bound(
                request.n, request.delta, request.L, request.norm_x, request.norm_y
            )
        return ValueResponse(value=bound, details=details)
    return _run("rademacher", compute)

@app.post("/verify", response_model=CampaignResult)
def verify(config: montecarlo.CampaignConfig) -> CampaignResult:
    """Run a dominance campaign synchronously; large trial counts block the worker"""
    return _run("verify", lambda: montecarlo.verify_dominance(config))

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8001)
