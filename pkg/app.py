"""
FastAPI application exposing Wiener system identification calls over HTTP.
"""

import logging
from contextlib import asynccontextmanager
from typing import List, Literal, Optional

import numpy as np
import uvicorn
from fastapi import FastAPI, Query
from pydantic import BaseModel, Field

from core.config import get_settings
from core.exceptions import handle_exceptions
from modules.estimate import EstimateResult, EstimatorMethod, FitOptions, fit
from modules.fisher import FisherReport, MeanVarKind, fisher_report
from modules.likelihood import get_cost_function
from modules.moments import KappaSource, MomentMethod, MomentReport, fourth_and_kappa
from modules.quadrature import MAX_ORDER, hermite_rule
from modules.system import Dataset, WienerModel, constant_input
from utils.logging_config import setup_logging

# Setup logging
setup_logging(get_settings().log_level, get_settings().log_file)
logger = logging.getLogger(__name__)

VERSION = "1.0.0"


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Manage application lifecycle."""
    settings = get_settings()
    logger.info(
        f"Starting Wiener identification API (likelihood order {settings.gh_order_likelihood}, "
        f"moment order {settings.gh_order_moments})"
    )
    yield
    logger.info("Shutting down Wiener identification API...")


app = FastAPI(
    title="Wiener System Identification API",
    description="Likelihoods, Fisher information and estimators for stochastic Wiener systems",
    version=VERSION,
    docs_url="/api/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
    openapi_tags=[
        {"name": "health", "description": "Health check operations"},
        {"name": "analysis", "description": "Quadrature, moments and Fisher information"},
        {"name": "estimation", "description": "Likelihood evaluation and parameter fitting"},
    ],
)

# Add exception handlers
handle_exceptions(app)


# Request/Response models
class HealthResponse(BaseModel):
    status: str
    version: str


class NodesResponse(BaseModel):
    order: int
    nodes: List[float]
    weights: List[float]
    log_weights: List[float]


class MomentsRequest(BaseModel):
    model: WienerModel
    z: float
    method: MomentMethod = "closed"
    gh_order: Optional[int] = Field(default=None, ge=1, le=MAX_ORDER)


class NllRequest(BaseModel):
    model: WienerModel
    data: Dataset
    method: Literal["exact", "invertible", "gauss1", "gauss2", "cmp"]
    gh_order: Optional[int] = Field(default=None, ge=1, le=MAX_ORDER)


class NllResponse(BaseModel):
    method: str
    cost: float


class AnalyzeRequest(BaseModel):
    """Fisher analysis at the model's theta; u defaults to a constant unit input."""

    model: WienerModel
    u: Optional[List[float]] = None
    samples: int = Field(default=1000, ge=1)
    method: MeanVarKind = "cmp"
    kappa: KappaSource = "true"
    unit_kappa: bool = False


class AnalyzeResponse(BaseModel):
    report: FisherReport
    normalized_std: List[float]


class EstimateRequest(BaseModel):
    model: WienerModel
    data: Dataset
    method: EstimatorMethod
    options: FitOptions = Field(default_factory=FitOptions)


# API Routes
@app.get("/health", response_model=HealthResponse, tags=["health"], summary="Health Check")
async def health_check():
    """Health check endpoint."""
    return HealthResponse(status="healthy", version=VERSION)


@app.get("/gh-nodes", response_model=NodesResponse, tags=["analysis"])
def gh_nodes(order: int = Query(..., ge=1, le=MAX_ORDER)):
    """Gauss-Hermite nodes and weights for the weight exp(-x^2)."""
    rule = hermite_rule(order)
    return NodesResponse(
        order=rule.order,
        nodes=rule.nodes.tolist(),
        weights=rule.weights.tolist(),
        log_weights=rule.log_weights.tolist(),
    )


@app.post("/moments", response_model=MomentReport, tags=["analysis"])
def moments(request: MomentsRequest):
    """Predictor mean, variance, fourth moment and kappa at z."""
    rule = hermite_rule(request.gh_order or get_settings().gh_order_moments)
    return fourth_and_kappa(request.model, request.z, request.method, rule)


@app.post("/nll", response_model=NllResponse, tags=["estimation"])
def nll(request: NllRequest):
    """Negative log-likelihood of a dataset at the model's theta."""
    rule = hermite_rule(request.gh_order or get_settings().gh_order_likelihood)
    cost = get_cost_function(request.method)(
        request.model, request.data.u_array, request.data.y_array, rule
    )
    return NllResponse(method=request.method, cost=cost)


@app.post("/analyze", response_model=AnalyzeResponse, tags=["analysis"])
def analyze(request: AnalyzeRequest):
    """Information, score covariance and sandwich covariance at the model's theta."""
    u = np.asarray(request.u, dtype=float) if request.u is not None else constant_input(request.samples)
    report = fisher_report(
        request.model,
        request.model.theta,
        u,
        request.method,
        request.kappa,
        unit_kappa=request.unit_kappa,
    )
    return AnalyzeResponse(report=report, normalized_std=report.normalized_std(u.size))


@app.post("/estimate", response_model=EstimateResult, tags=["estimation"])
def estimate(request: EstimateRequest):
    """Fit theta with the selected estimator; the model supplies sensor and noise levels."""
    logger.info(f"Estimating with {request.method} on {request.data.n_samples} samples")
    return fit(request.data.u_array, request.data.y_array, request.model, request.method, request.options)


if __name__ == "__main__":
    settings = get_settings()
    uvicorn.run(
        "app:app",
        host=settings.host,
        port=settings.port,
        reload=settings.debug,
        log_level=settings.log_level.lower(),
    )
