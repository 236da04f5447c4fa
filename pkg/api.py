"""
FastAPI REST API for hullconc
Read-only access to stored runs and to the order-statistic and support oracles
"""
import logging
from datetime import datetime, timezone
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Path, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from bodies import ExpectedHullOracle, FloatingBodyOracle
from config import API_PREFIX, LEMMA4_MIN_N, TOOL_VERSION
from database import get_store
from distributions import ModelSpec, build_model, parse_law_spec, parse_model_string
from errors import ConfigError, DomainError, HullConcError
from order_stats import expected_max, lemma4_verify

logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="hullconc API",
    description="""
    Read-only REST API over the hullconc toolkit.

    Provides access to:
    - **Runs** - stored experiment manifests, output digests and records
    - **Order statistics** - expected maxima and exact two-sided bound checks
    - **Bodies** - expected-hull and floating-body support values
    """,
    version=TOOL_VERSION,
    docs_url="/api/docs",
    redoc_url="/api/redoc",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)


# ============== Pydantic Models ==============

class HealthResponse(BaseModel):
    status: str
    timestamp: str
    database_connected: bool
    stored_runs: int


class PaginatedResponse(BaseModel):
    data: List[Dict[str, Any]]
    count: int
    limit: int
    offset: int


class DatabaseStats(BaseModel):
    total_tables: int
    total_runs: int
    total_rows: int
    tables: List[Dict[str, Any]]
    db_file_size_mb: float


class ExpectedMaxResponse(BaseModel):
    law: str
    n: int
    e_max: float


class Lemma4Response(BaseModel):
    law: str
    n: int
    t: float
    e_max: float
    p_right: float
    bound_right: float
    p_left: float
    bound_left: float
    holds_right: bool
    holds_left: bool
    bound_left_proof: float
    holds_left_proof: bool


class SupportRequest(BaseModel):
    model: Optional[ModelSpec] = None
    spec_string: Optional[str] = Field(None, description="compact form, e.g. gaussian:2")
    n: int = Field(..., ge=1)
    direction: List[float]
    body: Literal["expected_hull", "floating"] = "expected_hull"
    delta: Optional[float] = None


class SupportResponse(BaseModel):
    body: str
    n: int
    direction: List[float]
    value: float


def _bad_request(e: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(e))


# ============== Health & Status Endpoints ==============

@app.get(f"{API_PREFIX}/health", response_model=HealthResponse, tags=["System"])
async def health_check():
    """Check API health and run-store connection"""
    now = datetime.now(timezone.utc).isoformat()
    try:
        stats = get_store().get_database_stats()
        return HealthResponse(status="healthy", timestamp=now, database_connected=True,
                              stored_runs=stats["total_runs"])
    except Exception as e:
        logger.error(f"Health check failed: {e}")
        return HealthResponse(status="unhealthy", timestamp=now, database_connected=False,
                              stored_runs=0)


@app.get(f"{API_PREFIX}/stats", response_model=DatabaseStats, tags=["System"])
async def get_database_stats():
    """Run-store statistics: tables, row counts, file size"""
    try:
        return get_store().get_database_stats()
    except Exception as e:
        logger.error(f"Stats retrieval failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))


# ============== Run Endpoints ==============

@app.get(f"{API_PREFIX}/runs", response_model=PaginatedResponse, tags=["Runs"])
async def list_runs(
    experiment: Optional[str] = Query(None, description="Filter by experiment"),
    limit: int = Query(100, ge=1, le=1000),
    offset: int = Query(0, ge=0),
):
    """List stored runs, newest first"""
    runs = get_store().get_runs(limit=limit, offset=offset, experiment=experiment)
    return PaginatedResponse(data=runs, count=len(runs), limit=limit, offset=offset)


@app.get(f"{API_PREFIX}/runs/{{run_id}}", tags=["Runs"])
async def get_run(run_id: str = Path(..., description="Run identifier")):
    """Manifest and output digests of one run"""
    run = get_store().get_run(run_id)
    if run is None:
        raise HTTPException(status_code=404, detail=f"Run {run_id} not found")
    return run


@app.get(f"{API_PREFIX}/runs/{{run_id}}/records/{{table}}", response_model=PaginatedResponse,
         tags=["Runs"])
async def get_run_records(
    run_id: str = Path(...),
    table: str = Path(..., description="Record table, e.g. theorem1_trials"),
    limit: int = Query(1000, ge=1, le=100_000),
    offset: int = Query(0, ge=0),
):
    """Report records stored for a run"""
    store = get_store()
    if store.get_run(run_id) is None:
        raise HTTPException(status_code=404, detail=f"Run {run_id} not found")
    try:
        records = store.get_records(run_id, table, limit=limit, offset=offset)
    except ConfigError as e:
        raise _bad_request(e)
    return PaginatedResponse(data=records, count=len(records), limit=limit, offset=offset)


# ============== Order Statistics Endpoints ==============

@app.get(f"{API_PREFIX}/order-stats/expected-max", response_model=ExpectedMaxResponse,
         tags=["Order statistics"])
async def get_expected_max(
    law: str = Query(..., description="Law spec, e.g. normal or uniform:2"),
    n: int = Query(..., ge=1),
):
    """E max of n i.i.d. draws"""
    try:
        return ExpectedMaxResponse(law=law, n=n, e_max=expected_max(parse_law_spec(law), n))
    except (DomainError, ConfigError) as e:
        raise _bad_request(e)


@app.get(f"{API_PREFIX}/order-stats/lemma4", response_model=Lemma4Response,
         tags=["Order statistics"])
async def get_lemma4(
    law: str = Query(...),
    n: int = Query(..., ge=LEMMA4_MIN_N),
    t: float = Query(..., gt=0),
):
    """Exact two-sided concentration check for the maximum"""
    try:
        report = lemma4_verify(parse_law_spec(law), n, t)
    except (DomainError, ConfigError) as e:
        raise _bad_request(e)
    return Lemma4Response(**report.__dict__)


# ============== Body Endpoints ==============

@app.post(f"{API_PREFIX}/bodies/support", response_model=SupportResponse, tags=["Bodies"])
async def post_support(request: SupportRequest):
    """Support value of the expected hull, or the floating-body bound at delta"""
    try:
        if request.model is not None:
            spec = request.model
        elif request.spec_string:
            spec = parse_model_string(request.spec_string)
        else:
            raise ConfigError("model or spec_string is required")
        model = build_model(spec)
        theta = np.asarray(request.direction, dtype=float)
        if theta.shape != (model.dim,):
            raise DomainError(f"direction must have {model.dim} components")
        if request.body == "expected_hull":
            value = ExpectedHullOracle(model, request.n).support(theta)
        else:
            delta = request.delta if request.delta is not None else 1.0 / request.n
            value = FloatingBodyOracle(model, delta).support(theta)
    except (DomainError, ConfigError) as e:
        raise _bad_request(e)
    except HullConcError as e:
        logger.error(f"Support evaluation failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))
    return SupportResponse(body=request.body, n=request.n, direction=request.direction, value=value)


if __name__ == "__main__":
    import uvicorn

    from config import API_HOST, API_PORT

    logging.basicConfig(level=logging.INFO)
    uvicorn.run(app, host=API_HOST, port=API_PORT)
