"""HTTP service exposing the four commands over the core package.

POST /analyze, /simulate, /lyapunov, /audit accept the same JSON config
the CLI reads (plus an optional seed override) and return the same
report envelope the CLI writes. Configuration errors map to 400,
computational failures to 500. Run with::

    uvicorn critgrowth.service:app
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import parse_config_dict
from .errors import ComputationError, ConfigError
from .runner import run_command

app = FastAPI(
    title="critgrowth",
    version=__version__,
    description="Growth/extinction classification and Monte Carlo "
                "verification for critical multidimensional stochastic "
                "population models.",
)


class RunRequest(BaseModel):
    """A run configuration (same schema as the CLI config file)."""

    config: dict
    seed: int | None = Field(default=None,
                             description="overrides sim.seed from the config")


class RunResponse(BaseModel):
    """The report envelope: command, effective seed, resolved config, report."""

    command: str
    seed: int
    config: dict
    report: dict


class HealthResponse(BaseModel):
    status: str
    version: str


def _execute(command: str, request: RunRequest) -> RunResponse:
    try:
        cfg = parse_config_dict(request.config, seed=request.seed)
        envelope = run_command(command, cfg)
    except ConfigError as exc:
        detail = {"type": "config", "message": str(exc)}
        if exc.path:
            detail["path"] = exc.path
        raise HTTPException(status_code=400, detail=detail) from exc
    except ComputationError as exc:
        raise HTTPException(
            status_code=500,
            detail={"type": "computation", "message": str(exc)}) from exc
    return RunResponse(**envelope)


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/analyze", response_model=RunResponse)
def analyze(request: RunRequest) -> RunResponse:
    return _execute("analyze", request)


@app.post("/simulate", response_model=RunResponse)
def simulate(request: RunRequest) -> RunResponse:
    return _execute("simulate", request)


@app.post("/lyapunov", response_model=RunResponse)
def lyapunov(request: RunRequest) -> RunResponse:
    return _execute("lyapunov", request)


@app.post("/audit", response_model=RunResponse)
def audit(request: RunRequest) -> RunResponse:
    return _execute("audit", request)
