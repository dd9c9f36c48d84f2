"""FastAPI service exposing the analysis handlers.

Run with ``uvicorn acdcstab.api:app``.  Every endpoint is a pure function of
its request body; responses are deterministic given identical inputs.
"""

from fastapi import FastAPI, HTTPException

from . import __version__, service

app = FastAPI(
    title="acdcstab",
    version=__version__,
    description="Stability analysis of hybrid ac/dc grids under dual-port grid-forming control",
)


def _guard(fn, req):
    try:
        return fn(req)
    except service.InputError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/check", response_model=service.CheckResponse)
def check(req: service.CheckRequest):
    return _guard(service.run_check, req)


@app.post("/eig", response_model=service.EigResponse)
def eig(req: service.EigRequest):
    return _guard(service.run_eig, req)


@app.post("/steady-state", response_model=service.SteadyStateResponse)
def steady_state(req: service.SteadyStateRequest):
    return _guard(service.run_steady_state, req)


@app.post("/simulate", response_model=service.SimulateResponse)
def simulate(req: service.SimulateRequest):
    return _guard(service.run_simulate, req)


@app.post("/report", response_model=service.ReportResponse)
def report(req: service.ReportRequest):
    return _guard(service.run_report, req)
