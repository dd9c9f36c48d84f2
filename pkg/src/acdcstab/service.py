"""Typed request/response schemas and handlers shared by the HTTP API and CLI.

The handlers are plain functions over pydantic models; ``api`` mounts them as
FastAPI routes and ``cli`` calls them in-process.  Domain validation lives in
the core modules; handlers translate domain errors into ``InputError`` with a
message naming the offending field.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import errors as err
from .devices import validate_devices
from .network import build_network, partition_subgrids
from .sim import DisturbanceSchedule, simulate
from .stability import StabilityReport, eigen_oracle, verify_stability
from .steady_state import eq10_residual, eq11_residual, solve_equilibrium
from .system import SystemModel, assemble


class InputError(Exception):
    """Invalid request payload; message names the offending field."""


EXIT_CODE = {"pass": 0, "fail": 2, "indeterminate": 3}


# ---------------------------------------------------------------------------
# Request models
# ---------------------------------------------------------------------------

class NodeModel(BaseModel):
    model_config = ConfigDict(extra="allow")
    id: str
    kind: Literal["ac-machine", "converter", "dc-bus"]


class AcEdgeModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="allow")
    from_: str = Field(alias="from")
    to: str
    b: float
    id: Optional[str] = None


class DcEdgeModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="allow")
    from_: str = Field(alias="from")
    to: str
    g: float
    id: Optional[str] = None


class NetworkDocument(BaseModel):
    """Wire form of a network; device blocks are validated by the core."""

    model_config = ConfigDict(extra="allow")
    nodes: list[NodeModel]
    ac_edges: list[AcEdgeModel] = Field(default_factory=list)
    dc_edges: list[DcEdgeModel] = Field(default_factory=list)
    devices: dict[str, dict] = Field(default_factory=dict)

    def to_plain(self) -> dict:
        return {
            "nodes": [n.model_dump() for n in self.nodes],
            "ac_edges": [e.model_dump(by_alias=True, exclude_none=True) for e in self.ac_edges],
            "dc_edges": [e.model_dump(by_alias=True, exclude_none=True) for e in self.dc_edges],
            "devices": self.devices,
        }


class DisturbanceStepModel(BaseModel):
    t_start: float = 0.0
    node: str
    delta_p: float
    side: Optional[Literal["ac", "dc"]] = None


class DisturbanceDocument(BaseModel):
    steps: list[DisturbanceStepModel] = Field(default_factory=list)

    def to_plain(self) -> dict:
        return {"steps": [s.model_dump(exclude_none=True) for s in self.steps]}


class CheckRequest(BaseModel):
    network: NetworkDocument
    tol_rank: float = 1e-8
    tol_eig: float = 1e-9


class EigRequest(BaseModel):
    network: NetworkDocument


class SteadyStateRequest(BaseModel):
    network: NetworkDocument
    disturbance: Optional[DisturbanceDocument] = None


class SimulateRequest(BaseModel):
    network: NetworkDocument
    disturbance: Optional[DisturbanceDocument] = None
    t_final: float = 10.0
    dt: float = 1e-3
    include_samples: bool = False
    sample_stride: int = 1


class ReportRequest(BaseModel):
    network: NetworkDocument
    disturbance: Optional[DisturbanceDocument] = None
    t_final: float = 10.0
    dt: float = 1e-3


# ---------------------------------------------------------------------------
# Response models
# ---------------------------------------------------------------------------

class GainCheckModel(BaseModel):
    subgrid: int
    gains: dict[str, float]
    passed: bool


class Condition1Model(BaseModel):
    passed: bool
    subgrids: list[GainCheckModel]


class Assumption1Model(BaseModel):
    passed: bool
    witness: Optional[str]


class Def1Model(BaseModel):
    dominated: str
    D: list[str]
    C: list[str]
    F: list[str]


class Alg1Model(BaseModel):
    emptied: bool
    removal_order: list[list[str]]
    remaining: list[str]


class NodeCaseModel(BaseModel):
    node: str
    case1: bool
    case2: bool


class Cor1Model(BaseModel):
    passed: bool
    case1_all: bool
    case2_all: bool
    nodes: list[NodeCaseModel]


class MatrixRankModel(BaseModel):
    name: str
    shape: list[int]
    singular_values: list[float]
    ratio: float
    full_column_rank: bool


class RankTestModel(BaseModel):
    auto_pass: bool
    matrices: list[MatrixRankModel]
    verdict: str


class AcSubgridModel(BaseModel):
    subgrid: int
    def1: Def1Model
    reduced_edges: list[str]
    algorithm1: Alg1Model
    corollary1: Cor1Model
    rank_numeric: RankTestModel
    certified_by: Optional[str]
    verdict: str


class EigenModel(BaseModel):
    eigenvalues: list[list[float]]  # [re, im]
    max_real_part: float
    margin: float
    verdict: str
    tol: float


class StabilityReportModel(BaseModel):
    verdict: str
    condition1: Condition1Model
    assumption1: Assumption1Model
    ac_subgrids: list[AcSubgridModel]
    lasalle_certificate_valid: bool
    eigen: EigenModel
    notes: list[str]


class CheckResponse(BaseModel):
    verdict: str
    exit_code: int
    report: StabilityReportModel


class EigResponse(BaseModel):
    eigenvalues: list[list[float]]
    max_real_part: float
    verdict: str
    state_labels: list[str]
    reachable_dim: int


class SteadyStateResponse(BaseModel):
    omega_s: dict[str, float]      # ac subgrid index -> value
    v: dict[str, float]
    P: dict[str, float]
    p_dc: dict[str, float]
    eq10_residuals: dict[str, float]
    eq11_residuals: dict[str, float]
    conditioning_suspect: bool
    stability_verdict: str


class SimulationSummary(BaseModel):
    t_final: float
    dt: float
    n_samples: int
    terminal: dict[str, float]
    max_abs_omega: float
    V_initial: float
    V_final: float
    V_monotone_per_segment: bool
    certificate_valid: bool


class SimulateResponse(BaseModel):
    summary: SimulationSummary
    columns: Optional[list[str]] = None
    times: Optional[list[float]] = None
    samples: Optional[list[list[float]]] = None


class ReportResponse(BaseModel):
    stability: StabilityReportModel
    exit_code: int
    eig: EigResponse
    steady_state: Optional[SteadyStateResponse] = None
    simulation: Optional[SimulationSummary] = None


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------

def report_to_model(report: StabilityReport) -> StabilityReportModel:
    return StabilityReportModel(
        verdict=report.verdict,
        condition1=Condition1Model(
            passed=report.condition1.passed,
            subgrids=[
                GainCheckModel(subgrid=c.subgrid_index, gains=dict(c.gains), passed=c.passed)
                for c in report.condition1.subgrids
            ],
        ),
        assumption1=Assumption1Model(
            passed=report.assumption1.passed, witness=report.assumption1.witness
        ),
        ac_subgrids=[
            AcSubgridModel(
                subgrid=s.subgrid_index,
                def1=Def1Model(
                    dominated=s.def1.dominated,
                    D=list(s.def1.D), C=list(s.def1.C), F=list(s.def1.F),
                ),
                reduced_edges=list(s.reduced_edges),
                algorithm1=Alg1Model(
                    emptied=s.algorithm1.emptied,
                    removal_order=[list(p) for p in s.algorithm1.removal_order],
                    remaining=list(s.algorithm1.remaining),
                ),
                corollary1=Cor1Model(
                    passed=s.corollary1.passed,
                    case1_all=s.corollary1.case1_all,
                    case2_all=s.corollary1.case2_all,
                    nodes=[
                        NodeCaseModel(node=nc.node, case1=nc.case1, case2=nc.case2)
                        for nc in s.corollary1.node_cases
                    ],
                ),
                rank_numeric=RankTestModel(
                    auto_pass=s.rank_numeric.auto_pass,
                    matrices=[
                        MatrixRankModel(
                            name=m.name, shape=list(m.shape),
                            singular_values=list(m.singular_values),
                            ratio=m.ratio, full_column_rank=m.full_column_rank,
                        )
                        for m in s.rank_numeric.matrices
                    ],
                    verdict=s.rank_numeric.verdict,
                ),
                certified_by=s.certified_by,
                verdict=s.verdict,
            )
            for s in report.ac_subgrids
        ],
        lasalle_certificate_valid=report.lasalle_certificate_valid,
        eigen=EigenModel(
            eigenvalues=[[z.real, z.imag] for z in report.eigen.eigenvalues],
            max_real_part=report.eigen.max_real_part,
            margin=report.eigen.margin,
            verdict=report.eigen.verdict,
            tol=report.eigen.tol,
        ),
        notes=list(report.notes),
    )


def _build_model(network: NetworkDocument) -> SystemModel:
    try:
        graph = build_network(network.to_plain())
        devices = validate_devices(graph)
        partition = partition_subgrids(graph)
        return assemble(partition, devices)
    except err.AcdcStabError as exc:
        raise InputError(str(exc)) from exc


def _schedule(model: SystemModel, disturbance: Optional[DisturbanceDocument]) -> DisturbanceSchedule:
    if disturbance is None:
        return DisturbanceSchedule(steps=())
    try:
        return DisturbanceSchedule.parse(disturbance.to_plain(), model)
    except err.AcdcStabError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------

def run_check(req: CheckRequest) -> CheckResponse:
    model = _build_model(req.network)
    report = verify_stability(model, tol_rank=req.tol_rank, tol_eig=req.tol_eig)
    return CheckResponse(
        verdict=report.verdict,
        exit_code=EXIT_CODE[report.verdict],
        report=report_to_model(report),
    )


def run_eig(req: EigRequest) -> EigResponse:
    model = _build_model(req.network)
    eig = eigen_oracle(model)
    return EigResponse(
        eigenvalues=[[z.real, z.imag] for z in eig.eigenvalues],
        max_real_part=eig.max_real_part,
        verdict=eig.verdict,
        state_labels=model.layout.labels,
        reachable_dim=len(eig.eigenvalues),
    )


def run_steady_state(req: SteadyStateRequest) -> SteadyStateResponse:
    model = _build_model(req.network)
    schedule = _schedule(model, req.disturbance)
    horizon = max([s.t_start for s in schedule.steps], default=0.0)
    ac_loads, dc_loads = schedule.load_dicts_at(horizon)
    report = verify_stability(model)
    try:
        eq = solve_equilibrium(model, ac_loads, dc_loads)
    except err.SingularEquilibrium as exc:
        raise InputError(str(exc)) from exc
    return SteadyStateResponse(
        omega_s={str(i): w for i, w in sorted(eq.omega_s.items())},
        v={n: eq.v[n] for n in model.v_order},
        P=dict(eq.P),
        p_dc=dict(eq.p_dc),
        eq10_residuals={
            str(sg.index): eq10_residual(model, eq, ac_loads, sg.index)
            for sg in model.partition.ac_subgrids
        },
        eq11_residuals={
            str(sg.index): eq11_residual(model, eq, dc_loads, sg.index)
            for sg in model.partition.dc_subgrids
        },
        conditioning_suspect=eq.conditioning_suspect,
        stability_verdict=report.verdict,
    )


def _simulate(model: SystemModel, schedule, t_final, dt):
    try:
        return simulate(model, np.zeros(model.layout.dim), schedule, t_final, dt)
    except err.AcdcStabError as exc:
        raise InputError(str(exc)) from exc


def _summary(traj, t_final, dt) -> SimulationSummary:
    s = traj.layout
    omega = traj.states[:, s.omega]
    seg_ok = True
    for k in range(len(traj.segments)):
        _t, V, _dV = traj.segment_energy(k)
        dv = np.diff(V)
        if dv.size and dv.max() > 1e-12:
            seg_ok = False
    return SimulationSummary(
        t_final=t_final,
        dt=dt,
        n_samples=len(traj.times),
        terminal={lbl: float(val) for lbl, val in zip(s.labels, traj.terminal_state)},
        max_abs_omega=float(np.abs(omega).max()) if omega.size else 0.0,
        V_initial=float(traj.V[0]),
        V_final=float(traj.V[-1]),
        V_monotone_per_segment=seg_ok,
        certificate_valid=traj.certificate_valid,
    )


def run_simulate(req: SimulateRequest) -> SimulateResponse:
    model = _build_model(req.network)
    schedule = _schedule(model, req.disturbance)
    traj = _simulate(model, schedule, req.t_final, req.dt)
    resp = SimulateResponse(summary=_summary(traj, req.t_final, req.dt))
    if req.include_samples:
        stride = max(1, req.sample_stride)
        resp.columns = ["t"] + model.layout.labels + ["V", "dVdt"]
        resp.times = traj.times[::stride].tolist()
        block = np.column_stack([traj.states, traj.V, traj.dVdt])
        resp.samples = block[::stride].tolist()
    return resp


def run_report(req: ReportRequest) -> ReportResponse:
    model = _build_model(req.network)
    report = verify_stability(model)
    eig = run_eig(EigRequest(network=req.network))
    resp = ReportResponse(
        stability=report_to_model(report),
        exit_code=EXIT_CODE[report.verdict],
        eig=eig,
    )
    if req.disturbance is not None:
        resp.steady_state = run_steady_state(
            SteadyStateRequest(network=req.network, disturbance=req.disturbance)
        )
        schedule = _schedule(model, req.disturbance)
        traj = _simulate(model, schedule, req.t_final, req.dt)
        resp.simulation = _summary(traj, req.t_final, req.dt)
    return resp
