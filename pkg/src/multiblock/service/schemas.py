"""Request and response bodies for the control API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


# -- requests --------------------------------------------------------------

class SubmitRequest(BaseModel):
    username: str
    contact: str = ""
    job_description: str
    requested_node_count: int


class ReviewRequest(BaseModel):
    approve: bool
    node_ids: list[str] | None = None
    period: tuple[float, float] | None = None
    reason: str | None = None
    expected_version: int | None = None


class ReconfirmRequest(BaseModel):
    accept: bool
    expected_version: int | None = None


class TransitionRequest(BaseModel):
    expected_version: int | None = None


class NodeCreateRequest(BaseModel):
    name: str
    spec_class: str = "compute"
    internal_addr: str
    is_master: bool = False
    external_addr: str | None = None


class PowerRequest(BaseModel):
    power: Literal["on", "off"]


class JobCreateRequest(BaseModel):
    app_id: str
    program: str
    n_procs: int
    placement: list[str] | None = None
    program_name: str = "job"


class TokenRequest(BaseModel):
    username: str
    role: Literal["admin", "user"]


class BenchRequest(BaseModel):
    mode: Literal["single", "comparison"] = "comparison"
    block_a: str
    block_b: str | None = None
    sizes: list[int] = Field(default=[1024, 4096, 32768, 262144, 1048576])
    reps: int = 5


class ClockAdvanceRequest(BaseModel):
    seconds: float


# -- responses -------------------------------------------------------------

class NodeView(BaseModel):
    node_id: str
    name: str
    spec_class: str
    internal_addr: str
    is_master: bool
    external_addr: str | None
    power: str
    block_id: str | None


class BlockView(BaseModel):
    block_id: str
    owner: str
    member_nodes: list[str]
    member_names: list[str]
    period_start: float
    period_end: float
    state: str


class FleetView(BaseModel):
    revision: int
    nodes: list[NodeView]
    blocks: list[BlockView]


class AssignedNodeView(BaseModel):
    """What an applicant may learn about an assigned node: name and cap,
    never addresses."""

    name: str
    process_cap: int | None = None


class ApplicationView(BaseModel):
    app_id: str
    user: dict
    job_description: str
    requested_node_count: int
    state: str
    assigned_block: str | None
    period: tuple[float, float] | None
    assigned_nodes: list[AssignedNodeView] | None
    decision_log: list[dict]
    version: int


class ReviewResponse(BaseModel):
    application: ApplicationView
    user_token: str | None = None


class TokenResponse(BaseModel):
    principal_id: str
    username: str
    role: str
    token: str


class JobView(BaseModel):
    job_id: str
    ring_id: str
    program: str
    n_procs: int
    placement: list[str]
    state: str
    error: str | None
    created_at: float
    finished_at: float | None
    owner: str | None = None
    app_id: str | None = None


class RingView(BaseModel):
    ring_id: str
    block_id: str
    owner: str
    size: int
    nodes: list[str]
    created_at: float


class TraceView(BaseModel):
    ring_id: str
    entries: list[tuple[str, str]]


class BenchPointView(BaseModel):
    size_bytes: int
    bandwidth_Bps: float
    reps: int
    stddev: float
    min_elapsed_s: float


class BenchCurveView(BaseModel):
    scenario: str
    points: list[BenchPointView]


class BenchStatusView(BaseModel):
    bench_id: str
    mode: str
    state: str
    error: str | None
    started_at: float
    finished_at: float | None


class BenchReportView(BaseModel):
    bench_id: str
    mode: str
    curves: list[BenchCurveView]
    degradation_per_size: list[float] | None
    csv: str
    dat: str
