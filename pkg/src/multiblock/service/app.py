"""HTTP control surface over a :class:`~multiblock.cluster.Cluster`.

Authentication is bearer-token based.  Three access levels exist:

* public: health probe, submitting an application, and reading a single
  application by its id (the id itself is the capability; applicants get
  it back from the submit call before they have any token).
* user: owner-scoped operations (reconfirm, finish, jobs).
* admin: fleet management, review/activate, rings, benchmarks, tokens,
  raw state, and the virtual clock.

Every domain failure raises a ``ClusterError`` subtype; one exception
handler maps those onto ``{"error": {"code", "message"}}`` with the
class-declared HTTP status.  Mutating endpoints honor an optional
``Idempotency-Key`` header: successful responses are cached per
(method, path, key) and replayed verbatim on retry.
"""

from __future__ import annotations

import io
import logging
import os
import secrets
import tarfile
import threading
from dataclasses import dataclass, field

from fastapi import Depends, FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.security import HTTPAuthorizationCredentials, HTTPBearer
from fastapi.staticfiles import StaticFiles

from ..bench import BandwidthCurve, BisectionBench, render_csv, render_dat
from ..clock import VirtualClock
from ..cluster import Cluster
from ..fleet import Power
from ..errors import (
    AuthFailure,
    ClusterError,
    InvalidRequest,
    JobStillRunning,
    NotOwner,
    UnknownJob,
    UnknownPrincipal,
    UnknownRing,
)
from ..ids import new_id
from ..jobs import parse_program
from ..workflow import Application, ApplicationState, Approve, Reject
from . import schemas
from .auth import Principal

logger = logging.getLogger("multiblock.service")

IDEMPOTENCY_HEADER = "Idempotency-Key"


@dataclass
class BenchRun:
    """One background benchmark execution and its outcome."""

    bench_id: str
    mode: str
    state: str = "Running"
    error: str | None = None
    started_at: float = 0.0
    finished_at: float | None = None
    curves: list[BandwidthCurve] = field(default_factory=list)
    degradation: list[float] | None = None

    def status_view(self) -> schemas.BenchStatusView:
        return schemas.BenchStatusView(
            bench_id=self.bench_id, mode=self.mode, state=self.state,
            error=self.error, started_at=self.started_at,
            finished_at=self.finished_at)


class ServiceRuntime:
    """Request-serving state that lives beside the cluster: job ownership,
    benchmark runs, and the idempotency replay cache."""

    def __init__(self, cluster: Cluster):
        self.cluster = cluster
        self.lock = threading.RLock()
        self.job_meta: dict[str, dict] = {}
        self.bench_runs: dict[str, BenchRun] = {}
        self.idem_cache: dict[tuple[str, str, str], tuple[int, bytes, str]] = {}


def ensure_admin(cluster: Cluster, token: str | None = None) -> str:
    """Make sure an admin principal exists, returning a usable token.

    An explicit token (for instance from the environment) is enrolled as-is;
    otherwise a fresh one is generated.  Idempotent across restarts because
    principals persist in the snapshot.
    """
    token = token or secrets.token_urlsafe(24)
    cluster.auth.issue_token("admin", "admin", token=token)
    cluster.persist()
    return token


def _app_view(cluster: Cluster, record: Application) -> schemas.ApplicationView:
    assigned = None
    if record.assigned_block is not None:
        try:
            names = cluster.fleet.member_names(record.assigned_block)
        except ClusterError:
            names = []
        assigned = [schemas.AssignedNodeView(name=n) for n in names]
    data = record.to_dict()
    data["assigned_nodes"] = assigned
    return schemas.ApplicationView(**data)


def _job_view(svc: ServiceRuntime, snapshot: dict) -> schemas.JobView:
    meta = svc.job_meta.get(snapshot["job_id"], {})
    return schemas.JobView(**snapshot, owner=meta.get("owner"),
                           app_id=meta.get("app_id"))


def _transcript_text(job_id: str, result: dict) -> str:
    lines = [
        f"# job {job_id} rank {result['rank']}",
        f"# status: {result['status']}",
    ]
    if result.get("detail"):
        lines.append(f"# detail: {result['detail']}")
    t0, t1 = result.get("t_start"), result.get("t_end")
    if t0 is not None and t1 is not None:
        lines.append(f"# modeled time: {t0:.9f} .. {t1:.9f}")
    for t, text in result.get("emits", []):
        lines.append(f"[t={t:.9f}] {text}")
    return "\n".join(lines) + "\n"


def create_app(cluster: Cluster, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="multiblock control service", version="1.0.0",
                  docs_url="/docs")
    svc = ServiceRuntime(cluster)
    app.state.cluster = cluster
    app.state.svc = svc

    bearer = HTTPBearer(auto_error=False)

    def current_principal(
        creds: HTTPAuthorizationCredentials | None = Depends(bearer),
    ) -> Principal:
        if creds is None:
            raise UnknownPrincipal("missing bearer token")
        return cluster.auth.authenticate(creds.credentials)

    def admin_principal(
        principal: Principal = Depends(current_principal),
    ) -> Principal:
        if principal.role != "admin":
            raise AuthFailure("admin role required")
        return principal

    @app.exception_handler(ClusterError)
    async def cluster_error_handler(request: Request, exc: ClusterError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"error": {"code": type(exc).__name__,
                               "message": str(exc)}})

    @app.middleware("http")
    async def idempotency(request: Request, call_next):
        key = request.headers.get(IDEMPOTENCY_HEADER)
        if key is None or request.method in ("GET", "HEAD", "OPTIONS"):
            return await call_next(request)
        cache_key = (request.method, request.url.path, key)
        with svc.lock:
            hit = svc.idem_cache.get(cache_key)
        if hit is not None:
            status, body, media_type = hit
            return Response(content=body, status_code=status,
                            media_type=media_type,
                            headers={"Idempotency-Replayed": "true"})
        response = await call_next(request)
        if 200 <= response.status_code < 300:
            body = b""
            async for chunk in response.body_iterator:
                body += chunk
            with svc.lock:
                svc.idem_cache[cache_key] = (
                    response.status_code, body,
                    response.headers.get("content-type", "application/json"))
            return Response(content=body, status_code=response.status_code,
                            headers=dict(response.headers))
        return response

    # -- public ------------------------------------------------------------

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "now": cluster.clock.now()}

    @app.post("/applications", status_code=201,
              response_model=schemas.ApplicationView)
    def submit_application(body: schemas.SubmitRequest):
        with cluster.mutation():
            record = cluster.workflow.submit(
                {"username": body.username, "contact": body.contact},
                body.job_description, body.requested_node_count)
        return _app_view(cluster, record)

    @app.get("/applications/{app_id}", response_model=schemas.ApplicationView)
    def get_application(app_id: str):
        return _app_view(cluster, cluster.workflow.get(app_id))

    # -- applications (authenticated) ---------------------------------------

    @app.get("/applications", response_model=list[schemas.ApplicationView])
    def list_applications(principal: Principal = Depends(current_principal)):
        username = None if principal.role == "admin" else principal.username
        records = cluster.workflow.list_applications(username)
        return [_app_view(cluster, r) for r in records]

    @app.post("/applications/{app_id}/review",
              response_model=schemas.ReviewResponse)
    def review_application(app_id: str, body: schemas.ReviewRequest,
                           admin: Principal = Depends(admin_principal)):
        token = None
        with cluster.mutation():
            if body.approve:
                if not body.node_ids or body.period is None:
                    raise InvalidRequest(
                        "approval needs node_ids and period")
                record = cluster.workflow.review(
                    app_id, admin.username,
                    Approve(list(body.node_ids), tuple(body.period)),
                    expected_version=body.expected_version)
                _, token = cluster.auth.issue_token(record.username, "user")
            else:
                record = cluster.workflow.review(
                    app_id, admin.username,
                    Reject(body.reason or "rejected"),
                    expected_version=body.expected_version)
        return schemas.ReviewResponse(application=_app_view(cluster, record),
                                      user_token=token)

    @app.post("/applications/{app_id}/reconfirm",
              response_model=schemas.ApplicationView)
    def reconfirm_application(app_id: str, body: schemas.ReconfirmRequest,
                              principal: Principal = Depends(current_principal)):
        with cluster.mutation():
            record = cluster.workflow.reconfirm(
                app_id, principal.username, body.accept,
                expected_version=body.expected_version)
        return _app_view(cluster, record)

    @app.post("/applications/{app_id}/activate",
              response_model=schemas.ApplicationView)
    def activate_application(app_id: str, body: schemas.TransitionRequest,
                             admin: Principal = Depends(admin_principal)):
        with cluster.mutation():
            record = cluster.workflow.activate(
                app_id, admin.username,
                expected_version=body.expected_version)
        return _app_view(cluster, record)

    @app.post("/applications/{app_id}/finish",
              response_model=schemas.ApplicationView)
    def finish_application(app_id: str, body: schemas.TransitionRequest,
                           principal: Principal = Depends(current_principal)):
        with cluster.mutation():
            record = cluster.workflow.finish(
                app_id, principal.username,
                expected_version=body.expected_version)
        return _app_view(cluster, record)

    # -- jobs ----------------------------------------------------------------

    def _job_visible(principal: Principal, job_id: str) -> bool:
        if principal.role == "admin":
            return True
        meta = svc.job_meta.get(job_id)
        return meta is not None and meta.get("owner") == principal.username

    @app.post("/jobs", status_code=201, response_model=schemas.JobView)
    def create_job(body: schemas.JobCreateRequest,
                   principal: Principal = Depends(current_principal)):
        record = cluster.workflow.get(body.app_id)
        if principal.role != "admin" and principal.username != record.username:
            raise NotOwner(f"application {body.app_id} belongs to "
                           f"{record.username}")
        if record.state is not ApplicationState.ACTIVE:
            raise InvalidRequest(
                f"application is {record.state.value}; jobs need Active")
        ring = cluster.rings.ring_for_block(record.assigned_block)
        if ring is None:
            raise UnknownRing("no live ring for this application")
        program = parse_program(body.program, name=body.program_name)
        handle = cluster.jobs.exec_job(ring.ring_id, program, body.n_procs,
                                       placement=body.placement)
        with svc.lock:
            svc.job_meta[handle.job_id] = {"owner": record.username,
                                           "app_id": record.app_id}
        return _job_view(svc, handle.snapshot())

    @app.get("/jobs", response_model=list[schemas.JobView])
    def list_jobs(principal: Principal = Depends(current_principal)):
        out = []
        for handle in cluster.jobs.list_jobs():
            if _job_visible(principal, handle.job_id):
                out.append(_job_view(svc, handle.snapshot()))
        return out

    @app.get("/jobs/{job_id}", response_model=schemas.JobView)
    def get_job(job_id: str,
                principal: Principal = Depends(current_principal)):
        handle = cluster.jobs.get(job_id)
        if not _job_visible(principal, job_id):
            raise UnknownJob(f"no job {job_id}")
        return _job_view(svc, handle.snapshot())

    @app.get("/jobs/{job_id}/results")
    def job_results(job_id: str,
                    principal: Principal = Depends(current_principal)):
        if not _job_visible(principal, job_id):
            raise UnknownJob(f"no job {job_id}")
        return {"job_id": job_id, "ranks": cluster.jobs.collect(job_id)}

    @app.get("/jobs/{job_id}/download")
    def download_job(job_id: str,
                     principal: Principal = Depends(current_principal)):
        if not _job_visible(principal, job_id):
            raise UnknownJob(f"no job {job_id}")
        results = cluster.jobs.collect(job_id)
        buf = io.BytesIO()
        with tarfile.open(fileobj=buf, mode="w") as tar:
            for result in results:
                data = _transcript_text(job_id, result).encode()
                info = tarfile.TarInfo(f"{job_id}/rank-{result['rank']}.txt")
                info.size = len(data)
                tar.addfile(info, io.BytesIO(data))
        return Response(
            content=buf.getvalue(), media_type="application/x-tar",
            headers={"Content-Disposition":
                     f'attachment; filename="{job_id}.tar"'})

    # -- fleet and rings (admin) --------------------------------------------

    @app.get("/fleet", response_model=schemas.FleetView)
    def fleet_view(admin: Principal = Depends(admin_principal)):
        snap = cluster.fleet.fleet_status()
        return schemas.FleetView(
            revision=snap.revision,
            nodes=[schemas.NodeView(**vars(n)) for n in snap.nodes],
            blocks=[schemas.BlockView(
                block_id=b.block_id, owner=b.owner,
                member_nodes=list(b.member_nodes),
                member_names=list(b.member_names),
                period_start=b.period_start, period_end=b.period_end,
                state=b.state) for b in snap.blocks])

    @app.post("/nodes", status_code=201, response_model=schemas.NodeView)
    def add_node(body: schemas.NodeCreateRequest,
                 admin: Principal = Depends(admin_principal)):
        with cluster.mutation():
            node = cluster.fleet.register_node(
                body.name, body.spec_class, body.internal_addr,
                is_master=body.is_master, external_addr=body.external_addr)
        return schemas.NodeView(
            node_id=node.node_id, name=node.name, spec_class=node.spec_class,
            internal_addr=node.internal_addr, is_master=node.is_master,
            external_addr=node.external_addr, power=node.power.value,
            block_id=None)

    @app.post("/nodes/{node_id}/power", response_model=schemas.NodeView)
    def set_power(node_id: str, body: schemas.PowerRequest,
                  admin: Principal = Depends(admin_principal)):
        target = Power(body.power)
        with cluster.mutation():
            cluster.fleet.set_power(node_id, target)
        snap = cluster.fleet.fleet_status()
        for view in snap.nodes:
            if view.node_id == node_id:
                return schemas.NodeView(**vars(view))
        raise UnknownJob(f"no node {node_id}")  # unreachable

    @app.get("/rings", response_model=list[schemas.RingView])
    def list_rings(admin: Principal = Depends(admin_principal)):
        return [schemas.RingView(**r.to_dict())
                for r in cluster.rings.list_rings()]

    @app.get("/rings/{ring_id}/trace", response_model=schemas.TraceView)
    def trace_ring(ring_id: str,
                   admin: Principal = Depends(admin_principal)):
        entries = cluster.rings.trace_ring(ring_id)
        return schemas.TraceView(ring_id=ring_id, entries=entries)

    @app.get("/rings/{ring_id}/counters")
    def ring_counters(ring_id: str,
                      admin: Principal = Depends(admin_principal)):
        return cluster.rings.ring_counters(ring_id)

    # -- benchmarks (admin) --------------------------------------------------

    def _bench_thread(run: BenchRun, body: schemas.BenchRequest) -> None:
        bench = BisectionBench(cluster.rings, cluster.jobs)
        try:
            if body.mode == "single":
                ring = cluster.rings.ring_for_block(body.block_a)
                if ring is None:
                    raise UnknownRing(
                        f"block {body.block_a} has no live ring; single "
                        f"mode measures an existing ring")
                curve = bench.run_bisection(ring.ring_id, list(body.sizes),
                                            body.reps)
                curves: list[BandwidthCurve] = [curve]
                degradation = None
            else:
                if body.block_b is None:
                    raise InvalidRequest("comparison mode needs block_b")
                single, multi, degradation = bench.run_comparison(
                    body.block_a, body.block_b, list(body.sizes), body.reps)
                curves = [single, multi]
            with svc.lock:
                run.curves = curves
                run.degradation = degradation
                run.state = "Finished"
        except Exception as exc:
            logger.warning("bench %s failed: %s", run.bench_id, exc)
            with svc.lock:
                run.error = f"{type(exc).__name__}: {exc}"
                run.state = "Failed"
        finally:
            with svc.lock:
                run.finished_at = cluster.clock.now()

    @app.post("/bench/run", status_code=202,
              response_model=schemas.BenchStatusView)
    def start_bench(body: schemas.BenchRequest,
                    admin: Principal = Depends(admin_principal)):
        BisectionBench.check_inputs(list(body.sizes), body.reps)
        run = BenchRun(bench_id=new_id("bench"), mode=body.mode,
                       started_at=cluster.clock.now())
        with svc.lock:
            for other in svc.bench_runs.values():
                if other.state == "Running":
                    raise JobStillRunning(
                        f"benchmark {other.bench_id} is still running")
            svc.bench_runs[run.bench_id] = run
        thread = threading.Thread(target=_bench_thread, args=(run, body),
                                  name=f"bench-{run.bench_id}", daemon=True)
        thread.start()
        return run.status_view()

    @app.get("/bench", response_model=list[schemas.BenchStatusView])
    def list_bench(admin: Principal = Depends(admin_principal)):
        with svc.lock:
            return [r.status_view() for r in svc.bench_runs.values()]

    def _get_bench(bench_id: str) -> BenchRun:
        with svc.lock:
            run = svc.bench_runs.get(bench_id)
        if run is None:
            raise UnknownJob(f"no benchmark {bench_id}")
        return run

    @app.get("/bench/{bench_id}", response_model=schemas.BenchStatusView)
    def bench_status(bench_id: str,
                     admin: Principal = Depends(admin_principal)):
        return _get_bench(bench_id).status_view()

    @app.get("/bench/{bench_id}/report",
             response_model=schemas.BenchReportView)
    def bench_report(bench_id: str,
                     admin: Principal = Depends(admin_principal)):
        run = _get_bench(bench_id)
        if run.state == "Running":
            raise JobStillRunning(f"benchmark {bench_id} is still running")
        if run.state == "Failed":
            raise InvalidRequest(f"benchmark {bench_id} failed: {run.error}")
        curves = [schemas.BenchCurveView(
            scenario=c.scenario,
            points=[schemas.BenchPointView(**vars(p)) for p in c.points])
            for c in run.curves]
        return schemas.BenchReportView(
            bench_id=bench_id, mode=run.mode, curves=curves,
            degradation_per_size=run.degradation,
            csv=render_csv(run.curves), dat=render_dat(run.curves))

    # -- administration ------------------------------------------------------

    @app.post("/tokens", status_code=201, response_model=schemas.TokenResponse)
    def issue_token(body: schemas.TokenRequest,
                    admin: Principal = Depends(admin_principal)):
        with cluster.mutation():
            principal, token = cluster.auth.issue_token(body.username,
                                                        body.role)
        return schemas.TokenResponse(
            principal_id=principal.principal_id, username=principal.username,
            role=principal.role, token=token)

    @app.get("/state")
    def dump_state(admin: Principal = Depends(admin_principal)):
        return {
            **cluster.state(),
            "runtime": {
                "rings": [r.to_dict() for r in cluster.rings.list_rings()],
                "jobs": [h.snapshot() for h in cluster.jobs.list_jobs()],
            },
        }

    @app.post("/clock/advance")
    def advance_clock(body: schemas.ClockAdvanceRequest,
                      admin: Principal = Depends(admin_principal)):
        if not isinstance(cluster.clock, VirtualClock):
            raise InvalidRequest("clock advance needs a virtual clock")
        now = cluster.advance_clock(body.seconds)
        return {"now": now}

    if ui_dir is not None and os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
