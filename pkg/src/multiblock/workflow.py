"""The admin/user application lifecycle, from registration to automatic
shutdown.

An application moves Submitted -> UnderReview -> Approved -> Reconfirmed ->
Active and ends in exactly one of Rejected, Finished, or Expired.  Approval
reserves a node block; activation powers the members on, boots the daemon
ring under a generated secretword, and starts the usage clock; expiry (or an
early finish) tears all of that down again.  Every transition appends to the
application's decision log, which always replays to the current state.

Lock order across subsystems is application -> fleet -> ring; the engine
holds its own lock for the duration of a transition, so sweeps and
user/admin calls interleave safely.
"""

from __future__ import annotations

import logging
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .clock import Clock, RealClock
from .errors import (
    AlreadyReleased,
    ClusterError,
    IllegalTransition,
    InvalidRequest,
    NotOwner,
    UnknownApplication,
)
from .fleet import FleetRegistry, Power
from .ids import new_id
from .jobs import JobRegistry
from .ring import HostEntry, RingConfig, RingManager

logger = logging.getLogger("multiblock.workflow")


class ApplicationState(str, Enum):
    SUBMITTED = "Submitted"
    UNDER_REVIEW = "UnderReview"
    APPROVED = "Approved"
    REJECTED = "Rejected"
    RECONFIRMED = "Reconfirmed"
    ACTIVE = "Active"
    FINISHED = "Finished"
    EXPIRED = "Expired"


TERMINAL_STATES = (
    ApplicationState.REJECTED,
    ApplicationState.FINISHED,
    ApplicationState.EXPIRED,
)

# state -> states reachable in one transition
LEGAL_TRANSITIONS: dict[ApplicationState | None, tuple[ApplicationState, ...]] = {
    None: (ApplicationState.SUBMITTED,),
    ApplicationState.SUBMITTED: (ApplicationState.UNDER_REVIEW,),
    ApplicationState.UNDER_REVIEW: (ApplicationState.APPROVED,
                                    ApplicationState.REJECTED),
    ApplicationState.APPROVED: (ApplicationState.RECONFIRMED,
                                ApplicationState.REJECTED),
    ApplicationState.RECONFIRMED: (ApplicationState.ACTIVE,),
    ApplicationState.ACTIVE: (ApplicationState.FINISHED,
                              ApplicationState.EXPIRED),
    ApplicationState.REJECTED: (),
    ApplicationState.FINISHED: (),
    ApplicationState.EXPIRED: (),
}


@dataclass
class Approve:
    node_ids: list[str]
    period: tuple[float, float]


@dataclass
class Reject:
    reason: str


@dataclass
class Application:
    app_id: str
    user: dict
    job_description: str
    requested_node_count: int
    state: ApplicationState = ApplicationState.SUBMITTED
    assigned_block: str | None = None
    period: tuple[float, float] | None = None
    decision_log: list[dict] = field(default_factory=list)
    version: int = 0
    secretword: str | None = None

    @property
    def username(self) -> str:
        return self.user["username"]

    def to_dict(self) -> dict:
        return {
            "app_id": self.app_id,
            "user": dict(self.user),
            "job_description": self.job_description,
            "requested_node_count": self.requested_node_count,
            "state": self.state.value,
            "assigned_block": self.assigned_block,
            "period": list(self.period) if self.period else None,
            "decision_log": [dict(e) for e in self.decision_log],
            "version": self.version,
        }


def replay_log(decision_log: list[dict]) -> ApplicationState:
    """Replay a decision log from scratch; raises IllegalTransition if any
    recorded step is not legal."""
    state: ApplicationState | None = None
    for entry in decision_log:
        src_name, _, dst_name = entry["transition"].partition("->")
        src = ApplicationState(src_name) if src_name else None
        dst = ApplicationState(dst_name)
        if src != state:
            raise IllegalTransition(
                f"log replay desynchronized: at {state}, entry claims {src}")
        if dst not in LEGAL_TRANSITIONS[state]:
            raise IllegalTransition(f"log contains illegal step {src}->{dst}")
        state = dst
    if state is None:
        raise IllegalTransition("empty decision log")
    return state


class WorkflowEngine:
    """Drives applications through the lifecycle, delegating resource work
    to the fleet, ring manager, and job registry."""

    def __init__(self, fleet: FleetRegistry, rings: RingManager,
                 jobs: JobRegistry, clock: Clock | None = None):
        self.fleet = fleet
        self.rings = rings
        self.jobs = jobs
        self.clock = clock or RealClock()
        self._lock = threading.RLock()
        self._apps: dict[str, Application] = {}

    # -- helpers -----------------------------------------------------------

    def _get(self, app_id: str) -> Application:
        app = self._apps.get(app_id)
        if app is None:
            raise UnknownApplication(f"no such application: {app_id}")
        return app

    def _timestamp(self) -> str:
        return datetime.fromtimestamp(self.clock.now(),
                                      tz=timezone.utc).isoformat()

    def _log(self, app: Application, src: ApplicationState | None,
             dst: ApplicationState, actor: str,
             detail: str | None = None) -> None:
        if dst not in LEGAL_TRANSITIONS[src]:
            raise IllegalTransition(
                f"cannot move {app.app_id} from "
                f"{src.value if src else 'nothing'} to {dst.value}")
        entry = {
            "ts": self._timestamp(),
            "actor": actor,
            "transition": f"{src.value if src else ''}->{dst.value}",
        }
        if detail:
            entry["detail"] = detail
        app.decision_log.append(entry)
        app.state = dst
        app.version += 1

    def _check_version(self, app: Application,
                       expected_version: int | None) -> None:
        if expected_version is not None and expected_version != app.version:
            raise InvalidRequest(
                f"version conflict: application is at {app.version}, "
                f"caller expected {expected_version}")

    # -- operations --------------------------------------------------------

    def submit(self, user: dict, job_description: str,
               requested_node_count: int) -> Application:
        if not isinstance(user, dict) or not user.get("username"):
            raise InvalidRequest("user needs at least a username")
        if not job_description.strip():
            raise InvalidRequest("job description must not be empty")
        if requested_node_count < 1:
            raise InvalidRequest("requested node count must be at least 1")
        app = Application(
            app_id=new_id("app"),
            user=dict(user),
            job_description=job_description,
            requested_node_count=requested_node_count,
        )
        with self._lock:
            self._log(app, None, ApplicationState.SUBMITTED,
                      f"user:{app.username}")
            self._apps[app.app_id] = app
        logger.info("application %s submitted by %s", app.app_id, app.username)
        return app

    def review(self, app_id: str, admin: str, decision: Approve | Reject,
               expected_version: int | None = None) -> Application:
        with self._lock:
            app = self._get(app_id)
            self._check_version(app, expected_version)
            if app.state not in (ApplicationState.SUBMITTED,
                                 ApplicationState.UNDER_REVIEW):
                raise IllegalTransition(
                    f"cannot review an application in state {app.state.value}")
            actor = f"admin:{admin}"
            if isinstance(decision, Reject):
                if app.state is ApplicationState.SUBMITTED:
                    self._log(app, ApplicationState.SUBMITTED,
                              ApplicationState.UNDER_REVIEW, actor)
                self._log(app, ApplicationState.UNDER_REVIEW,
                          ApplicationState.REJECTED, actor,
                          detail=decision.reason)
                return app
            # Allocation first: if it fails, the application is untouched.
            block = self.fleet.allocate_block(app.username, decision.node_ids,
                                              decision.period)
            if app.state is ApplicationState.SUBMITTED:
                self._log(app, ApplicationState.SUBMITTED,
                          ApplicationState.UNDER_REVIEW, actor)
            self._log(app, ApplicationState.UNDER_REVIEW,
                      ApplicationState.APPROVED, actor,
                      detail=f"block {block.block_id}, "
                             f"{len(decision.node_ids)} nodes")
            app.assigned_block = block.block_id
            app.period = tuple(decision.period)
            return app

    def reconfirm(self, app_id: str, user: str, accept: bool,
                  expected_version: int | None = None) -> Application:
        with self._lock:
            app = self._get(app_id)
            self._check_version(app, expected_version)
            if app.state is not ApplicationState.APPROVED:
                raise IllegalTransition(
                    f"cannot reconfirm an application in state "
                    f"{app.state.value}")
            if user != app.username:
                raise NotOwner(
                    f"application {app_id} belongs to {app.username}")
            actor = f"user:{user}"
            if accept:
                self._log(app, ApplicationState.APPROVED,
                          ApplicationState.RECONFIRMED, actor)
                return app
            block_id = app.assigned_block
            if block_id is not None:
                self.fleet.release_block(block_id)
            self._log(app, ApplicationState.APPROVED,
                      ApplicationState.REJECTED, actor,
                      detail=f"declined; block {block_id} released")
            app.assigned_block = None
            app.period = None
            return app

    def activate(self, app_id: str, admin: str = "admin",
                 expected_version: int | None = None) -> Application:
        with self._lock:
            app = self._get(app_id)
            self._check_version(app, expected_version)
            if app.state is not ApplicationState.RECONFIRMED:
                raise IllegalTransition(
                    f"cannot activate an application in state "
                    f"{app.state.value}")
            now = self.clock.now()
            start, end = app.period
            if not start <= now < end:
                raise IllegalTransition(
                    f"now={now} is outside the usage period [{start}, {end})")
            block = self.fleet.get_block(app.assigned_block)
            members = [self.fleet.get_node(nid) for nid in block.member_nodes]
            prior_power = {n.node_id: n.power for n in members}
            secretword = secrets.token_urlsafe(16)
            master = self.fleet.master_node()
            config = RingConfig(
                secretword=secretword,
                hosts=[HostEntry(n.name) for n in members],
                interface_binding=master.internal_addr,
            )
            for node in members:
                self.fleet.set_power(node.node_id, Power.ON)
            try:
                self.rings.boot_ring(block.block_id, config)
            except ClusterError:
                for node_id, power in prior_power.items():
                    self.fleet.set_power(node_id, power)
                raise
            self.fleet.mark_block_active(block.block_id)
            app.secretword = secretword
            self._log(app, ApplicationState.RECONFIRMED,
                      ApplicationState.ACTIVE, f"admin:{admin}")
            return app

    def finish(self, app_id: str, user: str,
               expected_version: int | None = None) -> Application:
        with self._lock:
            app = self._get(app_id)
            self._check_version(app, expected_version)
            if app.state is not ApplicationState.ACTIVE:
                raise IllegalTransition(
                    f"cannot finish an application in state {app.state.value}")
            if user != app.username:
                raise NotOwner(
                    f"application {app_id} belongs to {app.username}")
            self._shutdown(app, ApplicationState.FINISHED, f"user:{user}",
                           "closed out by user")
            return app

    def expire_sweep(self, now: float | None = None) -> list[str]:
        """Expire every Active application whose period has ended.  Failures
        are logged per application; the sweep keeps going."""
        if now is None:
            now = self.clock.now()
        expired = []
        with self._lock:
            due = [app for app in self._apps.values()
                   if app.state is ApplicationState.ACTIVE
                   and app.period is not None and app.period[1] <= now]
            for app in due:
                try:
                    self._shutdown(app, ApplicationState.EXPIRED, "system",
                                   f"period ended at {app.period[1]}")
                    expired.append(app.app_id)
                except Exception:
                    logger.exception("expiry of %s failed; will retry on the "
                                     "next sweep", app.app_id)
        return expired

    def _shutdown(self, app: Application, dst: ApplicationState,
                  actor: str, detail: str) -> None:
        """Tear down the application's ring and block, then transition."""
        ring = self.rings.ring_for_block(app.assigned_block)
        if ring is not None:
            self.jobs.fail_jobs_for_ring(
                ring.ring_id, f"application {app.app_id} shut down")
            self.rings.teardown_ring(ring.ring_id)
        try:
            self.fleet.release_block(app.assigned_block)
        except AlreadyReleased:
            pass
        # A dead ring's secret has no further use; do not keep it around.
        app.secretword = None
        self._log(app, ApplicationState.ACTIVE, dst, actor, detail=detail)

    # -- queries -----------------------------------------------------------

    def get(self, app_id: str) -> Application:
        with self._lock:
            return self._get(app_id)

    def list_applications(self, username: str | None = None) -> list[Application]:
        with self._lock:
            apps = list(self._apps.values())
        if username is not None:
            apps = [a for a in apps if a.username == username]
        return sorted(apps, key=lambda a: a.app_id)

    # -- persistence -------------------------------------------------------

    def dump(self) -> dict:
        with self._lock:
            return {
                "applications": [
                    {**app.to_dict(), "secretword": app.secretword}
                    for app in self._apps.values()
                ],
            }

    def load(self, data: dict) -> None:
        with self._lock:
            self._apps.clear()
            for raw in data.get("applications", []):
                app = Application(
                    app_id=raw["app_id"],
                    user=dict(raw["user"]),
                    job_description=raw["job_description"],
                    requested_node_count=raw["requested_node_count"],
                    state=ApplicationState(raw["state"]),
                    assigned_block=raw.get("assigned_block"),
                    period=tuple(raw["period"]) if raw.get("period") else None,
                    decision_log=[dict(e) for e in raw.get("decision_log", [])],
                    version=raw.get("version", 0),
                    secretword=raw.get("secretword"),
                )
                self._apps[app.app_id] = app
