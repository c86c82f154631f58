"""Composition root: wires the fleet, rings, jobs, workflow, auth, and
persistence into one control plane.

Mutations run inside ``with cluster.mutation():`` so every successful change
lands in the snapshot before the caller sees the response.  Expiry sweeps
run from a background thread under a real clock, or piggyback on every
advance of a virtual clock.
"""

from __future__ import annotations

import logging
import threading
import time
from contextlib import contextmanager
from pathlib import Path

from .clock import Clock, RealClock, VirtualClock
from .errors import ClusterError, InvalidRequest
from .fleet import FleetRegistry
from .jobs import JobRegistry
from .netsim import NetworkModel
from .persistence import SnapshotStore
from .ring import HostEntry, RingConfig, RingManager
from .service.auth import AuthStore
from .workflow import ApplicationState, WorkflowEngine

logger = logging.getLogger("multiblock.cluster")

SWEEP_INTERVAL = 1.0


class Cluster:
    def __init__(self, state_path: str | Path | None = None,
                 clock: Clock | None = None,
                 store: SnapshotStore | None = None,
                 sweep_interval: float = SWEEP_INTERVAL):
        self.clock = clock or RealClock()
        self.fleet = FleetRegistry()
        self.network = NetworkModel()
        self.rings = RingManager(self.fleet, self.network, self.clock)
        self.jobs = JobRegistry(self.rings)
        self.workflow = WorkflowEngine(self.fleet, self.rings, self.jobs,
                                       self.clock)
        self.auth = AuthStore()
        if store is None and state_path is not None:
            store = SnapshotStore(state_path)
        self.store = store
        self._lock = threading.RLock()
        self._closed = False

        if self.store is not None:
            self._restore()

        if isinstance(self.clock, VirtualClock):
            self.clock.add_listener(self._on_advance)
        else:
            self._sweeper = threading.Thread(
                target=self._sweep_loop, args=(sweep_interval,),
                name="expiry-sweeper", daemon=True)
            self._sweeper.start()

    # -- persistence -------------------------------------------------------

    @contextmanager
    def mutation(self):
        """Run a state change and persist it atomically afterwards."""
        with self._lock:
            yield self
            self.persist()

    def state(self) -> dict:
        return {
            "fleet": self.fleet.dump(),
            "workflow": self.workflow.dump(),
            "auth": self.auth.dump(),
        }

    def persist(self) -> None:
        if self.store is not None:
            self.store.save(self.state())

    def _restore(self) -> None:
        document = self.store.load()
        if document is None:
            return
        self.fleet.restore(document.get("fleet", {}))
        self.workflow.load(document.get("workflow", {}))
        self.auth.load(document.get("auth", {}))
        self._revive_rings()

    def _revive_rings(self) -> None:
        """Daemons do not outlive the process; boot a fresh ring for every
        application that was Active at snapshot time."""
        master = None
        try:
            master = self.fleet.master_node()
        except ClusterError:
            return
        for app in self.workflow.list_applications():
            if app.state is not ApplicationState.ACTIVE:
                continue
            try:
                members = self.fleet.member_names(app.assigned_block)
                config = RingConfig(
                    secretword=app.secretword or "revived-" + app.app_id,
                    hosts=[HostEntry(name) for name in members],
                    interface_binding=master.internal_addr,
                )
                self.rings.boot_ring(app.assigned_block, config)
            except ClusterError:
                logger.exception("could not revive the ring for %s",
                                 app.app_id)

    # -- clock -------------------------------------------------------------

    def advance_clock(self, seconds: float) -> float:
        if not isinstance(self.clock, VirtualClock):
            raise InvalidRequest(
                "the clock can only be advanced in virtual-clock mode")
        if seconds < 0:
            raise InvalidRequest("cannot advance the clock backwards")
        with self.mutation():
            self.clock.advance(seconds)
        return self.clock.now()

    def _on_advance(self, now: float) -> None:
        self.workflow.expire_sweep(now)

    def _sweep_loop(self, interval: float) -> None:
        while not self._closed:
            time.sleep(interval)
            try:
                expired = self.workflow.expire_sweep()
                if expired:
                    with self._lock:
                        self.persist()
            except Exception:
                logger.exception("expiry sweep failed")

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
        self.jobs.close()
        self.rings.close()
