"""Job lifecycle: dispatch to a ring, completion tracking, output collection.

One job per ring at a time.  Dispatch is non-blocking; the ring's master
daemon aggregates per-rank results and pushes them back to the ring
manager's callback listener, which resolves the handle.  A watchdog probes
the rings of running jobs and fails a job whose ring no longer traces as a
full cycle, salvaging whatever transcripts the surviving daemons can still
report.
"""

from __future__ import annotations

import copy
import threading
import time
from enum import Enum

from ..errors import (
    CapacityExceeded,
    ClusterError,
    JobStillRunning,
    PlacementNodeNotInRing,
    RingBroken,
    UnknownJob,
    ValidationFailure,
)
from ..ids import new_id
from ..ring.manager import RingManager
from .placement import plan_placement
from .program import Program

import logging

logger = logging.getLogger("multiblock.jobs")

WATCH_INTERVAL = 0.25
PROBE_TIMEOUT = 1.0


class JobState(str, Enum):
    PLACED = "Placed"
    RUNNING = "Running"
    FINISHED = "Finished"
    FAILED = "Failed"


_ORDER = [JobState.PLACED, JobState.RUNNING, JobState.FINISHED, JobState.FAILED]


class JobHandle:
    """Poll or wait on a dispatched job; immutable once finished."""

    def __init__(self, job_id: str, ring_id: str, program_name: str,
                 n_procs: int, placement: list[str]):
        self.job_id = job_id
        self.ring_id = ring_id
        self.program_name = program_name
        self.n_procs = n_procs
        self.placement = list(placement)
        self.state = JobState.PLACED
        self.error: str | None = None
        self.results: dict[int, dict] | None = None
        self.created_at = time.time()
        self.finished_at: float | None = None
        self._done = threading.Event()

    @property
    def done(self) -> bool:
        return self.state in (JobState.FINISHED, JobState.FAILED)

    def wait(self, timeout: float | None = None) -> bool:
        return self._done.wait(timeout)

    def _advance(self, state: JobState) -> bool:
        # Forward-only; a finished job never moves again.
        if _ORDER.index(state) <= _ORDER.index(self.state):
            return False
        if self.done:
            return False
        self.state = state
        return True

    def snapshot(self) -> dict:
        return {
            "job_id": self.job_id,
            "ring_id": self.ring_id,
            "program": self.program_name,
            "n_procs": self.n_procs,
            "placement": list(self.placement),
            "state": self.state.value,
            "error": self.error,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
        }


class JobRegistry:
    """Runs jobs over a ring manager, one at a time per ring."""

    def __init__(self, manager: RingManager):
        self.manager = manager
        self._lock = threading.RLock()
        self._jobs: dict[str, JobHandle] = {}
        self._busy: dict[str, str] = {}
        self._closed = False
        self._watchdog = threading.Thread(target=self._watch_loop,
                                          name="job-watchdog", daemon=True)
        self._watchdog.start()

    # -- dispatch ----------------------------------------------------------

    def exec_job(self, ring_id: str, program: Program, n_procs: int,
                 placement: list[str] | None = None) -> JobHandle:
        ring = self.manager.get_ring(ring_id)
        program.validate(n_procs)
        if placement is None:
            placement = plan_placement(n_procs, ring.host_entries)
        else:
            self._check_placement(ring, n_procs, placement)

        handle = JobHandle(new_id("job"), ring_id, program.name, n_procs,
                           placement)
        with self._lock:
            held = self._busy.get(ring_id)
            if held is not None:
                raise JobStillRunning(
                    f"ring {ring_id} is already running job {held}")
            self._busy[ring_id] = handle.job_id
            self._jobs[handle.job_id] = handle

        spec = {
            "job_id": handle.job_id,
            "n_procs": n_procs,
            "assignments": placement,
            "programs": program.wire_programs(n_procs),
            "coordinator": placement[0],
        }
        self.manager.register_job_callback(
            handle.job_id, lambda payload: self._on_final(handle.job_id, payload))
        try:
            self.manager.spawn_job(ring_id, spec)
        except ClusterError as exc:
            self.manager.unregister_job_callback(handle.job_id)
            self._finalize(handle, error=f"dispatch failed: {exc}", results={})
            raise
        with self._lock:
            handle._advance(JobState.RUNNING)
        logger.info("job %s running on ring %s (%d ranks)", handle.job_id,
                    ring_id, n_procs)
        return handle

    def _check_placement(self, ring, n_procs: int,
                         placement: list[str]) -> None:
        if len(placement) != n_procs:
            raise ValidationFailure(
                f"placement lists {len(placement)} ranks, job has {n_procs}")
        ring_nodes = {d.node.name for d in ring.daemons}
        caps = {e.node_name: e.process_cap for e in ring.host_entries}
        counts: dict[str, int] = {}
        for name in placement:
            if name not in ring_nodes:
                raise PlacementNodeNotInRing(
                    f"node {name} has no daemon in ring {ring.ring_id}")
            counts[name] = counts.get(name, 0) + 1
        for name, used in counts.items():
            cap = caps.get(name)  # master is absent from hosts: uncapped
            if cap is not None and used > cap:
                raise CapacityExceeded(
                    f"node {name} capped at {cap}, placement uses {used}")

    # -- completion --------------------------------------------------------

    def _on_final(self, job_id: str, payload: dict) -> None:
        with self._lock:
            handle = self._jobs.get(job_id)
        if handle is None:
            return
        results = {int(r): res for r, res in payload.get("results", {}).items()}
        self._finalize(handle, error=payload.get("error"), results=results)

    def _finalize(self, handle: JobHandle, error: str | None,
                  results: dict[int, dict]) -> None:
        with self._lock:
            if handle.done:
                return
            for rank in range(handle.n_procs):
                if rank not in results:
                    results[rank] = {
                        "rank": rank, "status": "lost",
                        "detail": error or "no result reported",
                        "emits": [], "events": [], "barriers": [],
                        "t_start": None, "t_end": None,
                    }
            bad = [r for r, res in sorted(results.items())
                   if res.get("status") != "ok"]
            if error is None and bad:
                error = (
                    f"ranks {bad} ended with status "
                    f"{[results[r].get('status') for r in bad]}")
            handle.results = results
            handle.error = error
            handle._advance(JobState.RUNNING)
            handle._advance(JobState.FINISHED if error is None
                            else JobState.FAILED)
            handle.finished_at = time.time()
            if self._busy.get(handle.ring_id) == handle.job_id:
                del self._busy[handle.ring_id]
            handle._done.set()
        logger.info("job %s %s%s", handle.job_id, handle.state.value,
                    f": {error}" if error else "")

    # -- queries -----------------------------------------------------------

    def get(self, job_id: str) -> JobHandle:
        with self._lock:
            handle = self._jobs.get(job_id)
        if handle is None:
            raise UnknownJob(f"no such job: {job_id}")
        return handle

    def list_jobs(self) -> list[JobHandle]:
        with self._lock:
            return list(self._jobs.values())

    def collect(self, job_id: str) -> list[dict]:
        """Per-rank outputs, rank order.  Deep-copied so callers cannot
        mutate the stored transcripts."""
        handle = self.get(job_id)
        if not handle.done:
            raise JobStillRunning(f"job {job_id} is {handle.state.value}")
        assert handle.results is not None
        return [copy.deepcopy(handle.results[r])
                for r in range(handle.n_procs)]

    # -- failure handling --------------------------------------------------

    def _watch_loop(self) -> None:
        while not self._closed:
            time.sleep(WATCH_INTERVAL)
            with self._lock:
                running = [(job_id, handle.ring_id)
                           for job_id, handle in self._jobs.items()
                           if not handle.done and handle.state == JobState.RUNNING]
            for job_id, ring_id in running:
                try:
                    self.manager.trace_ring(ring_id, timeout=PROBE_TIMEOUT)
                except ClusterError as exc:
                    self.fail_job(job_id, f"ring no longer whole: {exc}")
                except Exception:
                    logger.exception("watchdog probe failed for %s", ring_id)

    def fail_job(self, job_id: str, reason: str) -> None:
        """Abort a running job and salvage partial transcripts."""
        with self._lock:
            handle = self._jobs.get(job_id)
            if handle is None or handle.done:
                return
        logger.warning("failing job %s: %s", job_id, reason)
        try:
            self.manager.abort_job(handle.ring_id, job_id, reason)
        except ClusterError:
            pass
        # Give surviving daemons a moment to report their aborted ranks,
        # then have the master mark the silent ones lost.
        time.sleep(0.3)
        try:
            self.manager.finalize_job(handle.ring_id, job_id, reason)
            handle.wait(2.0)
        except ClusterError:
            pass
        if not handle.done:
            self._finalize(handle, error=reason, results={})
        self.manager.unregister_job_callback(job_id)

    def fail_jobs_for_ring(self, ring_id: str, reason: str) -> None:
        with self._lock:
            job_id = self._busy.get(ring_id)
        if job_id is not None:
            self.fail_job(job_id, reason)

    def close(self) -> None:
        self._closed = True
