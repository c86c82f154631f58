"""Ring lifecycle: boot, verification, teardown, and daemon slot accounting.

The manager owns the placement rules for daemons: a non-master node hosts at
most one daemon, while the master node hosts at most one daemon *per owner*
and so participates in every ring.  Boot is atomic; if any member fails to
authenticate or the verification trace does not come back whole, every
daemon already started is torn down and the slots are released.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass, field

from ..clock import Clock, RealClock
from ..errors import (
    AuthFailure,
    DaemonConflict,
    EmptyBlock,
    HostsMismatch,
    InterfaceBindingError,
    MasterOwnerConflict,
    NodePoweredOff,
    RingBroken,
    UnknownRing,
    Unreachable,
)
from ..fleet import FleetRegistry, Power
from ..ids import new_id
from ..netsim import NetworkModel
from .config import HostEntry, RingConfig
from .daemon import Daemon, NodeRef
from .wire import Frame, MsgType, WireError, read_frame, request, send_oneshot

logger = logging.getLogger("multiblock.ring")

BOOT_TRACE_TIMEOUT = 5.0


@dataclass
class FaultPlan:
    """Failures injected during boot, keyed by node name."""

    wrong_secret: dict[str, str] = field(default_factory=dict)
    unreachable: set[str] = field(default_factory=set)
    kill_after_join: set[str] = field(default_factory=set)


@dataclass
class Ring:
    ring_id: str
    block_id: str
    owner: str
    master: Daemon
    members: list[Daemon]
    host_entries: list[HostEntry]
    created_at: float

    @property
    def daemons(self) -> list[Daemon]:
        return [self.master] + self.members

    @property
    def size(self) -> int:
        return 1 + len(self.members)

    def daemon_for_node(self, node_name: str) -> Daemon:
        for d in self.daemons:
            if d.node.name == node_name:
                return d
        raise UnknownRing(f"node {node_name} has no daemon in ring {self.ring_id}")

    def to_dict(self) -> dict:
        return {
            "ring_id": self.ring_id,
            "block_id": self.block_id,
            "owner": self.owner,
            "size": self.size,
            "nodes": [d.node.name for d in self.daemons],
            "created_at": self.created_at,
        }


class RingManager:
    """Boots and supervises daemon rings over a node fleet."""

    def __init__(self, fleet: FleetRegistry, network: NetworkModel | None = None,
                 clock: Clock | None = None):
        self.fleet = fleet
        self.network = network or NetworkModel()
        self.clock = clock or RealClock()
        self._lock = threading.RLock()
        self._rings: dict[str, Ring] = {}
        # node_id -> ring_id for non-master nodes
        self._node_slots: dict[str, str] = {}
        # owner -> ring_id for daemons on the master node
        self._master_slots: dict[str, str] = {}
        self._job_callbacks: dict[str, object] = {}
        self._closed = False

        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("127.0.0.1", 0))
        self._listener.listen(64)
        self.callback_host = "127.0.0.1"
        self.callback_port = self._listener.getsockname()[1]
        threading.Thread(target=self._callback_loop, name="ring-callbacks",
                         daemon=True).start()

    # -- callback listener -------------------------------------------------

    def _callback_loop(self) -> None:
        while True:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._handle_callback, args=(conn,),
                             daemon=True).start()

    def _handle_callback(self, conn: socket.socket) -> None:
        try:
            frame = read_frame(conn)
        except (WireError, OSError):
            conn.close()
            return
        conn.close()
        if frame.msg_type != MsgType.SPAWN_RESULT:
            return
        payload = frame.payload
        if not payload.get("final"):
            return
        with self._lock:
            callback = self._job_callbacks.pop(payload.get("job_id"), None)
        if callback is not None:
            try:
                callback(payload)
            except Exception:
                logger.exception("job callback failed for %s",
                                 payload.get("job_id"))

    def register_job_callback(self, job_id: str, fn) -> None:
        with self._lock:
            self._job_callbacks[job_id] = fn

    def unregister_job_callback(self, job_id: str) -> None:
        with self._lock:
            self._job_callbacks.pop(job_id, None)

    # -- boot --------------------------------------------------------------

    def boot_ring(self, block_id: str, config: RingConfig,
                  faults: FaultPlan | None = None) -> Ring:
        """Start a ring for the block: one daemon per member node plus the
        owner's daemon on the master.  All-or-nothing."""
        faults = faults or FaultPlan()
        block = self.fleet.get_block(block_id)
        master_node = self.fleet.master_node()
        member_names = self.fleet.member_names(block_id)

        if not config.hosts:
            raise EmptyBlock("ring config lists no hosts")
        if sorted(config.host_names) != sorted(member_names):
            raise HostsMismatch(
                f"hosts {sorted(config.host_names)} do not match block members "
                f"{sorted(member_names)}")
        if config.interface_binding != master_node.internal_addr:
            raise InterfaceBindingError(
                f"interface binding {config.interface_binding} is not the "
                f"master internal address {master_node.internal_addr}")
        nodes = {name: self.fleet.get_node_by_name(name)
                 for name in config.host_names}
        for name, node in nodes.items():
            if node.power is not Power.ON:
                raise NodePoweredOff(f"node {name} is powered off")
        if master_node.power is not Power.ON:
            raise NodePoweredOff(f"master node {master_node.name} is powered off")

        ring_id = new_id("ring")
        owner = block.owner

        with self._lock:
            for name, node in nodes.items():
                held = self._node_slots.get(node.node_id)
                if held is not None:
                    raise DaemonConflict(
                        f"node {name} already runs a daemon for ring {held}")
            held = self._master_slots.get(owner)
            if held is not None:
                raise MasterOwnerConflict(
                    f"master already hosts a daemon for owner {owner} "
                    f"in ring {held}")
            for node in nodes.values():
                self._node_slots[node.node_id] = ring_id
            self._master_slots[owner] = ring_id

        started: list[Daemon] = []
        try:
            master_ref = NodeRef(master_node.node_id, master_node.name, True,
                                 master_node.internal_addr)
            master_daemon = Daemon(master_ref, ring_id, owner, config.secretword,
                                   self.network, self.clock)
            started.append(master_daemon)
            master_daemon.open_ring(set(config.host_names))

            members: list[Daemon] = []
            for entry in config.hosts:
                node = nodes[entry.node_name]
                secret = faults.wrong_secret.get(entry.node_name,
                                                 config.secretword)
                ref = NodeRef(node.node_id, node.name, False,
                              node.internal_addr)
                daemon = Daemon(ref, ring_id, owner, secret,
                                self.network, self.clock)
                started.append(daemon)
                if entry.node_name in faults.unreachable:
                    raise Unreachable(
                        f"node {entry.node_name} did not answer")
                result = daemon.join_master("127.0.0.1", master_daemon.port)
                if not result.accepted or not result.enrolled:
                    raise AuthFailure(
                        f"node {entry.node_name} was refused: "
                        f"{result.reason or 'not enrolled'}")
                members.append(daemon)
                if entry.node_name in faults.kill_after_join:
                    daemon.kill()

            master_daemon.finalize_ring()

            entries = self._console_trace(master_daemon,
                                          timeout=BOOT_TRACE_TIMEOUT)
            expected = [[master_node.name, owner]] + [
                [e.node_name, owner] for e in config.hosts]
            if entries != expected:
                raise RingBroken(
                    f"verification trace saw {entries}, expected {expected}")
        except Exception:
            for daemon in started:
                daemon.stop()
            with self._lock:
                for node in nodes.values():
                    if self._node_slots.get(node.node_id) == ring_id:
                        del self._node_slots[node.node_id]
                if self._master_slots.get(owner) == ring_id:
                    del self._master_slots[owner]
            raise

        ring = Ring(ring_id=ring_id, block_id=block_id, owner=owner,
                    master=master_daemon, members=members,
                    host_entries=list(config.hosts),
                    created_at=time.time())
        with self._lock:
            self._rings[ring_id] = ring
        self.network.ring_up(ring_id)
        logger.info("ring %s up for block %s (%d daemons)", ring_id, block_id,
                    ring.size)
        return ring

    # -- queries -----------------------------------------------------------

    def get_ring(self, ring_id: str) -> Ring:
        with self._lock:
            ring = self._rings.get(ring_id)
        if ring is None:
            raise UnknownRing(f"no such ring: {ring_id}")
        return ring

    def list_rings(self) -> list[Ring]:
        with self._lock:
            return list(self._rings.values())

    def ring_for_block(self, block_id: str) -> Ring | None:
        with self._lock:
            for ring in self._rings.values():
                if ring.block_id == block_id:
                    return ring
        return None

    def _console_trace(self, master: Daemon, timeout: float) -> list:
        reply = request("127.0.0.1", master.port,
                        Frame(MsgType.TRACE, master.ring_id,
                              {"op": "trace", "timeout": timeout}),
                        timeout=timeout + 2.0)
        if reply.msg_type != MsgType.TRACE_REPLY:
            raise RingBroken("malformed trace reply")
        if "error" in reply.payload:
            raise RingBroken(reply.payload["error"])
        return reply.payload["entries"]

    def trace_ring(self, ring_id: str,
                   timeout: float = BOOT_TRACE_TIMEOUT) -> list[tuple[str, str]]:
        """Walk the ring and return (node_name, owner) per daemon in cycle
        order, master first."""
        ring = self.get_ring(ring_id)
        try:
            entries = self._console_trace(ring.master, timeout)
        except Unreachable as exc:
            raise RingBroken(f"master daemon unreachable: {exc}") from exc
        return [(name, owner) for name, owner in entries]

    def ring_counters(self, ring_id: str) -> dict:
        ring = self.get_ring(ring_id)
        daemons = {}
        cross_total = 0
        for d in ring.daemons:
            with d._lock:
                daemons[d.daemon_id] = {
                    "node_name": d.node.name,
                    "frames_in": dict(d.frames_in),
                    "frames_out": dict(d.frames_out),
                    "cross_ring_in": d.cross_ring_in,
                    "jobs": {j: dict(t) for j, t in d.job_traffic.items()},
                }
                cross_total += d.cross_ring_in
        return {"ring_id": ring_id, "daemons": daemons,
                "cross_ring_in_total": cross_total}

    # -- jobs --------------------------------------------------------------

    def spawn_job(self, ring_id: str, spec: dict) -> dict:
        """Hand a job spec to the ring's master daemon and wait for the
        dispatch acknowledgement."""
        ring = self.get_ring(ring_id)
        spec = dict(spec)
        spec["manager"] = {"host": self.callback_host,
                           "port": self.callback_port}
        reply = request("127.0.0.1", ring.master.port,
                        Frame(MsgType.SPAWN, ring_id,
                              {"op": "launch", "job": spec}))
        if reply.msg_type != MsgType.SPAWN_RESULT:
            raise RingBroken("malformed spawn acknowledgement")
        if not reply.payload.get("accepted"):
            raise RingBroken(reply.payload.get("error", "spawn rejected"))
        return reply.payload

    def abort_job(self, ring_id: str, job_id: str,
                  reason: str = "aborted") -> None:
        ring = self.get_ring(ring_id)
        for daemon in ring.daemons:
            try:
                send_oneshot("127.0.0.1", daemon.port,
                             Frame(MsgType.EXIT, ring_id,
                                   {"job_id": job_id, "reason": reason}))
            except Unreachable:
                pass

    def finalize_job(self, ring_id: str, job_id: str, reason: str) -> None:
        """Ask the master daemon to close the books on a job, marking ranks
        that never reported as lost.  Used after a daemon death."""
        ring = self.get_ring(ring_id)
        reply = request("127.0.0.1", ring.master.port,
                        Frame(MsgType.SPAWN, ring_id,
                              {"op": "finalize", "job_id": job_id,
                               "reason": reason}))
        if reply.msg_type != MsgType.SPAWN_RESULT or not reply.payload.get("accepted"):
            raise RingBroken("finalize refused")

    # -- teardown ----------------------------------------------------------

    def teardown_ring(self, ring_id: str) -> bool:
        """Stop every daemon and free the slots.  Idempotent; returns False
        if the ring was already gone."""
        with self._lock:
            ring = self._rings.pop(ring_id, None)
        if ring is None:
            return False
        for daemon in ring.daemons:
            if daemon.alive:
                try:
                    send_oneshot("127.0.0.1", daemon.port,
                                 Frame(MsgType.EXIT, ring_id, {}))
                except Unreachable:
                    pass
            daemon.stop()
        with self._lock:
            for daemon in ring.members:
                if self._node_slots.get(daemon.node.node_id) == ring_id:
                    del self._node_slots[daemon.node.node_id]
            if self._master_slots.get(ring.owner) == ring_id:
                del self._master_slots[ring.owner]
        self.network.ring_down(ring_id)
        logger.info("ring %s torn down", ring_id)
        return True

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            ring_ids = list(self._rings)
        for ring_id in ring_ids:
            self.teardown_ring(ring_id)
        try:
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._listener.close()
        except OSError:
            pass
