"""The process-manager daemon: one per block node, plus one per owner on the
master node.

Each daemon is an in-process actor listening on a local socket.  A lock
serializes message processing, so a daemon handles one message at a time.
Daemons authenticate into a ring via a mutual challenge-response on the
shared secretword (the secret itself never crosses the wire), hold a
successor link forming a single cycle, execute job ranks, and account all
traffic per ring and per job.

Transfer *timing* is modeled, not measured: every DATA message carries its
modeled departure time and duration, and each daemon keeps a ``link_free_at``
cursor so concurrent transfers through one daemon serialize in modeled time.
"""

from __future__ import annotations

import hashlib
import hmac
import logging
import secrets
import socket
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from ..clock import Clock, RealClock
from ..errors import AuthFailure, RingBroken, Unreachable
from ..ids import new_id
from ..netsim import NetworkModel
from .wire import (
    Frame,
    MsgType,
    WireError,
    connect,
    read_frame,
    request,
    send_oneshot,
    write_frame,
)

logger = logging.getLogger("multiblock.ring")

TRACE_TIMEOUT = 5.0


def _proof(secret: str, nonce: str, ring_id: str, purpose: str) -> str:
    material = f"{nonce}|{ring_id}|{purpose}".encode("utf-8")
    return hmac.new(secret.encode("utf-8"), material, hashlib.sha256).hexdigest()


@dataclass(frozen=True)
class NodeRef:
    """Facts about the node hosting a daemon."""

    node_id: str
    name: str
    is_master: bool
    internal_addr: str


@dataclass
class JoinResult:
    accepted: bool
    enrolled: bool = False
    reason: str | None = None


class _RankRuntime:
    """Execution state for one job rank hosted by this daemon."""

    def __init__(self, rank: int, program: list, t0: float):
        self.rank = rank
        self.program = program
        self.t = t0
        self.t_start = t0
        self.emits: list[list] = []
        self.events: list[dict] = []
        self.barriers: list[dict] = []
        self.barrier_count = 0
        self.status = "pending"
        self.detail: str | None = None
        # src rank -> deque of (nbytes, arrival_t)
        self.pending: dict[int, deque] = {}
        self.cond = threading.Condition()
        self.barrier_release: dict[int, float] = {}
        self.aborted = False

    def result(self) -> dict:
        return {
            "rank": self.rank,
            "status": self.status,
            "detail": self.detail,
            "emits": list(self.emits),
            "events": list(self.events),
            "barriers": list(self.barriers),
            "t_start": self.t_start,
            "t_end": self.t,
        }


class _DaemonJob:
    """One job as seen by a hosting daemon."""

    def __init__(self, spec: dict):
        self.job_id: str = spec["job_id"]
        self.n_procs: int = spec["n_procs"]
        self.assignments: list[str] = spec["assignments"]
        self.programs: dict = spec["programs"]
        self.manager: dict = spec["manager"]
        self.coordinator: str = spec["coordinator"]
        self.ranks: dict[int, _RankRuntime] = {}
        self.aborted = False
        self.reported = False


class _CoordJob:
    """Aggregation state for a job, kept by the ring's master daemon."""

    def __init__(self, spec: dict):
        self.spec = spec
        self.job_id: str = spec["job_id"]
        self.n_procs: int = spec["n_procs"]
        self.results: dict[int, dict] = {}
        self.finalized = False
        self.error: str | None = None


class Daemon:
    """A ring daemon bound to one node's internal interface."""

    def __init__(
        self,
        node: NodeRef,
        ring_id: str,
        owner: str,
        secret: str,
        network: NetworkModel,
        clock: Clock | None = None,
    ):
        self.daemon_id = new_id("dmn")
        self.node = node
        self.ring_id = ring_id
        self.owner = owner
        self.secret = secret
        self.network = network
        self.clock = clock or RealClock()

        self._lock = threading.RLock()
        self.alive = True
        self.killed = False

        # Ring state
        self.successor_id: str | None = None
        self.membership: dict[str, dict] = {}
        self.order: list[str] = []
        self._expected_members: set[str] = set()
        self._ring_open = False  # master only: accepting enrollments

        # Modeled transport time cursor
        self.link_free_at = 0.0

        # Traffic accounting
        self.frames_in: dict[str, int] = {}
        self.frames_out: dict[str, int] = {}
        self.cross_ring_in = 0
        self.job_traffic: dict[str, dict[str, int]] = {}

        self._jobs: dict[str, _DaemonJob] = {}
        self._coord_jobs: dict[str, _CoordJob] = {}
        self._early_data: dict[str, list[tuple[dict, float]]] = {}
        self._barriers: dict[tuple[str, int], dict[int, float]] = {}
        self._pending_traces: dict[str, dict] = {}

        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("127.0.0.1", 0))
        self._listener.listen(64)
        self.port = self._listener.getsockname()[1]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"daemon-{self.daemon_id}", daemon=True
        )
        self._accept_thread.start()

    # -- identity ---------------------------------------------------------

    @property
    def listen_addr(self) -> str:
        """Internal address + port; ring traffic never uses the external NIC."""
        return f"{self.node.internal_addr}:{self.port}"

    def info(self) -> dict:
        return {
            "daemon_id": self.daemon_id,
            "node_id": self.node.node_id,
            "node_name": self.node.name,
            "is_master": self.node.is_master,
            "owner": self.owner,
            "addr": self.node.internal_addr,
            "host": "127.0.0.1",
            "port": self.port,
        }

    # -- lifecycle --------------------------------------------------------

    def open_ring(self, expected_members: set[str]) -> None:
        """Master only: start accepting join attempts from these node names."""
        with self._lock:
            self._ring_open = True
            self._expected_members = set(expected_members)
            self.membership = {self.daemon_id: self.info()}
            self.order = [self.daemon_id]

    def stop(self) -> None:
        with self._lock:
            if not self.alive:
                return
            self.alive = False
        self._abort_all_jobs("daemon stopped")
        self._close_listener()

    def _close_listener(self) -> None:
        # shutdown() wakes the blocked accept() so the port stops accepting
        # right away; close() alone leaves it live until the next connection.
        try:
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._listener.close()
        except OSError:
            pass

    def kill(self) -> None:
        """Fault injection: die abruptly without reporting anything."""
        with self._lock:
            if not self.alive:
                return
            self.alive = False
            self.killed = True
        for job in list(self._jobs.values()):
            job.aborted = True
            for rt in job.ranks.values():
                with rt.cond:
                    rt.aborted = True
                    rt.cond.notify_all()
        self._close_listener()

    def _abort_all_jobs(self, reason: str) -> None:
        with self._lock:
            jobs = list(self._jobs.values())
        for job in jobs:
            self._abort_job(job, reason)

    def _abort_job(self, job: _DaemonJob, reason: str) -> None:
        job.aborted = True
        for rt in job.ranks.values():
            with rt.cond:
                rt.aborted = True
                rt.cond.notify_all()

    # -- socket plumbing --------------------------------------------------

    def _accept_loop(self) -> None:
        while True:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._handle_conn, args=(conn,), daemon=True
            ).start()

    def _handle_conn(self, conn: socket.socket) -> None:
        try:
            frame = read_frame(conn)
        except (WireError, OSError):
            conn.close()
            return
        try:
            self._dispatch(conn, frame)
        except Exception:
            logger.exception("daemon %s failed handling %s", self.daemon_id,
                             frame.msg_type.name)
        finally:
            conn.close()

    def _count_in(self, frame: Frame) -> bool:
        """Account an inbound frame; False means wrong ring, drop it."""
        with self._lock:
            self.frames_in[frame.ring_id] = self.frames_in.get(frame.ring_id, 0) + 1
            if frame.ring_id != self.ring_id:
                self.cross_ring_in += 1
                return False
            return True

    def _send(self, host: str, port: int, msg_type: MsgType, payload: dict) -> None:
        with self._lock:
            self.frames_out[self.ring_id] = self.frames_out.get(self.ring_id, 0) + 1
        send_oneshot(host, port, Frame(msg_type, self.ring_id, payload))

    def _dispatch(self, conn: socket.socket, frame: Frame) -> None:
        if not self.alive:
            return
        if frame.msg_type == MsgType.CHALLENGE:
            # Join handshakes are counted but never cross-ring-checked: the
            # joiner presents this ring's id by construction.
            self._count_in(frame)
            self._handle_join(conn, frame)
            return
        if not self._count_in(frame):
            return
        handler = {
            MsgType.SET_SUCCESSOR: self._handle_set_successor,
            MsgType.TRACE: lambda f: self._handle_trace(conn, f),
            MsgType.TRACE_REPLY: self._handle_trace_reply,
            MsgType.SPAWN: lambda f: self._handle_spawn(conn, f),
            MsgType.SPAWN_RESULT: self._handle_spawn_result,
            MsgType.DATA: self._handle_data,
            MsgType.EXIT: self._handle_exit,
        }.get(frame.msg_type)
        if handler is None:
            logger.warning("daemon %s: unexpected %s", self.daemon_id,
                           frame.msg_type.name)
            return
        handler(frame)

    # -- join: mutual challenge-response ----------------------------------

    def join_master(self, master_host: str, master_port: int) -> JoinResult:
        """Authenticate into the ring anchored at the master daemon.

        The joiner challenges the master first, then answers the master's
        counter-challenge; only keyed digests of the nonces travel.
        """
        joiner_nonce = secrets.token_hex(16)
        try:
            sock = connect(master_host, master_port)
        except Unreachable:
            raise
        try:
            with self._lock:
                self.frames_out[self.ring_id] = (
                    self.frames_out.get(self.ring_id, 0) + 1
                )
            write_frame(sock, Frame(MsgType.CHALLENGE, self.ring_id, {
                "joiner_nonce": joiner_nonce,
                "meta": self.info(),
            }))
            reply = read_frame(sock)
            if reply.msg_type != MsgType.RESPONSE:
                return JoinResult(False, reason="protocol violation")
            expected = _proof(self.secret, joiner_nonce, self.ring_id, "master-proof")
            if not hmac.compare_digest(expected, reply.payload.get("master_proof", "")):
                return JoinResult(False, reason="master failed the challenge")
            master_nonce = reply.payload["master_nonce"]
            write_frame(sock, Frame(MsgType.RESPONSE, self.ring_id, {
                "proof": _proof(self.secret, master_nonce, self.ring_id, "join-proof"),
            }))
            welcome = read_frame(sock)
            if welcome.msg_type != MsgType.WELCOME:
                return JoinResult(False, reason="protocol violation")
            return JoinResult(
                accepted=bool(welcome.payload.get("accepted")),
                enrolled=bool(welcome.payload.get("enrolled")),
                reason=welcome.payload.get("reason"),
            )
        except (OSError, WireError) as exc:
            raise Unreachable(f"join handshake failed: {exc}") from exc
        finally:
            sock.close()

    def _handle_join(self, conn: socket.socket, frame: Frame) -> None:
        payload = frame.payload
        joiner_nonce = payload.get("joiner_nonce", "")
        meta = payload.get("meta", {})
        master_nonce = secrets.token_hex(16)
        try:
            write_frame(conn, Frame(MsgType.RESPONSE, self.ring_id, {
                "master_proof": _proof(self.secret, joiner_nonce, self.ring_id,
                                       "master-proof"),
                "master_nonce": master_nonce,
            }))
            answer = read_frame(conn)
        except (OSError, WireError):
            return
        if answer.msg_type != MsgType.RESPONSE:
            return
        expected = _proof(self.secret, master_nonce, self.ring_id, "join-proof")
        accepted = hmac.compare_digest(expected, answer.payload.get("proof", ""))
        enrolled = False
        reason = None
        if not accepted:
            reason = "secretword mismatch"
        else:
            with self._lock:
                name = meta.get("node_name")
                if self._ring_open and name in self._expected_members:
                    self.membership[meta["daemon_id"]] = meta
                    self.order.append(meta["daemon_id"])
                    self._expected_members.discard(name)
                    enrolled = True
                else:
                    reason = "ring closed to new members"
        try:
            write_frame(conn, Frame(MsgType.WELCOME, self.ring_id, {
                "accepted": accepted,
                "enrolled": enrolled,
                "reason": reason,
            }))
        except OSError:
            pass

    # -- cycle formation --------------------------------------------------

    def finalize_ring(self) -> None:
        """Master only: close enrollment and push successor links around."""
        with self._lock:
            self._ring_open = False
            order = list(self.order)
            membership = dict(self.membership)
        for idx, daemon_id in enumerate(order):
            succ_id = order[(idx + 1) % len(order)]
            payload = {
                "successor_id": succ_id,
                "membership": membership,
                "order": order,
            }
            if daemon_id == self.daemon_id:
                with self._lock:
                    self.successor_id = succ_id
            else:
                target = membership[daemon_id]
                self._send(target["host"], target["port"],
                           MsgType.SET_SUCCESSOR, payload)

    def _handle_set_successor(self, frame: Frame) -> None:
        with self._lock:
            self.successor_id = frame.payload["successor_id"]
            self.membership = frame.payload["membership"]
            self.order = frame.payload["order"]

    def _successor(self) -> dict:
        with self._lock:
            if self.successor_id is None:
                raise RingBroken("no successor link")
            return self.membership[self.successor_id]

    # -- trace ------------------------------------------------------------

    def _handle_trace(self, conn: socket.socket, frame: Frame) -> None:
        op = frame.payload.get("op", "trace")
        if op == "trace":
            self._run_trace(conn, frame)
        elif op == "forward":
            self._forward_trace(frame)

    def _run_trace(self, conn: socket.socket, frame: Frame) -> None:
        """Initiate a full cycle walk and answer on the requesting connection."""
        token = secrets.token_hex(8)
        done = threading.Event()
        record: dict[str, Any] = {"event": done, "entries": None, "error": None}
        with self._lock:
            self._pending_traces[token] = record
        payload = {
            "op": "forward",
            "token": token,
            "origin_id": self.daemon_id,
            "origin_host": "127.0.0.1",
            "origin_port": self.port,
            "entries": [[self.node.name, self.owner]],
        }
        try:
            succ = self._successor()
            self._send(succ["host"], succ["port"], MsgType.TRACE, payload)
        except (Unreachable, RingBroken) as exc:
            record["error"] = str(exc)
            done.set()
        timeout = frame.payload.get("timeout", TRACE_TIMEOUT)
        done.wait(timeout)
        with self._lock:
            self._pending_traces.pop(token, None)
        if record["entries"] is not None:
            reply = {"entries": record["entries"]}
        else:
            reply = {"error": record["error"] or "trace timed out"}
        try:
            write_frame(conn, Frame(MsgType.TRACE_REPLY, self.ring_id, reply))
        except OSError:
            pass

    def _forward_trace(self, frame: Frame) -> None:
        payload = dict(frame.payload)
        if payload["origin_id"] == self.daemon_id:
            with self._lock:
                record = self._pending_traces.get(payload["token"])
            if record is not None:
                record["entries"] = payload["entries"]
                record["event"].set()
            return
        payload["entries"] = payload["entries"] + [[self.node.name, self.owner]]
        try:
            succ = self._successor()
            self._send(succ["host"], succ["port"], MsgType.TRACE, payload)
        except (Unreachable, RingBroken) as exc:
            try:
                self._send(payload["origin_host"], payload["origin_port"],
                           MsgType.TRACE_REPLY,
                           {"token": payload["token"],
                            "error": f"broken after {self.node.name}: {exc}"})
            except Unreachable:
                pass

    def _handle_trace_reply(self, frame: Frame) -> None:
        token = frame.payload.get("token")
        with self._lock:
            record = self._pending_traces.get(token)
        if record is not None:
            record["error"] = frame.payload.get("error", "ring broken")
            record["event"].set()

    # -- job spawn --------------------------------------------------------

    def _handle_spawn(self, conn: socket.socket, frame: Frame) -> None:
        op = frame.payload.get("op")
        if op == "launch":
            spec = frame.payload["job"]
            with self._lock:
                self._coord_jobs[spec["job_id"]] = _CoordJob(spec)
            self._start_local_ranks(spec)
            payload = {"op": "circulate", "job": spec,
                       "origin_id": self.daemon_id}
            try:
                succ = self._successor()
                if succ["daemon_id"] != self.daemon_id:
                    self._send(succ["host"], succ["port"], MsgType.SPAWN, payload)
            except (Unreachable, RingBroken) as exc:
                self._fail_coord_job(spec["job_id"], f"dispatch failed: {exc}")
                try:
                    write_frame(conn, Frame(MsgType.SPAWN_RESULT, self.ring_id,
                                            {"accepted": False, "error": str(exc)}))
                except OSError:
                    pass
                return
            try:
                write_frame(conn, Frame(MsgType.SPAWN_RESULT, self.ring_id,
                                        {"accepted": True,
                                         "job_id": spec["job_id"]}))
            except OSError:
                pass
        elif op == "finalize":
            job_id = frame.payload["job_id"]
            reason = frame.payload.get("reason", "lost")
            with self._lock:
                coord = self._coord_jobs.get(job_id)
                ok = coord is not None and not coord.finalized
                if ok:
                    for rank in range(coord.n_procs):
                        if rank not in coord.results:
                            coord.results[rank] = {
                                "rank": rank, "status": "lost",
                                "detail": reason, "emits": [], "events": [],
                                "barriers": [], "t_start": None, "t_end": None,
                            }
                    coord.finalized = True
                    coord.error = reason
            if ok:
                self._push_final(coord)
            try:
                write_frame(conn, Frame(MsgType.SPAWN_RESULT, self.ring_id,
                                        {"accepted": ok}))
            except OSError:
                pass
        elif op == "circulate":
            if frame.payload["origin_id"] == self.daemon_id:
                return  # dispatch has gone full circle
            spec = frame.payload["job"]
            self._start_local_ranks(spec)
            try:
                succ = self._successor()
                self._send(succ["host"], succ["port"], MsgType.SPAWN, frame.payload)
            except (Unreachable, RingBroken) as exc:
                master = self._master_info()
                if master is not None:
                    try:
                        self._send(master["host"], master["port"],
                                   MsgType.SPAWN_RESULT,
                                   {"job_id": spec["job_id"],
                                    "error": f"dispatch broken at "
                                             f"{self.node.name}: {exc}"})
                    except Unreachable:
                        pass

    def _master_info(self) -> dict | None:
        with self._lock:
            for meta in self.membership.values():
                if meta["is_master"]:
                    return meta
        return None

    def _start_local_ranks(self, spec: dict) -> None:
        job = _DaemonJob(spec)
        my_ranks = [r for r, name in enumerate(job.assignments)
                    if name == self.node.name]
        with self._lock:
            self._jobs[job.job_id] = job
            t0 = self.link_free_at
            for rank in my_ranks:
                program = job.programs[str(rank)]
                job.ranks[rank] = _RankRuntime(rank, program, t0)
            early = self._early_data.pop(job.job_id, [])
        for payload, arrival in early:
            self._deliver_data(job, payload, arrival)
        if not my_ranks:
            return
        for rank in my_ranks:
            threading.Thread(
                target=self._run_rank, args=(job, job.ranks[rank]),
                name=f"rank-{job.job_id}-{rank}", daemon=True,
            ).start()

    # -- rank execution ---------------------------------------------------

    def _run_rank(self, job: _DaemonJob, rt: _RankRuntime) -> None:
        try:
            for idx, instr in enumerate(rt.program):
                if rt.aborted:
                    break
                op = instr[0]
                if op == "COMPUTE":
                    self.clock.sleep(instr[1])
                    rt.t += instr[1]
                elif op == "SEND":
                    self._rank_send(job, rt, int(instr[1]), int(instr[2]))
                elif op == "RECV":
                    self._rank_recv(job, rt, int(instr[1]))
                elif op == "BARRIER":
                    self._rank_barrier(job, rt)
                elif op == "EMIT":
                    rt.emits.append([rt.t, str(instr[1])])
                else:
                    raise ValueError(f"unknown opcode {op!r}")
                rt.events.append({"i": idx, "op": op, "t": rt.t})
            rt.status = "aborted" if rt.aborted else "ok"
        except _Aborted:
            rt.status = "aborted"
        except Exception as exc:
            rt.status = "error"
            rt.detail = str(exc)
            logger.exception("rank %d of %s failed", rt.rank, job.job_id)
        self._rank_finished(job)

    def _daemon_for_rank(self, job: _DaemonJob, rank: int) -> dict:
        name = job.assignments[rank]
        with self._lock:
            for meta in self.membership.values():
                if meta["node_name"] == name:
                    return meta
        raise RingBroken(f"no daemon for node {name}")

    def _rank_send(self, job: _DaemonJob, rt: _RankRuntime, peer: int,
                   nbytes: int, kind: str = "user",
                   barrier_index: int | None = None) -> None:
        target = self._daemon_for_rank(job, peer)
        touches_master = self.node.is_master or target["is_master"]
        dur = self.network.transfer_seconds(nbytes, touches_master)
        local = target["daemon_id"] == self.daemon_id
        with self._lock:
            depart = max(rt.t, self.link_free_at)
            finish = depart + dur
            self.link_free_at = finish
            rt.t = finish
            if kind == "user":
                traffic = self.job_traffic.setdefault(
                    job.job_id, {"sent_msgs": 0, "recv_msgs": 0,
                                 "sent_bytes": 0, "recv_bytes": 0})
                traffic["sent_msgs"] += 1
                traffic["sent_bytes"] += nbytes
        payload = {
            "job_id": job.job_id,
            "kind": kind,
            "src": rt.rank,
            "dst": peer,
            "nbytes": nbytes,
            "depart": depart,
            "dur": dur,
        }
        if barrier_index is not None:
            payload["barrier_index"] = barrier_index
        if local:
            # Same-daemon delivery: one time charge, no socket round trip.
            self._deliver_data(job, payload, arrival=finish, count=kind == "user")
        else:
            self._send(target["host"], target["port"], MsgType.DATA, payload)

    def _rank_recv(self, job: _DaemonJob, rt: _RankRuntime, peer: int) -> None:
        with rt.cond:
            while True:
                queue = rt.pending.get(peer)
                if queue:
                    nbytes, arrival = queue.popleft()
                    rt.t = max(rt.t, arrival)
                    return
                if rt.aborted:
                    raise _Aborted()
                rt.cond.wait(timeout=0.1)

    def _rank_barrier(self, job: _DaemonJob, rt: _RankRuntime) -> None:
        k = rt.barrier_count
        rt.barrier_count += 1
        coordinator_rank = 0
        self._rank_send(job, rt, coordinator_rank, 0,
                        kind="barrier_arrive", barrier_index=k)
        arrive_t = rt.t
        with rt.cond:
            while True:
                if k in rt.barrier_release:
                    release_t = rt.barrier_release.pop(k)
                    rt.t = max(rt.t, release_t)
                    break
                if rt.aborted:
                    raise _Aborted()
                rt.cond.wait(timeout=0.1)
        rt.barriers.append({"k": k, "arrive_t": arrive_t, "release_t": rt.t})

    # -- DATA handling ----------------------------------------------------

    def _handle_data(self, frame: Frame) -> None:
        payload = frame.payload
        job_id = payload["job_id"]
        with self._lock:
            arrival = max(payload["depart"], self.link_free_at) + payload["dur"]
            self.link_free_at = arrival
            job = self._jobs.get(job_id)
            if job is None:
                # SPAWN may still be circulating; buffer with computed arrival.
                self._early_data.setdefault(job_id, []).append((payload, arrival))
                return
        self._deliver_data(job, payload, arrival)

    def _deliver_data(self, job: _DaemonJob, payload: dict, arrival: float,
                      count: bool = True) -> None:
        kind = payload["kind"]
        if kind == "user" and count:
            with self._lock:
                traffic = self.job_traffic.setdefault(
                    job.job_id, {"sent_msgs": 0, "recv_msgs": 0,
                                 "sent_bytes": 0, "recv_bytes": 0})
                traffic["recv_msgs"] += 1
                traffic["recv_bytes"] += payload["nbytes"]
        if kind == "user":
            rt = job.ranks.get(payload["dst"])
            if rt is None:
                return
            with rt.cond:
                rt.pending.setdefault(payload["src"], deque()).append(
                    (payload["nbytes"], arrival))
                rt.cond.notify_all()
        elif kind == "barrier_arrive":
            self._coordinate_barrier(job, payload, arrival)
        elif kind == "barrier_release":
            rt = job.ranks.get(payload["dst"])
            if rt is None:
                return
            with rt.cond:
                rt.barrier_release[payload["barrier_index"]] = arrival
                rt.cond.notify_all()

    def _coordinate_barrier(self, job: _DaemonJob, payload: dict,
                            arrival: float) -> None:
        key = (job.job_id, payload["barrier_index"])
        with self._lock:
            arrived = self._barriers.setdefault(key, {})
            arrived[payload["src"]] = arrival
            if len(arrived) < job.n_procs:
                return
            del self._barriers[key]
        # All ranks arrived: release every one of them through the normal
        # transfer path (zero-byte messages from the coordinator daemon).
        k = payload["barrier_index"]
        for rank in range(job.n_procs):
            target = self._daemon_for_rank(job, rank)
            touches_master = self.node.is_master or target["is_master"]
            dur = self.network.transfer_seconds(0, touches_master)
            with self._lock:
                depart = self.link_free_at
                self.link_free_at = depart + dur
            release = {
                "job_id": job.job_id,
                "kind": "barrier_release",
                "src": payload["dst"],
                "dst": rank,
                "nbytes": 0,
                "depart": depart,
                "dur": dur,
                "barrier_index": k,
            }
            if target["daemon_id"] == self.daemon_id:
                self._deliver_data(job, release, arrival=depart + dur)
            else:
                self._send(target["host"], target["port"], MsgType.DATA, release)

    # -- result aggregation ----------------------------------------------

    def _rank_finished(self, job: _DaemonJob) -> None:
        with self._lock:
            if job.reported:
                return
            done = all(rt.status != "pending" for rt in job.ranks.values())
            if not done:
                return
            job.reported = True
            results = {str(r): rt.result() for r, rt in job.ranks.items()}
        if self.killed:
            return
        master = self._master_info()
        if master is None:
            return
        try:
            self._send(master["host"], master["port"], MsgType.SPAWN_RESULT,
                       {"job_id": job.job_id, "daemon_id": self.daemon_id,
                        "results": results})
        except Unreachable:
            logger.warning("daemon %s could not report results for %s",
                           self.daemon_id, job.job_id)

    def _handle_spawn_result(self, frame: Frame) -> None:
        payload = frame.payload
        job_id = payload.get("job_id")
        with self._lock:
            coord = self._coord_jobs.get(job_id)
        if coord is None:
            return
        if "error" in payload:
            self._fail_coord_job(job_id, payload["error"])
            return
        finalize = False
        with self._lock:
            if coord.finalized:
                return
            for rank_str, result in payload.get("results", {}).items():
                coord.results[int(rank_str)] = result
            if len(coord.results) >= coord.n_procs:
                coord.finalized = True
                finalize = True
        if finalize:
            self._push_final(coord)

    def _fail_coord_job(self, job_id: str, error: str) -> None:
        with self._lock:
            coord = self._coord_jobs.get(job_id)
            if coord is None or coord.finalized:
                return
            coord.finalized = True
            coord.error = error
        self._push_final(coord)

    def _push_final(self, coord: _CoordJob) -> None:
        manager = coord.spec["manager"]
        payload = {
            "job_id": coord.job_id,
            "final": True,
            "error": coord.error,
            "results": {str(r): res for r, res in coord.results.items()},
        }
        try:
            self._send(manager["host"], manager["port"],
                       MsgType.SPAWN_RESULT, payload)
        except Unreachable:
            logger.warning("daemon %s could not deliver final results for %s",
                           self.daemon_id, coord.job_id)

    # -- exit -------------------------------------------------------------

    def _handle_exit(self, frame: Frame) -> None:
        job_id = frame.payload.get("job_id")
        if job_id is None:
            self.stop()
            return
        with self._lock:
            job = self._jobs.get(job_id)
        if job is not None:
            self._abort_job(job, frame.payload.get("reason", "aborted"))


class _Aborted(Exception):
    pass
