"""Release gate: one test per acceptance criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail
line per criterion with its runtime against the stated budget.
"""

import itertools
import random
import statistics
import time
from contextlib import contextmanager

import pytest

from multiblock.bench import BisectionBench
from multiblock.clock import VirtualClock
from multiblock.cluster import Cluster
from multiblock.errors import AuthFailure, CapacityExceeded, Unreachable
from multiblock.jobs import parse_program, plan_placement
from multiblock.persistence import (
    CRASH_PHASES,
    SimulatedCrash,
    SnapshotStore,
)
from multiblock.ring.config import HostEntry
from multiblock.ring.manager import FaultPlan
from multiblock.workflow import Approve, ApplicationState, replay_log

import helpers
from helpers import (
    allocate_and_boot,
    oracle_placement,
    oracle_transfer_seconds,
    pingpong_program,
    register_fleet,
    ring_config,
)

JOB_WAIT = 15


@contextmanager
def criterion(name: str, budget_s: float | None = None):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - started
    if budget_s is not None:
        assert elapsed < budget_s, (
            f"{name}: took {elapsed:.2f}s, budget {budget_s:.0f}s")
        print(f"[PASS] {name} ({elapsed:.2f}s < {budget_s:.0f}s)")
    else:
        print(f"[PASS] {name} ({elapsed:.2f}s)")


def activate_two_blocks(cluster, sizes=(3, 2), period=(0.0, 2_000.0)):
    """Walk two applications through the full admission flow and return
    their records, Active with booted rings."""
    _, node_ids = register_fleet(cluster.fleet, members=sum(sizes))
    records, offset = [], 0
    for username, count in zip(("ana", "budi"), sizes):
        ids = node_ids[offset:offset + count]
        offset += count
        record = cluster.workflow.submit(
            {"username": username, "contact": ""}, "acceptance run", count)
        cluster.workflow.review(record.app_id, "admin",
                                Approve(node_ids=ids, period=period))
        cluster.workflow.reconfirm(record.app_id, username, True)
        cluster.workflow.activate(record.app_id, "admin")
        records.append(cluster.workflow.get(record.app_id))
    return records


def test_two_blocks_activate_with_correct_daemon_fanout(bare_cluster):
    with criterion("block activation and daemon fan-out", budget_s=5.0):
        apps = activate_two_blocks(bare_cluster, sizes=(3, 2))
        traces = []
        for record in apps:
            ring = bare_cluster.rings.ring_for_block(record.assigned_block)
            traces.append(bare_cluster.rings.trace_ring(ring.ring_id))
        assert len(traces[0]) == 4
        assert len(traces[1]) == 3

        per_node: dict[str, list[str]] = {}
        for trace in traces:
            for node_name, owner in trace:
                per_node.setdefault(node_name, []).append(owner)
        master = bare_cluster.fleet.get_node_by_name("gateway")
        assert master.is_master
        owners_on_master = per_node.pop("gateway")
        assert len(owners_on_master) == 2
        assert len(set(owners_on_master)) == 2
        for node_name, owners in per_node.items():
            assert len(owners) <= 1, f"{node_name} hosts {len(owners)} daemons"


def test_concurrent_jobs_stay_ring_isolated(bare_cluster):
    with criterion("cross-ring isolation under concurrent jobs",
                   budget_s=10.0):
        apps = activate_two_blocks(bare_cluster, sizes=(3, 2))
        handles = []
        for record in apps:
            ring = bare_cluster.rings.ring_for_block(record.assigned_block)
            handles.append(bare_cluster.jobs.exec_job(
                ring.ring_id, parse_program(pingpong_program(4096)), 2))
        for handle in handles:
            assert handle.wait(JOB_WAIT)
            assert handle.state.value == "Finished"
        for record in apps:
            ring = bare_cluster.rings.ring_for_block(record.assigned_block)
            counters = bare_cluster.rings.ring_counters(ring.ring_id)
            assert counters["cross_ring_in_total"] == 0


def test_placement_planner_equals_brute_force():
    with criterion("placement planner vs brute force, exhaustive",
                   budget_s=5.0):
        checked = 0
        for n_hosts in range(1, 6):
            for caps in itertools.product((1, 2, 3, 4), repeat=n_hosts):
                entries = [HostEntry(f"h{i}", cap)
                           for i, cap in enumerate(caps)]
                pairs = [(e.node_name, e.process_cap) for e in entries]
                for n in range(1, 21):
                    try:
                        got = plan_placement(n, entries)
                    except CapacityExceeded:
                        with pytest.raises(ValueError):
                            oracle_placement(n, pairs)
                    else:
                        assert got == oracle_placement(n, pairs)
                    checked += 1
        assert checked == 20 * sum(4 ** h for h in range(1, 6))


def test_application_lifecycle_runs_to_expiry(cluster):
    with criterion("admission lifecycle through expiry", budget_s=5.0):
        _, node_ids = register_fleet(cluster.fleet, members=3)
        record = cluster.workflow.submit(
            {"username": "rizal", "contact": "r@example.org"},
            "finite element sweep", 3)
        app_id = record.app_id
        cluster.workflow.review(app_id, "admin",
                                Approve(node_ids=node_ids,
                                        period=(1_000.0, 2_000.0)))
        cluster.workflow.reconfirm(app_id, "rizal", True)
        cluster.workflow.activate(app_id, "admin")

        ring = cluster.rings.ring_for_block(
            cluster.workflow.get(app_id).assigned_block)
        handle = cluster.jobs.exec_job(ring.ring_id, parse_program(pingpong_program(1024)), 2)
        assert handle.wait(JOB_WAIT)

        # Advancing the clock triggers the expiry sweep via its listener;
        # a second explicit sweep must be a no-op.
        cluster.clock.advance(1_500.0)
        assert cluster.workflow.expire_sweep() == []

        record = cluster.workflow.get(app_id)
        assert record.state is ApplicationState.EXPIRED
        block = next(b for b in cluster.fleet.fleet_status().blocks
                     if b.block_id == record.assigned_block)
        assert block.state == "released"
        for name in block.member_names:
            assert cluster.fleet.get_node_by_name(name).power == "off"
        assert cluster.rings.ring_for_block(record.assigned_block) is None
        assert replay_log(record.decision_log) is ApplicationState.EXPIRED


def test_ring_boot_requires_unanimous_authentication(bare_cluster):
    with criterion("secretword fault injection", budget_s=10.0):
        cluster = bare_cluster
        _, node_ids = register_fleet(cluster.fleet, members=4)
        block = cluster.fleet.allocate_block("rizal", node_ids, (0.0, 1e12))
        config = ring_config(cluster.fleet, node_ids)
        names = cluster.fleet.member_names(block.block_id)

        # Any single wrong secretword, at any member, is rejected.
        for name in names:
            plan = FaultPlan(wrong_secret={name: "intruder-wrong-secret"})
            with pytest.raises(AuthFailure):
                cluster.rings.boot_ring(block.block_id, config, faults=plan)
            assert cluster.rings.list_rings() == []

        # So is every wrong-secret combination of two members.
        for pair in itertools.combinations(names, 2):
            plan = FaultPlan(wrong_secret={
                name: f"bad-{name}-secret-0000" for name in pair})
            with pytest.raises(AuthFailure):
                cluster.rings.boot_ring(block.block_id, config, faults=plan)
            assert cluster.rings.list_rings() == []

        # A mid-boot loss leaves no partial ring behind.
        plan = FaultPlan(kill_after_join={names[1]})
        with pytest.raises(Unreachable):
            cluster.rings.boot_ring(block.block_id, config, faults=plan)
        assert cluster.rings.list_rings() == []

        # With every member authenticating, the ring boots cleanly.
        ring = cluster.rings.boot_ring(block.block_id, config)
        assert len(cluster.rings.trace_ring(ring.ring_id)) == 5


def test_single_pair_timing_matches_closed_form(bare_cluster):
    with criterion("single-pair benchmark vs closed form (±5%)"):
        cluster = bare_cluster
        _, node_ids = register_fleet(cluster.fleet, members=1)
        _, ring = allocate_and_boot(cluster, node_ids)
        sizes = [1024, 32 * 1024, 1024 * 1024]
        bench = BisectionBench(cluster.rings, cluster.jobs)
        curve = bench.run_bisection(ring.ring_id, sizes, reps=5)
        for point in curve.points:
            one_way = point.min_elapsed_s / 2
            closed_form = helpers.LATENCY_S + \
                point.size_bytes / helpers.BANDWIDTH_BPS
            assert one_way == pytest.approx(closed_form, rel=0.05), \
                f"size {point.size_bytes}"


def test_two_block_benchmark_degrades_only_slightly(bare_cluster):
    with criterion("two-block bandwidth vs single block", budget_s=30.0):
        cluster = bare_cluster
        _, node_ids = register_fleet(cluster.fleet, members=4)
        block_a = cluster.fleet.allocate_block("ana", node_ids[:2],
                                               (0.0, 1e12))
        block_b = cluster.fleet.allocate_block("budi", node_ids[2:],
                                               (0.0, 1e12))
        sizes = [1024, 4096, 32768, 262144, 1048576]
        bench = BisectionBench(cluster.rings, cluster.jobs)
        single, multi, degradation = bench.run_comparison(
            block_a.block_id, block_b.block_id, sizes, reps=5)
        for s, m in zip(single.points, multi.points):
            assert m.bandwidth_Bps <= s.bandwidth_Bps, \
                f"size {s.size_bytes}: two-block exceeded single-block"
        assert statistics.median(degradation) <= 0.20


class CrashOnce:
    def __init__(self, phase: str):
        self.phase = phase
        self.fired = False

    def __call__(self, phase: str) -> None:
        if not self.fired and phase == self.phase:
            self.fired = True
            raise SimulatedCrash(f"injected crash at {phase}")


def test_snapshots_survive_randomized_crashes(tmp_path):
    with criterion("crash-safe persistence, 100 randomized trials"):
        rng = random.Random(0)
        torn = 0
        for trial in range(100):
            base = tmp_path / f"trial{trial}"
            base.mkdir()
            store = SnapshotStore(base / "state.json")
            mutations = rng.randint(1, 8)
            crash_at = rng.randrange(mutations)
            phase = rng.choice(CRASH_PHASES)
            committed = None
            for i in range(mutations):
                doc = {"fleet": {"revision": i}, "workflow": {}, "auth": {}}
                if i == crash_at:
                    store.crash_hook = CrashOnce(phase)
                try:
                    store.save(doc)
                    committed = i
                except SimulatedCrash:
                    if phase == "after-rename":
                        committed = i
                    break
            document = SnapshotStore(base / "state.json").load()
            if committed is None:
                if document is not None:
                    torn += 1
            elif document["fleet"]["revision"] not in (committed,
                                                      committed - 1):
                torn += 1
        assert torn == 0
