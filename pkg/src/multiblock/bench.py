"""Bisection-bandwidth benchmark: one block alone versus two blocks sharing
the master.

The measurement splits the ring's daemons into two halves, runs concurrent
ping-pong exchanges across the cut, and reports bandwidth per message size.
Placement puts one rank on every daemon in cycle order, master first, so
some pairs cross the master node and feel contention from other live rings.
All timings are modeled (see the network model); repetitions are aggregated
with min-elapsed as the headline and the per-rep spread recorded.
"""

from __future__ import annotations

import logging
import statistics
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    IoFailure,
    RingBroken,
    TooFewRanks,
    ValidationFailure,
)
from .jobs import Instruction, JobRegistry, Program
from .netsim import LinkModel
from .ring import HostEntry, RingConfig, RingManager

logger = logging.getLogger("multiblock.bench")

JOB_TIMEOUT = 60.0

SCENARIO_SINGLE = "SingleBlock"
SCENARIO_MULTI = "MultiBlock"


@dataclass(frozen=True)
class BenchPoint:
    size_bytes: int
    bandwidth_Bps: float
    reps: int
    stddev: float
    min_elapsed_s: float


@dataclass
class BandwidthCurve:
    scenario: str
    points: list[BenchPoint] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "points": [vars(p) for p in self.points],
        }


def bisection_pairs(n_ranks: int) -> list[tuple[int, int]]:
    """Split ranks into two halves by placement order and pair them across
    the cut; with an odd count the last first-half rank sits out."""
    if n_ranks < 2:
        raise TooFewRanks(f"bisection needs at least 2 ranks, got {n_ranks}")
    first_half = (n_ranks + 1) // 2
    return [(i, first_half + i) for i in range(n_ranks - first_half)]


def _pingpong_program(name: str, n_ranks: int, pairs: list[tuple[int, int]],
                      size: int, reps: int) -> Program:
    sections: dict[int, list[Instruction]] = {r: [] for r in range(n_ranks)}
    for left, right in pairs:
        for _ in range(reps):
            sections[left].append(Instruction("SEND", (right, size)))
            sections[left].append(Instruction("RECV", (right,)))
            sections[right].append(Instruction("RECV", (left,)))
            sections[right].append(Instruction("SEND", (left, size)))
    return Program(name=name, common=None, sections=sections)


def _pair_elapsed(result: dict, reps: int) -> list[float]:
    """Round-trip time of each repetition, from the initiator's event
    timestamps (SEND completion at even indexes, RECV at odd)."""
    events = result["events"]
    elapsed = []
    start = result["t_start"]
    for rep in range(reps):
        end = events[2 * rep + 1]["t"]
        elapsed.append(end - start)
        start = end
    return elapsed


class BisectionBench:
    """Runs bisection measurements through the job executor, so benchmark
    runs and user jobs exclude each other per ring."""

    def __init__(self, rings: RingManager, jobs: JobRegistry):
        self.rings = rings
        self.jobs = jobs

    @staticmethod
    def check_inputs(sizes: list[int], reps: int) -> None:
        if not sizes:
            raise ValidationFailure("at least one message size is needed")
        if any(s < 0 for s in sizes):
            raise ValidationFailure("message sizes must be >= 0")
        if sorted(set(sizes)) != list(sizes):
            raise ValidationFailure(
                "message sizes must be strictly increasing")
        if reps < 3:
            raise ValidationFailure("at least 3 repetitions are needed")

    def _bench_placement(self, ring) -> list[str]:
        return [d.node.name for d in ring.daemons]

    def run_bisection(self, ring_id: str, sizes: list[int], reps: int,
                      scenario: str = SCENARIO_SINGLE) -> BandwidthCurve:
        self.check_inputs(sizes, reps)
        ring = self.rings.get_ring(ring_id)
        placement = self._bench_placement(ring)
        n_ranks = len(placement)
        pairs = bisection_pairs(n_ranks)
        curve = BandwidthCurve(scenario=scenario)
        for size in sizes:
            program = _pingpong_program(f"bisect-{size}", n_ranks, pairs,
                                        size, reps)
            handle = self.jobs.exec_job(ring_id, program, n_ranks,
                                        placement=placement)
            if not handle.wait(JOB_TIMEOUT):
                self.jobs.fail_job(handle.job_id, "benchmark stalled")
                raise RingBroken(f"benchmark stalled at size {size}")
            if handle.state.value != "Finished":
                raise RingBroken(
                    f"benchmark failed at size {size}: {handle.error}")
            results = self.jobs.collect(handle.job_id)
            per_pair = [_pair_elapsed(results[left], reps)
                        for left, _ in pairs]
            rep_elapsed = [max(p[rep] for p in per_pair)
                           for rep in range(reps)]
            total_bytes = 2 * size * len(pairs)
            rep_bw = [total_bytes / e if e > 0 else 0.0 for e in rep_elapsed]
            min_elapsed = min(rep_elapsed)
            headline = total_bytes / min_elapsed if min_elapsed > 0 else 0.0
            curve.points.append(BenchPoint(
                size_bytes=size,
                bandwidth_Bps=headline,
                reps=reps,
                stddev=statistics.stdev(rep_bw) if len(rep_bw) > 1 else 0.0,
                min_elapsed_s=min_elapsed,
            ))
            logger.info("%s size=%d bw=%.0f B/s", scenario, size,
                        headline)
        return curve

    def run_comparison(self, block_a: str, block_b: str, sizes: list[int],
                       reps: int, secret_a: str = "bench-block-a-secret",
                       secret_b: str = "bench-block-b-secret",
                       ) -> tuple[BandwidthCurve, BandwidthCurve, list[float]]:
        """Phase 1 measures block_a's ring alone; phase 2 boots both rings
        and measures block_a again while block_b moves the same traffic."""
        self.check_inputs(sizes, reps)
        fleet = self.rings.fleet
        master = fleet.master_node()

        def config_for(block_id: str, secret: str) -> RingConfig:
            names = fleet.member_names(block_id)
            return RingConfig(secretword=secret,
                              hosts=[HostEntry(n) for n in names],
                              interface_binding=master.internal_addr)

        for block_id in (block_a, block_b):
            if self.rings.ring_for_block(block_id) is not None:
                raise ValidationFailure(
                    f"block {block_id} already has a live ring; the "
                    f"comparison boots its own")

        # Phase 1: block_a alone.
        ring_a = self.rings.boot_ring(block_a, config_for(block_a, secret_a))
        try:
            single = self.run_bisection(ring_a.ring_id, sizes, reps,
                                        scenario=SCENARIO_SINGLE)
        finally:
            self.rings.teardown_ring(ring_a.ring_id)

        # Phase 2: both rings live; block_b mirrors the traffic pattern
        # while block_a is measured.
        ring_a = self.rings.boot_ring(block_a, config_for(block_a, secret_a))
        ring_b = self.rings.boot_ring(block_b, config_for(block_b, secret_b))
        try:
            errors: list[Exception] = []

            def drive_b() -> None:
                try:
                    self.run_bisection(ring_b.ring_id, sizes, reps,
                                       scenario=SCENARIO_MULTI)
                except Exception as exc:
                    errors.append(exc)

            background = threading.Thread(target=drive_b, name="bench-b",
                                          daemon=True)
            background.start()
            multi = self.run_bisection(ring_a.ring_id, sizes, reps,
                                       scenario=SCENARIO_MULTI)
            background.join(JOB_TIMEOUT)
            if errors:
                raise errors[0]
        finally:
            self.rings.teardown_ring(ring_a.ring_id)
            self.rings.teardown_ring(ring_b.ring_id)

        degradation = []
        for p_single, p_multi in zip(single.points, multi.points):
            if p_single.bandwidth_Bps > 0:
                degradation.append(
                    1.0 - p_multi.bandwidth_Bps / p_single.bandwidth_Bps)
            else:
                degradation.append(0.0)
        return single, multi, degradation


def render_csv(curves: list[BandwidthCurve]) -> str:
    """CSV report text, rows grouped by scenario with sizes ascending."""
    if not curves:
        raise ValidationFailure("no curves to report")
    lines = ["scenario,size_bytes,bandwidth_Bps,stddev,reps"]
    for curve in curves:
        for p in sorted(curve.points, key=lambda p: p.size_bytes):
            lines.append(f"{curve.scenario},{p.size_bytes},"
                         f"{p.bandwidth_Bps:.6f},{p.stddev:.6f},{p.reps}")
    return "\n".join(lines) + "\n"


def render_dat(curves: list[BandwidthCurve]) -> str:
    """Gnuplot-compatible data: one block per scenario, blank-line
    separated."""
    if not curves:
        raise ValidationFailure("no curves to report")
    lines = []
    for curve in curves:
        lines.append(f"# scenario: {curve.scenario}")
        lines.append("# size_bytes bandwidth_Bps")
        for p in sorted(curve.points, key=lambda p: p.size_bytes):
            lines.append(f"{p.size_bytes} {p.bandwidth_Bps:.6f}")
        lines.append("")
    return "\n".join(lines) + "\n"


def emit_report(curves: list[BandwidthCurve], out_dir: str | Path,
                basename: str = "bench") -> dict[str, str]:
    """Write the CSV and gnuplot files; returns the written paths."""
    csv_text = render_csv(curves)
    dat_text = render_dat(curves)
    out = Path(out_dir)
    csv_path = out / f"{basename}.csv"
    dat_path = out / f"{basename}.dat"
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(csv_text, encoding="utf-8")
        dat_path.write_text(dat_text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report under {out}: {exc}") from exc
    return {"csv": str(csv_path), "dat": str(dat_path)}
