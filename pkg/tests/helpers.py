"""Shared builders and independent oracles for the test suite.

The oracles here are deliberately written from the duty descriptions, not
from the implementation: placement by explicit per-pass simulation over a
rebuilt eligible list, transfer timing by the closed-form link model.
"""

from __future__ import annotations

from multiblock.cluster import Cluster
from multiblock.fleet import FleetRegistry, Power
from multiblock.ring import HostEntry, RingConfig

# Closed-form link model constants, mirrored from the documented defaults.
LATENCY_S = 100e-6
BANDWIDTH_BPS = 10e6
MASTER_CONTENTION = 1.05

SECRET = "correct-horse-battery-staple"


def oracle_transfer_seconds(nbytes: int, touches_master: bool = False,
                            live_rings: int = 1,
                            latency: float = LATENCY_S,
                            bandwidth: float = BANDWIDTH_BPS,
                            contention: float = MASTER_CONTENTION) -> float:
    """One-way modeled duration of a single uncontended-queue transfer."""
    base = latency + nbytes / bandwidth
    if touches_master and live_rings > 1:
        base *= contention ** (live_rings - 1)
    return base


def oracle_pingpong_elapsed(size: int, reps: int,
                            touches_master: bool = False,
                            live_rings: int = 1) -> float:
    """Modeled elapsed time of `reps` round trips over one idle pair."""
    return 2 * reps * oracle_transfer_seconds(size, touches_master,
                                              live_rings)


def oracle_bisection_bandwidth(size: int, n_pairs: int,
                               slowest_elapsed: float) -> float:
    return 2 * size * n_pairs / slowest_elapsed


def oracle_placement(n: int, hosts: list[tuple[str, int | None]]) -> list[str]:
    """Capped round robin by brute force: repeated passes over the host
    list, each pass visiting every host that still has capacity."""
    remaining = [cap if cap is not None else n for _, cap in hosts]
    order: list[str] = []
    while len(order) < n:
        eligible = [i for i in range(len(hosts)) if remaining[i] > 0]
        if not eligible:
            raise ValueError("capacity exhausted")
        for i in eligible:
            if len(order) == n:
                break
            order.append(hosts[i][0])
            remaining[i] -= 1
    return order


# -- fleet builders --------------------------------------------------------

def register_fleet(fleet: FleetRegistry, members: int = 3,
                   power_on: bool = True) -> tuple[str, list[str]]:
    """A master plus `members` compute nodes; returns (master_id, node_ids)."""
    master = fleet.register_node("gateway", "mgmt", "10.0.0.1",
                                 is_master=True,
                                 external_addr="203.0.113.1")
    node_ids = []
    for i in range(1, members + 1):
        node = fleet.register_node(f"n{i:02d}", "compute", f"10.0.0.{i + 1}")
        node_ids.append(node.node_id)
    if power_on:
        for nid in [master.node_id] + node_ids:
            fleet.set_power(nid, Power.ON)
    return master.node_id, node_ids


def ring_config(fleet: FleetRegistry, node_ids: list[str],
                secret: str = SECRET) -> RingConfig:
    names = [fleet.get_node(nid).name for nid in node_ids]
    master = fleet.master_node()
    return RingConfig(secretword=secret,
                      hosts=[HostEntry(name) for name in names],
                      interface_binding=master.internal_addr)


def allocate_and_boot(cluster: Cluster, node_ids: list[str],
                      owner: str = "rizal",
                      period: tuple[float, float] = (0.0, 1e12),
                      secret: str = SECRET):
    """Reserve a block over `node_ids` and boot its ring directly (without
    going through the application workflow)."""
    block = cluster.fleet.allocate_block(owner, node_ids, period)
    config = ring_config(cluster.fleet, node_ids, secret)
    ring = cluster.rings.boot_ring(block.block_id, config)
    return block, ring


PINGPONG = """\
RANK 0:
SEND 1 {size}
RECV 1
EMIT round trip complete
RANK 1:
RECV 0
SEND 0 {size}
"""


def pingpong_program(size: int = 4096) -> str:
    return PINGPONG.format(size=size)
