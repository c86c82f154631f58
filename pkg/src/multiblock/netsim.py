"""Modeled network timing for the simulated cluster.

Ring daemons exchange real frames over local sockets, but transfer *times*
come from a closed-form link model so benchmarks are deterministic and fast:

    one-way seconds = (latency + nbytes / bandwidth) * contention

``contention`` is 1 except for transfers with an endpoint on the master node
while more than one ring is alive: every ring runs a daemon on the shared
master, so each additional live ring multiplies master-adjacent transfers by
``master_contention``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass


@dataclass(frozen=True)
class LinkModel:
    """Per-link timing parameters.

    latency            seconds per message
    bandwidth          bytes per second
    master_contention  multiplicative slowdown (>= 1) applied to a transfer
                       for each additional concurrently live ring sharing
                       the master node
    """

    latency: float = 100e-6
    bandwidth: float = 10e6
    master_contention: float = 1.05

    def __post_init__(self) -> None:
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        if self.master_contention < 1:
            raise ValueError("master_contention must be >= 1")

    def one_way_seconds(self, nbytes: int, contention: float = 1.0) -> float:
        return (self.latency + nbytes / self.bandwidth) * contention


class NetworkModel:
    """Shared timing oracle for every daemon in one simulated cluster.

    Tracks which rings are currently alive; daemons ask it for the modeled
    duration of each transfer at send time.
    """

    def __init__(self, link: LinkModel | None = None):
        self.link = link or LinkModel()
        self._lock = threading.Lock()
        self._live_rings: set[str] = set()

    def ring_up(self, ring_id: str) -> None:
        with self._lock:
            self._live_rings.add(ring_id)

    def ring_down(self, ring_id: str) -> None:
        with self._lock:
            self._live_rings.discard(ring_id)

    def live_ring_count(self) -> int:
        with self._lock:
            return len(self._live_rings)

    def contention_factor(self, touches_master: bool) -> float:
        if not touches_master:
            return 1.0
        extra = max(0, self.live_ring_count() - 1)
        return self.link.master_contention ** extra

    def transfer_seconds(self, nbytes: int, touches_master: bool) -> float:
        return self.link.one_way_seconds(
            nbytes, self.contention_factor(touches_master)
        )
