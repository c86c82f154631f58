"""Round-robin rank placement with per-node process caps."""

from __future__ import annotations

from ..errors import CapacityExceeded, ValidationFailure
from ..ring.config import HostEntry


def plan_placement(n_procs: int, hosts: list[HostEntry]) -> list[str]:
    """Assign ranks 0..n_procs-1 to host names by repeated left-to-right
    passes over ``hosts``, skipping entries already at their cap.

    Pure and deterministic: identical inputs yield identical outputs.
    """
    if n_procs < 1:
        raise ValidationFailure("n_procs must be at least 1")
    names = [entry.node_name for entry in hosts]
    if len(set(names)) != len(names):
        raise ValidationFailure("host list repeats a node name")
    capacity = 0
    unlimited = False
    for entry in hosts:
        if entry.process_cap is None:
            unlimited = True
        else:
            capacity += entry.process_cap
    if not unlimited and capacity < n_procs:
        raise CapacityExceeded(
            f"{n_procs} ranks do not fit in {capacity} slots")
    assignments: list[str] = []
    counts: dict[str, int] = {}
    while len(assignments) < n_procs:
        progressed = False
        for entry in hosts:
            if len(assignments) == n_procs:
                break
            used = counts.get(entry.node_name, 0)
            if entry.process_cap is not None and used >= entry.process_cap:
                continue
            assignments.append(entry.node_name)
            counts[entry.node_name] = used + 1
            progressed = True
        if not progressed:
            raise CapacityExceeded(
                f"{n_procs} ranks do not fit on {len(hosts)} hosts")
    return assignments
