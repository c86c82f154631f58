"""Multi-tenant cluster control plane.

A simulated node fleet is partitioned into per-user blocks, each running an
isolated, secret-authenticated process-manager daemon ring.  An approval
workflow drives the block lifecycle, an HTTP service exposes the whole thing,
and a bisection-bandwidth benchmark compares single-block against concurrent
multi-block operation.
"""

__version__ = "0.1.0"
