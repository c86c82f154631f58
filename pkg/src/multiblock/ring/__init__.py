"""Per-block process-manager daemon rings.

One daemon per member node plus one on the master, authenticated into a
single cycle by a shared secretword.  See docs/wire-protocol.md for the
message formats and docs/file-formats.md for the hosts/conf file grammars.
"""

from .config import HostEntry, RingConfig, parse_conf, parse_hosts
from .daemon import Daemon, JoinResult, NodeRef
from .manager import FaultPlan, Ring, RingManager

__all__ = [
    "HostEntry",
    "RingConfig",
    "parse_conf",
    "parse_hosts",
    "Daemon",
    "JoinResult",
    "NodeRef",
    "FaultPlan",
    "Ring",
    "RingManager",
]
