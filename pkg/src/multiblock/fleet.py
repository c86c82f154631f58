"""Node fleet registry: nodes, power states, and per-user block allocations.

Blocks are disjoint sets of non-master nodes held exclusively by one user for
a usage period.  The master node is dual-homed (internal + external address)
and never a block member; it joins every daemon ring implicitly.

All operations are atomic under one registry lock, so the registry is safe to
drive from concurrent API handlers.  Snapshots are immutable values.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    AlreadyReleased,
    DuplicateAddress,
    DuplicateName,
    EmptyBlock,
    ExternalAddrNotAllowed,
    InvalidPeriod,
    MasterNotAllocatable,
    MasterWithoutExternalAddr,
    NodeAlreadyAllocated,
    NodeInActiveBlock,
    SecondMaster,
    UnknownBlock,
    UnknownNode,
)
from .ids import new_id


class Power(str, Enum):
    ON = "on"
    OFF = "off"


class BlockState(str, Enum):
    RESERVED = "reserved"
    ACTIVE = "active"
    RELEASED = "released"


@dataclass
class Node:
    node_id: str
    name: str
    spec_class: str
    internal_addr: str
    is_master: bool
    external_addr: str | None = None
    power: Power = Power.OFF


@dataclass
class Block:
    """Exclusive hold on an ordered set of member nodes for [start, end)."""

    block_id: str
    owner: str
    member_nodes: list[str]
    period_start: float
    period_end: float
    state: BlockState = BlockState.RESERVED


@dataclass(frozen=True)
class NodeView:
    node_id: str
    name: str
    spec_class: str
    internal_addr: str
    is_master: bool
    external_addr: str | None
    power: str
    block_id: str | None


@dataclass(frozen=True)
class BlockView:
    block_id: str
    owner: str
    member_nodes: tuple[str, ...]
    member_names: tuple[str, ...]
    period_start: float
    period_end: float
    state: str


@dataclass(frozen=True)
class FleetSnapshot:
    revision: int
    nodes: tuple[NodeView, ...]
    blocks: tuple[BlockView, ...]


@dataclass
class _OpRecord:
    revision: int
    op: str
    args: dict = field(default_factory=dict)


class FleetRegistry:
    """Thread-safe registry of nodes and blocks.

    ``record_ops=True`` keeps an append-only operation log so tests can
    replay the history and check snapshots for linearizability.
    """

    def __init__(self, record_ops: bool = False):
        self._lock = threading.RLock()
        self._nodes: dict[str, Node] = {}
        self._blocks: dict[str, Block] = {}
        self._revision = 0
        self._record_ops = record_ops
        self.oplog: list[_OpRecord] = []

    # -- internals --------------------------------------------------------

    def _bump(self, op: str, **args) -> int:
        self._revision += 1
        if self._record_ops:
            self.oplog.append(_OpRecord(self._revision, op, args))
        return self._revision

    def _node(self, node_id: str) -> Node:
        node = self._nodes.get(node_id)
        if node is None:
            raise UnknownNode(f"no such node: {node_id}")
        return node

    def _block(self, block_id: str) -> Block:
        block = self._blocks.get(block_id)
        if block is None:
            raise UnknownBlock(f"no such block: {block_id}")
        return block

    def _holding_block(self, node_id: str) -> Block | None:
        for block in self._blocks.values():
            if block.state != BlockState.RELEASED and node_id in block.member_nodes:
                return block
        return None

    # -- operations -------------------------------------------------------

    def register_node(
        self,
        name: str,
        spec_class: str,
        internal_addr: str,
        is_master: bool = False,
        external_addr: str | None = None,
    ) -> Node:
        with self._lock:
            if not name:
                raise DuplicateName("node name must be nonempty")
            if any(n.name == name for n in self._nodes.values()):
                raise DuplicateName(f"node name already registered: {name}")
            taken = set()
            for n in self._nodes.values():
                taken.add(n.internal_addr)
                if n.external_addr:
                    taken.add(n.external_addr)
            if internal_addr in taken or internal_addr == external_addr:
                raise DuplicateAddress(f"address already in use: {internal_addr}")
            if external_addr and external_addr in taken:
                raise DuplicateAddress(f"address already in use: {external_addr}")
            if is_master:
                if any(n.is_master for n in self._nodes.values()):
                    raise SecondMaster("fleet already has a master node")
                if not external_addr:
                    raise MasterWithoutExternalAddr(
                        "the master node is dual-homed and needs an external address"
                    )
            elif external_addr:
                raise ExternalAddrNotAllowed(
                    "only the master node carries an external address"
                )
            node = Node(
                node_id=new_id("node"),
                name=name,
                spec_class=spec_class,
                internal_addr=internal_addr,
                is_master=is_master,
                external_addr=external_addr,
            )
            self._nodes[node.node_id] = node
            self._bump("register_node", node_id=node.node_id, name=name)
            return node

    def set_power(self, node_id: str, target: Power) -> Node:
        with self._lock:
            node = self._node(node_id)
            if target == Power.OFF:
                holder = self._holding_block(node_id)
                if holder is not None and holder.state == BlockState.ACTIVE:
                    raise NodeInActiveBlock(
                        f"node {node.name} is in active block {holder.block_id}"
                    )
            node.power = target
            self._bump("set_power", node_id=node_id, target=target.value)
            return node

    def allocate_block(
        self, owner: str, node_ids: list[str], period: tuple[float, float]
    ) -> Block:
        start, end = period
        with self._lock:
            if not node_ids:
                raise EmptyBlock("a block needs at least one node")
            if len(set(node_ids)) != len(node_ids):
                raise NodeAlreadyAllocated("node listed twice in allocation")
            if not start < end:
                raise InvalidPeriod(f"period start {start} must precede end {end}")
            for node_id in node_ids:
                node = self._node(node_id)
                if node.is_master:
                    raise MasterNotAllocatable(
                        "the master node joins every ring implicitly and is never a block member"
                    )
                holder = self._holding_block(node_id)
                if holder is not None:
                    raise NodeAlreadyAllocated(
                        f"node {node.name} already held by block {holder.block_id}"
                    )
            block = Block(
                block_id=new_id("blk"),
                owner=owner,
                member_nodes=list(node_ids),
                period_start=start,
                period_end=end,
            )
            self._blocks[block.block_id] = block
            self._bump("allocate_block", block_id=block.block_id, owner=owner,
                       node_ids=list(node_ids))
            return block

    def mark_block_active(self, block_id: str) -> Block:
        with self._lock:
            block = self._block(block_id)
            if block.state == BlockState.RELEASED:
                raise AlreadyReleased(f"block {block_id} is released")
            block.state = BlockState.ACTIVE
            self._bump("mark_block_active", block_id=block_id)
            return block

    def release_block(self, block_id: str) -> Block:
        with self._lock:
            block = self._block(block_id)
            if block.state == BlockState.RELEASED:
                raise AlreadyReleased(f"block {block_id} already released")
            block.state = BlockState.RELEASED
            # Power-off after the state flip so the active-block guard
            # cannot refuse the automatic shutdown.
            for node_id in block.member_nodes:
                self._nodes[node_id].power = Power.OFF
            self._bump("release_block", block_id=block_id)
            return block

    def fleet_status(self) -> FleetSnapshot:
        with self._lock:
            holders: dict[str, str] = {}
            for block in self._blocks.values():
                if block.state != BlockState.RELEASED:
                    for node_id in block.member_nodes:
                        holders[node_id] = block.block_id
            nodes = tuple(
                NodeView(
                    node_id=n.node_id,
                    name=n.name,
                    spec_class=n.spec_class,
                    internal_addr=n.internal_addr,
                    is_master=n.is_master,
                    external_addr=n.external_addr,
                    power=n.power.value,
                    block_id=holders.get(n.node_id),
                )
                for n in self._nodes.values()
            )
            blocks = tuple(
                BlockView(
                    block_id=b.block_id,
                    owner=b.owner,
                    member_nodes=tuple(b.member_nodes),
                    member_names=tuple(
                        self._nodes[m].name for m in b.member_nodes
                    ),
                    period_start=b.period_start,
                    period_end=b.period_end,
                    state=b.state.value,
                )
                for b in self._blocks.values()
            )
            return FleetSnapshot(self._revision, nodes, blocks)

    # -- lookups ----------------------------------------------------------

    def get_node(self, node_id: str) -> Node:
        with self._lock:
            return self._node(node_id)

    def get_node_by_name(self, name: str) -> Node:
        with self._lock:
            for node in self._nodes.values():
                if node.name == name:
                    return node
            raise UnknownNode(f"no such node: {name}")

    def get_block(self, block_id: str) -> Block:
        with self._lock:
            return self._block(block_id)

    def master_node(self) -> Node:
        with self._lock:
            for node in self._nodes.values():
                if node.is_master:
                    return node
            raise UnknownNode("fleet has no master node")

    def member_names(self, block_id: str) -> list[str]:
        with self._lock:
            block = self._block(block_id)
            return [self._nodes[m].name for m in block.member_nodes]

    @property
    def revision(self) -> int:
        with self._lock:
            return self._revision

    # -- persistence ------------------------------------------------------

    def dump(self) -> dict:
        with self._lock:
            return {
                "revision": self._revision,
                "nodes": [
                    {
                        "node_id": n.node_id,
                        "name": n.name,
                        "spec_class": n.spec_class,
                        "internal_addr": n.internal_addr,
                        "is_master": n.is_master,
                        "external_addr": n.external_addr,
                        "power": n.power.value,
                    }
                    for n in self._nodes.values()
                ],
                "blocks": [
                    {
                        "block_id": b.block_id,
                        "owner": b.owner,
                        "member_nodes": list(b.member_nodes),
                        "period_start": b.period_start,
                        "period_end": b.period_end,
                        "state": b.state.value,
                    }
                    for b in self._blocks.values()
                ],
            }

    def restore(self, data: dict) -> None:
        """Replace all registry state with a dumped snapshot."""
        with self._lock:
            self._nodes.clear()
            self._blocks.clear()
            self.oplog.clear()
            self._revision = int(data.get("revision", 0))
            for nd in data.get("nodes", []):
                node = Node(
                    node_id=nd["node_id"],
                    name=nd["name"],
                    spec_class=nd["spec_class"],
                    internal_addr=nd["internal_addr"],
                    is_master=bool(nd["is_master"]),
                    external_addr=nd.get("external_addr"),
                    power=Power(nd["power"]),
                )
                self._nodes[node.node_id] = node
            for bd in data.get("blocks", []):
                block = Block(
                    block_id=bd["block_id"],
                    owner=bd["owner"],
                    member_nodes=list(bd["member_nodes"]),
                    period_start=float(bd["period_start"]),
                    period_end=float(bd["period_end"]),
                    state=BlockState(bd["state"]),
                )
                self._blocks[block.block_id] = block

    @classmethod
    def load(cls, data: dict, record_ops: bool = False) -> "FleetRegistry":
        reg = cls(record_ops=record_ops)
        reg.restore(data)
        return reg
