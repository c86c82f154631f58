"""The job program model: a tiny declarative message-passing language.

A program is a per-rank sequence over five opcodes:

    COMPUTE <duration>      burn modeled time (runs against the injected
                            clock, so a virtual clock makes it free)
    SEND <peer> <nbytes>    non-blocking typed send to another rank
    RECV <peer>             block until a message from that rank arrives
    BARRIER                 wait until every rank reaches this barrier
    EMIT <text>             append a line to the rank's transcript

Programs are either SPMD (one body shared by every rank) or MPMD (a
``RANK n:`` section per rank).  Validation happens before launch: peer
references must be in range, SEND/RECV counts between each ordered pair
must balance, and barrier counts must agree across ranks.  Balance rules
cannot catch every deadlock (mutual RECV-before-SEND still hangs), but
they reject the common mistakes cheaply.

Grammar reference: docs/file-formats.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ValidationFailure

OPCODES = ("COMPUTE", "SEND", "RECV", "BARRIER", "EMIT")

_DURATION_RE = re.compile(r"^([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)(us|ms|s)?$")
_UNIT_SCALE = {"us": 1e-6, "ms": 1e-3, "s": 1.0, None: 1.0}

_RANK_HEADER_RE = re.compile(r"^RANK\s+(\d+)\s*:$")


@dataclass(frozen=True)
class Instruction:
    op: str
    args: tuple = ()

    def wire(self) -> list:
        return [self.op, *self.args]


@dataclass
class Program:
    """A named program, SPMD (``common``) or MPMD (``sections``)."""

    name: str
    common: list[Instruction] | None = None
    sections: dict[int, list[Instruction]] = field(default_factory=dict)

    @property
    def is_spmd(self) -> bool:
        return self.common is not None

    def for_rank(self, rank: int) -> list[Instruction]:
        if self.common is not None:
            return self.common
        try:
            return self.sections[rank]
        except KeyError:
            raise ValidationFailure(
                f"program {self.name!r} has no section for rank {rank}"
            ) from None

    def validate(self, n_procs: int) -> None:
        if n_procs < 1:
            raise ValidationFailure("a job needs at least one rank")
        if self.common is None:
            missing = [r for r in range(n_procs) if r not in self.sections]
            if missing:
                raise ValidationFailure(
                    f"program {self.name!r} lacks sections for ranks {missing}")
            extra = [r for r in self.sections if r >= n_procs]
            if extra:
                raise ValidationFailure(
                    f"program {self.name!r} has sections for out-of-range "
                    f"ranks {sorted(extra)}")
        sends: dict[tuple[int, int], int] = {}
        recvs: dict[tuple[int, int], int] = {}
        barrier_counts: dict[int, int] = {}
        for rank in range(n_procs):
            barriers = 0
            for instr in self.for_rank(rank):
                if instr.op in ("SEND", "RECV"):
                    peer = instr.args[0]
                    if not 0 <= peer < n_procs:
                        raise ValidationFailure(
                            f"rank {rank}: peer {peer} outside [0, {n_procs})")
                    if instr.op == "SEND":
                        sends[(rank, peer)] = sends.get((rank, peer), 0) + 1
                    else:
                        recvs[(peer, rank)] = recvs.get((peer, rank), 0) + 1
                elif instr.op == "BARRIER":
                    barriers += 1
            barrier_counts[rank] = barriers
        for pair in sends.keys() | recvs.keys():
            if sends.get(pair, 0) != recvs.get(pair, 0):
                src, dst = pair
                raise ValidationFailure(
                    f"unbalanced traffic {src}->{dst}: "
                    f"{sends.get(pair, 0)} sends, {recvs.get(pair, 0)} recvs")
        if len(set(barrier_counts.values())) > 1:
            raise ValidationFailure(
                f"barrier counts differ across ranks: {barrier_counts}")

    def wire_programs(self, n_procs: int) -> dict[str, list]:
        return {
            str(rank): [instr.wire() for instr in self.for_rank(rank)]
            for rank in range(n_procs)
        }


def _parse_duration(token: str, lineno: int) -> float:
    match = _DURATION_RE.match(token)
    if match is None:
        raise ValidationFailure(
            f"line {lineno}: bad duration {token!r} (use e.g. 50ms, 0.5s)")
    return float(match.group(1)) * _UNIT_SCALE[match.group(2)]


def _parse_int(token: str, what: str, lineno: int, minimum: int = 0) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ValidationFailure(
            f"line {lineno}: {what} must be an integer, got {token!r}"
        ) from None
    if value < minimum:
        raise ValidationFailure(f"line {lineno}: {what} must be >= {minimum}")
    return value


def _parse_instruction(line: str, lineno: int) -> Instruction:
    op, _, rest = line.partition(" ")
    rest = rest.strip()
    if op == "COMPUTE":
        if not rest:
            raise ValidationFailure(f"line {lineno}: COMPUTE needs a duration")
        return Instruction("COMPUTE", (_parse_duration(rest, lineno),))
    if op == "SEND":
        parts = rest.split()
        if len(parts) != 2:
            raise ValidationFailure(
                f"line {lineno}: SEND needs a peer rank and a byte count")
        return Instruction("SEND", (_parse_int(parts[0], "peer", lineno),
                                    _parse_int(parts[1], "byte count", lineno)))
    if op == "RECV":
        parts = rest.split()
        if len(parts) != 1:
            raise ValidationFailure(f"line {lineno}: RECV needs a peer rank")
        return Instruction("RECV", (_parse_int(parts[0], "peer", lineno),))
    if op == "BARRIER":
        if rest:
            raise ValidationFailure(f"line {lineno}: BARRIER takes no arguments")
        return Instruction("BARRIER")
    if op == "EMIT":
        return Instruction("EMIT", (rest,))
    raise ValidationFailure(f"line {lineno}: unknown opcode {op!r}")


def parse_program(text: str, name: str = "job") -> Program:
    """Parse program text.  ``RANK n:`` headers switch to MPMD mode; without
    them the whole body is SPMD.  Full-line ``#`` comments and blank lines
    are skipped (EMIT text may contain ``#``, so no trailing comments)."""
    sections: dict[int, list[Instruction]] = {}
    common: list[Instruction] = []
    current: list[Instruction] | None = None
    saw_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        header = _RANK_HEADER_RE.match(line)
        if header:
            saw_header = True
            rank = int(header.group(1))
            if rank in sections:
                raise ValidationFailure(
                    f"line {lineno}: duplicate section for rank {rank}")
            current = sections[rank] = []
            continue
        instr = _parse_instruction(line, lineno)
        if saw_header:
            if current is None:
                raise ValidationFailure(
                    f"line {lineno}: instruction outside any RANK section")
            current.append(instr)
        else:
            common.append(instr)
    if saw_header:
        if common:
            raise ValidationFailure(
                "instructions before the first RANK section are not allowed "
                "in an MPMD program")
        return Program(name=name, common=None, sections=sections)
    return Program(name=name, common=common)
