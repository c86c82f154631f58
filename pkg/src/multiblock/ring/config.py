"""Ring configuration: the hosts file and the daemon conf file.

Hosts file grammar (one entry per line, ``#`` begins a comment):

    entry = name | name ':' cap

``cap`` is a positive integer bounding how many job ranks the node may host;
absent means unlimited.  Conf file grammar is ``KEY=value`` lines; the one
required key is ``MPD_SECRETWORD``, the shared secret that authenticates
daemons into the ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import EmptySecretword, MalformedLine, MissingSecretword

SECRETWORD_KEY = "MPD_SECRETWORD"


@dataclass(frozen=True)
class HostEntry:
    """One hosts-file line: node name plus optional rank cap (None = unlimited)."""

    node_name: str
    process_cap: int | None = None

    def __post_init__(self) -> None:
        if not self.node_name:
            raise MalformedLine("host entry needs a node name")
        if self.process_cap is not None and self.process_cap < 1:
            raise MalformedLine(
                f"process cap must be a positive integer, got {self.process_cap}"
            )


@dataclass
class RingConfig:
    """Everything a ring boot needs: secret, hosts, master-side binding."""

    secretword: str
    hosts: list[HostEntry] = field(default_factory=list)
    interface_binding: str = ""

    def __post_init__(self) -> None:
        if not self.secretword:
            raise EmptySecretword("secretword must be nonempty")
        names = [h.node_name for h in self.hosts]
        if len(set(names)) != len(names):
            raise MalformedLine("duplicate node name in hosts list")

    @property
    def host_names(self) -> list[str]:
        return [h.node_name for h in self.hosts]


def _strip_comment(line: str) -> str:
    if "#" in line:
        line = line[: line.index("#")]
    return line.strip()


def parse_hosts(text: str) -> list[HostEntry]:
    """Parse a hosts file into an ordered list of entries."""
    entries: list[HostEntry] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        name, sep, cap_text = line.partition(":")
        name = name.strip()
        if not name:
            raise MalformedLine(f"line {lineno}: empty node name")
        if " " in name or "\t" in name:
            raise MalformedLine(f"line {lineno}: node name contains whitespace")
        cap: int | None = None
        if sep:
            cap_text = cap_text.strip()
            try:
                cap = int(cap_text)
            except ValueError:
                raise MalformedLine(
                    f"line {lineno}: process cap {cap_text!r} is not an integer"
                ) from None
            if cap < 1:
                raise MalformedLine(
                    f"line {lineno}: process cap must be positive, got {cap}"
                )
        if name in seen:
            raise MalformedLine(f"line {lineno}: duplicate node name {name!r}")
        seen.add(name)
        entries.append(HostEntry(name, cap))
    return entries


def parse_conf(text: str) -> str:
    """Extract the secretword from a conf file.

    Unknown ``KEY=value`` lines and comments are ignored.
    """
    secret: str | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            continue
        if key.strip() == SECRETWORD_KEY:
            secret = value
    if secret is None:
        raise MissingSecretword(f"conf file has no {SECRETWORD_KEY} entry")
    if secret == "":
        raise EmptySecretword(f"{SECRETWORD_KEY} is empty")
    return secret
