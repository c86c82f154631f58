"""Daemon wire protocol: length-prefixed binary frames over stream sockets.

Every message is a fixed 24-byte header followed by a JSON payload:

    offset  size  field
    0       2     magic, ASCII "MB"
    2       1     protocol version, currently 1
    3       1     message type (MsgType value)
    4       4     payload length, big-endian unsigned
    8       16    ring id, raw bytes (zero-padded)

The layout is stable across versions; see docs/wire-protocol.md.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass
from enum import IntEnum

from ..errors import Unreachable

MAGIC = b"MB"
VERSION = 1
HEADER = struct.Struct(">2sBBI16s")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 16 * 1024 * 1024

CONNECT_TIMEOUT = 2.0
READ_TIMEOUT = 10.0


class MsgType(IntEnum):
    CHALLENGE = 1
    RESPONSE = 2
    WELCOME = 3
    SET_SUCCESSOR = 4
    TRACE = 5
    TRACE_REPLY = 6
    SPAWN = 7
    SPAWN_RESULT = 8
    DATA = 9
    EXIT = 10


class WireError(Exception):
    """Malformed or truncated frame."""


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    ring_id: str
    payload: dict


def _ring_id_bytes(ring_id: str) -> bytes:
    raw = ring_id.encode("utf-8")[:16]
    return raw.ljust(16, b"\x00")


def _ring_id_str(raw: bytes) -> str:
    return raw.rstrip(b"\x00").decode("utf-8", errors="replace")


def encode(frame: Frame) -> bytes:
    payload = json.dumps(frame.payload, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_PAYLOAD:
        raise WireError(f"payload too large: {len(payload)} bytes")
    header = HEADER.pack(
        MAGIC, VERSION, int(frame.msg_type), len(payload),
        _ring_id_bytes(frame.ring_id),
    )
    return header + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WireError("connection closed mid-frame")
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> Frame:
    header = _recv_exact(sock, HEADER_SIZE)
    magic, version, msg_type, length, ring_raw = HEADER.unpack(header)
    if magic != MAGIC:
        raise WireError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireError(f"unsupported protocol version {version}")
    if length > MAX_PAYLOAD:
        raise WireError(f"payload too large: {length} bytes")
    payload = _recv_exact(sock, length) if length else b"{}"
    try:
        decoded = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"bad payload: {exc}") from exc
    if not isinstance(decoded, dict):
        raise WireError("payload must be a JSON object")
    return Frame(MsgType(msg_type), _ring_id_str(ring_raw), decoded)


def write_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(encode(frame))


def connect(host: str, port: int, timeout: float = CONNECT_TIMEOUT) -> socket.socket:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise Unreachable(f"cannot reach {host}:{port}: {exc}") from exc
    sock.settimeout(READ_TIMEOUT)
    return sock


def send_oneshot(host: str, port: int, frame: Frame) -> None:
    """Connect, deliver one frame, close.  No reply expected."""
    sock = connect(host, port)
    try:
        write_frame(sock, frame)
    except OSError as exc:
        raise Unreachable(f"send to {host}:{port} failed: {exc}") from exc
    finally:
        sock.close()


def request(host: str, port: int, frame: Frame,
            timeout: float = READ_TIMEOUT) -> Frame:
    """Connect, deliver one frame, wait for a single reply frame."""
    sock = connect(host, port)
    sock.settimeout(timeout)
    try:
        write_frame(sock, frame)
        return read_frame(sock)
    except (OSError, WireError) as exc:
        raise Unreachable(f"request to {host}:{port} failed: {exc}") from exc
    finally:
        sock.close()
