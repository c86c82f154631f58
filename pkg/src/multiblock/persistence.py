"""Crash-safe snapshot persistence: one JSON document, atomic replace.

Writes go to a fresh temporary file in the same directory, which is fsynced
and then renamed over the target.  A reader therefore sees either the old
snapshot or the new one, never a mix.  ``crash_hook`` lets tests simulate a
process death at any phase of the write; see docs/snapshot-schema.md for
the document layout.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Callable

from .errors import CorruptSnapshot

SCHEMA_VERSION = 1

# Phases, in order, at which a crash hook fires during save().
CRASH_PHASES = ("before-temp", "mid-temp", "before-rename", "after-rename")


class SimulatedCrash(Exception):
    """Raised by a crash hook to cut a save short, as a power loss would."""


class SnapshotStore:
    def __init__(self, path: str | Path,
                 crash_hook: Callable[[str], None] | None = None):
        self.path = Path(path)
        self.crash_hook = crash_hook
        self._counter = 0
        # Temp files left behind by a crashed writer are dead weight.
        for stale in self.path.parent.glob(self.path.name + ".tmp-*"):
            try:
                stale.unlink()
            except OSError:
                pass

    def _hook(self, phase: str) -> None:
        if self.crash_hook is not None:
            self.crash_hook(phase)

    def save(self, state: dict) -> None:
        document = {"schema_version": SCHEMA_VERSION, **state}
        data = json.dumps(document, indent=2, sort_keys=True).encode("utf-8")
        self._hook("before-temp")
        self._counter += 1
        tmp = self.path.with_name(
            f"{self.path.name}.tmp-{os.getpid()}-{self._counter}")
        fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o600)
        try:
            half = len(data) // 2
            os.write(fd, data[:half])
            self._hook("mid-temp")
            os.write(fd, data[half:])
            os.fsync(fd)
        finally:
            os.close(fd)
        try:
            self._hook("before-rename")
            os.replace(tmp, self.path)
        except SimulatedCrash:
            # A simulated power loss leaves the temp file as debris, exactly
            # like the real thing; the next store start cleans it up.
            raise
        except BaseException:
            try:
                tmp.unlink()
            except OSError:
                pass
            raise
        self._hook("after-rename")
        # Make the rename itself durable.
        try:
            dirfd = os.open(self.path.parent, os.O_RDONLY)
            try:
                os.fsync(dirfd)
            finally:
                os.close(dirfd)
        except OSError:
            pass

    def load(self) -> dict | None:
        """The stored state, or None if no snapshot exists yet.  A snapshot
        that exists but does not parse whole is never silently discarded."""
        if not self.path.exists():
            return None
        try:
            raw = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise CorruptSnapshot(f"cannot read {self.path}: {exc}") from exc
        if not raw.strip():
            raise CorruptSnapshot(f"{self.path} is empty")
        try:
            document = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorruptSnapshot(
                f"{self.path} is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise CorruptSnapshot(f"{self.path} does not hold an object")
        version = document.get("schema_version")
        if version != SCHEMA_VERSION:
            raise CorruptSnapshot(
                f"{self.path} has schema version {version!r}, "
                f"this build reads {SCHEMA_VERSION}")
        return document
