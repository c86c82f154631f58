"""Injectable clock: real wall time for production, virtual time for tests.

Everything that cares about time (usage-period expiry, COMPUTE opcodes, the
expiry sweeper) goes through a ``Clock`` so tests can run period-expiry and
long computations instantly.
"""

from __future__ import annotations

import threading
import time
from typing import Callable, Protocol


class Clock(Protocol):
    def now(self) -> float:
        """Seconds since the clock's epoch."""
        ...

    def sleep(self, seconds: float) -> None:
        ...


class RealClock:
    """Wall-clock time."""

    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Manually advanced clock.

    ``sleep`` returns immediately: virtual waiting is expressed by calling
    ``advance``, which also fires registered listeners (the expiry sweeper
    hooks in here so every advance triggers a sweep).
    """

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()
        self._listeners: list[Callable[[float], None]] = []

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        return None

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        with self._lock:
            self._now += seconds
            now = self._now
            listeners = list(self._listeners)
        for cb in listeners:
            cb(now)
        return now

    def add_listener(self, cb: Callable[[float], None]) -> None:
        with self._lock:
            self._listeners.append(cb)

    def remove_listener(self, cb: Callable[[float], None]) -> None:
        with self._lock:
            if cb in self._listeners:
                self._listeners.remove(cb)
