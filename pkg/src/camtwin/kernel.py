"""Deterministic virtual-time event engine.

Every timestamp in the simulator is an integer number of picoseconds since
simulation start.  The sensor twin and the serial link run in different
clock domains, so each domain converts *absolute* cycle counts to
picoseconds per call; nothing ever accumulates per-cycle increments, which
keeps rounding error bounded by 1 ps over any span.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

PS_PER_SECOND = 10**12
PS_PER_MS = 10**9
PS_PER_US = 10**6

# Event kinds used by the capture pipeline.
CAPTURE_REQUEST = "capture-request"
CHUNK_ARRIVAL = "chunk-arrival"
READOUT_PIXEL_WINDOW = "readout-pixel-window"
READOUT_COMPLETE = "readout-complete"
DEADLINE_CHECK = "deadline-check"


class PastDue(ValueError):
    """An event was scheduled before the queue's current time."""


class InvalidClock(ValueError):
    """A clock frequency was zero or negative."""


def cycles_to_ps(cycles: int, clock_hz: int) -> int:
    """Convert an absolute cycle count at ``clock_hz`` to picoseconds.

    Rounds half up.  Python integers are unbounded, so the intermediate
    ``cycles * 10**12`` never overflows regardless of span.
    """
    if clock_hz <= 0:
        raise InvalidClock(f"clock_hz must be positive, got {clock_hz}")
    if cycles < 0:
        raise ValueError(f"cycle count must be non-negative, got {cycles}")
    q, r = divmod(cycles * PS_PER_SECOND, clock_hz)
    return q + 1 if 2 * r >= clock_hz else q


@dataclass
class SimEvent:
    """One scheduled occurrence on the virtual timeline.

    ``seq`` is assigned by the queue at insertion; events with equal due
    time are processed in ascending ``seq`` order, which makes replays of
    the same schedule byte-identical.
    """

    due: int
    kind: str
    payload: Any = None
    seq: int = -1


Handler = Callable[["EventQueue", SimEvent], None]


class EventQueue:
    """Single-threaded priority queue ordered by ``(due, seq)``.

    Handlers are registered per event kind and may schedule further
    events; anything they add at or before the current ``run_until``
    limit is processed in the same call.
    """

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._next_seq = 0
        self._handlers: dict[str, Handler] = {}
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def on(self, kind: str, handler: Handler) -> None:
        self._handlers[kind] = handler

    def schedule(self, event: SimEvent) -> int:
        """Enqueue ``event`` and return its sequence id."""
        if event.due < self.now:
            raise PastDue(f"event due {event.due} is before current time {self.now}")
        event.seq = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._heap, (event.due, event.seq, event))
        return event.seq

    def peek_due(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def run_until(self, limit: int) -> int:
        """Process every event with ``due <= limit`` in key order.

        Returns the number of events processed.  The current time ends at
        the latest processed due time (it is never advanced to ``limit``
        when the queue runs dry earlier).
        """
        processed = 0
        while self._heap and self._heap[0][0] <= limit:
            due, _, event = heapq.heappop(self._heap)
            if due > self.now:
                self.now = due
            handler = self._handlers.get(event.kind)
            if handler is not None:
                handler(self, event)
            processed += 1
        return processed

    def drain(self) -> int:
        """Process all remaining events regardless of due time."""
        processed = 0
        while self._heap:
            due = self._heap[0][0]
            processed += self.run_until(due)
        return processed
