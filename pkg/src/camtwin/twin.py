"""Timing-accurate digital twin of the miniature Bayer sensor.

The twin owns a single frame buffer ("the FPGA can only store one image at
a time" is the modeled constraint): each capture overwrites it chunk by
chunk while a linearized rolling readout drains it on a fixed schedule.
A pixel whose covering chunk lands after its readout slot is served from
the previous buffer content, which is exactly how stale-frame corruption
appears on the real part.

Readout is linearized to a uniform cycles_per_pixel schedule spanning the
first width*height*cycles_per_pixel cycles of the usable frame cycle; the
remaining cycles are trailing blanking, so a capture occupies two full
frame cycles end to end (discard frame + usable frame).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from camtwin.imaging import BayerImage, PATTERN_TILES
from camtwin.kernel import InvalidClock, cycles_to_ps

MAX_CLOCK_HZ = 75_000_000


class Busy(RuntimeError):
    """A capture is already in flight."""


class Overflow(ValueError):
    """Chunk writes past the single-frame buffer."""


class OutOfRange(IndexError):
    """Pixel index outside the frame."""


@dataclass(frozen=True)
class SensorProfile:
    """Static part geometry and cycle counts (defaults: NanEyeC-class)."""

    width: int = 320
    height: int = 320
    bit_depth: int = 10
    idle_to_tx_cycles: int = 11_520
    frame_cycle_cycles: int = 1_298_880
    cycles_per_pixel: int = 10
    pattern: str = "BGGR"

    def __post_init__(self) -> None:
        if min(self.width, self.height, self.bit_depth, self.cycles_per_pixel) <= 0:
            raise ValueError("profile dimensions and cycle counts must be positive")
        if self.pattern not in PATTERN_TILES:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        # Serial line moves one bit per cycle; the payload must fit the frame cycle.
        if self.width * self.height * self.bit_depth > self.frame_cycle_cycles:
            raise ValueError("pixel payload does not fit in one frame cycle")
        if self.width * self.height * self.cycles_per_pixel > self.frame_cycle_cycles:
            raise ValueError("readout span does not fit in one frame cycle")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class TwinConfig:
    """Per-run sensor operating point.

    deadline_ps defaults to one frame cycle: the latest first-chunk
    arrival that still lines up with the start of usable readout.  It is
    an explicit knob because campaigns may demand a tighter budget than
    the physical window (e.g. 120 ms at a 5 MHz clock).
    exposure_offset_cycles lengthens integration linearly; zero is the
    lowest-exposure setting the cycle constants describe.
    """

    clock_hz: int
    profile: SensorProfile = SensorProfile()
    deadline_ps: int | None = None
    discard_first_frame: bool = True
    exposure_offset_cycles: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.clock_hz <= MAX_CLOCK_HZ:
            raise InvalidClock(f"clock_hz must be in (0, {MAX_CLOCK_HZ}], got {self.clock_hz}")
        if self.exposure_offset_cycles < 0:
            raise ValueError("exposure_offset_cycles must be non-negative")
        if self.deadline_ps is None:
            object.__setattr__(
                self, "deadline_ps", cycles_to_ps(self.profile.frame_cycle_cycles, self.clock_hz)
            )
        if self.deadline_ps <= 0:
            raise ValueError(f"deadline_ps must be positive, got {self.deadline_ps}")


@dataclass(frozen=True)
class CaptureSchedule:
    """Absolute timing of one capture transaction."""

    interrupt_at: int
    discard_readout_start: int
    usable_readout_start: int
    usable_readout_end: int
    # End of the usable frame cycle including trailing blanking; the
    # sensor is busy (active) through this point even after readout ends.
    frame_cycle_end: int


@dataclass(frozen=True)
class FrameOutcome:
    """What one capture delivered to the DUT."""

    first_chunk_latency_ps: int | None
    flagged: bool
    underrun_count: int
    served: BayerImage


@dataclass(frozen=True)
class ActivityLog:
    """Idle/active accounting over the simulated span."""

    idle_ps: int
    active_ps: int
    transitions: tuple[tuple[int, str], ...]


@dataclass
class _InFlight:
    schedule: CaptureSchedule
    staging: np.ndarray                      # flat incoming samples
    chunks: list[tuple[int, int, int]] = field(default_factory=list)  # (start, end, arrival)
    write_ptr: int = 0
    first_arrival: int | None = None


class SensorTwin:
    """Single-threaded capture state machine with one frame of memory."""

    def __init__(self, config: TwinConfig) -> None:
        self.config = config
        self.profile = config.profile
        # First-ever stale content is all zeros: deterministic, and
        # obviously artificial when it shows up in a report.
        self._buffer = np.zeros(self.profile.n_pixels, dtype=np.uint16)
        self._inflight: _InFlight | None = None
        self._state = "idle"
        self._state_since = 0
        self._idle_ps = 0
        self._active_ps = 0
        self._transitions: list[tuple[int, str]] = [(0, "idle")]

    # ------------------------------------------------------------ state

    @property
    def in_flight(self) -> bool:
        return self._inflight is not None

    def _transition(self, t: int, state: str) -> None:
        if t < self._state_since:
            raise ValueError(f"time went backwards: {t} < {self._state_since}")
        span = t - self._state_since
        if self._state == "idle":
            self._idle_ps += span
        else:
            self._active_ps += span
        self._state = state
        self._state_since = t
        self._transitions.append((t, state))

    def snapshot_log(self, t: int) -> ActivityLog:
        """Accounting through time ``t``, including the open interval."""
        if t < self._state_since:
            raise ValueError(f"snapshot time {t} precedes last transition {self._state_since}")
        idle, active = self._idle_ps, self._active_ps
        if self._state == "idle":
            idle += t - self._state_since
        else:
            active += t - self._state_since
        return ActivityLog(idle_ps=idle, active_ps=active, transitions=tuple(self._transitions))

    # ---------------------------------------------------------- capture

    def begin_capture(self, t: int) -> CaptureSchedule:
        """Start a capture at ``t``: emit the fetch interrupt, go active.

        The discard frame's serial output begins idle_to_tx cycles in;
        the usable frame follows one full frame cycle after the trigger.
        """
        if self._inflight is not None:
            raise Busy("capture already in flight")
        cfg, prof = self.config, self.profile
        hz = cfg.clock_hz
        idle_to_tx = prof.idle_to_tx_cycles + cfg.exposure_offset_cycles
        frame_cycle = prof.frame_cycle_cycles + cfg.exposure_offset_cycles
        readout_span = cycles_to_ps(prof.n_pixels * prof.cycles_per_pixel, hz)
        if cfg.discard_first_frame:
            usable_start = t + cycles_to_ps(frame_cycle, hz)
            cycle_end = t + cycles_to_ps(2 * frame_cycle, hz)
        else:
            usable_start = t + cycles_to_ps(idle_to_tx, hz)
            cycle_end = t + cycles_to_ps(frame_cycle, hz)
        schedule = CaptureSchedule(
            interrupt_at=t,
            discard_readout_start=t + cycles_to_ps(idle_to_tx, hz),
            usable_readout_start=usable_start,
            usable_readout_end=usable_start + readout_span,
            frame_cycle_end=cycle_end,
        )
        self._transition(t, "active")
        # np.empty is fine: every slot is either chunk-written or filled
        # from the previous buffer at finalize.
        self._inflight = _InFlight(
            schedule=schedule, staging=np.empty(prof.n_pixels, dtype=np.uint16)
        )
        return schedule

    def ingest_chunk(self, samples: np.ndarray, arrival: int) -> int:
        """Write one contiguous chunk; returns the new write pointer.

        The first chunk's arrival fixes the frame's first-chunk latency.
        Arrivals after the readout window are accepted (the buffer still
        fills; the readout simply saw stale content).
        """
        fl = self._inflight
        if fl is None:
            raise Busy("no capture in flight")
        samples = np.asarray(samples, dtype=np.uint16).ravel()
        if samples.size == 0:
            raise ValueError("empty chunk")
        if arrival < fl.schedule.interrupt_at:
            raise ValueError("chunk arrived before the fetch interrupt")
        if fl.chunks and arrival < fl.chunks[-1][2]:
            raise ValueError("chunk arrivals must be non-decreasing")
        end = fl.write_ptr + samples.size
        if end > self.profile.n_pixels:
            raise Overflow(
                f"chunk of {samples.size} px overruns buffer at {fl.write_ptr}"
                f"/{self.profile.n_pixels}"
            )
        fl.staging[fl.write_ptr : end] = samples
        fl.chunks.append((fl.write_ptr, end, arrival))
        if fl.first_arrival is None:
            fl.first_arrival = arrival
        fl.write_ptr = end
        return end

    def readout_pixel_time(self, i: int) -> int:
        """Absolute time the linearized readout serves pixel ``i``."""
        if not 0 <= i < self.profile.n_pixels:
            raise OutOfRange(f"pixel {i} outside [0, {self.profile.n_pixels})")
        fl = self._inflight
        if fl is None:
            raise Busy("no capture in flight")
        return fl.schedule.usable_readout_start + cycles_to_ps(
            i * self.profile.cycles_per_pixel, self.config.clock_hz
        )

    def _first_fresh_index(self, arrival: int, usable_start: int) -> int:
        # Smallest i with readout_pixel_time(i) >= arrival; pixels before
        # it were read out before this chunk landed.
        n = self.profile.n_pixels
        d = arrival - usable_start
        if d <= 0:
            return 0
        hz, cpp = self.config.clock_hz, self.profile.cycles_per_pixel
        i = min(d * hz // (10**12 * cpp), n)
        while i > 0 and cycles_to_ps((i - 1) * cpp, hz) >= d:
            i -= 1
        while i < n and cycles_to_ps(i * cpp, hz) < d:
            i += 1
        return int(i)

    def finalize_frame(self, t: int) -> FrameOutcome:
        """Close the capture at ``t``: decide freshness, swap the buffer.

        A pixel is fresh when its covering chunk arrived at or before its
        readout slot; stale pixels within a chunk always form a prefix of
        the chunk's range because readout time grows with the index.
        """
        fl = self._inflight
        if fl is None:
            raise Busy("no capture in flight")
        sched = fl.schedule
        if t < sched.usable_readout_end:
            raise ValueError(f"finalize at {t} before readout end {sched.usable_readout_end}")
        if fl.chunks and t < fl.chunks[-1][2]:
            raise ValueError("finalize precedes the last chunk arrival")
        n = self.profile.n_pixels
        stale_ranges: list[tuple[int, int]] = []
        for start, end, arrival in fl.chunks:
            cut = min(end, self._first_fresh_index(arrival, sched.usable_readout_start))
            if cut > start:
                stale_ranges.append((start, cut))
        if fl.write_ptr < n:
            stale_ranges.append((fl.write_ptr, n))

        old = self._buffer
        new = fl.staging
        if fl.write_ptr < n:
            new[fl.write_ptr :] = old[fl.write_ptr :]  # never-written tail keeps old content
        underrun = 0
        if stale_ranges:
            served = new.copy()
            for a, b in stale_ranges:
                served[a:b] = old[a:b]
                underrun += b - a
        else:
            # Staging is fresh per capture and a retired buffer is only
            # ever read, so a clean frame can be served without a copy.
            served = new

        deadline = self.config.deadline_ps
        if fl.first_arrival is None:
            latency, flagged = None, True
        else:
            latency = fl.first_arrival - sched.interrupt_at
            flagged = latency > deadline
        self._buffer = new
        self._inflight = None
        self._transition(t, "idle")
        prof = self.profile
        return FrameOutcome(
            first_chunk_latency_ps=latency,
            flagged=flagged,
            underrun_count=underrun,
            served=BayerImage(
                served.reshape(prof.height, prof.width),
                pattern=prof.pattern,
                bit_depth=prof.bit_depth,
            ),
        )


def max_frame_rate(clock_hz: int, profile: SensorProfile = SensorProfile()) -> tuple[float, float]:
    """Continuous-streaming ceiling: (frames/s, payload bits/s).

    One frame per frame cycle with no idle gaps; the payload rate scales
    linearly with the frame rate.
    """
    if clock_hz <= 0:
        raise InvalidClock(f"clock_hz must be positive, got {clock_hz}")
    fps = clock_hz / profile.frame_cycle_cycles
    return fps, fps * profile.n_pixels * profile.bit_depth
