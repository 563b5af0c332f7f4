"""Duty-cycle power estimation from the twin's idle/active ledger.

The shipped wattages are illustrative placeholders, not part data: the
real numbers live in the sensor manual and depend on clock rate, so they
are mandatory configuration for any absolute claim.  Curve shape and the
saturation limits are what this module guarantees.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from camtwin._atomicio import atomic_text
from camtwin.kernel import InvalidClock
from camtwin.twin import ActivityLog, SensorProfile


class EmptyLog(ValueError):
    """Activity log covers a zero-length span."""


class NegativeRate(ValueError):
    """Frame rates cannot be negative."""


@dataclass(frozen=True)
class PowerParams:
    """State wattages; defaults are illustrative, never part-authoritative."""

    p_active_mw: float = 8.0
    p_idle_mw: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.p_idle_mw <= self.p_active_mw:
            raise ValueError(
                f"need p_active >= p_idle >= 0, got ({self.p_active_mw}, {self.p_idle_mw})"
            )


@dataclass(frozen=True)
class PowerEstimate:
    average_mw: float
    active_fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.active_fraction <= 1.0:
            raise ValueError(f"active_fraction {self.active_fraction} outside [0, 1]")


def estimate_power(log: ActivityLog, params: PowerParams) -> PowerEstimate:
    """Time-weighted mean of the two state wattages."""
    span = log.idle_ps + log.active_ps
    if span <= 0:
        raise EmptyLog("activity log spans no time")
    fraction = log.active_ps / span
    average = (log.active_ps * params.p_active_mw + log.idle_ps * params.p_idle_mw) / span
    return PowerEstimate(average_mw=average, active_fraction=fraction)


def duty_cycle(fps: float, clock_hz: int, profile: SensorProfile = SensorProfile()) -> float:
    """Active fraction of a sensor idling between captures.

    Every capture costs two frame cycles (the discarded frame after
    leaving idle, then the usable frame), so the active share is
    fps * 2 * T_frame, saturating at 1 when the idle gap vanishes.  The
    cap is compared directly so saturation is exact in floating point.
    """
    if clock_hz <= 0:
        raise InvalidClock(f"clock_hz must be positive, got {clock_hz}")
    if fps < 0:
        raise NegativeRate(f"fps must be non-negative, got {fps}")
    frame_cycles = profile.frame_cycle_cycles
    cap = clock_hz / (2 * frame_cycles)
    if fps >= cap:
        return 1.0
    return fps * 2 * frame_cycles / clock_hz


def power_sweep(
    fps_values: Sequence[float],
    clock_hz: int,
    params: PowerParams,
    profile: SensorProfile = SensorProfile(),
) -> list[tuple[float, PowerEstimate]]:
    """Closed-form power at each frame rate, for plotting."""
    curve = []
    for fps in fps_values:
        fraction = duty_cycle(fps, clock_hz, profile)
        average = fraction * params.p_active_mw + (1.0 - fraction) * params.p_idle_mw
        curve.append((fps, PowerEstimate(average_mw=average, active_fraction=fraction)))
    return curve


def write_sweep_csv(
    curve: Iterable[tuple[float, PowerEstimate]], path: str | os.PathLike
) -> None:
    """Write sweep points as fps,average_mw,active_fraction rows (atomic)."""
    lines = ["fps,average_mw,active_fraction"]
    for fps, est in curve:
        lines.append(f"{fps!r},{est.average_mw!r},{est.active_fraction!r}")
    atomic_text(path, "\n".join(lines) + "\n")
