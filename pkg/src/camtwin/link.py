"""Model of the PC-to-FPGA transfer path.

A transfer is a fixed number of bulk calls, each paying a constant
per-call overhead before its payload streams at lanes x link_clock bits
per second.  Chunks land atomically at call completion.  Injected fault
delays come from a counter-based generator keyed by (seed, frame index),
so adding or dropping frames never disturbs any other frame's draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from camtwin.kernel import cycles_to_ps

LANE_OPTIONS = (1, 2, 4)


@dataclass(frozen=True)
class LinkConfig:
    """Bridge geometry and per-call costs (defaults: quad-lane at 40 MHz,
    two half-image calls, 8 bits per pixel on the wire)."""

    lanes: int = 4
    link_clock_hz: int = 40_000_000
    per_call_overhead_ps: int = 5_000_000_000
    calls_per_image: int = 2
    bits_per_pixel_on_wire: int = 8
    chunk_pixels: int = 51_200

    def __post_init__(self) -> None:
        if self.lanes not in LANE_OPTIONS:
            raise ValueError(f"lanes must be one of {LANE_OPTIONS}, got {self.lanes}")
        if self.link_clock_hz <= 0:
            raise ValueError(f"link_clock_hz must be positive, got {self.link_clock_hz}")
        if self.per_call_overhead_ps < 0:
            raise ValueError("per_call_overhead_ps must be non-negative")
        if self.calls_per_image < 1:
            raise ValueError("calls_per_image must be at least 1")
        if self.bits_per_pixel_on_wire <= 0 or self.chunk_pixels <= 0:
            raise ValueError("wire width and chunk size must be positive")

    @property
    def bit_rate_hz(self) -> int:
        return self.lanes * self.link_clock_hz

    def payload_time_ps(self, n_pixels: int) -> int:
        """Wire time for ``n_pixels`` with no call overhead."""
        return cycles_to_ps(n_pixels * self.bits_per_pixel_on_wire, self.bit_rate_hz)


@dataclass(frozen=True)
class FaultConfig:
    """Injected response-delay distribution; 'none' or 'uniform'.

    Draws are inclusive of hi_ps ("a maximum of" the configured bound).
    """

    kind: str = "none"
    lo_ps: int = 0
    hi_ps: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "uniform"):
            raise ValueError(f"kind must be 'none' or 'uniform', got {self.kind!r}")
        if not 0 <= self.lo_ps <= self.hi_ps:
            raise ValueError(f"need 0 <= lo <= hi, got ({self.lo_ps}, {self.hi_ps})")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @classmethod
    def uniform(cls, lo_ps: int, hi_ps: int, seed: int) -> "FaultConfig":
        return cls(kind="uniform", lo_ps=lo_ps, hi_ps=hi_ps, seed=seed)


@dataclass(frozen=True)
class TransferPlan:
    """Delivery schedule of one image: where each chunk lands and when."""

    request_at: int
    start_ps: int                                   # request + latency + fault
    chunk_arrivals: tuple[tuple[tuple[int, int], int], ...]
    total_duration_ps: int                          # last arrival - request

    def __post_init__(self) -> None:
        prev_end, prev_t = 0, -1
        for (a, b), t in self.chunk_arrivals:
            if a != prev_end or b <= a:
                raise ValueError("chunk ranges must partition the image in order")
            if t <= prev_t:
                raise ValueError("chunk arrivals must be strictly increasing")
            prev_end, prev_t = b, t

    @property
    def first_arrival_ps(self) -> int:
        return self.chunk_arrivals[0][1]

    @property
    def last_arrival_ps(self) -> int:
        return self.chunk_arrivals[-1][1]

    @property
    def n_pixels(self) -> int:
        return self.chunk_arrivals[-1][0][1]


def transfer_duration(link: LinkConfig, n_pixels: int) -> int:
    """Closed-form image transfer time: all call overheads plus wire time."""
    if n_pixels <= 0:
        raise ValueError(f"n_pixels must be positive, got {n_pixels}")
    return link.calls_per_image * link.per_call_overhead_ps + link.payload_time_ps(n_pixels)


def plan_transfer(
    link: LinkConfig,
    fault_delay_ps: int,
    request_at: int,
    n_pixels: int,
    load_convert_ps: int = 0,
) -> TransferPlan:
    """Schedule one image's chunk deliveries.

    The stream starts after the modeled provider latency plus any
    injected fault delay; call k completes (and its chunk lands) at
    start + k overheads + wire time of the first k chunks' bits, the
    wire time always converted from the cumulative bit count.
    """
    if n_pixels <= 0:
        raise ValueError(f"n_pixels must be positive, got {n_pixels}")
    if fault_delay_ps < 0 or load_convert_ps < 0:
        raise ValueError("delays must be non-negative")
    n_calls = -(-n_pixels // link.chunk_pixels)
    if n_calls != link.calls_per_image:
        raise ValueError(
            f"{n_pixels} px in chunks of {link.chunk_pixels} needs {n_calls} calls,"
            f" but the link is configured for {link.calls_per_image}"
        )
    start = request_at + load_convert_ps + fault_delay_ps
    arrivals = []
    sent = 0
    for k in range(1, n_calls + 1):
        end = min(sent + link.chunk_pixels, n_pixels)
        t = start + k * link.per_call_overhead_ps + link.payload_time_ps(end)
        arrivals.append(((sent, end), t))
        sent = end
    return TransferPlan(
        request_at=request_at,
        start_ps=start,
        chunk_arrivals=tuple(arrivals),
        total_duration_ps=arrivals[-1][1] - request_at,
    )


def sample_injected_delay(faults: FaultConfig, frame_index: int) -> int:
    """Deterministic per-frame delay draw; 'none' is always zero."""
    if faults.kind == "none":
        return 0
    if frame_index < 0:
        raise ValueError(f"frame_index must be non-negative, got {frame_index}")
    key = np.array([faults.seed, frame_index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return int(rng.integers(faults.lo_ps, faults.hi_ps, endpoint=True))
