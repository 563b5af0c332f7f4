"""Inject response delays and watch deadlines flag stale frames.

A 5 MHz low-power configuration gives the sensor a 259.8 ms frame cycle;
the consumer enforces a tighter 120 ms first-chunk deadline.  Uniform
random delays up to 2.5 s push some transfers past the deadline and some
past the readout itself, which serves stale buffer content.
"""

import numpy as np

from camtwin import (
    ArraySource,
    BayerImage,
    FaultConfig,
    TwinConfig,
    run_campaign,
    times_at_fps,
)

PS_PER_MS = 10**9


def mosaic(seed: int) -> BayerImage:
    rng = np.random.default_rng(seed)
    return BayerImage(
        rng.integers(1, 1024, size=(320, 320), dtype=np.uint16),
        pattern="BGGR",
        bit_depth=10,
    )


def main() -> None:
    cfg = TwinConfig(clock_hz=5_000_000, deadline_ps=120 * PS_PER_MS)
    res = run_campaign(
        ArraySource([mosaic(1), mosaic(2)]),       # alternating content
        times_at_fps(200, 1.0),
        cfg,
        faults=FaultConfig.uniform(0, 2_500_000_000_000, seed=7),
    )

    r = res.report
    print(f"frames:    {r.frames}")
    print(f"flagged:   {r.flagged}   (first chunk later than 120 ms)")
    print(f"corrupted: {r.corrupted}   (served pixels differ from injected)")
    print(f"latency:   {r.latency_min_ps / PS_PER_MS:.1f} .. "
          f"{r.latency_max_ps / PS_PER_MS:.1f} ms, "
          f"mean {r.latency_mean_ps / PS_PER_MS:.1f} ms\n")

    print(f"{'frame':>5} {'latency':>10} {'flagged':>7} {'underrun':>8} {'deviations':>10}")
    for row in res.rows[:12]:
        latency = (row["first_chunk_ps"] - row["request_ps"]) / PS_PER_MS
        print(f"{row['frame_index']:>5} {latency:>8.1f}ms {str(row['flagged']):>7}"
              f" {row['underrun']:>8} {row['deviations']:>10}")

    # the safety net: stale content never passes silently
    assert all(v.flagged for v in res.verdicts if v.deviations > 0)
    print("\nevery corrupted frame was flagged; deadline checks catch the damage")


if __name__ == "__main__":
    main()
