"""Campaign loop: scheduling, drift, faults, and report aggregation."""

import numpy as np
import pytest

import camtwin.dataset as dataset
from camtwin.campaign import (
    ArraySource,
    BayerCacheSource,
    StudySource,
    run_campaign,
    times_at_fps,
    times_from_study,
)
from camtwin.dataset import EndOfStudy, FrameRecord, ProviderConfig, study_from_images
from camtwin.imaging import BayerImage, write_bay
from camtwin.kernel import PS_PER_MS, PS_PER_SECOND
from camtwin.link import FaultConfig, LinkConfig
from camtwin.power import PowerParams, duty_cycle
from camtwin.twin import SensorProfile, TwinConfig
from camtwin.verify import (
    FRAME_LOG_KEYS,
    DutConfig,
    TableClassifier,
    read_frame_log,
    write_frame_log,
)

NOMINAL = TwinConfig(clock_hz=75_000_000)
LOWPOWER = TwinConfig(clock_hz=5_000_000, deadline_ps=120 * PS_PER_MS)
TINY = SensorProfile(8, 8, 10, 100, 2_000, 10)
TINY_LINK = LinkConfig(per_call_overhead_ps=1_000, chunk_pixels=32)
FAST_PROVIDER = ProviderConfig(load_time_ps=1_000, convert_time_ps=0)

FRAME_CYCLE_75 = 17_318_400_000
FRAME_CYCLE_5 = 259_776_000_000


def mosaic(seed: int, profile: SensorProfile = SensorProfile()) -> BayerImage:
    rng = np.random.default_rng(seed)
    samples = rng.integers(
        1, 1 << profile.bit_depth, size=(profile.height, profile.width), dtype=np.uint16
    )
    return BayerImage(samples, pattern=profile.pattern, bit_depth=profile.bit_depth)


def test_times_at_fps_frozen():
    assert times_at_fps(4, 2.0) == [0, 500_000_000_000, 1_000_000_000_000, 1_500_000_000_000]
    assert times_at_fps(2, 30.0, start_ps=7) == [7, 7 + 33_333_333_333]


def test_times_at_fps_rejects_bad_args():
    with pytest.raises(ValueError):
        times_at_fps(0, 1.0)
    with pytest.raises(ValueError):
        times_at_fps(3, 0.0)


def test_clean_run_frozen_timing():
    res = run_campaign(ArraySource([mosaic(1)]), times_at_fps(10, 20.0), NOMINAL)
    assert len(res.rows) == 10
    assert res.ok and res.violations == []
    assert res.report.flagged == 0 and res.report.corrupted == 0
    for k, row in enumerate(res.rows):
        assert row["frame_index"] == k
        # 20 fps leaves headroom beyond the 2-frame-cycle transaction, so
        # requests land on their nominal slots.
        assert row["request_ps"] == k * 50_000_000_000
        assert row["first_chunk_ps"] - row["request_ps"] == 8_870_000_000
        assert row["complete_ps"] - row["request_ps"] == 16_430_000_000
        assert row["deadline_ps"] == FRAME_CYCLE_75
        assert not row["flagged"] and row["underrun"] == 0 and row["deviations"] == 0


def test_requests_defer_when_transaction_overruns_period():
    # 30 fps: period 33.33 ms < the 34.64 ms transaction, so every request
    # slips to the previous finalize and the stream runs at the sensor rate.
    res = run_campaign(ArraySource([mosaic(2)]), times_at_fps(6, 30.0), NOMINAL)
    assert [r["request_ps"] for r in res.rows] == [k * 2 * FRAME_CYCLE_75 for k in range(6)]
    assert res.ok


def test_first_frame_underrun_is_against_zeros():
    # A huge delay on frame 0 staleness-fills from the initial buffer, which
    # is all zeros; the injected image is nowhere zero, so every stale pixel
    # deviates.  350 ms lands well past the 259.8 ms usable-readout start.
    faults = FaultConfig.uniform(350 * PS_PER_MS, 350 * PS_PER_MS, seed=1)
    res = run_campaign(ArraySource([mosaic(3)]), [0], LOWPOWER, faults=faults)
    (v,) = res.verdicts
    assert v.flagged and v.underrun_count > 0
    assert v.deviations == v.underrun_count


def test_fault_campaign_flags_and_corrupts():
    images = [mosaic(10), mosaic(11)]
    faults = FaultConfig.uniform(300 * PS_PER_MS, 400 * PS_PER_MS, seed=7)
    res = run_campaign(ArraySource(images), times_at_fps(8, 1.0), LOWPOWER, faults=faults)
    assert res.report.flagged == 8          # every draw exceeds the 120 ms deadline
    assert res.report.corrupted == 8        # alternating content, so stale pixels deviate
    assert not res.ok and res.violations == []
    assert res.report.latency_min_ps >= 308_870_000_000
    assert res.report.latency_min_ps <= res.report.latency_mean_ps <= res.report.latency_max_ps
    for v in res.verdicts:
        assert v.deviations <= v.underrun_count


def test_fault_campaign_is_deterministic():
    images = [mosaic(10), mosaic(11)]
    provider = ProviderConfig(jitter_ps=2_000_000)

    def go():
        return run_campaign(
            ArraySource(images),
            times_at_fps(5, 1.0),
            LOWPOWER,
            faults=FaultConfig.uniform(150 * PS_PER_MS, 250 * PS_PER_MS, seed=7),
            provider=provider,
            seed=5,
        )

    assert go().rows == go().rows


def test_jitter_seed_changes_timing():
    provider = ProviderConfig(jitter_ps=2_000_000)
    args = (ArraySource([mosaic(4)]), times_at_fps(10, 1.0), LOWPOWER)
    a = run_campaign(*args, provider=provider, seed=5)
    b = run_campaign(*args, provider=provider, seed=6)
    assert a.rows != b.rows


def test_deadline_tie_is_not_flagged():
    # First chunk lands exactly on the deadline: 1.31 ms provider + 5 ms
    # overhead + 2.56 ms payload + 8.4484 ms fault = 17.3184 ms.
    tie_fault = FRAME_CYCLE_75 - 8_870_000_000
    res = run_campaign(
        ArraySource([mosaic(5)]),
        [0],
        NOMINAL,
        faults=FaultConfig.uniform(tie_fault, tie_fault, seed=3),
    )
    assert res.rows[0]["first_chunk_ps"] == FRAME_CYCLE_75
    assert not res.rows[0]["flagged"]
    assert res.violations == []

    res = run_campaign(
        ArraySource([mosaic(5)]),
        [0],
        NOMINAL,
        faults=FaultConfig.uniform(tie_fault + 1, tie_fault + 1, seed=3),
    )
    assert res.rows[0]["flagged"]
    assert res.violations == []


@pytest.mark.parametrize(
    "lanes,duration",
    [(1, 30_480_000_000), (2, 20_240_000_000), (4, 15_120_000_000)],
)
def test_transfer_duration_by_lane_count(lanes, duration):
    link = LinkConfig(lanes=lanes)
    res = run_campaign(ArraySource([mosaic(6)]), [0], NOMINAL, link=link)
    row = res.rows[0]
    assert row["complete_ps"] - row["request_ps"] - 1_310_000_000 == duration


def test_rows_round_trip_through_frame_log(tmp_path):
    res = run_campaign(ArraySource([mosaic(7)]), times_at_fps(3, 10.0), NOMINAL)
    assert all(tuple(row) == FRAME_LOG_KEYS for row in res.rows)
    path = tmp_path / "frames.jsonl"
    write_frame_log(res.rows, path)
    assert read_frame_log(path) == res.rows


def test_classifier_accuracy_in_report():
    images = [mosaic(8), mosaic(9)]
    table = TableClassifier({0: "cat", 1: "dog", 2: "cat", 3: "cat"})
    res = run_campaign(
        ArraySource(images, labels=["cat", "dog"]),
        times_at_fps(4, 20.0),
        NOMINAL,
        dut=DutConfig(classifier=table),
    )
    assert [v.label_match for v in res.verdicts] == [True, True, True, False]
    assert res.report.classifier_accuracy == 0.75
    assert [r["predicted"] for r in res.rows] == ["cat", "dog", "cat", "cat"]


def test_power_ledger_exact_and_near_duty_cycle():
    res = run_campaign(
        ArraySource([mosaic(12)]),
        times_at_fps(8, 1.0),
        LOWPOWER,
        power_params=PowerParams(),
    )
    log = res.activity
    # Fault-free transactions are active for exactly two frame cycles each.
    assert log.active_ps == 8 * 2 * FRAME_CYCLE_5
    assert log.idle_ps + log.active_ps == 7 * PS_PER_SECOND + 2 * FRAME_CYCLE_5
    assert res.report.power is not None
    frac = res.report.power.active_fraction
    assert abs(frac - duty_cycle(1.0, 5_000_000)) < 0.05


def test_study_source_end_to_end(tmp_path):
    from PIL import Image

    paths = []
    for i, shade in enumerate((40, 200)):
        arr = np.full((16, 16, 3), shade, dtype=np.uint8)
        p = tmp_path / f"img{i}.png"
        Image.fromarray(arr).save(p)
        paths.append(str(p))
    study = study_from_images(paths, study_id="s1", labels=["low", "high"])
    cfg = TwinConfig(clock_hz=75_000_000, profile=TINY)
    res = run_campaign(
        StudySource(study, TINY),
        times_from_study(study),
        cfg,
        link=TINY_LINK,
        provider=FAST_PROVIDER,
    )
    assert res.ok
    assert [r["label"] for r in res.rows] == ["low", "high"]
    assert [r["deviations"] for r in res.rows] == [0, 0]


def test_study_source_hold_last_and_raise_end(tmp_path):
    from PIL import Image

    p = tmp_path / "only.png"
    Image.fromarray(np.full((8, 8, 3), 99, dtype=np.uint8)).save(p)
    study = study_from_images([str(p)], study_id="s2")
    cfg = TwinConfig(clock_hz=75_000_000, profile=TINY)
    src = StudySource(study, TINY)
    # hold-last keeps serving past the recorded end
    res = run_campaign(
        src, [0, PS_PER_SECOND], cfg, link=TINY_LINK, provider=FAST_PROVIDER
    )
    assert len(res.rows) == 2 and res.ok
    with pytest.raises(EndOfStudy):
        run_campaign(
            src,
            [0, PS_PER_SECOND],
            cfg,
            link=TINY_LINK,
            provider=ProviderConfig(load_time_ps=1_000, convert_time_ps=0, end_policy="raise-end"),
        )


def test_bayer_cache_source(tmp_path):
    imgs = [mosaic(20, TINY), mosaic(21, TINY)]
    records = []
    for i, img in enumerate(imgs):
        name = f"f{i}.bay"
        write_bay(img, tmp_path / name)
        records.append(FrameRecord(index=i, filename=name, timestamp_ms=1000 * i, label=""))
    src = BayerCacheSource(tuple(records), str(tmp_path))
    rec, img = src.resolve(0, 0)
    assert rec.index == 0 and np.array_equal(img.samples, imgs[0].samples)
    rec, img = src.resolve(5, 1_500 * PS_PER_MS)   # hold-last picks frame 1
    assert rec.index == 1
    with pytest.raises(EndOfStudy):
        src.resolve(0, 2_000 * PS_PER_MS, end_policy="raise-end")
    cfg = TwinConfig(clock_hz=75_000_000, profile=TINY)
    res = run_campaign(
        src, [0, PS_PER_SECOND], cfg, link=TINY_LINK, provider=FAST_PROVIDER
    )
    assert res.ok and [r["deviations"] for r in res.rows] == [0, 0]


def test_array_source_validation():
    with pytest.raises(ValueError):
        ArraySource([])
    with pytest.raises(ValueError):
        ArraySource([mosaic(1)], labels=["a", "b"])


def test_run_rejects_bad_request_times():
    src = ArraySource([mosaic(1)])
    with pytest.raises(ValueError):
        run_campaign(src, [], NOMINAL)
    with pytest.raises(ValueError):
        run_campaign(src, [100, 100], NOMINAL)
    with pytest.raises(ValueError):
        run_campaign(src, [-5, 100], NOMINAL)


def test_run_rejects_link_profile_mismatch():
    cfg = TwinConfig(clock_hz=75_000_000, profile=TINY)
    with pytest.raises(ValueError, match="calls per image"):
        run_campaign(ArraySource([mosaic(1, TINY)]), [0], cfg)


def test_run_rejects_wrong_source_resolution():
    with pytest.raises(ValueError, match="source delivers"):
        run_campaign(ArraySource([mosaic(1, TINY)]), [0], NOMINAL)
