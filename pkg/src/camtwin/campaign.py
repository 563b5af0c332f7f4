"""Event-driven capture campaigns over the full pipeline.

One campaign replays capture → fetch → transfer → readout → verify for a
list of requested capture times, entirely on the virtual clock.  Frames
are indexed by capture order (stream position): fault draws, classifier
lookups, and report rows all key on that index, so the same campaign
replays identically regardless of how the source maps times to images.

If a capture transaction is still busy when the next request falls due,
the request is deferred to the transaction's end rather than dropped:
the consumer polls a busy sensor, it does not queue interrupts.
"""

from __future__ import annotations

import bisect
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Protocol

import numpy as np

from camtwin.dataset import (
    EndOfStudy,
    FrameRecord,
    ProviderConfig,
    Study,
    frame_at,
    load_rgb,
    read_manifest_rows,
)
from camtwin.imaging import BayerImage, read_bay, resize_area, rgb_to_bayer
from camtwin.kernel import (
    CAPTURE_REQUEST,
    CHUNK_ARRIVAL,
    DEADLINE_CHECK,
    EventQueue,
    PS_PER_MS,
    PS_PER_SECOND,
    READOUT_COMPLETE,
    SimEvent,
)
from camtwin.link import FaultConfig, LinkConfig, plan_transfer, sample_injected_delay
from camtwin.power import PowerParams, estimate_power
from camtwin.twin import ActivityLog, SensorProfile, SensorTwin, TwinConfig
from camtwin.verify import (
    CampaignReport,
    DutConfig,
    FrameVerdict,
    classify,
    dut_receive,
    summarize,
    verify_frame,
)


class FrameSource(Protocol):
    """Maps (capture index, request time) to an injectable mosaic."""

    def resolve(
        self, k: int, t_ps: int, end_policy: str = "hold-last"
    ) -> tuple[FrameRecord, BayerImage]: ...


class StudySource:
    """Resolves frames from an on-disk study, converting through the
    back-end pipeline (resize to the profile, mosaic at its pattern)."""

    def __init__(self, study: Study, profile: SensorProfile = SensorProfile()) -> None:
        self.study = study
        self.profile = profile
        self._prepare = lru_cache(maxsize=16)(self._convert)

    def _convert(self, index: int) -> BayerImage:
        record = self.study.frames[index]
        rgb = load_rgb(self.study, record)
        resized = resize_area(rgb, self.profile.width, self.profile.height)
        return rgb_to_bayer(resized, pattern=self.profile.pattern, bit_depth=self.profile.bit_depth)

    def resolve(self, k, t_ps, end_policy="hold-last"):
        record = frame_at(self.study, t_ps, end_policy)
        return record, self._prepare(record.index)


class BayerCacheSource:
    """Resolves frames from a convert-produced mosaic cache.

    The cache index uses the manifest CSV schema with .bay filenames.
    """

    def __init__(self, records: tuple[FrameRecord, ...], root: str) -> None:
        if not records:
            raise ValueError("cache index has no frames")
        self.records = records
        self.root = root
        self._timestamps = [r.timestamp_ms for r in records]
        self._load = lru_cache(maxsize=16)(self._read)

    def _read(self, pos: int) -> BayerImage:
        return read_bay(os.path.join(self.root, self.records[pos].filename))

    def resolve(self, k, t_ps, end_policy="hold-last"):
        if end_policy == "raise-end" and t_ps > self._timestamps[-1] * PS_PER_MS:
            raise EndOfStudy(f"t={t_ps} ps past last cached frame")
        i = max(bisect.bisect_right(self._timestamps, t_ps // PS_PER_MS) - 1, 0)
        return self.records[i], self._load(i)


def load_cache_index(path: str | os.PathLike) -> BayerCacheSource:
    """Open a mosaic cache by its index CSV (manifest schema)."""
    path = os.fspath(path)
    records = read_manifest_rows(path)
    return BayerCacheSource(records, os.path.dirname(path) or ".")


class ArraySource:
    """Cycles over in-memory mosaics; for synthetic campaigns and tests."""

    def __init__(self, images: list[BayerImage], labels: list[str] | None = None) -> None:
        if not images:
            raise ValueError("need at least one image")
        self.images = images
        self.labels = labels or [""] * len(images)
        if len(self.labels) != len(images):
            raise ValueError("labels length must match image count")

    def resolve(self, k, t_ps, end_policy="hold-last"):
        i = k % len(self.images)
        record = FrameRecord(
            index=k, filename=f"array-{i:04d}", timestamp_ms=t_ps // PS_PER_MS,
            label=self.labels[i],
        )
        return record, self.images[i]


def times_at_fps(n_frames: int, fps: float, start_ps: int = 0) -> list[int]:
    """Nominal capture request times for a fixed frame rate."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    return [start_ps + round(k * PS_PER_SECOND / fps) for k in range(n_frames)]


def times_from_study(study: Study) -> list[int]:
    """One capture request at each recorded frame time."""
    return [rec.timestamp_ms * PS_PER_MS for rec in study.frames]


@dataclass
class CampaignResult:
    rows: list[dict]
    verdicts: list[FrameVerdict]
    report: CampaignReport
    activity: ActivityLog
    violations: list[str]

    @property
    def ok(self) -> bool:
        return self.report.corrupted == 0 and not self.violations


@dataclass
class _Pending:
    record: FrameRecord
    injected: BayerImage
    request_ps: int
    plan: object
    schedule: object
    first_seen_ps: int | None = None
    flag_at_deadline: bool | None = None


@dataclass
class _Loop:
    """Mutable state shared by the event handlers of one campaign."""

    source: FrameSource
    twin: SensorTwin
    link: LinkConfig
    faults: FaultConfig
    provider: ProviderConfig
    dut: DutConfig
    request_times: list[int]
    jitter_rng: np.random.Generator
    pending: dict[int, _Pending] = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    verdicts: list[FrameVerdict] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    def on_capture(self, q: EventQueue, ev: SimEvent) -> None:
        k = ev.payload
        t = ev.due
        record, injected = self.source.resolve(k, t, self.provider.end_policy)
        prof = self.twin.profile
        if (injected.width, injected.height) != (prof.width, prof.height):
            raise ValueError(
                f"frame {k}: source delivers {injected.width}x{injected.height},"
                f" profile needs {prof.width}x{prof.height}"
            )
        schedule = self.twin.begin_capture(t)
        latency = self.provider.latency_ps(self.jitter_rng)
        fault = sample_injected_delay(self.faults, k)
        plan = plan_transfer(self.link, fault, t, prof.n_pixels, load_convert_ps=latency)
        self.pending[k] = _Pending(
            record=record, injected=injected, request_ps=t, plan=plan, schedule=schedule
        )
        for (a, b), arrival in plan.chunk_arrivals:
            q.schedule(SimEvent(due=arrival, kind=CHUNK_ARRIVAL, payload=(k, a, b)))
        # Scheduled after the chunks: a chunk landing exactly on the
        # deadline is observed as arrived, matching flagged = latency > deadline.
        q.schedule(
            SimEvent(due=t + self.twin.config.deadline_ps, kind=DEADLINE_CHECK, payload=k)
        )
        finalize_at = max(schedule.frame_cycle_end, plan.last_arrival_ps)
        q.schedule(SimEvent(due=finalize_at, kind=READOUT_COMPLETE, payload=k))

    def on_chunk(self, q: EventQueue, ev: SimEvent) -> None:
        k, a, b = ev.payload
        pend = self.pending[k]
        self.twin.ingest_chunk(pend.injected.samples.ravel()[a:b], ev.due)
        if pend.first_seen_ps is None:
            pend.first_seen_ps = ev.due

    def on_deadline(self, q: EventQueue, ev: SimEvent) -> None:
        k = ev.payload
        pend = self.pending.get(k)
        if pend is not None:
            pend.flag_at_deadline = pend.first_seen_ps is None

    def on_finalize(self, q: EventQueue, ev: SimEvent) -> None:
        k = ev.payload
        pend = self.pending.pop(k)
        outcome = self.twin.finalize_frame(ev.due)
        if pend.flag_at_deadline is not None and pend.flag_at_deadline != outcome.flagged:
            self.violations.append(
                f"frame {k}: deadline-time flag {pend.flag_at_deadline}"
                f" disagrees with outcome {outcome.flagged}"
            )
        expected_latency = pend.plan.first_arrival_ps - pend.request_ps
        if outcome.first_chunk_latency_ps != expected_latency:
            self.violations.append(
                f"frame {k}: twin latency {outcome.first_chunk_latency_ps}"
                f" != planned {expected_latency}"
            )
        captured = dut_receive(
            self.dut, outcome.served, pend.schedule, twin_clock_hz=self.twin.config.clock_hz
        )
        record_k = replace(pend.record, index=k)
        predicted = classify(self.dut.classifier, captured.image, record_k)
        verdict = verify_frame(pend.injected, captured.image, outcome, record_k, predicted)
        self.verdicts.append(verdict)
        self.rows.append(
            {
                "frame_index": k,
                "request_ps": pend.request_ps,
                "first_chunk_ps": pend.plan.first_arrival_ps,
                "complete_ps": pend.plan.last_arrival_ps,
                "deadline_ps": self.twin.config.deadline_ps,
                "flagged": verdict.flagged,
                "underrun": verdict.underrun_count,
                "deviations": verdict.deviations,
                "label": verdict.label,
                "predicted": verdict.predicted,
            }
        )
        nxt = k + 1
        if nxt < len(self.request_times):
            due = max(self.request_times[nxt], ev.due)
            q.schedule(SimEvent(due=due, kind=CAPTURE_REQUEST, payload=nxt))


def run_campaign(
    source: FrameSource,
    request_times: list[int],
    twin_config: TwinConfig,
    link: LinkConfig = LinkConfig(),
    faults: FaultConfig = FaultConfig(),
    provider: ProviderConfig = ProviderConfig(),
    dut: DutConfig = DutConfig(),
    power_params: PowerParams | None = None,
    seed: int = 0,
) -> CampaignResult:
    """Run one campaign and aggregate its report.

    ``request_times`` are nominal capture requests in ps, strictly
    increasing; a request landing inside the previous transaction is
    deferred to that transaction's end.  ``seed`` drives provider jitter;
    fault delays use the seed carried by ``faults``.
    """
    if not request_times:
        raise ValueError("request_times must be non-empty")
    if any(t < 0 for t in request_times):
        raise ValueError("request times must be non-negative")
    if any(b <= a for a, b in zip(request_times, request_times[1:])):
        raise ValueError("request times must be strictly increasing")
    n_pixels = twin_config.profile.n_pixels
    calls = -(-n_pixels // link.chunk_pixels)
    if calls != link.calls_per_image:
        raise ValueError(
            f"link is configured for {link.calls_per_image} calls per image but"
            f" {n_pixels} px in chunks of {link.chunk_pixels} needs {calls}"
        )

    twin = SensorTwin(twin_config)
    loop = _Loop(
        source=source,
        twin=twin,
        link=link,
        faults=faults,
        provider=provider,
        dut=dut,
        request_times=list(request_times),
        jitter_rng=np.random.default_rng(seed),
    )
    q = EventQueue()
    q.on(CAPTURE_REQUEST, loop.on_capture)
    q.on(CHUNK_ARRIVAL, loop.on_chunk)
    q.on(DEADLINE_CHECK, loop.on_deadline)
    q.on(READOUT_COMPLETE, loop.on_finalize)
    q.schedule(SimEvent(due=request_times[0], kind=CAPTURE_REQUEST, payload=0))
    q.drain()

    activity = twin.snapshot_log(q.now)
    if activity.idle_ps + activity.active_ps != q.now:
        loop.violations.append(
            f"activity ledger {activity.idle_ps}+{activity.active_ps} != span {q.now}"
        )
    power = estimate_power(activity, power_params) if power_params else None
    report = summarize(loop.verdicts, power=power)
    return CampaignResult(
        rows=loop.rows,
        verdicts=loop.verdicts,
        report=report,
        activity=activity,
        violations=loop.violations,
    )
