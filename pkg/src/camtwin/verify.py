"""Reference device-under-test, classifier hooks, and the back-end verifier.

The reference DUT is a pass-through ISP: it forwards the served mosaic
unchanged and only adds a clock-domain crossing on the completion time.
Verification happens in the Bayer domain, comparing what the DUT captured
against what was injected, and folds in the twin's flag and underrun
accounting plus an optional label prediction.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol

from camtwin._atomicio import atomic_text
from camtwin.dataset import FrameRecord
from camtwin.imaging import BayerImage, pixel_diff
from camtwin.kernel import PS_PER_SECOND, cycles_to_ps
from camtwin.power import PowerEstimate
from camtwin.twin import CaptureSchedule, FrameOutcome

TABLE_HEADER = ["frame_index", "predicted_label"]

# Per-frame report row keys, in the order rows are emitted.
FRAME_LOG_KEYS = (
    "frame_index",
    "request_ps",
    "first_chunk_ps",
    "complete_ps",
    "deadline_ps",
    "flagged",
    "underrun",
    "deviations",
    "label",
    "predicted",
)


class TableMiss(KeyError):
    """The classifier table has no row for a frame index."""


class Empty(ValueError):
    """No verdicts to aggregate."""


class Classifier(Protocol):
    def predict(self, img: BayerImage, record: FrameRecord) -> str: ...


class OracleClassifier:
    """Always right: predicts the recorded ground-truth label."""

    def predict(self, img: BayerImage, record: FrameRecord) -> str:
        return record.label


@dataclass(frozen=True)
class ConstantClassifier:
    label: str

    def predict(self, img: BayerImage, record: FrameRecord) -> str:
        return self.label


@dataclass(frozen=True)
class TableClassifier:
    """Replays externally produced predictions keyed by frame index."""

    table: Mapping[int, str]

    def predict(self, img: BayerImage, record: FrameRecord) -> str:
        try:
            return self.table[record.index]
        except KeyError:
            raise TableMiss(f"no prediction for frame {record.index}") from None


def load_table(path: str | os.PathLike) -> TableClassifier:
    """Read a prediction table CSV with header frame_index,predicted_label."""
    table: dict[int, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != TABLE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TABLE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                idx = int(row[0])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if idx in table:
                raise ValueError(f"{path}:{lineno}: duplicate frame_index {idx}")
            table[idx] = row[1]
    return TableClassifier(table=table)


def classify(hook: Classifier | None, img: BayerImage, record: FrameRecord) -> str | None:
    return None if hook is None else hook.predict(img, record)


@dataclass(frozen=True)
class DutConfig:
    """Consumer-side configuration.

    readout_clock_hz of None means "same clock as the twin", resolved at
    receive time.
    """

    readout_clock_hz: int | None = None
    classifier: Classifier | None = None

    def __post_init__(self) -> None:
        if self.readout_clock_hz is not None and self.readout_clock_hz <= 0:
            raise ValueError(f"readout_clock_hz must be positive, got {self.readout_clock_hz}")


@dataclass(frozen=True)
class DutCapture:
    image: BayerImage
    completed_at_ps: int


def dut_receive(
    dut: DutConfig,
    served: BayerImage,
    schedule: CaptureSchedule,
    twin_clock_hz: int | None = None,
) -> DutCapture:
    """Forward the served image; completion snaps to the DUT clock.

    The capture completes on the first DUT clock edge at or after the
    readout window ends, which is all a clock-domain crossing adds for a
    pass-through part.
    """
    hz = dut.readout_clock_hz or twin_clock_hz
    if hz is None:
        raise ValueError("no DUT clock configured and no twin clock supplied")
    end = schedule.usable_readout_end
    edges = -(-end * hz // PS_PER_SECOND)  # first edge index at or after end
    return DutCapture(image=served, completed_at_ps=max(cycles_to_ps(edges, hz), end))


@dataclass(frozen=True)
class FrameVerdict:
    frame_index: int
    flagged: bool
    underrun_count: int
    deviations: int
    label: str
    predicted: str | None
    label_match: bool | None
    first_chunk_latency_ps: int | None

    def __post_init__(self) -> None:
        if self.deviations > self.underrun_count:
            raise ValueError(
                f"deviations {self.deviations} exceed underrun {self.underrun_count}"
            )
        if (self.predicted is None) != (self.label_match is None):
            raise ValueError("label_match must be defined exactly when predicted is")


def verify_frame(
    injected: BayerImage,
    captured: BayerImage,
    outcome: FrameOutcome,
    record: FrameRecord,
    predicted: str | None,
) -> FrameVerdict:
    """Combine the pixel comparison with the twin's accounting."""
    report = pixel_diff(injected, captured)
    return FrameVerdict(
        frame_index=record.index,
        flagged=outcome.flagged,
        underrun_count=outcome.underrun_count,
        deviations=report.deviations,
        label=record.label,
        predicted=predicted,
        label_match=None if predicted is None else predicted == record.label,
        first_chunk_latency_ps=outcome.first_chunk_latency_ps,
    )


@dataclass(frozen=True)
class CampaignReport:
    frames: int
    flagged: int
    corrupted: int
    total_deviations: int
    classifier_accuracy: float | None
    latency_min_ps: int | None
    latency_mean_ps: float | None
    latency_max_ps: int | None
    power: PowerEstimate | None = None


def summarize(verdicts: Iterable[FrameVerdict], power: PowerEstimate | None = None) -> CampaignReport:
    """Aggregate per-frame verdicts into one campaign report."""
    verdicts = list(verdicts)
    if not verdicts:
        raise Empty("no verdicts to summarize")
    predicted = [v for v in verdicts if v.predicted is not None]
    accuracy = (
        sum(1 for v in predicted if v.label_match) / len(predicted) if predicted else None
    )
    latencies = [
        v.first_chunk_latency_ps for v in verdicts if v.first_chunk_latency_ps is not None
    ]
    return CampaignReport(
        frames=len(verdicts),
        flagged=sum(1 for v in verdicts if v.flagged),
        corrupted=sum(1 for v in verdicts if v.deviations > 0),
        total_deviations=sum(v.deviations for v in verdicts),
        classifier_accuracy=accuracy,
        latency_min_ps=min(latencies) if latencies else None,
        latency_mean_ps=math.fsum(latencies) / len(latencies) if latencies else None,
        latency_max_ps=max(latencies) if latencies else None,
        power=power,
    )


def summary_dict(report: CampaignReport) -> dict:
    d = {
        "frames": report.frames,
        "flagged": report.flagged,
        "corrupted": report.corrupted,
        "total_deviations": report.total_deviations,
        "classifier_accuracy": report.classifier_accuracy,
        "latency_min_ps": report.latency_min_ps,
        "latency_mean_ps": report.latency_mean_ps,
        "latency_max_ps": report.latency_max_ps,
        "power": None,
    }
    if report.power is not None:
        d["power"] = {
            "average_mw": report.power.average_mw,
            "active_fraction": report.power.active_fraction,
        }
    return d


def write_summary(
    report: CampaignReport, path: str | os.PathLike, extra: Mapping | None = None
) -> None:
    """Write the campaign summary JSON (atomic).

    ``extra`` adds run metadata (seed, violations); its keys must not
    collide with the report's own.
    """
    d = summary_dict(report)
    if extra:
        overlap = set(extra) & set(d)
        if overlap:
            raise ValueError(f"extra keys shadow report fields: {sorted(overlap)}")
        d.update(extra)
    atomic_text(path, json.dumps(d, indent=2, sort_keys=True) + "\n")


def write_frame_log(rows: Iterable[Mapping], path: str | os.PathLike) -> None:
    """Write the per-frame JSON Lines report (atomic).

    Every row must carry exactly the FRAME_LOG_KEYS.
    """
    buf = io.StringIO()
    for i, row in enumerate(rows):
        if set(row) != set(FRAME_LOG_KEYS):
            missing = set(FRAME_LOG_KEYS) - set(row)
            extra = set(row) - set(FRAME_LOG_KEYS)
            raise ValueError(f"row {i}: missing keys {sorted(missing)}, extra {sorted(extra)}")
        buf.write(json.dumps({k: row[k] for k in FRAME_LOG_KEYS}, sort_keys=True))
        buf.write("\n")
    atomic_text(path, buf.getvalue())


def read_frame_log(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
