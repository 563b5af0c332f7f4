"""Pre-recorded study ingest and time-to-frame resolution.

A study is a chronologically ordered, labeled image sequence on disk,
described by a CSV manifest.  The provider never performs real I/O inside
the simulation: decode and convert latencies are fixed modeled constants,
so a campaign's timing is independent of the host filesystem.
"""

from __future__ import annotations

import bisect
import csv
import io
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from PIL import Image, UnidentifiedImageError

from camtwin._atomicio import atomic_text
from camtwin.imaging import RgbImage
from camtwin.kernel import PS_PER_MS

MANIFEST_HEADER = ["index", "filename", "timestamp_ms", "label"]

END_POLICIES = ("hold-last", "raise-end")


class ParseError(ValueError):
    """Manifest row or referenced image failed validation."""


class OrderError(ValueError):
    """Timestamps are not strictly increasing."""


class MissingFile(FileNotFoundError):
    """A manifest row references a file that does not exist."""


class EndOfStudy(LookupError):
    """Simulation time ran past the last frame under raise-end policy."""


@dataclass(frozen=True)
class FrameRecord:
    index: int
    filename: str
    timestamp_ms: int
    label: str


@dataclass(frozen=True, eq=False)
class Study:
    """Immutable frame sequence; filenames resolve against ``root``."""

    id: str
    frames: tuple[FrameRecord, ...]
    source_resolution: tuple[int, int]
    root: str

    @cached_property
    def _timestamps_ms(self) -> list[int]:
        return [f.timestamp_ms for f in self.frames]

    def __len__(self) -> int:
        return len(self.frames)

    def path_of(self, record: FrameRecord) -> str:
        return os.path.join(self.root, record.filename)


@dataclass(frozen=True)
class ProviderConfig:
    """Modeled frame-provider latencies, in picoseconds.

    Defaults are the measured decode (1.22 ms) and convert (0.09 ms)
    costs of the reference back-end.  ``jitter_ps`` adds a uniform
    0..jitter_ps term per fetch when the caller supplies a generator.
    """

    load_time_ps: int = 1_220_000_000
    convert_time_ps: int = 90_000_000
    end_policy: str = "hold-last"
    jitter_ps: int = 0

    def __post_init__(self) -> None:
        if self.load_time_ps < 0 or self.convert_time_ps < 0 or self.jitter_ps < 0:
            raise ValueError("latencies must be non-negative")
        if self.end_policy not in END_POLICIES:
            raise ValueError(f"end_policy must be one of {END_POLICIES}")

    def latency_ps(self, rng: np.random.Generator | None = None) -> int:
        base = self.load_time_ps + self.convert_time_ps
        if self.jitter_ps and rng is not None:
            base += int(rng.integers(0, self.jitter_ps, endpoint=True))
        return base


def _validate_images(root: str, frames: list[FrameRecord]) -> tuple[int, int]:
    # Every referenced file must exist and decode; repeated filenames are
    # checked once.  All frames must share one resolution.
    sizes: dict[str, tuple[int, int]] = {}
    resolution: tuple[int, int] | None = None
    for rec in frames:
        if rec.filename not in sizes:
            path = os.path.join(root, rec.filename)
            if not os.path.isfile(path):
                raise MissingFile(f"frame {rec.index}: {path}")
            try:
                with Image.open(path) as im:
                    size = im.size
                    im.verify()
            except (UnidentifiedImageError, OSError, SyntaxError) as exc:
                raise ParseError(f"frame {rec.index}: {path} does not decode: {exc}") from exc
            sizes[rec.filename] = size
        size = sizes[rec.filename]
        if resolution is None:
            resolution = size
        elif size != resolution:
            raise ParseError(
                f"frame {rec.index}: resolution {size} differs from study {resolution}"
            )
    assert resolution is not None
    return resolution


def _check_order(frames: list[FrameRecord]) -> None:
    for i, rec in enumerate(frames):
        if rec.index != i:
            raise ParseError(f"row {i}: expected contiguous index {i}, got {rec.index}")
        if i and rec.timestamp_ms <= frames[i - 1].timestamp_ms:
            raise OrderError(
                f"row {i}: timestamp {rec.timestamp_ms} not after {frames[i - 1].timestamp_ms}"
            )


def read_manifest_rows(path: str | os.PathLike) -> tuple[FrameRecord, ...]:
    """Parse and order-check manifest rows without touching the images.

    Raises ParseError for malformed rows, OrderError for non-increasing
    timestamps.  Callers that need the files verified use load_manifest.
    """
    path = os.fspath(path)
    frames: list[FrameRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != MANIFEST_HEADER:
            raise ParseError(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            idx_s, filename, ts_s, label = row
            try:
                idx, ts = int(idx_s), int(ts_s)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if not filename:
                raise ParseError(f"{path}:{lineno}: empty filename")
            frames.append(FrameRecord(index=idx, filename=filename, timestamp_ms=ts, label=label))
    if not frames:
        raise ParseError(f"{path}: manifest has no frames")
    _check_order(frames)
    return tuple(frames)


def load_manifest(path: str | os.PathLike) -> Study:
    """Load and fully validate a study manifest.

    Raises ParseError for malformed rows or undecodable images,
    OrderError for non-increasing timestamps, MissingFile for absent
    frames.
    """
    path = os.fspath(path)
    root = os.path.dirname(path) or "."
    frames = read_manifest_rows(path)
    resolution = _validate_images(root, list(frames))
    study_id = os.path.splitext(os.path.basename(path))[0]
    return Study(id=study_id, frames=frames, source_resolution=resolution, root=root)


def write_manifest(study: Study, path: str | os.PathLike) -> None:
    """Write the manifest CSV (atomic: temp file + rename)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(MANIFEST_HEADER)
    for rec in study.frames:
        writer.writerow([rec.index, rec.filename, rec.timestamp_ms, rec.label])
    atomic_text(path, buf.getvalue())


def study_from_images(
    image_paths: list[str],
    *,
    study_id: str,
    source_rate_fps: float = 1.0,
    labels: list[str] | None = None,
) -> Study:
    """Build a study from ordered image files that carry no timing.

    Synthetic timestamps are assigned at a uniform ``source_rate_fps``
    (default one frame per second).
    """
    if not image_paths:
        raise ParseError("no images given")
    if source_rate_fps <= 0:
        raise ValueError(f"source_rate_fps must be positive, got {source_rate_fps}")
    if labels is not None and len(labels) != len(image_paths):
        raise ValueError("labels length must match image count")
    root = os.path.dirname(os.fspath(image_paths[0])) or "."
    frames = []
    for k, p in enumerate(image_paths):
        ts = round(k * 1000 / source_rate_fps)
        frames.append(
            FrameRecord(
                index=k,
                filename=os.path.relpath(os.fspath(p), root),
                timestamp_ms=ts,
                label=labels[k] if labels else "",
            )
        )
    _check_order(frames)
    resolution = _validate_images(root, frames)
    return Study(id=study_id, frames=tuple(frames), source_resolution=resolution, root=root)


def frame_at(study: Study, t_ps: int, end_policy: str = "hold-last") -> FrameRecord:
    """Resolve the frame current at simulation time ``t_ps``.

    Floor semantics: the record with the largest timestamp at or before
    ``t_ps``; times before the first frame resolve to index 0.  With
    raise-end policy, time strictly past the last timestamp raises
    EndOfStudy instead of holding the final frame.
    """
    if end_policy not in END_POLICIES:
        raise ValueError(f"end_policy must be one of {END_POLICIES}")
    frames = study.frames
    last = frames[-1]
    if t_ps > last.timestamp_ms * PS_PER_MS and end_policy == "raise-end":
        raise EndOfStudy(f"t={t_ps} ps is past the last frame at {last.timestamp_ms} ms")
    k = bisect.bisect_right(study._timestamps_ms, t_ps // PS_PER_MS) - 1
    return frames[max(k, 0)]


def load_rgb(study: Study, record: FrameRecord) -> RgbImage:
    """Decode one frame's pixels to an 8-bit RGB image."""
    with Image.open(study.path_of(record)) as im:
        return RgbImage(np.asarray(im.convert("RGB"), dtype=np.uint8))
