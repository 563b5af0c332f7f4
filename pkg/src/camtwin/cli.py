"""Command-line front end: convert, run, sweep, report.

One JSON config document describes a whole run; every field has a
default, and a preset picks the 75 MHz or 5 MHz base setup.  All times
in the config are integer picoseconds, matching the library units, so a
config round-trips without rounding.  Precedence: defaults, then
preset, then config file, then command-line flags.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from camtwin._atomicio import atomic_text
from camtwin.campaign import (
    StudySource,
    load_cache_index,
    run_campaign,
    times_at_fps,
)
from camtwin.dataset import (
    EndOfStudy,
    MissingFile,
    OrderError,
    ParseError,
    ProviderConfig,
    load_manifest,
    read_manifest_rows,
)
from camtwin.imaging import RgbImage, rgb_to_bayer, resize_area, write_bay
from camtwin.kernel import PS_PER_MS
from camtwin.link import FaultConfig, LinkConfig
from camtwin.power import PowerParams, power_sweep, write_sweep_csv
from camtwin.twin import SensorProfile, TwinConfig
from camtwin.verify import (
    ConstantClassifier,
    DutConfig,
    OracleClassifier,
    TableClassifier,
    load_table,
    read_frame_log,
    write_frame_log,
    write_summary,
)


class ConfigError(ValueError):
    """Config document is malformed or internally inconsistent."""


class MissingRun(FileNotFoundError):
    """Report target lacks frames.jsonl or summary.json."""


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out_dir": "runs/out",
    "manifest": None,
    "cache_index": None,
    "schedule": {"fps": 1.0, "frames": 100, "start_ps": 0},
    "twin": {
        "clock_hz": 75_000_000,
        "deadline_ps": None,
        "discard_first_frame": True,
        "exposure_offset_cycles": 0,
        "profile": {
            "width": 320,
            "height": 320,
            "bit_depth": 10,
            "idle_to_tx_cycles": 11_520,
            "frame_cycle_cycles": 1_298_880,
            "cycles_per_pixel": 10,
            "pattern": "BGGR",
        },
    },
    "link": {
        "lanes": 4,
        "link_clock_hz": 40_000_000,
        "per_call_overhead_ps": 5_000_000_000,
        "calls_per_image": 2,
        "bits_per_pixel_on_wire": 8,
        "chunk_pixels": 51_200,
    },
    "faults": {"kind": "none", "lo_ps": 0, "hi_ps": 0},
    "provider": {
        "load_time_ps": 1_220_000_000,
        "convert_time_ps": 90_000_000,
        "end_policy": "hold-last",
        "jitter_ps": 0,
    },
    "dut": {"readout_clock_hz": None, "classifier": None},
    "power": None,
    "sweep": {"fps_start": 0.1, "fps_stop": 4.0, "fps_step": 0.1, "fps_values": None},
}

PRESETS: dict[str, dict] = {
    "nominal-75mhz": {},
    "lowpower-5mhz": {"twin": {"clock_hz": 5_000_000, "deadline_ps": 120_000_000_000}},
}

# Sections whose keys are closed; "schedule" additionally allows times_ps,
# "power" and "dut.classifier" may be null.
_ALLOWED_KEYS = {
    "": set(DEFAULT_CONFIG),
    "schedule": {"fps", "frames", "start_ps", "times_ps"},
    "twin": set(DEFAULT_CONFIG["twin"]),
    "twin.profile": set(DEFAULT_CONFIG["twin"]["profile"]),
    "link": set(DEFAULT_CONFIG["link"]),
    "faults": set(DEFAULT_CONFIG["faults"]),
    "provider": set(DEFAULT_CONFIG["provider"]),
    "dut": set(DEFAULT_CONFIG["dut"]),
    "power": {"p_active_mw", "p_idle_mw"},
    "sweep": set(DEFAULT_CONFIG["sweep"]),
    "dut.classifier": {"kind", "label", "path"},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def _check_keys(doc: dict, section: str) -> None:
    allowed = _ALLOWED_KEYS[section]
    unknown = set(doc) - allowed
    if unknown:
        where = section or "top level"
        raise ConfigError(f"unknown config key(s) at {where}: {sorted(unknown)}")
    for key, val in doc.items():
        sub = f"{section}.{key}" if section else key
        if sub in _ALLOWED_KEYS and isinstance(val, dict):
            _check_keys(val, sub)


def load_config(
    path: str | None,
    preset: str | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> dict:
    """Resolve the effective config from defaults, preset, file, flags."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        cfg = _deep_merge(cfg, PRESETS[preset])
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        _check_keys(doc, "")
        cfg = _deep_merge(cfg, doc)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out_dir"] = out
    _check_keys(cfg, "")
    return cfg


def _build(factory, section: str, **kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _twin_config(cfg: dict) -> TwinConfig:
    twin = cfg["twin"]
    profile = _build(SensorProfile, "twin.profile", **twin["profile"])
    return _build(
        TwinConfig,
        "twin",
        clock_hz=twin["clock_hz"],
        profile=profile,
        deadline_ps=twin["deadline_ps"],
        discard_first_frame=twin["discard_first_frame"],
        exposure_offset_cycles=twin["exposure_offset_cycles"],
    )


def _fault_config(cfg: dict) -> FaultConfig:
    f = cfg["faults"]
    return _build(
        FaultConfig, "faults", kind=f["kind"], lo_ps=f["lo_ps"], hi_ps=f["hi_ps"],
        seed=cfg["seed"],
    )


def _classifier(choice):
    if choice is None:
        return None
    kind = choice.get("kind")
    if kind == "oracle":
        return OracleClassifier()
    if kind == "constant":
        if "label" not in choice:
            raise ConfigError("dut.classifier: constant kind needs a label")
        return ConstantClassifier(choice["label"])
    if kind == "table":
        if "path" not in choice:
            raise ConfigError("dut.classifier: table kind needs a path")
        try:
            return load_table(choice["path"])
        except (ValueError, OSError) as exc:
            raise ConfigError(f"dut.classifier: {exc}") from exc
    raise ConfigError(f"dut.classifier: unknown kind {kind!r}")


def _dut_config(cfg: dict) -> DutConfig:
    d = cfg["dut"]
    return _build(
        DutConfig, "dut",
        readout_clock_hz=d["readout_clock_hz"], classifier=_classifier(d["classifier"]),
    )


def _power_params(cfg: dict) -> PowerParams | None:
    if cfg["power"] is None:
        return None
    return _build(PowerParams, "power", **cfg["power"])


def _schedule(cfg: dict) -> list[int]:
    sched = cfg["schedule"]
    if "times_ps" in sched and sched["times_ps"] is not None:
        times = sched["times_ps"]
        if not isinstance(times, list) or not all(isinstance(t, int) for t in times):
            raise ConfigError("schedule.times_ps must be a list of integers")
        return times
    try:
        return times_at_fps(
            sched.get("frames", 100), sched.get("fps", 1.0), sched.get("start_ps", 0)
        )
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from exc


def _source(cfg: dict, profile: SensorProfile):
    manifest, cache = cfg["manifest"], cfg["cache_index"]
    if manifest and cache:
        raise ConfigError("give either manifest or cache_index, not both")
    if cache:
        return load_cache_index(cache)
    if manifest:
        return StudySource(load_manifest(manifest), profile)
    raise ConfigError("a run needs a manifest or a cache_index")


def cmd_convert(
    manifest: str | os.PathLike,
    out_dir: str | os.PathLike,
    pattern: str = "BGGR",
    bit_depth: int = 10,
    width: int = 320,
    height: int = 320,
) -> int:
    """Resize and mosaic every study frame into an out_dir mosaic cache.

    Per-frame decode or conversion errors are reported and skipped; the
    cache index covers the frames that converted.  Returns 0 only when
    every frame converted.
    """
    records = read_manifest_rows(manifest)
    root = os.path.dirname(os.fspath(manifest)) or "."
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[list] = []
    failures: list[tuple[str, str]] = []
    for rec in records:
        src = os.path.join(root, rec.filename)
        stem = Path(rec.filename).stem
        name = f"{rec.index:06d}_{stem}.bay"
        try:
            with Image.open(src) as im:
                rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
            resized = resize_area(RgbImage(rgb), width, height)
            mosaic = rgb_to_bayer(resized, pattern=pattern, bit_depth=bit_depth)
            write_bay(mosaic, out / name)
        except (OSError, ValueError) as exc:
            failures.append((rec.filename, str(exc)))
            continue
        rows.append([len(rows), name, rec.timestamp_ms, rec.label])

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["index", "filename", "timestamp_ms", "label"])
    writer.writerows(rows)
    atomic_text(out / "index.csv", buf.getvalue())
    print(f"converted {len(rows)}/{len(records)} frames into {out}")
    for filename, err in failures:
        print(f"convert failed: {filename}: {err}", file=sys.stderr)
    return 1 if failures else 0


def cmd_run(cfg: dict) -> int:
    """Execute one campaign and write frames.jsonl, summary.json, config.json.

    Exit 0 iff no frame was corrupted and no internal invariant tripped.
    """
    twin_cfg = _twin_config(cfg)
    try:
        result = run_campaign(
            _source(cfg, twin_cfg.profile),
            _schedule(cfg),
            twin_cfg,
            link=_build(LinkConfig, "link", **cfg["link"]),
            faults=_fault_config(cfg),
            provider=_build(ProviderConfig, "provider", **cfg["provider"]),
            dut=_dut_config(cfg),
            power_params=_power_params(cfg),
            seed=cfg["seed"],
        )
    except ValueError as exc:
        # run_campaign validates cross-field consistency (chunking vs
        # calls per image, source vs profile resolution)
        raise ConfigError(str(exc)) from exc
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_frame_log(result.rows, out / "frames.jsonl")
    write_summary(
        result.report,
        out / "summary.json",
        extra={"seed": cfg["seed"], "violations": result.violations},
    )
    atomic_text(out / "config.json", json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    r = result.report
    print(
        f"frames={r.frames} flagged={r.flagged} corrupted={r.corrupted}"
        f" total_deviations={r.total_deviations} out={out}"
    )
    for v in result.violations:
        print(f"invariant violation: {v}", file=sys.stderr)
    return 0 if result.ok else 1


def _sweep_values(cfg: dict) -> list[float]:
    sweep = cfg["sweep"]
    if sweep["fps_values"] is not None:
        return [float(v) for v in sweep["fps_values"]]
    start, stop, step = sweep["fps_start"], sweep["fps_stop"], sweep["fps_step"]
    if step <= 0:
        raise ConfigError(f"sweep.fps_step must be positive, got {step}")
    if stop < start:
        return []
    n = int((stop - start) / step + 1e-9) + 1
    return [round(start + k * step, 10) for k in range(n)]


def cmd_sweep(cfg: dict) -> int:
    """Write the duty-cycle power curve CSV for the configured clock."""
    params = _power_params(cfg) or PowerParams()
    profile = _build(SensorProfile, "twin.profile", **cfg["twin"]["profile"])
    values = _sweep_values(cfg)
    try:
        curve = power_sweep(values, cfg["twin"]["clock_hz"], params, profile)
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(curve, out / "power_sweep.csv")
    print(f"wrote {len(curve)} rows to {out / 'power_sweep.csv'}")
    return 0


def _report_aggregates(rows: list[dict]) -> dict:
    lat = [r["first_chunk_ps"] - r["request_ps"] for r in rows]
    matches = [r["label"] == r["predicted"] for r in rows if r["predicted"] is not None]
    return {
        "frames": len(rows),
        "flagged": sum(1 for r in rows if r["flagged"]),
        "corrupted": sum(1 for r in rows if r["deviations"] > 0),
        "total_deviations": sum(r["deviations"] for r in rows),
        "classifier_accuracy": sum(matches) / len(matches) if matches else None,
        "latency_min_ps": min(lat) if lat else None,
        "latency_mean_ps": sum(lat) / len(lat) if lat else None,
        "latency_max_ps": max(lat) if lat else None,
    }


def cmd_report(run_dirs: list[str], bins: int = 20) -> int:
    """Print each run's aggregates and drop a latency histogram CSV.

    Aggregates are recomputed from the frame log and checked against the
    stored summary; a mismatch is reported and fails the command.
    """
    code = 0
    for d in run_dirs:
        frames_path = os.path.join(d, "frames.jsonl")
        summary_path = os.path.join(d, "summary.json")
        if not (os.path.isfile(frames_path) and os.path.isfile(summary_path)):
            raise MissingRun(f"{d}: need both frames.jsonl and summary.json")
        rows = read_frame_log(frames_path)
        with open(summary_path, encoding="utf-8") as fh:
            summary = json.load(fh)
        agg = _report_aggregates(rows)
        for key, val in agg.items():
            if summary.get(key) != val:
                print(
                    f"{d}: summary {key}={summary.get(key)} but frame log gives {val}",
                    file=sys.stderr,
                )
                code = 1
        mean_ms = agg["latency_mean_ps"] / PS_PER_MS if rows else float("nan")
        print(f"run {d}")
        print(f"  frames: {agg['frames']}  flagged: {agg['flagged']}"
              f"  corrupted: {agg['corrupted']}  total deviations: {agg['total_deviations']}")
        print(f"  mean first-chunk latency: {mean_ms:.4f} ms"
              f" (min {agg['latency_min_ps']} ps, max {agg['latency_max_ps']} ps)")
        if agg["classifier_accuracy"] is not None:
            print(f"  classifier accuracy: {agg['classifier_accuracy']:.4f}")
        if summary.get("seed") is not None:
            print(f"  seed: {summary['seed']}")
        flagged = [r["frame_index"] for r in rows if r["flagged"]]
        corrupted = [r["frame_index"] for r in rows if r["deviations"] > 0]
        if flagged:
            print(f"  flagged frames: {flagged}")
        if corrupted:
            print(f"  corrupted frames: {corrupted}")

        lat = [r["first_chunk_ps"] - r["request_ps"] for r in rows]
        counts, edges = np.histogram(lat, bins=bins)
        buf = ["bin_lo_ps,bin_hi_ps,count"]
        for i, c in enumerate(counts):
            buf.append(f"{edges[i]:.0f},{edges[i + 1]:.0f},{c}")
        atomic_text(os.path.join(d, "latency_hist.csv"), "\n".join(buf) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="overrides the config output directory")
    common.add_argument("--preset", choices=sorted(PRESETS), help="base setup")

    parser = argparse.ArgumentParser(
        prog="camtwin", description="sensor-twin capture campaigns and reports"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_convert = sub.add_parser(
        "convert", parents=[common], help="mosaic a study into a .bay cache"
    )
    p_convert.add_argument("manifest", nargs="?", help="study manifest CSV")
    p_convert.add_argument("--pattern", help="mosaic tile order (default from config)")
    p_convert.add_argument("--bit-depth", type=int, help="sample depth (default from config)")

    sub.add_parser("run", parents=[common], help="execute a capture campaign")
    sub.add_parser("sweep", parents=[common], help="write a power curve CSV")

    p_report = sub.add_parser("report", parents=[common], help="render run reports")
    p_report.add_argument("run_dir", nargs="+", help="directories written by run")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset, args.seed, args.out)
        if args.command == "convert":
            manifest = args.manifest or cfg["manifest"]
            if not manifest:
                raise ConfigError("convert needs a manifest argument or config entry")
            profile = cfg["twin"]["profile"]
            return cmd_convert(
                manifest,
                cfg["out_dir"],
                pattern=args.pattern or profile["pattern"],
                bit_depth=args.bit_depth or profile["bit_depth"],
                width=profile["width"],
                height=profile["height"],
            )
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_report(args.run_dir)
    except (ConfigError, MissingRun, ParseError, OrderError, MissingFile, EndOfStudy) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
