"""Virtual-time hardware-in-the-loop simulator for camera sensor prototypes.

A digital twin of a small Bayer image sensor, its serial readout link, and
the device under test that consumes frames from it.  All timing runs on an
integer-picosecond virtual clock, so campaigns replay bit-identically on
any machine at any wall-clock speed.
"""

from camtwin.campaign import (
    ArraySource,
    BayerCacheSource,
    CampaignResult,
    StudySource,
    load_cache_index,
    run_campaign,
    times_at_fps,
    times_from_study,
)
from camtwin.dataset import (
    EndOfStudy,
    FrameRecord,
    MissingFile,
    OrderError,
    ParseError,
    ProviderConfig,
    Study,
    frame_at,
    load_manifest,
    load_rgb,
    read_manifest_rows,
    study_from_images,
    write_manifest,
)
from camtwin.imaging import (
    BayerImage,
    DiffReport,
    RgbImage,
    demosaic_bilinear,
    pixel_diff,
    read_bay,
    resize_area,
    rgb_to_bayer,
    write_bay,
)
from camtwin.kernel import EventQueue, PastDue, SimEvent, cycles_to_ps
from camtwin.link import (
    FaultConfig,
    LinkConfig,
    TransferPlan,
    plan_transfer,
    sample_injected_delay,
    transfer_duration,
)
from camtwin.power import (
    PowerEstimate,
    PowerParams,
    duty_cycle,
    estimate_power,
    power_sweep,
    write_sweep_csv,
)
from camtwin.twin import (
    ActivityLog,
    CaptureSchedule,
    FrameOutcome,
    SensorProfile,
    SensorTwin,
    TwinConfig,
    max_frame_rate,
)
from camtwin.verify import (
    CampaignReport,
    ConstantClassifier,
    DutConfig,
    FrameVerdict,
    OracleClassifier,
    TableClassifier,
    dut_receive,
    load_table,
    read_frame_log,
    summarize,
    verify_frame,
    write_frame_log,
    write_summary,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityLog",
    "ArraySource",
    "BayerCacheSource",
    "BayerImage",
    "CampaignReport",
    "CampaignResult",
    "CaptureSchedule",
    "ConstantClassifier",
    "DiffReport",
    "DutConfig",
    "EndOfStudy",
    "EventQueue",
    "FaultConfig",
    "FrameOutcome",
    "FrameRecord",
    "FrameVerdict",
    "LinkConfig",
    "MissingFile",
    "OracleClassifier",
    "OrderError",
    "ParseError",
    "PastDue",
    "PowerEstimate",
    "PowerParams",
    "ProviderConfig",
    "RgbImage",
    "SensorProfile",
    "SensorTwin",
    "SimEvent",
    "Study",
    "StudySource",
    "TableClassifier",
    "TransferPlan",
    "TwinConfig",
    "cycles_to_ps",
    "demosaic_bilinear",
    "dut_receive",
    "duty_cycle",
    "estimate_power",
    "frame_at",
    "load_cache_index",
    "load_manifest",
    "load_rgb",
    "load_table",
    "max_frame_rate",
    "pixel_diff",
    "plan_transfer",
    "power_sweep",
    "read_bay",
    "read_frame_log",
    "read_manifest_rows",
    "resize_area",
    "rgb_to_bayer",
    "run_campaign",
    "sample_injected_delay",
    "study_from_images",
    "summarize",
    "times_at_fps",
    "times_from_study",
    "transfer_duration",
    "verify_frame",
    "write_bay",
    "write_frame_log",
    "write_manifest",
    "write_summary",
    "write_sweep_csv",
    "__version__",
]
