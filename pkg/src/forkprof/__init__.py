"""Fork-join parallel runtime with a built-in overhead profiler."""

from .errors import (
    ContractViolation,
    DeadlockError,
    ForkprofError,
    InvalidArgument,
    ScheduleParseError,
    TeamAborted,
)
from .profiler import (
    Census,
    OverheadBreakdown,
    Profiler,
    ProfileReport,
    RegionDescriptor,
    RegionStats,
    ThreadTimings,
    classify_overheads,
    parallel_coverage,
    record_event,
)
from .report import emit_report, load_report, parse_report
from .runtime import Pool, RegionOutcome, TeamContext, create_pool, current_context, parallel_region
from .sync import OrderedSequencer, barrier, critical, ordered_execute, set_watchdog
from .worksharing import (
    ChunkRange,
    ScheduleSpec,
    WorkshareState,
    dynamic_next,
    guided_next,
    parallel_for,
    parse_schedule,
    resolve_runtime_schedule,
    static_assignment,
)

__all__ = [
    "Census",
    "ChunkRange",
    "ContractViolation",
    "DeadlockError",
    "ForkprofError",
    "InvalidArgument",
    "OrderedSequencer",
    "OverheadBreakdown",
    "Pool",
    "ProfileReport",
    "Profiler",
    "RegionDescriptor",
    "RegionOutcome",
    "RegionStats",
    "ScheduleParseError",
    "ScheduleSpec",
    "TeamAborted",
    "TeamContext",
    "ThreadTimings",
    "WorkshareState",
    "barrier",
    "classify_overheads",
    "create_pool",
    "critical",
    "current_context",
    "dynamic_next",
    "emit_report",
    "guided_next",
    "load_report",
    "ordered_execute",
    "parallel_coverage",
    "parallel_for",
    "parallel_region",
    "parse_report",
    "parse_schedule",
    "record_event",
    "resolve_runtime_schedule",
    "set_watchdog",
    "static_assignment",
]
