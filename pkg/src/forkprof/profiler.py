"""Per-thread region timing and overhead classification.

Every construct executed by a team writes into the calling thread's private
buffer (see :func:`record_event`). The region master folds the team's
buffers into a :class:`Profiler` after the join, so nothing on the measured
path contends on a shared structure.

Lost time is split into four categories:

* synchronization - explicit barriers, critical-section entry, ordered waits
* imbalance       - waiting at the implicit exit barrier of a loop or region
* limited parallelism - threads a worksharing construct gave no work
* management      - fork/join and signaling bookkeeping
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

now = time.perf_counter

TIMING_FIELDS = (
    "body_s",
    "enter_wait_s",
    "exit_barrier_s",
    "explicit_barrier_s",
    "mgmt_s",
    "idle_limpar_s",
)

REGION_KINDS = ("parallel", "parallel-loop", "barrier", "critical", "ordered")

# Timer slack used by invariant checks, per region per thread.
TIMER_SLACK_S = 1e-3


@dataclass
class ThreadTimings:
    body_s: float = 0.0
    enter_wait_s: float = 0.0
    exit_barrier_s: float = 0.0
    explicit_barrier_s: float = 0.0
    mgmt_s: float = 0.0
    idle_limpar_s: float = 0.0
    entry_count: int = 0

    def total(self) -> float:
        return (
            self.body_s
            + self.enter_wait_s
            + self.exit_barrier_s
            + self.explicit_barrier_s
            + self.mgmt_s
            + self.idle_limpar_s
        )

    def absorb(self, other: ThreadTimings) -> None:
        for name in TIMING_FIELDS:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.entry_count += other.entry_count


@dataclass(frozen=True)
class RegionDescriptor:
    region_id: int
    kind: str
    label: str
    parent: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")


@dataclass
class OverheadBreakdown:
    synch_s: float = 0.0
    imbal_s: float = 0.0
    limpar_s: float = 0.0
    mgmt_s: float = 0.0
    ovhds_s: float = 0.0
    synch_pct: float = 0.0
    imbal_pct: float = 0.0
    limpar_pct: float = 0.0
    mgmt_pct: float = 0.0
    ovhds_pct: float = 0.0

    @classmethod
    def from_seconds(
        cls, synch: float, imbal: float, limpar: float, mgmt: float, base_s: float
    ) -> OverheadBreakdown:
        """Build a breakdown; ``base_s`` is the available CPU time (wall x threads)."""

        def pct(x: float) -> float:
            return x / base_s * 100.0 if base_s > 0 else 0.0

        out = cls(synch_s=synch, imbal_s=imbal, limpar_s=limpar, mgmt_s=mgmt)
        out.ovhds_s = synch + imbal + limpar + mgmt
        out.synch_pct = pct(synch)
        out.imbal_pct = pct(imbal)
        out.limpar_pct = pct(limpar)
        out.mgmt_pct = pct(mgmt)
        out.ovhds_pct = out.synch_pct + out.imbal_pct + out.limpar_pct + out.mgmt_pct
        return out

    def identity_holds(self) -> bool:
        return (
            self.ovhds_s == self.synch_s + self.imbal_s + self.limpar_s + self.mgmt_s
            and self.ovhds_pct
            == self.synch_pct + self.imbal_pct + self.limpar_pct + self.mgmt_pct
        )


@dataclass
class RegionStats:
    descriptor: RegionDescriptor
    wall_s: float
    per_thread: list[ThreadTimings]
    complete: bool = True
    overheads: OverheadBreakdown | None = None

    def __post_init__(self) -> None:
        if self.overheads is None:
            self.overheads = classify_overheads(self)

    @property
    def team_size(self) -> int:
        return len(self.per_thread)


@dataclass
class Census:
    parallel_regions: int = 0
    parallel_loops: int = 0
    barriers: int = 0

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.parallel_regions, self.parallel_loops, self.barriers)


@dataclass
class ProfileReport:
    team_size: int
    census: Census
    program_wall_s: float
    parallel_coverage: float
    regions: list[RegionStats] = field(default_factory=list)
    totals: OverheadBreakdown = field(default_factory=OverheadBreakdown)

    def region(self, kind: str, label: str) -> RegionStats:
        for r in self.regions:
            if r.descriptor.kind == kind and r.descriptor.label == label:
                return r
        raise KeyError((kind, label))

    def breakdowns(self) -> Iterable[OverheadBreakdown]:
        for r in self.regions:
            yield r.overheads
        yield self.totals


def classify_overheads(stats: RegionStats) -> OverheadBreakdown:
    rows = stats.per_thread
    explicit = sum(t.explicit_barrier_s for t in rows)
    entering = sum(t.enter_wait_s for t in rows)
    return OverheadBreakdown.from_seconds(
        synch=explicit + entering,
        imbal=sum(t.exit_barrier_s for t in rows),
        limpar=sum(t.idle_limpar_s for t in rows),
        mgmt=sum(t.mgmt_s for t in rows),
        base_s=stats.wall_s * len(rows),
    )


def _top_level(regions: Iterable[RegionStats]) -> list[RegionStats]:
    return [
        r for r in regions if r.descriptor.kind == "parallel" and r.descriptor.parent is None
    ]


def parallel_coverage(report: ProfileReport) -> float:
    if report.program_wall_s <= 0:
        return 0.0
    inside = sum(r.wall_s for r in _top_level(report.regions))
    return min(1.0, max(0.0, inside / report.program_wall_s))


def total_overheads(regions: Sequence[RegionStats]) -> OverheadBreakdown:
    """Whole-run breakdown, normalized by the top-level regions' CPU time."""
    synch = imbal = limpar = mgmt = 0.0
    for r in regions:
        o = r.overheads
        synch += o.synch_s
        imbal += o.imbal_s
        limpar += o.limpar_s
        mgmt += o.mgmt_s
    base = sum(r.wall_s * r.team_size for r in _top_level(regions))
    return OverheadBreakdown.from_seconds(synch, imbal, limpar, mgmt, base)


def census_of(regions: Iterable[RegionStats]) -> Census:
    c = Census()
    for r in regions:
        kind = r.descriptor.kind
        if kind == "parallel":
            c.parallel_regions += 1
        elif kind == "parallel-loop":
            c.parallel_loops += 1
        elif kind == "barrier":
            c.barriers += 1
    return c


def record_event(ctx, descriptor: RegionDescriptor, field_name: str, duration: float) -> None:
    """Accumulate ``duration`` seconds into ``ctx``'s private buffer.

    Only the owning thread touches ``ctx.buffer`` until the region joins.
    """
    if field_name not in TIMING_FIELDS:
        raise ValueError(f"unknown timing field {field_name!r}")
    if duration < 0:
        raise ValueError(f"negative duration {duration!r} for {field_name}")
    if not duration:
        return
    timings = ctx.timings(descriptor)
    setattr(timings, field_name, getattr(timings, field_name) + duration)


def record_entry(ctx, descriptor: RegionDescriptor) -> None:
    ctx.timings(descriptor).entry_count += 1


class _Accum:
    __slots__ = ("descriptor", "wall_s", "rows", "complete")

    def __init__(self, descriptor: RegionDescriptor) -> None:
        self.descriptor = descriptor
        self.wall_s = 0.0
        self.rows: list[ThreadTimings] = []
        self.complete = True


class Profiler:
    """Collects merged region statistics for one program run."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._registry: dict[tuple[str, str, int | None], RegionDescriptor] = {}
        self._accums: dict[int, _Accum] = {}
        self._started = now()
        self._stopped: float | None = None

    def descriptor(self, kind: str, label: str, parent: int | None = None) -> RegionDescriptor:
        key = (kind, label, parent)
        with self._lock:
            desc = self._registry.get(key)
            if desc is None:
                desc = RegionDescriptor(len(self._registry) + 1, kind, label, parent)
                self._registry[key] = desc
                self._accums[desc.region_id] = _Accum(desc)
            return desc

    def merge(
        self,
        contexts: Sequence,
        walls: dict[int, float] | None = None,
        incomplete: Iterable[int] = (),
    ) -> None:
        """Fold the team's per-thread buffers into the run totals.

        Regions without an entry in ``walls`` get the longest per-thread
        in-construct time of this team as their wall time.
        """
        walls = walls or {}
        incomplete = set(incomplete)
        team_size = len(contexts)
        touched: dict[int, list[ThreadTimings | None]] = {}
        for ctx in contexts:
            for region_id, timings in ctx.buffer.items():
                touched.setdefault(region_id, [None] * team_size)[ctx.thread_id] = timings
        with self._lock:
            for region_id, rows in touched.items():
                acc = self._accums[region_id]
                if len(acc.rows) < team_size:
                    acc.rows.extend(ThreadTimings() for _ in range(team_size - len(acc.rows)))
                for tid, timings in enumerate(rows):
                    if timings is not None:
                        acc.rows[tid].absorb(timings)
                wall = walls.get(region_id)
                if wall is None:
                    wall = max((t.total() for t in rows if t is not None), default=0.0)
                acc.wall_s += wall
                if region_id in incomplete:
                    acc.complete = False
        for ctx in contexts:
            ctx.buffer.clear()

    def stop(self) -> None:
        if self._stopped is None:
            self._stopped = now()

    def __enter__(self) -> Profiler:
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def report(self, team_size: int | None = None) -> ProfileReport:
        end = self._stopped if self._stopped is not None else now()
        with self._lock:
            accums = [self._accums[k] for k in sorted(self._accums)]
            regions = [
                RegionStats(
                    a.descriptor,
                    a.wall_s,
                    [ThreadTimings(**{f.name: getattr(t, f.name) for f in fields(t)}) for t in a.rows],
                    a.complete,
                )
                for a in accums
                if a.rows
            ]
        if team_size is None:
            team_size = max((r.team_size for r in _top_level(regions)), default=1)
        report = ProfileReport(
            team_size=team_size,
            census=census_of(regions),
            program_wall_s=max(0.0, end - self._started),
            parallel_coverage=0.0,
            regions=regions,
            totals=total_overheads(regions),
        )
        report.parallel_coverage = parallel_coverage(report)
        return report
