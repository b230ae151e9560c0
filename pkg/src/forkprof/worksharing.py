"""Loop schedules and the work-shared ``parallel_for`` construct.

Loops are normalized to the iteration space ``[0, n)`` with unit stride.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from typing import Callable, Iterator

from .errors import InvalidArgument, ScheduleParseError
from .profiler import now, record_entry, record_event
from .sync import OrderedSequencer

SCHEDULE_KINDS = ("static", "dynamic", "guided", "runtime")
SCHEDULE_ENV = "FORKPROF_SCHEDULE"


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "static"
    chunk: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidArgument(f"unknown schedule kind {self.kind!r}")
        if self.chunk is not None:
            if isinstance(self.chunk, bool) or not isinstance(self.chunk, int) or self.chunk < 1:
                raise InvalidArgument(f"chunk must be a positive integer, got {self.chunk!r}")
            if self.kind == "runtime":
                raise InvalidArgument("a runtime schedule takes its chunk from the environment")

    def __str__(self) -> str:
        return self.kind if self.chunk is None else f"{self.kind},{self.chunk}"


@dataclass(frozen=True)
class ChunkRange:
    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.start, self.end))


def static_assignment(n: int, p: int, tid: int, chunk: int | None = None) -> list[ChunkRange]:
    """Chunks owned by thread ``tid`` under a static schedule.

    With ``chunk``, blocks of that size are dealt round-robin. Without it each
    thread gets one contiguous block; the first ``n % p`` threads get one
    extra iteration.
    """
    if n < 0 or p < 1:
        raise InvalidArgument(f"need n >= 0 and p >= 1, got n={n}, p={p}")
    if not 0 <= tid < p:
        raise InvalidArgument(f"thread id {tid} outside team of {p}")
    if chunk is not None:
        if chunk < 1:
            raise InvalidArgument(f"chunk must be >= 1, got {chunk}")
        return [
            ChunkRange(start, min(start + chunk, n))
            for start in range(tid * chunk, n, p * chunk)
        ]
    base, extra = divmod(n, p)
    start = tid * base + min(tid, extra)
    size = base + (1 if tid < extra else 0)
    return [ChunkRange(start, start + size)] if size else []


class WorkshareState:
    """Shared claim cursor for one execution of a dynamic or guided loop."""

    def __init__(self, total: int, team_size: int, spec: ScheduleSpec):
        if spec.kind == "runtime":
            raise InvalidArgument("resolve a runtime schedule before sharing work")
        self.total = total
        self.team_size = team_size
        self.spec = spec
        self.next_unclaimed = 0
        self._lock = threading.Lock()

    def claim(self) -> ChunkRange | None:
        if self.spec.kind == "guided":
            return guided_next(self)
        return dynamic_next(self)


def dynamic_next(state: WorkshareState) -> ChunkRange | None:
    """Claim the next ``chunk`` iterations (1 by default); ``None`` once exhausted."""
    step = state.spec.chunk or 1
    with state._lock:
        start = state.next_unclaimed
        if start >= state.total:
            return None
        end = min(start + step, state.total)
        state.next_unclaimed = end
    return ChunkRange(start, end)


def guided_next(state: WorkshareState) -> ChunkRange | None:
    """Claim ``max(ceil(remaining / P), chunk_min)`` iterations, capped at what is left."""
    floor = state.spec.chunk or 1
    with state._lock:
        start = state.next_unclaimed
        remaining = state.total - start
        if remaining <= 0:
            return None
        size = min(remaining, max(-(-remaining // state.team_size), floor))
        state.next_unclaimed = start + size
    return ChunkRange(start, start + size)


def _parse(text: str, allowed: tuple[str, ...]) -> ScheduleSpec:
    tokens = [t.strip() for t in text.split(",")]
    kind = tokens[0].lower()
    if kind not in allowed:
        raise ScheduleParseError(f"unknown schedule kind {tokens[0]!r} in {text!r}")
    if len(tokens) > 2:
        raise ScheduleParseError(f"unexpected trailing token {tokens[2]!r} in {text!r}")
    chunk = None
    if len(tokens) == 2:
        tok = tokens[1]
        try:
            chunk = int(tok)
        except ValueError:
            raise ScheduleParseError(f"chunk {tok!r} in {text!r} is not an integer") from None
        if chunk < 1:
            raise ScheduleParseError(f"chunk {tok!r} in {text!r} must be >= 1")
    return ScheduleSpec(kind, chunk)


def parse_schedule(text: str) -> ScheduleSpec:
    """Parse ``kind[,chunk]`` where kind may also be ``runtime`` (without a chunk)."""
    if text.strip().lower() == "runtime":
        return ScheduleSpec("runtime")
    return _parse(text, ("static", "dynamic", "guided"))


def resolve_runtime_schedule(env_value: str | None, fallback: ScheduleSpec) -> ScheduleSpec:
    if env_value is None or not env_value.strip():
        if fallback.kind == "runtime":
            return ScheduleSpec("static")
        return fallback
    return _parse(env_value, ("static", "dynamic", "guided"))


def schedule_from_environment(fallback: ScheduleSpec = ScheduleSpec()) -> ScheduleSpec:
    return resolve_runtime_schedule(os.environ.get(SCHEDULE_ENV), fallback)


class _LoopShared:
    __slots__ = ("state", "descriptor", "sequencer")

    def __init__(self, state, descriptor, sequencer):
        self.state = state
        self.descriptor = descriptor
        self.sequencer = sequencer


def parallel_for(
    ctx,
    n: int,
    spec: ScheduleSpec,
    body: Callable,
    nowait: bool = False,
    label: str = "for",
    ordered: bool = False,
) -> None:
    """Work-share ``[0, n)`` over the team; every member must call it.

    ``body(ctx, chunk)`` is called for each chunk this thread receives. Unless
    ``nowait`` is set, members wait at an implicit exit barrier. With
    ``ordered`` the loop's sequencer is available as ``ctx.sequencer``.
    """
    if n < 0:
        raise InvalidArgument(f"loop length must be >= 0, got {n}")
    t_enter = now()
    team = ctx.team
    size = ctx.team_size
    prof = ctx.profiler_handle

    def make_shared() -> _LoopShared:
        resolved = spec if spec.kind != "runtime" else schedule_from_environment()
        desc = prof.descriptor("parallel-loop", label, ctx.region_id) if prof else None
        seq = None
        if ordered:
            seq = OrderedSequencer(n, desc.region_id if desc else None, f"{label}:ordered")
            if team is not None:
                seq.serial = team.serial
                team.on_abort(seq.abort)
        state = WorkshareState(n, size, resolved) if resolved.kind != "static" else resolved
        return _LoopShared(state, desc, seq)

    if team is None:
        shared = make_shared()
    else:
        shared = team.construct(ctx, ("for", label, n, spec, nowait, ordered), make_shared)

    ctx.sequencer = shared.sequencer
    body_s = 0.0
    got_work = False
    if isinstance(shared.state, ScheduleSpec):
        chunks = iter(static_assignment(n, size, ctx.thread_id, shared.state.chunk))
        claim = lambda: next(chunks, None)  # noqa: E731
    else:
        claim = shared.state.claim
    try:
        chunk = claim()
        while chunk is not None:
            got_work = True
            ctx.current_chunk = chunk
            t0 = now()
            try:
                body(ctx, chunk)
            finally:
                body_s += now() - t0
            if shared.sequencer is not None:
                shared.sequencer.skip(chunk.start, chunk.end)
            chunk = claim()
    finally:
        ctx.current_chunk = None
        ctx.sequencer = None

    waited = 0.0
    if not nowait and team is not None and size > 1 and not team.serial:
        t0 = now()
        team.barrier.wait(f"implicit barrier of loop {label!r}")
        waited = now() - t0
    elapsed = now() - t_enter

    desc = shared.descriptor
    if desc is None:
        return
    if got_work:
        record_event(ctx, desc, "body_s", body_s)
        record_event(ctx, desc, "exit_barrier_s", waited)
        record_event(ctx, desc, "mgmt_s", max(0.0, elapsed - body_s - waited))
    else:
        record_event(ctx, desc, "idle_limpar_s", elapsed)
    record_entry(ctx, desc)
