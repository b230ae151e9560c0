"""Fork-join execution: a reusable worker pool and parallel regions.

The caller of :func:`parallel_region` becomes the master (thread 0) of the
team; the other members run on pooled worker threads that are created once
and parked between regions. When a team is larger than the pool, the excess
members get short-lived overflow threads for that region only.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ContractViolation, InvalidArgument
from .profiler import (
    Profiler,
    RegionDescriptor,
    ThreadTimings,
    now,
    record_entry,
    record_event,
)
from .sync import TeamBarrier


class TeamContext:
    """Execution context of one team member; confined to its own thread."""

    __slots__ = (
        "thread_id",
        "team_size",
        "region_id",
        "profiler_handle",
        "team",
        "worker_id",
        "buffer",
        "current_chunk",
        "sequencer",
        "_construct_seq",
    )

    def __init__(
        self,
        thread_id: int,
        team_size: int,
        region_id: int | None,
        profiler_handle: Profiler | None,
        team: _Team | None = None,
    ):
        self.thread_id = thread_id
        self.team_size = team_size
        self.region_id = region_id
        self.profiler_handle = profiler_handle
        self.team = team
        self.worker_id = threading.current_thread().name
        self.buffer: dict[int, ThreadTimings] = {}
        self.current_chunk = None
        self.sequencer = None
        self._construct_seq = 0

    @property
    def is_master(self) -> bool:
        return self.thread_id == 0

    def timings(self, descriptor: RegionDescriptor) -> ThreadTimings:
        t = self.buffer.get(descriptor.region_id)
        if t is None:
            t = self.buffer[descriptor.region_id] = ThreadTimings()
        return t

    def next_construct(self) -> int:
        self._construct_seq += 1
        return self._construct_seq

    def __repr__(self) -> str:
        return (
            f"TeamContext(thread_id={self.thread_id}, team_size={self.team_size}, "
            f"region_id={self.region_id})"
        )


_local = threading.local()


def _stack() -> list[TeamContext]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = [TeamContext(0, 1, None, None)]
    return stack


def current_context() -> TeamContext:
    """The innermost context of the calling thread (a team-of-one sentinel outside regions)."""
    return _stack()[-1]


class _Team:
    def __init__(self, size: int, descriptor: RegionDescriptor, profiler: Profiler, serial: bool):
        self.size = size
        self.descriptor = descriptor
        self.profiler = profiler
        self.serial = serial
        self.barrier = TeamBarrier(size)
        self.failure: BaseException | None = None
        self._lock = threading.RLock()  # construct factories may register abort hooks
        self._constructs: dict[int, list] = {}
        self._abort_hooks: list[Callable[[], None]] = []

    def fail(self, exc: BaseException) -> None:
        with self._lock:
            if self.failure is not None:
                return
            self.failure = exc
            hooks = list(self._abort_hooks)
        self.barrier.abort()
        for hook in hooks:
            hook()

    def on_abort(self, hook: Callable[[], None]) -> None:
        with self._lock:
            if self.failure is None:
                self._abort_hooks.append(hook)
                return
        hook()

    def construct(self, ctx: TeamContext, signature: tuple, factory: Callable[[], Any]) -> Any:
        """Shared state of the calling thread's next worksharing construct.

        The first member to arrive creates it; later members must present the
        same signature.
        """
        seq = ctx.next_construct()
        with self._lock:
            entry = self._constructs.get(seq)
            if entry is None:
                entry = self._constructs[seq] = [signature, factory(), 0]
            elif entry[0] != signature:
                raise ContractViolation(
                    f"thread {ctx.thread_id} reached worksharing construct #{seq} with "
                    f"{signature!r}, but the team registered {entry[0]!r}"
                )
            entry[2] += 1
            if entry[2] == self.size:
                del self._constructs[seq]
            return entry[1]


class Pool:
    """A fixed set of reusable worker threads."""

    def __init__(self, max_workers: int, profiler: Profiler | None = None):
        if isinstance(max_workers, bool) or not isinstance(max_workers, int) or max_workers < 1:
            raise InvalidArgument(f"max_workers must be a positive integer, got {max_workers!r}")
        t0 = now()
        self.max_workers = max_workers
        self.profiler = profiler if profiler is not None else Profiler()
        # One queue per worker: team member k always runs on worker k.
        self._queues: list[queue.SimpleQueue] = [queue.SimpleQueue() for _ in range(max_workers)]
        self._launch = threading.Lock()
        self._in_flight = 0
        self._closed = False
        self._workers = [
            threading.Thread(
                target=self._serve, args=(self._queues[k - 1],), name=f"forkprof-worker-{k}", daemon=True
            )
            for k in range(1, max_workers + 1)
        ]
        for w in self._workers:
            w.start()
        # Worker creation is charged here, not to the first region.
        self.setup_s = now() - t0

    @staticmethod
    def _serve(tasks: queue.SimpleQueue) -> None:
        while True:
            task = tasks.get()
            if task is None:
                return
            task()

    @property
    def worker_names(self) -> list[str]:
        return [w.name for w in self._workers]

    def shutdown(self) -> None:
        if self._in_flight:
            raise ContractViolation("pool shut down while a parallel region is in flight")
        if self._closed:
            return
        self._closed = True
        for q in self._queues:
            q.put(None)
        for w in self._workers:
            w.join()

    def __enter__(self) -> Pool:
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()

    def __repr__(self) -> str:
        state = "closed" if self._closed else "open"
        return f"Pool(max_workers={self.max_workers}, {state})"


def create_pool(max_workers: int, profiler: Profiler | None = None) -> Pool:
    return Pool(max_workers, profiler)


@dataclass
class RegionOutcome:
    descriptor: RegionDescriptor
    wall_s: float
    results: list[Any]
    worker_ids: list[str]


def parallel_region(
    pool: Pool,
    team_size: int,
    label: str,
    body: Callable[[TeamContext], Any],
    *,
    profiler: Profiler | None = None,
) -> RegionOutcome:
    """Run ``body(ctx)`` once per thread id in ``[0, team_size)`` and join.

    A region started from inside another region runs its team serially on
    the calling thread.
    """
    if isinstance(team_size, bool) or not isinstance(team_size, int) or team_size < 1:
        raise InvalidArgument(f"team_size must be a positive integer, got {team_size!r}")
    parent = current_context()
    nested = parent.team is not None
    if profiler is None:
        profiler = parent.profiler_handle if nested else pool.profiler
    desc = profiler.descriptor("parallel", label, parent.region_id if nested else None)
    if nested:
        return _run_serial(team_size, desc, profiler, body)
    if pool._closed:
        raise ContractViolation(f"{pool!r} cannot run region {label!r}")
    with pool._launch:
        pool._in_flight += 1
        try:
            return _run_team(pool, team_size, desc, profiler, body)
        finally:
            pool._in_flight -= 1


class _Member:
    """Runs one team member's body and records its start/end stamps."""

    def __init__(self, team: _Team, contexts: list[TeamContext], body: Callable):
        n = len(contexts)
        self.team = team
        self.contexts = contexts
        self.body = body
        self.results: list[Any] = [None] * n
        self.workers = [""] * n
        self.starts = [0.0] * n
        self.ends = [0.0] * n

    def __call__(self, tid: int) -> None:
        ctx = self.contexts[tid]
        ctx.worker_id = self.workers[tid] = threading.current_thread().name
        stack = _stack()
        stack.append(ctx)
        self.starts[tid] = now()
        try:
            self.results[tid] = self.body(ctx)
        except BaseException as exc:  # noqa: BLE001 - re-raised by the master
            self.team.fail(exc)
        finally:
            self.ends[tid] = now()
            stack.pop()


def _run_team(pool: Pool, size: int, desc: RegionDescriptor, profiler: Profiler, body) -> RegionOutcome:
    t_fork = now()
    team = _Team(size, desc, profiler, serial=False)
    contexts = [TeamContext(tid, size, desc.region_id, profiler, team) for tid in range(size)]
    member = _Member(team, contexts, body)
    done = threading.Condition()
    pending = size - 1

    def run_worker(tid: int) -> None:
        nonlocal pending
        try:
            member(tid)
        finally:
            with done:
                pending -= 1
                if pending == 0:
                    done.notify()

    overflow = []
    for tid in range(1, size):
        if tid <= pool.max_workers:
            pool._queues[tid - 1].put(lambda tid=tid: run_worker(tid))
        else:
            th = threading.Thread(
                target=run_worker, args=(tid,), name=f"forkprof-overflow-{tid}", daemon=True
            )
            overflow.append(th)
            th.start()

    member(0)
    with done:
        while pending:
            done.wait()
    t_join = now()
    for th in overflow:
        th.join()

    t_end = now()
    wall = t_end - t_fork
    for tid, ctx in enumerate(contexts):
        body_s = member.ends[tid] - member.starts[tid]
        join_wait = max(0.0, t_join - member.ends[tid])
        record_event(ctx, desc, "body_s", body_s)
        record_event(ctx, desc, "exit_barrier_s", join_wait)
        record_event(ctx, desc, "mgmt_s", max(0.0, wall - body_s - join_wait))
        record_entry(ctx, desc)
    failed = team.failure is not None
    profiler.merge(contexts, walls={desc.region_id: wall}, incomplete=[desc.region_id] if failed else ())
    if failed:
        raise team.failure
    return RegionOutcome(desc, wall, member.results, member.workers)


def _run_serial(size: int, desc: RegionDescriptor, profiler: Profiler, body) -> RegionOutcome:
    t_fork = now()
    team = _Team(size, desc, profiler, serial=True)
    contexts = [TeamContext(tid, size, desc.region_id, profiler, team) for tid in range(size)]
    member = _Member(team, contexts, body)
    for tid in range(size):
        member(tid)
    wall = now() - t_fork
    bodies = [member.ends[t] - member.starts[t] for t in range(size)]
    for tid, ctx in enumerate(contexts):
        record_event(ctx, desc, "body_s", bodies[tid])
        record_entry(ctx, desc)
    record_event(contexts[0], desc, "mgmt_s", max(0.0, wall - sum(bodies)))
    failed = team.failure is not None
    profiler.merge(contexts, walls={desc.region_id: wall}, incomplete=[desc.region_id] if failed else ())
    if failed:
        raise team.failure
    return RegionOutcome(desc, wall, member.results, member.workers)
