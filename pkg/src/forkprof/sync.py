"""Team barriers, named critical sections and ordered execution.

Each construct measures how long the caller was blocked and records it in
the caller's profile buffer: explicit barrier waits and entry waits count as
synchronization, lock release bookkeeping as management.
"""

from __future__ import annotations

import threading
import time
from typing import Any, Callable

from .errors import ContractViolation, DeadlockError, TeamAborted
from .profiler import now, record_entry, record_event

_watchdog_s: float | None = None
_ORDERED_SPIN = 64


def set_watchdog(timeout_s: float | None) -> None:
    """Arm (or with ``None`` disarm) the deadlock watchdog for all blocking waits."""
    global _watchdog_s
    if timeout_s is not None and timeout_s <= 0:
        raise ValueError("watchdog timeout must be positive")
    _watchdog_s = timeout_s


def watchdog_timeout() -> float | None:
    return _watchdog_s


class TeamBarrier:
    """Centralized sense-reversing barrier for a fixed number of parties."""

    def __init__(self, parties: int):
        self.parties = parties
        self.generation = 0
        self._cond = threading.Condition(threading.Lock())
        self._remaining = parties
        self._sense = False
        self._broken = False

    def wait(self, what: str = "barrier") -> int:
        """Block until every party arrived; returns the generation just completed."""
        with self._cond:
            if self._broken:
                raise TeamAborted(f"{what}: team aborted")
            local_sense = not self._sense
            gen = self.generation
            self._remaining -= 1
            if self._remaining == 0:
                self._remaining = self.parties
                self.generation += 1
                self._sense = local_sense
                self._cond.notify_all()
                return gen
            limit = _watchdog_s
            deadline = None if limit is None else now() + limit
            while self._sense != local_sense:
                if self._broken:
                    raise TeamAborted(f"{what}: team aborted")
                if deadline is None:
                    self._cond.wait()
                    continue
                left = deadline - now()
                if left <= 0:
                    arrived = self.parties - self._remaining
                    raise DeadlockError(
                        f"{what}: only {arrived} of {self.parties} threads arrived "
                        f"at generation {gen} within {limit * 1000:.0f} ms"
                    )
                self._cond.wait(left)
            return gen

    def abort(self) -> None:
        with self._cond:
            self._broken = True
            self._cond.notify_all()


def _descriptor(ctx, kind: str, label: str):
    prof = ctx.profiler_handle
    if prof is None:
        return None
    return prof.descriptor(kind, label, ctx.region_id)


def barrier(ctx, label: str = "barrier") -> float:
    """Explicit team barrier. Returns the caller's arrival-to-release wait."""
    team = ctx.team
    if team is None or ctx.team_size == 1:
        desc = _descriptor(ctx, "barrier", label)
        if desc is not None:
            record_entry(ctx, desc)
        return 0.0
    if team.serial:
        raise ContractViolation(
            f"barrier {label!r} inside a serialized nested team of {ctx.team_size}"
        )
    desc = _descriptor(ctx, "barrier", label)
    t0 = now()
    team.barrier.wait(f"barrier {label!r}")
    waited = now() - t0
    if desc is not None:
        record_event(ctx, desc, "explicit_barrier_s", waited)
        record_entry(ctx, desc)
    return waited


class _Scope:
    __slots__ = ("lock", "owner")

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.owner: int | None = None


_scopes: dict[str, _Scope] = {}
_scopes_lock = threading.Lock()


def _scope(name: str) -> _Scope:
    scope = _scopes.get(name)
    if scope is None:
        with _scopes_lock:
            scope = _scopes.setdefault(name, _Scope())
    return scope


def critical(ctx, name: str, body: Callable[[], Any]) -> tuple[Any, float]:
    """Run ``body`` under the mutual-exclusion scope ``name`` ('' is the unnamed scope).

    Returns ``(body result, seconds blocked before entry)``.
    """
    scope = _scope(name)
    limit = _watchdog_s
    me = threading.get_ident()
    t0 = now()
    if limit is None:
        scope.lock.acquire()
    else:
        if scope.owner == me:
            raise DeadlockError(f"recursive entry into critical section {name!r}")
        if not scope.lock.acquire(timeout=limit):
            raise DeadlockError(
                f"critical section {name!r} not acquired within {limit * 1000:.0f} ms"
            )
    t1 = now()
    scope.owner = me
    try:
        result = body()
    finally:
        t2 = now()
        scope.owner = None
        scope.lock.release()
        t3 = now()
        desc = _descriptor(ctx, "critical", name or "(unnamed)")
        if desc is not None:
            record_event(ctx, desc, "enter_wait_s", t1 - t0)
            record_event(ctx, desc, "body_s", t2 - t1)
            record_event(ctx, desc, "mgmt_s", t3 - t2)
            record_entry(ctx, desc)
    return result, t1 - t0


class OrderedSequencer:
    """Grants entry to ordered blocks in increasing iteration order.

    Iterations whose chunk finished without entering the ordered block are
    skipped, so the cursor never stalls on work that will not arrive.
    """

    def __init__(self, total: int, loop_region_id: int | None = None, label: str = "ordered"):
        self.total = total
        self.loop_region_id = loop_region_id
        self.label = label
        self.next_iteration = 0
        self.serial = False
        self._done = bytearray(total)
        self._entered = bytearray(total)
        self._cond = threading.Condition(threading.Lock())
        self._broken = False

    def _advance(self) -> None:
        nxt, done = self.next_iteration, self._done
        while nxt < self.total and done[nxt]:
            nxt += 1
        self.next_iteration = nxt

    def skip(self, start: int, end: int) -> None:
        """Mark ``[start, end)`` finished; used when a chunk completes."""
        with self._cond:
            done = self._done
            for i in range(max(start, self.next_iteration), end):
                done[i] = 1
            self._advance()
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._broken = True
            self._cond.notify_all()

    def _claim(self, iteration: int, chunk) -> None:
        if not 0 <= iteration < self.total:
            raise ContractViolation(
                f"ordered iteration {iteration} outside [0, {self.total})"
            )
        with self._cond:
            if self._entered[iteration] or self._done[iteration]:
                raise ContractViolation(f"ordered iteration {iteration} entered twice")
            self._entered[iteration] = 1
            if chunk is not None and chunk.start <= iteration < chunk.end:
                # Own earlier iterations that skipped the ordered block.
                for i in range(max(chunk.start, self.next_iteration), iteration):
                    if not self._entered[i]:
                        self._done[i] = 1
                self._advance()
                self._cond.notify_all()

    def _wait_turn(self, iteration: int) -> None:
        spins = 0
        while self.next_iteration != iteration and spins < _ORDERED_SPIN and not self.serial:
            spins += 1
            time.sleep(0)
        with self._cond:
            limit = _watchdog_s
            deadline = None if limit is None else now() + limit
            while self.next_iteration != iteration:
                if self._broken:
                    raise TeamAborted(f"{self.label}: team aborted")
                if self.serial:
                    raise ContractViolation(
                        f"{self.label}: iteration {iteration} would wait inside a serialized team"
                    )
                if deadline is None:
                    self._cond.wait()
                    continue
                left = deadline - now()
                if left <= 0:
                    raise DeadlockError(
                        f"{self.label}: iteration {iteration} still waiting for "
                        f"{self.next_iteration} after {limit * 1000:.0f} ms"
                    )
                self._cond.wait(left)

    def _finish(self, iteration: int) -> None:
        with self._cond:
            self._done[iteration] = 1
            self._advance()
            self._cond.notify_all()


def ordered_execute(ctx, sequencer: OrderedSequencer, iteration: int, body: Callable[[], Any]) -> Any:
    """Run ``body`` once iteration ``iteration`` is the next in loop order."""
    sequencer._claim(iteration, getattr(ctx, "current_chunk", None))
    t0 = now()
    sequencer._wait_turn(iteration)
    t1 = now()
    try:
        result = body()
    finally:
        t2 = now()
        sequencer._finish(iteration)
        desc = _descriptor(ctx, "ordered", sequencer.label)
        if desc is not None:
            record_event(ctx, desc, "enter_wait_s", t1 - t0)
            record_event(ctx, desc, "body_s", t2 - t1)
            record_event(ctx, desc, "mgmt_s", now() - t2)
            record_entry(ctx, desc)
    return result
