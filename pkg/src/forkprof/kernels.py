"""Matrix-multiplication workloads and synthetic overhead scenarios.

Two parallel variants compute the same product:

* ``naive`` keeps one region for loading and re-enters a second region for
  every output column, walks memory column by column and places redundant
  explicit barriers around the work-shared loops.
* ``optimized`` uses one enclosing region, three row-wise work-shared loops
  and no explicit barrier; implicit barriers are elided where no later loop
  depends on them.
"""

from __future__ import annotations

import hashlib
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ForkprofError, InvalidArgument
from .profiler import Profiler, ProfileReport, now
from .runtime import Pool, parallel_region
from .sync import barrier, critical
from .worksharing import ScheduleSpec, parallel_for

VARIANTS = ("naive", "optimized")
FILL_HIGH = 16
_CHECKSUM_SAMPLES = 64


class CorrectnessError(ForkprofError):
    """A parallel product disagreed with the serial oracle."""


@dataclass(eq=False)
class Matrix:
    """Dense row-major matrix of float64 values."""

    rows: int
    cols: int
    elements: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise InvalidArgument(f"matrix dimensions must be positive, got {self.rows}x{self.cols}")
        self.elements = np.ascontiguousarray(self.elements, dtype=np.float64).reshape(-1)
        if self.elements.size != self.rows * self.cols:
            raise InvalidArgument(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} elements, "
                f"got {self.elements.size}"
            )

    @classmethod
    def zeros(cls, rows: int, cols: int) -> Matrix:
        return cls(rows, cols, np.zeros(rows * cols))

    @classmethod
    def identity(cls, n: int) -> Matrix:
        return cls(n, n, np.eye(n))

    @classmethod
    def from_rows(cls, rows) -> Matrix:
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidArgument("from_rows expects a 2-D nested sequence")
        return cls(arr.shape[0], arr.shape[1], arr)

    @classmethod
    def random_integers(cls, rows: int, cols: int, rng: np.random.Generator) -> Matrix:
        """Integer-valued entries in ``[0, 16)`` so products are exact in float64."""
        return cls(rows, cols, rng.integers(0, FILL_HIGH, rows * cols).astype(np.float64))

    def grid(self) -> np.ndarray:
        return self.elements.reshape(self.rows, self.cols)

    def tolist(self) -> list[list[float]]:
        return self.grid().tolist()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and bool(np.array_equal(self.elements, other.elements))
        )


def _check_conformable(a: Matrix, b: Matrix) -> None:
    if a.cols != b.rows:
        raise InvalidArgument(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")


def matmul_serial(a: Matrix, b: Matrix) -> Matrix:
    """Reference product; accumulates ``C[i, :] += A[i, k] * B[k, :]`` for k in order."""
    _check_conformable(a, b)
    A, B = a.grid(), b.grid()
    C = np.zeros((a.rows, b.cols))
    for i in range(a.rows):
        row = C[i]
        for k in range(a.cols):
            row += A[i, k] * B[k]
    return Matrix(a.rows, b.cols, C)


def matmul_naive_parallel(
    a: Matrix,
    b: Matrix,
    pool: Pool,
    threads: int,
    schedule: ScheduleSpec = ScheduleSpec(),
) -> tuple[Matrix, ProfileReport]:
    _check_conformable(a, b)
    prof = Profiler()
    rows, inner, cols = a.rows, a.cols, b.cols
    src_a, src_b = a.grid(), b.grid()
    A = np.empty((rows, inner))
    B = np.empty((inner, cols))
    C = np.empty((rows, cols))

    def load_a(ctx, chunk):
        for j in chunk:
            A[:, j] = src_a[:, j]

    def load_b(ctx, chunk):
        for j in chunk:
            B[:, j] = src_b[:, j]

    def zero_c(ctx, chunk):
        for j in chunk:
            C[:, j] = 0.0

    def setup(ctx):
        parallel_for(ctx, inner, schedule, load_a, label="load-a")
        parallel_for(ctx, cols, schedule, load_b, label="load-b")
        parallel_for(ctx, cols, schedule, zero_c, label="zero-c")
        barrier(ctx, "init-done")

    parallel_region(pool, threads, "naive-init", setup, profiler=prof)

    for j in range(cols):
        column = B[:, j]

        def multiply(ctx, chunk, j=j, column=column):
            for i in chunk:
                C[i, j] += A[i] @ column

        def compute(ctx, multiply=multiply):
            barrier(ctx, "column-start")
            parallel_for(ctx, rows, schedule, multiply, label="multiply-column")
            barrier(ctx, "column-done")

        parallel_region(pool, threads, "naive-compute", compute, profiler=prof)

    prof.stop()
    return Matrix(rows, cols, C), prof.report(team_size=threads)


def matmul_optimized_parallel(
    a: Matrix,
    b: Matrix,
    pool: Pool,
    threads: int,
    schedule: ScheduleSpec = ScheduleSpec(),
) -> tuple[Matrix, ProfileReport]:
    _check_conformable(a, b)
    prof = Profiler()
    rows, inner, cols = a.rows, a.cols, b.cols
    src_a, src_b = a.grid(), b.grid()
    A = np.empty((rows, inner))
    B = np.empty((inner, cols))
    C = np.empty((rows, cols))

    def load_a(ctx, chunk):
        A[chunk.start:chunk.end] = src_a[chunk.start:chunk.end]

    def load_b(ctx, chunk):
        B[chunk.start:chunk.end] = src_b[chunk.start:chunk.end]

    def multiply(ctx, chunk):
        # i-k-j: each output row is built from whole contiguous rows of B.
        for i in chunk:
            np.matmul(A[i], B, out=C[i])

    def body(ctx):
        parallel_for(ctx, rows, schedule, load_a, nowait=True, label="load-a")
        # The multiply reads every row of A and B, so this barrier stays.
        parallel_for(ctx, inner, schedule, load_b, label="load-b")
        parallel_for(ctx, rows, schedule, multiply, nowait=True, label="multiply-rows")

    parallel_region(pool, threads, "optimized-mm", body, profiler=prof)
    prof.stop()
    return Matrix(rows, cols, C), prof.report(team_size=threads)


KERNELS = {"naive": matmul_naive_parallel, "optimized": matmul_optimized_parallel}


def spin(seconds: float) -> None:
    """Busy-wait for ``seconds`` of wall time, yielding the interpreter lock as it goes."""
    deadline = now() + seconds
    while now() < deadline:
        time.sleep(0)


def skewed_workload(
    pool: Pool,
    threads: int,
    per_thread_busy_ms,
    profiler: Profiler | None = None,
) -> ProfileReport:
    """Thread t busy-works ``per_thread_busy_ms[t]`` then meets the loop's exit barrier."""
    busy = [float(ms) for ms in per_thread_busy_ms]
    if len(busy) != threads:
        raise InvalidArgument(f"{len(busy)} busy times given for {threads} threads")
    if any(ms < 0 for ms in busy):
        raise InvalidArgument("busy times must be >= 0")
    own = profiler is None
    prof = Profiler() if own else profiler

    def work(ctx, chunk):
        for t in chunk:
            spin(busy[t] / 1000.0)

    def body(ctx):
        parallel_for(ctx, threads, ScheduleSpec("static"), work, label="uneven-load")

    parallel_region(pool, threads, "skewed", body, profiler=prof)
    if own:
        prof.stop()
    return prof.report(team_size=threads)


def critical_contention(pool: Pool, threads: int, hold_ms: float, profiler: Profiler) -> None:
    """Every thread holds one critical section for ``hold_ms``."""

    def body(ctx):
        critical(ctx, "demo-lock", lambda: time.sleep(hold_ms / 1000.0))

    parallel_region(pool, threads, "critical-contention", body, profiler=profiler)


def barrier_stagger(pool: Pool, threads: int, step_ms: float, profiler: Profiler) -> None:
    """A one-iteration loop (idle peers) followed by staggered arrival at a barrier."""

    def serial_part(ctx, chunk):
        time.sleep(step_ms / 1000.0)

    def body(ctx):
        parallel_for(ctx, 1, ScheduleSpec("static"), serial_part, label="single-iteration")
        time.sleep(step_ms * ctx.thread_id / 1000.0)
        barrier(ctx, "staggered")

    parallel_region(pool, threads, "explicit-barrier", body, profiler=profiler)


def checksum(m: Matrix) -> str:
    """Exact element sum plus a hash of values at fixed sampled positions."""
    flat = m.elements
    size = flat.size
    h = hashlib.blake2b(digest_size=16)
    h.update(f"{m.rows}x{m.cols}:{math.fsum(flat)!r}".encode())
    for k in range(_CHECKSUM_SAMPLES):
        idx = k * size // _CHECKSUM_SAMPLES
        h.update(f"{idx}:{flat[idx]!r};".encode())
    return h.hexdigest()


@dataclass
class BenchConfig:
    n: int
    threads: int
    schedule: ScheduleSpec = ScheduleSpec()
    variant: str = "optimized"
    trials: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidArgument(f"matrix size must be >= 1, got {self.n}")
        if self.threads < 1:
            raise InvalidArgument(f"threads must be >= 1, got {self.threads}")
        if self.trials < 1:
            raise InvalidArgument(f"trials must be >= 1, got {self.trials}")
        if self.variant not in VARIANTS:
            raise InvalidArgument(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class BenchResult:
    per_trial_wall_s: list[float]
    best_wall_s: float
    mean_wall_s: float
    checksum: str
    profile: ProfileReport
    pool_setup_s: float = 0.0


def bench_inputs(n: int, seed: int) -> tuple[Matrix, Matrix]:
    rng = np.random.default_rng(seed)
    return Matrix.random_integers(n, n, rng), Matrix.random_integers(n, n, rng)


def run_benchmark(config: BenchConfig, pool: Pool) -> BenchResult:
    a, b = bench_inputs(config.n, config.seed)
    expected = checksum(matmul_serial(a, b))
    kernel = KERNELS[config.variant]
    walls = []
    profile = None
    for trial in range(config.trials):
        t0 = now()
        product, profile = kernel(a, b, pool, config.threads, config.schedule)
        walls.append(now() - t0)
        got = checksum(product)
        if got != expected:
            raise CorrectnessError(
                f"trial {trial + 1}: {config.variant} product checksum {got} != oracle {expected}"
            )
    return BenchResult(
        per_trial_wall_s=walls,
        best_wall_s=min(walls),
        mean_wall_s=statistics.fmean(walls),
        checksum=expected,
        profile=profile,
        pool_setup_s=pool.setup_s,
    )
