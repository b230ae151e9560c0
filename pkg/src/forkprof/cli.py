"""Command-line front end: ``bench``, ``demo-overheads`` and ``compare``.

Exit codes: 0 success, 1 correctness failure, 2 usage or I/O error,
3 when ``compare`` finds the second report did not reduce overheads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Sequence

from . import kernels
from .errors import ScheduleParseError
from .profiler import Profiler, ProfileReport
from .report import FORMATS, ReportFormatError, emit_report, load_report
from .runtime import create_pool
from .sync import set_watchdog
from .worksharing import SCHEDULE_ENV, ScheduleSpec, parse_schedule, resolve_runtime_schedule

EXIT_OK = 0
EXIT_WRONG_ANSWER = 1
EXIT_USAGE = 2
EXIT_NOT_IMPROVED = 3


class _UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _schedule_flag(text: str) -> tuple[str, int | None]:
    kind, _, chunk = text.partition(",")
    try:
        if kind.strip().lower() == "runtime":
            # The chunk, if any, only applies when the environment is unset.
            fallback = parse_schedule("static," + chunk if chunk else "static")
            return ("runtime", fallback.chunk)
        spec = parse_schedule(text)
    except ScheduleParseError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return (spec.kind, spec.chunk)


def _skew_flag(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"skew must be comma-separated milliseconds, got {text!r}") from None
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("skew values must be >= 0")
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forkprof", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, default_threads: int) -> None:
        p.add_argument("--threads", type=_positive_int, default=default_threads)
        p.add_argument("--report", choices=FORMATS, default="text")
        p.add_argument("--out", type=Path, help="write the report here instead of stdout")
        p.add_argument("--watchdog-ms", type=_positive_int, help="abort blocked waits after this long")

    bench = sub.add_parser("bench", help="time a matrix-multiplication variant")
    bench.add_argument("--size", type=_positive_int, required=True)
    bench.add_argument("--variant", choices=kernels.VARIANTS, default="optimized")
    bench.add_argument("--schedule", type=_schedule_flag, default=("static", None))
    bench.add_argument("--trials", type=_positive_int, default=3)
    bench.add_argument("--seed", type=int, default=1)
    common(bench, 2)

    demo = sub.add_parser("demo-overheads", help="run scenarios that exhibit each overhead category")
    demo.add_argument("--skew", type=_skew_flag, help="per-thread busy milliseconds")
    common(demo, 4)

    compare = sub.add_parser("compare", help="compare two JSON reports (before, after)")
    compare.add_argument("before", type=Path)
    compare.add_argument("after", type=Path)
    return parser


def _resolve_schedule(flag: tuple[str, int | None]) -> ScheduleSpec:
    kind, chunk = flag
    if kind != "runtime":
        return ScheduleSpec(kind, chunk)
    try:
        return resolve_runtime_schedule(os.environ.get(SCHEDULE_ENV), ScheduleSpec("static", chunk))
    except ScheduleParseError as exc:
        raise _UsageError(f"{SCHEDULE_ENV}: {exc}") from None


def _write_report(report: ProfileReport, fmt: str, out: Path | None) -> None:
    data = emit_report(report, fmt)
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    try:
        out.write_bytes(data)
    except OSError as exc:
        raise _UsageError(f"cannot write {out}: {exc.strerror or exc}") from None


def cmd_bench(args: argparse.Namespace) -> int:
    schedule = _resolve_schedule(args.schedule)
    config = kernels.BenchConfig(
        n=args.size,
        threads=args.threads,
        schedule=schedule,
        variant=args.variant,
        trials=args.trials,
        seed=args.seed,
    )
    with create_pool(max(1, config.threads - 1)) as pool:
        try:
            result = kernels.run_benchmark(config, pool)
        except kernels.CorrectnessError as exc:
            print(f"forkprof: correctness failure: {exc}", file=sys.stderr)
            return EXIT_WRONG_ANSWER
    err = sys.stderr
    print(
        f"bench variant={config.variant} n={config.n} threads={config.threads} "
        f"schedule={schedule} seed={config.seed}",
        file=err,
    )
    for k, wall in enumerate(result.per_trial_wall_s, 1):
        print(f"trial {k}: {wall:.6f} s", file=err)
    print(
        f"best {result.best_wall_s:.6f} s  mean {result.mean_wall_s:.6f} s  "
        f"checksum {result.checksum} (verified)  pool setup {result.pool_setup_s * 1000:.3f} ms",
        file=err,
    )
    _write_report(result.profile, args.report, args.out)
    return EXIT_OK


def cmd_demo_overheads(args: argparse.Namespace) -> int:
    threads = args.threads
    skew = args.skew if args.skew is not None else [40.0 * t for t in range(threads)]
    if len(skew) != threads:
        raise _UsageError(f"--skew has {len(skew)} values but --threads is {threads}")
    prof = Profiler()
    with create_pool(max(1, threads - 1)) as pool:
        kernels.skewed_workload(pool, threads, skew, profiler=prof)
        kernels.critical_contention(pool, threads, hold_ms=10.0, profiler=prof)
        kernels.barrier_stagger(pool, threads, step_ms=10.0, profiler=prof)
    prof.stop()
    report = prof.report(team_size=threads)
    t = report.totals
    print(
        f"demo threads={threads} skew={','.join(f'{v:g}' for v in skew)}  "
        f"synch {t.synch_s:.4f}s imbal {t.imbal_s:.4f}s limpar {t.limpar_s:.4f}s mgmt {t.mgmt_s:.4f}s",
        file=sys.stderr,
    )
    _write_report(report, args.report, args.out)
    return EXIT_OK


def _compare_rows(a: ProfileReport, b: ProfileReport):
    yield "program wall (s)", a.program_wall_s, b.program_wall_s
    yield "parallel coverage (%)", a.parallel_coverage * 100, b.parallel_coverage * 100
    yield "parallel regions", a.census.parallel_regions, b.census.parallel_regions
    yield "parallel loops", a.census.parallel_loops, b.census.parallel_loops
    yield "barriers", a.census.barriers, b.census.barriers
    for cat in ("ovhds", "synch", "imbal", "limpar", "mgmt"):
        yield f"{cat} (s)", getattr(a.totals, f"{cat}_s"), getattr(b.totals, f"{cat}_s")
        yield f"{cat} (%)", getattr(a.totals, f"{cat}_pct"), getattr(b.totals, f"{cat}_pct")


def cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for path in (args.before, args.after):
        try:
            reports.append(load_report(path))
        except (OSError, ReportFormatError) as exc:
            detail = exc.strerror if isinstance(exc, OSError) and exc.strerror else exc
            raise _UsageError(f"{path}: {detail}") from None
    before, after = reports
    print(f"{'metric':<24}{'before':>14}{'after':>14}{'delta':>14}")
    for name, x, y in _compare_rows(before, after):
        if isinstance(x, int) and isinstance(y, int):
            print(f"{name:<24}{x:>14d}{y:>14d}{y - x:>+14d}")
        else:
            print(f"{name:<24}{x:>14.4f}{y:>14.4f}{y - x:>+14.4f}")
    improved = after.totals.ovhds_pct <= before.totals.ovhds_pct
    print("verdict: " + ("overheads not increased" if improved else "overheads increased"))
    return EXIT_OK if improved else EXIT_NOT_IMPROVED


COMMANDS = {"bench": cmd_bench, "demo-overheads": cmd_demo_overheads, "compare": cmd_compare}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if getattr(args, "watchdog_ms", None):
        set_watchdog(args.watchdog_ms / 1000.0)
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"forkprof: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        set_watchdog(None)


if __name__ == "__main__":
    sys.exit(main())
