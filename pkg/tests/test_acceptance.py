"""Exit criteria of the build, each checked at its stated tolerance.

Every test prints one ``[PASS]``/``[FAIL]`` line in the terminal summary
(see ``conftest.py``).
"""

from __future__ import annotations

import random
import time
from pathlib import Path

import numpy as np
import pytest
from oracles import drain, guided_oracle, round_robin_oracle, triple_loop

from forkprof import (
    Profiler,
    ScheduleSpec,
    WorkshareState,
    barrier,
    classify_overheads,
    cli,
    create_pool,
    critical,
    emit_report,
    guided_next,
    kernels,
    ordered_execute,
    parallel_for,
    parallel_region,
    parse_report,
    static_assignment,
)
from forkprof.kernels import KERNELS, BenchConfig, bench_inputs, matmul_serial, run_benchmark

pytestmark = pytest.mark.acceptance

N_RANGE = range(0, 201)
P_RANGE = range(1, 9)
CHUNKS = (None, 1, 2, 3, 4, 5, 6, 7)
KINDS = ("static", "dynamic", "guided")


def test_c01_schedule_partition(pool, criterion):
    c = criterion("C01 schedule partition: every iteration delivered exactly once")
    t0 = time.perf_counter()
    grid = [(n, chunk, kind) for n in N_RANGE for chunk in CHUNKS for kind in KINDS]
    failures = []
    checked = 0
    for p in P_RANGE:
        delivered = [[[] for _ in range(p)] for _ in grid]

        def body(ctx, delivered=delivered):
            tid = ctx.thread_id
            for k, (n, chunk, kind) in enumerate(grid):
                sink = delivered[k][tid]
                parallel_for(ctx, n, ScheduleSpec(kind, chunk), lambda c, ch, sink=sink: sink.extend(ch),
                             label="grid")

        parallel_region(pool, p, "partition-grid", body, profiler=Profiler())
        for k, (n, chunk, kind) in enumerate(grid):
            got = sorted(i for per_thread in delivered[k] for i in per_thread)
            checked += 1
            if got != list(range(n)):
                failures.append((n, p, chunk, kind))
    elapsed = time.perf_counter() - t0
    c.detail = f"{checked} configurations, {len(failures)} failures, {elapsed:.1f}s"
    assert failures == []
    assert checked == len(N_RANGE) * len(P_RANGE) * len(CHUNKS) * len(KINDS)
    assert elapsed < 60


def test_c02_static_round_robin_oracle(criterion):
    c = criterion("C02 static assignment equals brute-force round-robin")
    mismatches = checked = 0
    for n in N_RANGE:
        for p in P_RANGE:
            for chunk in CHUNKS:
                for tid in range(p):
                    got = [(r.start, r.end) for r in static_assignment(n, p, tid, chunk)]
                    checked += 1
                    mismatches += got != round_robin_oracle(n, p, tid, chunk)
    c.detail = f"{checked} (n, p, chunk, tid) cases, {mismatches} mismatches"
    assert mismatches == 0


def test_c03_guided_decrease(criterion):
    c = criterion("C03 guided chunks non-increasing to the floor, summing to n")
    rng = random.Random(20240521)
    bad = []
    for _ in range(500):
        n, p, floor = rng.randint(0, 10**5), rng.randint(1, 8), rng.randint(1, 8)
        sizes = [len(ch) for ch in drain(WorkshareState(n, p, ScheduleSpec("guided", floor)), guided_next)]
        ok = (
            sum(sizes) == n
            and all(a >= b for a, b in zip(sizes, sizes[1:]))
            and all(s >= floor for s in sizes[:-1])
            and sizes == guided_oracle(n, p, floor)
        )
        if not ok:
            bad.append((n, p, floor))
    c.detail = f"500 random sequences, {len(bad)} violations"
    assert bad == []


def test_c04_mutual_exclusion_and_barrier_safety(pool, criterion):
    c = criterion("C04 critical exclusion and barrier generations under 4-thread stress")
    P, ENTRIES, GENERATIONS = 4, 10**5, 10**3
    occupancy = [0]
    entered = [0]
    violations = []
    arrivals = np.zeros((GENERATIONS, P), dtype=np.int8)
    prof = Profiler()

    def guarded():
        occupancy[0] += 1
        if occupancy[0] != 1:
            violations.append(("occupancy", occupancy[0]))
        entered[0] += 1
        occupancy[0] -= 1

    def body(ctx):
        tid = ctx.thread_id
        for _ in range(ENTRIES // P):
            critical(ctx, "stress", guarded)
        for g in range(GENERATIONS):
            # Nobody can be a generation ahead while this thread has not arrived.
            if g + 1 < GENERATIONS and arrivals[g + 1].any():
                violations.append(("overrun", g, tid))
            arrivals[g, tid] = 1
            barrier(ctx, "stress-barrier")
            if not arrivals[g].all():
                violations.append(("early release", g, tid))

    parallel_region(pool, P, "stress", body, profiler=prof)
    rep = prof.report()
    entries = sum(t.entry_count for t in rep.region("critical", "stress").per_thread)
    passes = [t.entry_count for t in rep.region("barrier", "stress-barrier").per_thread]
    c.detail = f"{entered[0]} critical entries, {GENERATIONS} generations, {len(violations)} violations"
    assert violations == []
    assert entered[0] == entries == ENTRIES
    assert passes == [GENERATIONS] * P


def test_c05_ordered_linearity(pool, criterion):
    c = criterion("C05 ordered entries follow iteration order")
    order = []

    def work(ctx, chunk):
        for i in chunk:
            ordered_execute(ctx, ctx.sequencer, i, lambda i=i: order.append(i))

    def body(ctx):
        parallel_for(ctx, 1000, ScheduleSpec("dynamic", 1), work, ordered=True, label="ordered-1000")

    parallel_region(pool, 4, "ordered", body, profiler=Profiler())
    c.detail = f"{len(order)} entries, in order: {order == list(range(1000))}"
    assert order == list(range(1000))


@pytest.mark.run_last
def test_c06_overhead_identity(pool, criterion):
    c = criterion("C06 ovhds == synch + imbal + limpar + mgmt on every breakdown")
    from conftest import BREAKDOWNS_CHECKED, IDENTITY_VIOLATIONS

    # Fresh breakdowns from every scenario, parsed back from JSON as well.
    prof = Profiler()
    kernels.skewed_workload(pool, 3, [0, 7, 13], profiler=prof)
    kernels.critical_contention(pool, 3, 2.0, prof)
    kernels.barrier_stagger(pool, 3, 2.0, prof)
    reports = [prof.report(), *(KERNELS[v](*bench_inputs(24, 3), pool, 3)[1] for v in KERNELS)]
    local = 0
    for rep in reports:
        for b in [*rep.breakdowns(), *parse_report(emit_report(rep, "json")).breakdowns()]:
            local += 1
            assert b.identity_holds(), b
        for r in rep.regions:
            assert classify_overheads(r).identity_holds()
    c.detail = f"{BREAKDOWNS_CHECKED[0]} breakdowns audited suite-wide, {len(IDENTITY_VIOLATIONS)} violations"
    assert IDENTITY_VIOLATIONS == []
    assert BREAKDOWNS_CHECKED[0] >= local > 0


@pytest.mark.parametrize(
    "busy, expected_s",
    [([0, 100], 0.100), ([0, 0, 0, 120], 0.360)],
    ids=["P2", "P4"],
)
def test_c07_imbalance_quantification(pool, criterion, busy, expected_s):
    c = criterion(f"C07 imbalance for busy={busy} ms within 25% of {expected_s * 1000:.0f} ms")
    rep = kernels.skewed_workload(pool, len(busy), busy)
    got = rep.totals.imbal_s
    c.detail = f"imbal_s={got * 1000:.1f} ms"
    assert abs(got - expected_s) <= 0.25 * expected_s


def test_c08_census(pool, criterion):
    c = criterion("C08 census naive (2,4,3) and optimized (1,3,0)")
    a, b = bench_inputs(32, 8)
    naive = KERNELS["naive"](a, b, pool, 2)[1].census.as_tuple()
    opt = KERNELS["optimized"](a, b, pool, 2)[1].census.as_tuple()
    c.detail = f"naive {naive}, optimized {opt}"
    assert naive == (2, 4, 3)
    assert opt == (1, 3, 0)


def test_c09_directional_speedup(criterion):
    c = criterion("C09 optimized faster than naive at n=512, 2 threads (best of 3)")
    with create_pool(1) as pool:
        naive = run_benchmark(BenchConfig(n=512, threads=2, variant="naive", trials=3, seed=1), pool)
        opt = run_benchmark(BenchConfig(n=512, threads=2, variant="optimized", trials=3, seed=1), pool)
    ratio = naive.best_wall_s / opt.best_wall_s
    c.detail = f"naive {naive.best_wall_s:.3f}s, optimized {opt.best_wall_s:.4f}s, ratio {ratio:.1f}x"
    assert opt.best_wall_s < naive.best_wall_s
    assert ratio >= 1.5


def test_c10_correctness_gate(pool, criterion):
    c = criterion("C10 both variants equal the serial oracle on the correctness grid")
    sizes = [1, 2, 3, 4, 5, 6, 7, 8, 16, 64, 128]
    schedules = [ScheduleSpec("static"), ScheduleSpec("static", 3), ScheduleSpec("dynamic"),
                 ScheduleSpec("dynamic", 4), ScheduleSpec("guided"), ScheduleSpec("guided", 2)]
    runs = mismatches = 0
    for n in sizes:
        a, b = bench_inputs(n, seed=n)
        expected = matmul_serial(a, b)
        if n <= 64:
            assert expected.tolist() == triple_loop(a.tolist(), b.tolist())
        for threads in (1, 2, 4, 8):
            for spec in schedules:
                for variant, kernel in KERNELS.items():
                    got, _ = kernel(a, b, pool, threads, spec)
                    runs += 1
                    mismatches += got != expected
    c.detail = f"{runs} runs, {mismatches} mismatches"
    assert mismatches == 0


def test_c11_nowait_elision(pool, criterion):
    c = criterion("C11 nowait loops record exactly zero exit-barrier time")
    prof = Profiler()

    def work(ctx, chunk):
        time.sleep(0.0005 * ctx.thread_id)

    def body(ctx):
        for spec in (ScheduleSpec("static"), ScheduleSpec("dynamic", 1), ScheduleSpec("guided")):
            parallel_for(ctx, 24, spec, work, nowait=True, label=f"nowait-{spec}")

    parallel_region(pool, 4, "nowait", body, profiler=prof)
    loops = [r for r in prof.report().regions if r.descriptor.kind == "parallel-loop"]
    _, opt = KERNELS["optimized"](*bench_inputs(32, 2), pool, 4)
    loops += [opt.region("parallel-loop", "load-a"), opt.region("parallel-loop", "multiply-rows")]
    waits = [t.exit_barrier_s for r in loops for t in r.per_thread]
    c.detail = f"{len(loops)} loops, max exit-barrier wait {max(waits)!r}"
    assert len(loops) == 5
    assert all(w == 0.0 for w in waits)


def test_c12_report_round_trip_and_exit_codes(tmp_path: Path, criterion, capsys, monkeypatch):
    c = criterion("C12 JSON round trip, compare accepts bench output, exit codes 0/1/2/3")
    codes = {}
    naive, opt = tmp_path / "naive.json", tmp_path / "optimized.json"
    for variant, path in (("naive", naive), ("optimized", opt)):
        codes[f"bench {variant}"] = cli.main(["bench", "--size", "512", "--threads", "2", "--variant", variant,
                                              "--trials", "1", "--report", "json", "--out", str(path)])
    raw = naive.read_bytes()
    identical = emit_report(parse_report(raw), "json") == raw
    codes["compare improved"] = cli.main(["compare", str(naive), str(opt)])
    codes["compare regressed"] = cli.main(["compare", str(opt), str(naive)])
    codes["usage"] = cli.main(["bench", "--size", "0"])
    bad = tmp_path / "bad.json"
    bad.write_text("{\"team_size\": 1}")
    codes["compare malformed"] = cli.main(["compare", str(naive), str(bad)])

    orig = KERNELS["optimized"]

    def wrong(*args):
        m, rep = orig(*args)
        m.elements[0] += 1
        return m, rep

    monkeypatch.setitem(KERNELS, "optimized", wrong)
    codes["wrong answer"] = cli.main(["bench", "--size", "8", "--trials", "1"])
    capsys.readouterr()
    expected = {"bench naive": 0, "bench optimized": 0, "compare improved": 0, "compare regressed": 3,
                "usage": 2, "compare malformed": 2, "wrong answer": 1}
    c.detail = f"byte-identical={identical}, exit codes {codes}"
    assert identical
    assert codes == expected
