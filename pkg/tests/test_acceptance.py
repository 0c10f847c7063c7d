"""Exit criteria.  Each test is one criterion; the run ends with a
PASS/FAIL line per criterion (see conftest)."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from approxpart.affinity import compute_affinity
from approxpart.cachesim import CacheConfig, simulate
from approxpart.cli import main
from approxpart.dram import RegionConfig, TimingParams, effective_latency, inject_errors, latency_reduction
from approxpart.partition import (
    PartitionPlan,
    PlanGroup,
    RegionPlacement,
    compare_partitioning,
    default_plan,
    split_layout,
    validate_plan,
)
from approxpart.structdsl import LP64, LP64_PACKED, classify, find_decl, layout, parse_decls, scalar_layout
from approxpart.trace import PatternSpec, Trace, gen_aos_trace

from conftest import COMPLEX_SRC, TREE_SRC, MCF_SRC
from oracles import brute_affinity, naive_lru

PADDED_SRC = """\
struct tree_node {
  int id;
  struct tree_node *r;
  struct tree_node *l;
  double score;
  char pad[32];
};
"""


def _struct(src, name=None, abi=LP64):
    decls = parse_decls(src)
    decl = find_decl(decls, name) if name else decls[-1]
    return layout(decl, abi)


@pytest.mark.acceptance(1)
def test_criteria_classifier_corpus(record_property):
    t0 = time.perf_counter()
    got = {
        "complex": classify(_struct(COMPLEX_SRC), True).as_tuple(),
        "double": classify(scalar_layout("double"), False).as_tuple(),
        "int64_t": classify(scalar_layout("int64_t"), False).as_tuple(),
        "float": classify(scalar_layout("float"), False).as_tuple(),
        "arc": classify(_struct(MCF_SRC, "arc"), True).as_tuple(),
        "tree_node": classify(_struct(TREE_SRC), True).as_tuple(),
    }
    elapsed = time.perf_counter() - t0
    assert got == {
        "complex": ("Y", "N", "Y"),
        "double": ("N", "NA", "NA"),
        "int64_t": ("N", "NA", "NA"),
        "float": ("N", "NA", "NA"),
        "arc": ("Y", "Y", "N"),
        "tree_node": ("Y", "Y", "Y"),
    }
    assert elapsed < 1.0
    record_property("detail", f"6/6 rows exact in {elapsed * 1000:.1f} ms")


@pytest.mark.acceptance(2)
def test_layout_exactness(record_property):
    arc = _struct(MCF_SRC, "arc")
    assert arc.offset_of("ident") == 0x18
    packed = _struct(TREE_SRC, abi=LP64_PACKED)
    plan = PartitionPlan(
        [PlanGroup("g1", ("id", "r", "l"), "a"), PlanGroup("g2", ("score",), "b")],
        {"a": RegionPlacement("a", 0x100000), "b": RegionPlacement("b", 0x200000)},
    )
    strides = [g.stride for g in split_layout(packed, plan, 1)]
    assert packed.total_size == 28 and strides == [20, 8]
    record_property("detail", "arc.ident @0x18, packed tree_node 20 + 8")


@pytest.mark.acceptance(3)
def test_splitting_doubles_misses(record_property):
    n = 65536
    t0 = time.perf_counter()
    lay = _struct(PADDED_SRC)
    assert lay.total_size == 64
    trace = gen_aos_trace(lay, PatternSpec(("id", "score"), n, "random", seed=2021), base=0x10000000)
    cfg = CacheConfig.from_capacity(32 * 1024, 64, 8)
    # pad must be covered by some group; it is never accessed
    plan = default_plan(lay, [["id", "r", "l"], ["score"], ["pad"]], n, start=0x20000000, gap=cfg.capacity)
    assert validate_plan(plan, lay, element_count=n) == []
    cmp = compare_partitioning(trace, lay, plan, cfg)
    elapsed = time.perf_counter() - t0
    per_element = cmp.misses_before / n
    assert abs(per_element - 1.0) <= 0.1
    assert abs(cmp.ratio - 2.0) <= 0.2
    assert elapsed < 10.0
    record_property(
        "detail",
        f"before {cmp.misses_before} after {cmp.misses_after} ratio {cmp.ratio:.4f} in {elapsed:.2f} s",
    )


def _identity_corpus():
    tree = _struct(TREE_SRC)
    packed = _struct(TREE_SRC, abi=LP64_PACKED)
    arc = _struct(MCF_SRC, "arc")
    cplx = _struct(COMPLEX_SRC)
    padded = _struct(PADDED_SRC)
    corpus = []
    for lay, members in [
        (tree, ("id", "score")),
        (tree, ("score",)),
        (packed, ("id", "r", "l", "score")),
        (arc, ("ident", "cost", "nextout")),
        (cplx, ("real", "imag")),
        (padded, ("id", "score", "pad")),
    ]:
        for order in ("sequential", "random", "permutation_chase"):
            corpus.append((lay, gen_aos_trace(lay, PatternSpec(members, 3000, order, 5), 0x400000)))
    return corpus


@pytest.mark.acceptance(4)
def test_identity_split_invariance(record_property):
    corpus = _identity_corpus()
    cfg = CacheConfig(64, 64, 8)
    for lay, trace in corpus:
        plan = PartitionPlan([PlanGroup("all", tuple(lay.paths), "r")], {"r": RegionPlacement("r", 0x400000)})
        cmp = compare_partitioning(trace, lay, plan, cfg)
        assert cmp.ratio == 1.0
        assert cmp.misses_before == cmp.misses_after
    record_property("detail", f"ratio 1.0 exactly on {len(corpus)} traces")


@pytest.mark.acceptance(5)
def test_cache_simulator_oracle_equivalence(record_property):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    total = 0
    for case in range(1000):
        n = int(rng.integers(1, 10_001))
        line = int(rng.choice([16, 32, 64]))
        sets = int(rng.choice([1, 2, 4, 8, 16, 32, 64]))
        ways = int(rng.integers(1, 5))
        footprint = int(rng.integers(1, 4 * sets * ways + 2)) * line
        instr = rng.integers(1, 9, n)
        addr = rng.integers(0, footprint, n)
        size = rng.choice([1, 2, 4, 8, 16], n)
        rows = list(zip(instr.tolist(), addr.tolist(), size.tolist()))
        trace = Trace.from_accesses((0, i, "R", a, s, None) for i, a, s in rows)
        stats = simulate(trace, CacheConfig(line, sets, ways))
        misses, per_instr, lookups = naive_lru(rows, line, sets, ways)
        assert stats.total_misses == misses, f"case {case}"
        assert stats.per_instr_misses == per_instr, f"case {case}"
        assert stats.total_accesses == lookups, f"case {case}"
        total += n
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    record_property("detail", f"1000 traces, {total} accesses, exact match in {elapsed:.1f} s")


@pytest.mark.acceptance(6)
def test_affinity_oracle_equivalence(record_property):
    rng = np.random.default_rng(6)
    names = ["a", "b", "c", "d", "e", "f"]
    for case in range(1000):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(1, 201))
        seq = [names[x] for x in rng.integers(0, k, n)]
        trace = Trace.from_accesses((0, 1, "R", 8 * p, 8, ("s", m)) for p, m in enumerate(seq))
        prev = None
        for thr in range(6):
            mat = compute_affinity(trace, "s", thr)
            got = {(u, v): mat[u, v] for u in mat.members for v in mat.members if mat[u, v]}
            assert got == brute_affinity(seq, thr), f"case {case} threshold {thr}"
            if prev is not None:
                assert (mat.counts >= prev).all(), f"case {case} threshold {thr} not monotone"
            prev = mat.counts
    record_property("detail", "1000 traces x thresholds 0..5, exact and monotone")


@pytest.mark.acceptance(7)
def test_error_injection_statistics(record_property):
    n_bytes, p, seeds = 4096, 1e-3, 1000
    region = RegionConfig("approx", 0, n_bytes, timing=TimingParams(7.5, 128.0), bit_error_rate=p)
    counts = np.array([len(inject_errors(bytes(n_bytes), region, s)[1]) for s in range(seeds)])
    n_bits = n_bytes * 8
    mean, var = n_bits * p, n_bits * p * (1 - p)
    sigma_of_mean = math.sqrt(var / seeds)
    z = (counts.mean() - mean) / sigma_of_mean
    assert abs(z) <= 3.0
    assert abs(counts.var(ddof=1) / var - 1) <= 0.2

    data = bytes(range(256)) * 16
    zero = RegionConfig("exact", 0, n_bytes)
    out, flips = inject_errors(data, zero, 99)
    assert out == data and len(flips) == 0

    a, fa = inject_errors(data, region, 1234)
    b, fb = inject_errors(data, region, 1234)
    assert a == b and np.array_equal(fa, fb)
    record_property("detail", f"mean {counts.mean():.3f} vs {mean:.3f} (z = {z:+.2f}), p=0 identity, seed reproducible")


@pytest.mark.acceptance(8)
def test_latency_model(record_property):
    nominal = TimingParams(trcd_ns=12.5, tcas_ns=12.5)
    relaxed = TimingParams(trcd_ns=7.5, tcas_ns=12.5)
    assert effective_latency(nominal) == 25.0 and effective_latency(relaxed) == 20.0
    assert (effective_latency(nominal) - effective_latency(relaxed)) / effective_latency(nominal) == 0.2
    assert latency_reduction(relaxed) == pytest.approx(0.2, abs=1e-15)
    f64 = TimingParams(tref_ms=64.0, trfc_total_ms=1.5).refresh_overhead
    f128 = TimingParams(tref_ms=128.0, trfc_total_ms=1.5).refresh_overhead
    assert f128 * 2 == f64
    record_property("detail", "25 ns -> 20 ns (20.0%), f halves when tREF doubles")


@pytest.mark.acceptance(9)
def test_granularity_enforcement(record_property):
    lay = _struct(TREE_SRC)
    rng = np.random.default_rng(9)
    checked = 0
    for row in (4096, 8192):
        for _ in range(500):
            base = int(rng.integers(0, 1 << 30))
            size = int(rng.integers(1, 1 << 20))
            if rng.random() < 0.3:
                base -= base % row
            if rng.random() < 0.3:
                size = max(row, size - size % row)
            plan = PartitionPlan([PlanGroup("all", tuple(lay.paths), "r")], {"r": RegionPlacement("r", base, 0.0, size)})
            kinds = {v.kind for v in validate_plan(plan, lay, row_size=row)}
            aligned = base % row == 0 and size % row == 0
            assert ("misaligned" in kinds) == (not aligned)
            checked += 1
    plan = PartitionPlan([PlanGroup("all", tuple(lay.paths), "r")], {"r": RegionPlacement("r", 0x1010)})
    assert [v.kind for v in validate_plan(plan, lay)] == ["misaligned"]
    record_property("detail", f"{checked} random placements, every misaligned base or size rejected")


@pytest.mark.acceptance(10)
def test_end_to_end_determinism(record_property, tmp_path, fixtures_dir):
    import io

    trace = tmp_path / "tree.trace"
    assert main([
        "gen-trace", "--decls", str(fixtures_dir / "tree_node.h"), "--type", "tree_node", "--members", "id,score",
        "--count", "4096", "--order", "random", "--seed", "11", "-o", str(trace),
    ], io.StringIO(), io.StringIO()) == 0
    argv = [
        "analyze", "--decls", str(fixtures_dir / "tree_node.h"), "--trace", str(trace), "--threshold", "2",
        "--plan", str(fixtures_dir / "tree_node_plan.txt"), "--regions", str(fixtures_dir / "regions.cfg"),
        "--seed", "11", "--format", "json",
    ]
    runs = [
        subprocess.run([sys.executable, "-m", "approxpart", *argv], capture_output=True, check=True).stdout
        for _ in range(2)
    ]
    assert runs[0] == runs[1]
    report = json.loads(runs[0])
    assert report["criteria"] == {"c1": "Y", "c2": "Y", "c3": "Y"}
    record_property("detail", f"two processes, {len(runs[0])} identical bytes")
