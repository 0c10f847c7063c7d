import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxpart.cachesim import (
    CacheConfig,
    NoTargetError,
    format_rate_share,
    simulate,
    target_data_type,
    target_instruction,
    top_share,
)
from approxpart.trace import Trace

from oracles import naive_lru


def trace_of(rows):
    """rows of (instr, addr, size[, label])"""
    return Trace.from_accesses(
        (0, r[0], "R", r[1], r[2], r[3] if len(r) > 3 else None) for r in rows
    )


def test_direct_mapped_conflict(backend):
    t = trace_of([(1, 0x0, 8), (2, 0x40, 8), (1, 0x0, 8)])
    s = simulate(t, CacheConfig(64, 1, 1), backend=backend)
    assert s.total_misses == 3
    assert s.per_instr_misses == {1: 2, 2: 1}


def test_two_ways_keep_both_lines(backend):
    t = trace_of([(1, 0x0, 8), (2, 0x40, 8), (1, 0x0, 8)])
    s = simulate(t, CacheConfig(64, 1, 2), backend=backend)
    assert s.total_misses == 2
    assert s.miss_counts.tolist() == [1, 1, 0]


def test_lru_not_fifo(backend):
    # A B A C A: with 2 ways LRU evicts B for C, so the last A hits
    t = trace_of([(1, 0x0, 1), (1, 0x40, 1), (1, 0x0, 1), (1, 0x80, 1), (1, 0x0, 1)])
    assert simulate(t, CacheConfig(64, 1, 2), backend=backend).miss_counts.tolist() == [1, 1, 0, 1, 0]


def test_straddling_access_counts_two_lookups(backend):
    t = trace_of([(5, 0x3C, 8, ("a", "x"))])
    s = simulate(t, CacheConfig(64, 4, 1), backend=backend)
    assert (s.total_accesses, s.total_misses) == (2, 2)
    assert s.per_instr_misses == {5: 2}
    assert s.per_label_misses == {("a", "x"): 2}


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1 << 16), min_size=1, max_size=300))
def test_compulsory_only_when_cache_is_large(addrs):
    t = trace_of([(1, a, 4) for a in addrs])
    cfg = CacheConfig(64, 2048, 2)  # 256 KiB > 64 KiB footprint, no conflicts
    lines = {x // 64 for a in addrs for x in (a, a + 3)}
    assert simulate(t, cfg).total_misses == len(lines)


def test_read_only_rates_separate():
    t = Trace.from_accesses([(0, 1, "R", 0, 4, None), (0, 2, "W", 64, 4, None), (0, 1, "R", 0, 4, None)])
    s = simulate(t, CacheConfig(64, 1, 2))
    assert (s.total_accesses, s.total_misses) == (3, 2)
    assert (s.read_accesses, s.read_misses) == (2, 1)
    assert s.has_writes


def test_config_validation():
    with pytest.raises(ValueError):
        CacheConfig(48, 4, 1)
    with pytest.raises(ValueError):
        CacheConfig(64, 3, 1)
    with pytest.raises(ValueError):
        CacheConfig(64, 4, 0)
    assert CacheConfig.from_capacity(32768, 64, 8) == CacheConfig(64, 64, 8)
    assert CacheConfig(64, 64, 8).capacity == 32768


@st.composite
def small_traces(draw):
    n = draw(st.integers(0, 200))
    rows = []
    for _ in range(n):
        rows.append((draw(st.integers(1, 5)), draw(st.integers(0, 4096)), draw(st.sampled_from([1, 4, 8, 16, 64]))))
    cfg = CacheConfig(draw(st.sampled_from([16, 32, 64])), draw(st.sampled_from([1, 2, 4, 8])), draw(st.integers(1, 4)))
    return rows, cfg


@settings(max_examples=150, deadline=None)
@given(small_traces())
def test_matches_naive_model(data):
    rows, cfg = data
    t = trace_of(rows)
    misses, per_instr, lookups = naive_lru(rows, cfg.line_size, cfg.sets, cfg.ways)
    for be in ("numba", "numpy"):
        s = simulate(t, cfg, backend=be)
        assert s.total_misses == misses
        assert s.per_instr_misses == per_instr
        assert s.total_accesses == lookups
        assert sum(s.per_instr_misses.values()) == s.total_misses
        assert 0.0 <= s.miss_rate <= 1.0


@settings(max_examples=80, deadline=None)
@given(small_traces(), st.integers(1, 4))
def test_more_ways_never_more_misses(data, extra):
    rows, cfg = data
    t = trace_of(rows)
    bigger = CacheConfig(cfg.line_size, cfg.sets, cfg.ways + extra)
    assert simulate(t, bigger).total_misses <= simulate(t, cfg).total_misses


def test_determinism():
    rng = np.random.default_rng(0)
    rows = [(int(i), int(a), 8) for i, a in zip(rng.integers(1, 9, 2000), rng.integers(0, 1 << 20, 2000))]
    t = trace_of(rows)
    cfg = CacheConfig(64, 16, 4)
    assert simulate(t, cfg) == simulate(t, cfg)


# --------------------------------------------------------------------------
# target selection

def _stats(per_instr):
    from approxpart.cachesim import MissStats

    return MissStats(sum(per_instr.values()) * 2, sum(per_instr.values()), per_instr, {})


def test_target_instruction_argmax_and_ties():
    assert target_instruction(_stats({1: 10, 2: 3})) == 1
    assert target_instruction(_stats({1: 5, 2: 5})) == 1
    assert target_instruction(_stats({9: 5, 2: 5, 4: 1})) == 2


def test_no_target_on_zero_misses():
    s = simulate(Trace.empty(), CacheConfig())
    with pytest.raises(NoTargetError):
        target_instruction(s)


def test_target_type_all_labeled():
    rows = [(7, 64 * k, 4, ("arc", "ident")) for k in range(10)] + [(3, 0x10000, 4, ("node", "x"))]
    t = trace_of(rows)
    s = simulate(t, CacheConfig(64, 64, 8))
    tt = target_data_type(s, t)
    assert (tt.name, tt.instr_id, tt.note) == ("arc", 7, None)


def test_target_type_majority_with_note():
    rows = [(7, 64 * k, 4, ("arc", "ident")) for k in range(6)]
    rows += [(7, 0x10000 + 64 * k, 4, ("node", "number")) for k in range(4)]
    t = trace_of(rows)
    tt = target_data_type(simulate(t, CacheConfig(64, 64, 8)), t)
    assert tt.name == "arc"
    assert tt.votes == (("arc", 6), ("node", 4))
    assert "arc 60%" in tt.note and "node 40%" in tt.note


def test_target_type_unlabeled():
    t = trace_of([(7, 64 * k, 4) for k in range(5)])
    tt = target_data_type(simulate(t, CacheConfig(64, 64, 8)), t)
    assert tt.unknown and tt.name is None and "unlabeled" in tt.note


def test_rate_share_format():
    assert format_rate_share(0.337, 0.486) == "33.7% (48.6%)"
    assert format_rate_share(0.748, 0.888) == "74.8% (88.8%)"


def test_top_share():
    t = trace_of([(1, 0, 4), (1, 64, 4), (1, 128, 4), (2, 192, 4)])
    s = simulate(t, CacheConfig(64, 64, 8))
    assert top_share(s) == 0.75
