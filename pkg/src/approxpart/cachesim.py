"""Single-level set-associative LRU cache with per-instruction miss attribution.

This stands in for hardware miss sampling: a cold cache is driven by a
labeled trace and every miss is charged to the access's instruction id and
label.  Writes allocate like reads and are counted alike; read-only figures
are kept separately.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .trace import Trace

__all__ = [
    "CacheConfig",
    "MissStats",
    "NoTargetError",
    "TargetType",
    "TargetTypeError",
    "format_rate_share",
    "simulate",
    "target_data_type",
    "target_instruction",
    "top_share",
]


class NoTargetError(RuntimeError):
    """The trace produced no misses, so there is no hottest instruction."""


class TargetTypeError(RuntimeError):
    pass


def _is_pow2(x):
    return x > 0 and x & (x - 1) == 0


@dataclass(frozen=True)
class CacheConfig:
    line_size: int = 64
    sets: int = 64
    ways: int = 8

    def __post_init__(self):
        if not _is_pow2(self.line_size):
            raise ValueError(f"line_size must be a power of two, got {self.line_size}")
        if not _is_pow2(self.sets):
            raise ValueError(f"sets must be a power of two, got {self.sets}")
        if self.ways < 1:
            raise ValueError("ways must be >= 1")

    @property
    def capacity(self):
        return self.line_size * self.sets * self.ways

    @classmethod
    def from_capacity(cls, capacity, line_size=64, ways=8):
        sets, rem = divmod(capacity, line_size * ways)
        if rem:
            raise ValueError("capacity is not a multiple of line_size * ways")
        return cls(line_size, sets, ways)


@dataclass
class MissStats:
    """Miss counts for one simulation.

    ``total_accesses`` counts cache lookups: an access straddling k lines is
    k lookups, so ``miss_rate`` stays within [0, 1].  ``miss_counts`` holds
    the misses of every trace access, in trace order.
    """

    total_accesses: int
    total_misses: int
    per_instr_misses: dict
    per_label_misses: dict
    read_accesses: int = 0
    read_misses: int = 0
    has_writes: bool = False
    miss_counts: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def miss_rate(self):
        return self.total_misses / self.total_accesses if self.total_accesses else 0.0

    @property
    def read_miss_rate(self):
        return self.read_misses / self.read_accesses if self.read_accesses else 0.0


def simulate(trace: Trace, config: CacheConfig, *, backend=None) -> MissStats:
    """Run ``trace`` through a cold cache described by ``config``."""
    lines, owner = kernels.expand_lines(trace.vaddr, trace.size, config.line_size)
    miss = kernels.lru_miss_flags(lines, config.sets, config.ways, backend=backend)
    n = len(trace)
    per_access = np.bincount(owner[miss], minlength=n).astype(np.int64)
    looked = np.bincount(owner, minlength=n)

    per_instr = {}
    missed = per_access > 0
    if missed.any():
        ids, inv = np.unique(trace.instr[missed], return_inverse=True)
        sums = np.bincount(inv, weights=per_access[missed])
        per_instr = {int(i): int(c) for i, c in zip(ids, sums)}

    per_label = {}
    lab_sel = missed & (trace.label_ids >= 0)
    if lab_sel.any():
        sums = np.bincount(trace.label_ids[lab_sel], weights=per_access[lab_sel])
        per_label = {trace.labels[k]: int(c) for k, c in enumerate(sums) if c}

    reads = ~trace.is_write
    return MissStats(
        total_accesses=int(lines.shape[0]),
        total_misses=int(miss.sum()),
        per_instr_misses=per_instr,
        per_label_misses=per_label,
        read_accesses=int(looked[reads].sum()),
        read_misses=int(per_access[reads].sum()),
        has_writes=bool(trace.is_write.any()),
        miss_counts=per_access,
    )


def target_instruction(stats: MissStats) -> int:
    """Instruction with the most misses; ties go to the smallest id."""
    if stats.total_misses == 0 or not stats.per_instr_misses:
        raise NoTargetError("no cache misses: the trace has no target instruction")
    return min(stats.per_instr_misses.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def top_share(stats: MissStats) -> float:
    """Fraction of all misses incurred by the target instruction."""
    return stats.per_instr_misses[target_instruction(stats)] / stats.total_misses


def format_rate_share(miss_rate: float, share: float) -> str:
    """``"33.7% (48.6%)"``: miss rate, then the top instruction's share."""
    return f"{miss_rate * 100:.1f}% ({share * 100:.1f}%)"


@dataclass(frozen=True)
class TargetType:
    """Outcome of resolving the target instruction's data type.

    ``name`` is ``None`` when unlabeled accesses dominate; a human (or a
    richer trace) has to supply the type in that case.
    """

    name: str | None
    instr_id: int
    votes: tuple = ()
    note: str | None = None

    @property
    def unknown(self):
        return self.name is None


def target_data_type(stats: MissStats, trace: Trace) -> TargetType:
    """Majority label type among the target instruction's missing accesses."""
    instr = target_instruction(stats)
    if stats.miss_counts is None or stats.miss_counts.shape[0] != len(trace):
        raise TargetTypeError("statistics were not produced from this trace")
    sel = (trace.instr == instr) & (stats.miss_counts > 0)
    if not sel.any():
        raise TargetTypeError(f"instruction {instr} has no missing accesses in this trace")
    names = [t for t, _ in trace.labels] + [None]
    votes = Counter(names[i] for i in trace.label_ids[sel].tolist())
    # unlabeled accesses compete as their own category
    ranked = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0] is None, kv[0] or ""))
    winner, top = ranked[0]
    total = sum(votes.values())
    note = None
    if winner is None:
        note = "majority of the target instruction's misses are unlabeled; type unknown"
    elif len(ranked) > 1:
        parts = ", ".join(f"{n or 'unlabeled'} {c / total:.0%}" for n, c in ranked)
        note = f"target instruction touches several types: {parts}"
    return TargetType(winner, instr, tuple(ranked), note)
