"""Labeled memory-access traces.

Text format, one record per line::

    # region tree_node 0x10000 2048
    A 1 R 0x10000 4 tree_node.id
    A 2 R 0x10018 8 tree_node.score
    A 7 W 0x20000 8 -

``A <instr_id> <R|W> <vaddr> <size> <label>`` where the label is
``type.member.path``, a bare ``type`` (the whole object, for scalar target
types) or ``-``.  ``#`` starts a comment; ``# region NAME BASE LENGTH`` lines
declare the address regions that labeled accesses must fall into.

Accesses are held column-wise in numpy arrays so the cache and remapping
kernels can consume them without per-record Python objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .structdsl import FlattenedLayout

__all__ = [
    "MemoryAccess",
    "PatternSpec",
    "Trace",
    "TraceError",
    "TraceParseError",
    "gen_aos_trace",
    "parse_trace",
    "render_trace",
]


class TraceError(ValueError):
    pass


class TraceParseError(TraceError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MemoryAccess(NamedTuple):
    seq: int
    instr_id: int
    kind: str  # "R" | "W"
    vaddr: int
    size: int
    label: tuple[str, str] | None


def _split_label(text):
    if text == "-":
        return None
    type_name, _, member = text.partition(".")
    return (type_name, member)


def _join_label(label):
    if label is None:
        return "-"
    t, m = label
    return f"{t}.{m}" if m else t


@dataclass(eq=False)
class Trace:
    """Ordered accesses plus a region table.

    ``label_ids[k]`` indexes ``labels`` (``-1`` for unlabeled); the sequence
    number of an access is its position.
    """

    instr: np.ndarray
    is_write: np.ndarray
    vaddr: np.ndarray
    size: np.ndarray
    label_ids: np.ndarray
    labels: list = field(default_factory=list)
    regions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.instr = np.asarray(self.instr, dtype=np.int64)
        self.is_write = np.asarray(self.is_write, dtype=bool)
        self.vaddr = np.asarray(self.vaddr, dtype=np.uint64)
        self.size = np.asarray(self.size, dtype=np.int64)
        self.label_ids = np.asarray(self.label_ids, dtype=np.int64)
        n = self.instr.shape[0]
        for name in ("is_write", "vaddr", "size", "label_ids"):
            if getattr(self, name).shape != (n,):
                raise TraceError(f"column {name} has wrong length")
        if n and self.size.min() < 1:
            raise TraceError("access size must be >= 1")

    @classmethod
    def empty(cls, regions=None):
        z = np.zeros(0)
        return cls(z, z, z, z, z, [], dict(regions or {}))

    @classmethod
    def from_accesses(cls, accesses: Iterable, regions=None):
        """Build from ``MemoryAccess`` records or equivalent tuples.

        ``seq`` values are ignored: order defines sequence.
        """
        instr, wr, addr, size, lid = [], [], [], [], []
        labels: list = []
        index: dict = {}
        for a in accesses:
            a = MemoryAccess(*a)
            instr.append(a.instr_id)
            wr.append(a.kind == "W")
            addr.append(a.vaddr)
            size.append(a.size)
            if a.label is None:
                lid.append(-1)
            else:
                key = tuple(a.label)
                if key not in index:
                    index[key] = len(labels)
                    labels.append(key)
                lid.append(index[key])
        return cls(
            np.array(instr, dtype=np.int64),
            np.array(wr, dtype=bool),
            np.array(addr, dtype=np.uint64),
            np.array(size, dtype=np.int64),
            np.array(lid, dtype=np.int64),
            labels,
            dict(regions or {}),
        )

    def __len__(self):
        return self.instr.shape[0]

    def __getitem__(self, k):
        lid = int(self.label_ids[k])
        return MemoryAccess(
            k if k >= 0 else len(self) + k,
            int(self.instr[k]),
            "W" if self.is_write[k] else "R",
            int(self.vaddr[k]),
            int(self.size[k]),
            None if lid < 0 else self.labels[lid],
        )

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def label_types(self):
        """Per-access type name of the label (``None`` if unlabeled)."""
        names = [t for t, _ in self.labels]
        return [None if i < 0 else names[i] for i in self.label_ids.tolist()]

    def type_mask(self, type_names):
        """Boolean mask of accesses labeled with any of ``type_names``."""
        if isinstance(type_names, str):
            type_names = {type_names}
        hit = np.array([t in type_names for t, _ in self.labels] + [False], dtype=bool)
        return hit[self.label_ids]  # label id -1 picks the trailing False

    def accesses_equal(self, other: Trace) -> bool:
        """Same accesses in the same order, labels compared by value."""
        if len(self) != len(other):
            return False
        cols = ("instr", "is_write", "vaddr", "size")
        if not all(np.array_equal(getattr(self, c), getattr(other, c)) for c in cols):
            return False
        mine = [None if i < 0 else self.labels[i] for i in self.label_ids.tolist()]
        theirs = [None if i < 0 else other.labels[i] for i in other.label_ids.tolist()]
        return mine == theirs

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return self.regions == other.regions and self.accesses_equal(other)

    def replace_columns(self, **cols) -> Trace:
        data = dict(
            instr=self.instr,
            is_write=self.is_write,
            vaddr=self.vaddr,
            size=self.size,
            label_ids=self.label_ids,
            labels=list(self.labels),
            regions=dict(self.regions),
        )
        data.update(cols)
        return Trace(**data)

    @staticmethod
    def concat(traces: Iterable[Trace]) -> Trace:
        traces = list(traces)
        if not traces:
            return Trace.empty()
        labels: list = []
        index: dict = {}
        lids = []
        regions: dict = {}
        for t in traces:
            remap = []
            for lab in t.labels:
                if lab not in index:
                    index[lab] = len(labels)
                    labels.append(lab)
                remap.append(index[lab])
            table = np.array(remap + [-1], dtype=np.int64)
            lids.append(table[t.label_ids])
            for name, span in t.regions.items():
                if regions.get(name, span) != span:
                    raise TraceError(f"region {name!r} declared twice with different extents")
                regions[name] = span
        return Trace(
            np.concatenate([t.instr for t in traces]),
            np.concatenate([t.is_write for t in traces]),
            np.concatenate([t.vaddr for t in traces]),
            np.concatenate([t.size for t in traces]),
            np.concatenate(lids),
            labels,
            regions,
        )


def _parse_int(text):
    return int(text, 0)


def parse_trace(text: str) -> Trace:
    """Parse the text trace format.

    Raises :class:`TraceParseError` with the offending line number.  When at
    least one region is declared, every labeled access must lie entirely
    inside some region.
    """
    regions: dict = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "region":
                if len(parts) != 4:
                    raise TraceParseError("region header needs NAME BASE LENGTH", lineno)
                try:
                    base, length = _parse_int(parts[2]), _parse_int(parts[3])
                except ValueError:
                    raise TraceParseError("bad number in region header", lineno) from None
                if base < 0 or length < 0:
                    raise TraceParseError("negative region extent", lineno)
                if parts[1] in regions:
                    raise TraceParseError(f"region {parts[1]!r} declared twice", lineno)
                regions[parts[1]] = (base, length)
            continue
        parts = line.split("#", 1)[0].split()
        if len(parts) != 6 or parts[0] != "A":
            raise TraceParseError(f"malformed access line {raw.strip()!r}", lineno)
        _, instr, kind, addr, size, label = parts
        if kind not in ("R", "W"):
            raise TraceParseError(f"access kind must be R or W, got {kind!r}", lineno)
        try:
            instr_v = _parse_int(instr)
            addr_v = _parse_int(addr)
            size_v = int(size)
        except ValueError:
            raise TraceParseError(f"malformed access line {raw.strip()!r}", lineno) from None
        if not 0 <= addr_v < 1 << 64:
            raise TraceParseError("address out of 64-bit range", lineno)
        if not 1 <= size_v <= 64:
            raise TraceParseError("access size must be in 1..64", lineno)
        if not 0 <= instr_v < 1 << 63:
            raise TraceParseError("instruction id out of range", lineno)
        rows.append((lineno, (0, instr_v, kind, addr_v, size_v, _split_label(label))))
    if regions:
        spans = list(regions.values())
        for lineno, a in rows:
            if a[5] is None:
                continue
            if not any(b <= a[3] and a[3] + a[4] <= b + n for b, n in spans):
                raise TraceParseError(f"labeled access at {a[3]:#x} is outside all regions", lineno)
    return Trace.from_accesses((a for _, a in rows), regions)


def render_trace(trace: Trace) -> str:
    out = [f"# region {name} {base:#x} {length}" for name, (base, length) in trace.regions.items()]
    labels = [_join_label(lab) for lab in trace.labels] + ["-"]
    kinds = np.where(trace.is_write, "W", "R")
    for instr, kind, addr, size, lid in zip(
        trace.instr.tolist(), kinds.tolist(), trace.vaddr.tolist(), trace.size.tolist(), trace.label_ids.tolist()
    ):
        out.append(f"A {instr} {kind} {addr:#x} {size} {labels[lid]}")
    return "\n".join(out) + ("\n" if out else "")


# --------------------------------------------------------------------------
# synthetic generation

@dataclass(frozen=True)
class PatternSpec:
    """How a synthetic AoS trace visits elements and members.

    ``element_order`` is ``"sequential"``, ``"random"`` (a seeded random
    permutation) or ``"permutation_chase"`` (follow a seeded single-cycle
    permutation from element 0, like walking a shuffled linked list).
    Missing ``instr_id_per_member`` entries get ids 1, 2, ... in member
    order.
    """

    per_element_members: tuple[str, ...]
    element_count: int
    element_order: str = "sequential"
    seed: int = 0
    instr_id_per_member: dict = field(default_factory=dict)
    write_members: frozenset = frozenset()

    def instr_ids(self):
        return [self.instr_id_per_member.get(m, k + 1) for k, m in enumerate(self.per_element_members)]


def element_order(count, order="sequential", seed=0):
    """Element visit order as an int64 array."""
    if order == "sequential":
        return np.arange(count, dtype=np.int64)
    rng = np.random.Generator(np.random.PCG64(seed))
    if order == "random":
        return rng.permutation(count).astype(np.int64)
    if order == "permutation_chase":
        # Sattolo's algorithm: a uniformly random single cycle
        nxt = np.arange(count, dtype=np.int64)
        for i in range(count - 1, 0, -1):
            j = int(rng.integers(0, i))
            nxt[i], nxt[j] = nxt[j], nxt[i]
        visit = np.empty(count, dtype=np.int64)
        cur = 0
        for k in range(count):
            visit[k] = cur
            cur = nxt[cur]
        return visit
    raise ValueError(f"unknown element order {order!r}")


def gen_aos_trace(layout: FlattenedLayout, pattern: PatternSpec, base: int = 0) -> Trace:
    """Emit one access per listed member for each element, in visit order.

    Address of member ``m`` of element ``i`` is
    ``base + i * layout.total_size + offset(m)``.  The trace declares one
    region named after the type covering the whole array.
    """
    if base % max(layout.align, 1):
        raise TraceError(f"base {base:#x} is not aligned to {layout.align}")
    if pattern.element_count < 0:
        raise TraceError("element_count must be non-negative")
    entries = []
    for path in pattern.per_element_members:
        try:
            entries.append(layout.entry(path))
        except KeyError:
            raise TraceError(f"{layout.type_name} has no member {path!r}") from None
    region = {layout.type_name: (base, pattern.element_count * layout.total_size)}
    if not entries:
        return Trace.empty(region)
    order = element_order(pattern.element_count, pattern.element_order, pattern.seed)
    offsets = np.array([e.offset for e in entries], dtype=np.uint64)
    sizes = np.array([e.kind.size for e in entries], dtype=np.int64)
    elem_base = np.uint64(base) + order.astype(np.uint64) * np.uint64(layout.total_size)
    vaddr = (elem_base[:, None] + offsets[None, :]).ravel()
    n = order.shape[0]
    labels = [(layout.type_name, p) for p in pattern.per_element_members]
    uniq: dict = {}
    lid_of = [uniq.setdefault(lab, len(uniq)) for lab in labels]
    writes = [p in pattern.write_members for p in pattern.per_element_members]
    return Trace(
        np.tile(np.array(pattern.instr_ids(), dtype=np.int64), n),
        np.tile(np.array(writes, dtype=bool), n),
        vaddr,
        np.tile(sizes, n),
        np.tile(np.array(lid_of, dtype=np.int64), n),
        list(uniq),
        region,
    )

