"""Splitting an array of structs into member groups placed in separate regions.

A :class:`PartitionPlan` assigns every flattened member of a type to a
group and every group to a row-aligned region.  Within a group the members
keep declaration order and are re-packed under the layout's ABI, so the
group's element stride is its padded size (structure splitting).  Accesses
to the type are then rewritten to the split addresses and both traces are
run through the cache model.

Plan file format::

    region crit base 0x100000 error_rate 0
    region approx base 0x200000 error_rate 1e-6 size 8192
    group hot region crit members id,r,l
    group cold region approx members score
    tag score approximate

A member token names an entry path or any prefix of one (``mat`` covers
``mat[0]`` .. ``mat[7]``, ``pos`` covers ``pos.x`` and ``pos.y``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cachesim import CacheConfig, simulate
from .structdsl import FlattenedLayout, MemberDecl, StructDecl, TypeRef, layout as layout_decl
from .trace import Trace

__all__ = [
    "CRITICAL",
    "APPROXIMATE",
    "UNSPECIFIED",
    "GroupGeometry",
    "PartitionComparison",
    "PartitionPlan",
    "PlanError",
    "PlanGroup",
    "RegionPlacement",
    "RemapError",
    "Violation",
    "compare_partitioning",
    "default_plan",
    "default_tags",
    "group_decl",
    "match_paths",
    "parse_plan",
    "plan_warnings",
    "remap_trace",
    "render_plan",
    "resolve_tags",
    "split_layout",
    "validate_plan",
]

CRITICAL = "critical"
APPROXIMATE = "approximate"
UNSPECIFIED = "unspecified"
_TAGS = (CRITICAL, APPROXIMATE, UNSPECIFIED)

DEFAULT_ROW_SIZE = 4096


class PlanError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations) or "invalid plan")


class RemapError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self):
        return f"{self.kind}: {self.detail}"


@dataclass(frozen=True)
class RegionPlacement:
    name: str
    base: int
    error_rate: float = 0.0
    size: int | None = None


@dataclass(frozen=True)
class PlanGroup:
    name: str
    members: tuple[str, ...]
    region: str


@dataclass
class PartitionPlan:
    groups: list[PlanGroup]
    regions: dict[str, RegionPlacement]

    def region_of(self, group: PlanGroup) -> RegionPlacement:
        return self.regions[group.region]


# --------------------------------------------------------------------------
# member selection and criticality

def match_paths(layout: FlattenedLayout, token: str) -> list[str]:
    """Entry paths equal to ``token`` or nested under it."""
    return [
        p for p in layout.paths
        if p == token or p.startswith(token + ".") or p.startswith(token + "[")
    ]


def default_tags(layout: FlattenedLayout) -> dict[str, str]:
    """Pointers are critical; everything else starts unspecified."""
    return {
        e.path: CRITICAL if e.kind.category == "pointer" else UNSPECIFIED
        for e in layout.entries
    }


def resolve_tags(layout: FlattenedLayout, overrides=None) -> dict[str, str]:
    """Default tags with ``{token: tag}`` overrides applied in order."""
    tags = default_tags(layout)
    for token, tag in (overrides or {}).items():
        if tag not in _TAGS:
            raise ValueError(f"unknown criticality {tag!r}")
        paths = match_paths(layout, token)
        if not paths:
            raise ValueError(f"{layout.type_name} has no member {token!r}")
        for p in paths:
            tags[p] = tag
    return tags


# --------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class GroupGeometry:
    """Placement of one group: ``addr(i, m) = base + i * stride + offsets[m]``."""

    group: str
    region: str
    base: int
    stride: int
    layout: FlattenedLayout = field(repr=False)

    @property
    def offsets(self):
        return {e.path: e.offset for e in self.layout.entries}

    def address(self, element, path):
        return self.base + element * self.stride + self.offsets[path]


def group_decl(layout: FlattenedLayout, paths, name=None) -> StructDecl:
    """A struct holding just ``paths`` (declaration order), for re-packing.

    Member names are synthetic (``m0``, ``m1``, ...) because flattened paths
    are not identifiers; long array runs become arrays.
    """
    wanted = set(paths)
    members = []
    for e in layout.entries:
        if e.path in wanted:
            count = e.count if e.count > 1 else None
            members.append(MemberDecl(f"m{len(members)}", TypeRef("scalar", e.kind.name, count=count)))
    return StructDecl(name or f"{layout.type_name}_part", tuple(members))


def _group_layout(layout, paths, name):
    if set(paths) == set(layout.paths):
        # identity split keeps the original (possibly nested) padding
        return layout
    chosen = [e for e in layout.entries if e.path in set(paths)]
    packed = layout_decl(group_decl(layout, paths, name), layout.abi, array_cap=0)
    entries = tuple(
        type(e)(orig.path, e.kind, e.offset, e.count) for e, orig in zip(packed.entries, chosen)
    )
    return FlattenedLayout(name, entries, packed.total_size, packed.align, layout.abi)


def _expand_groups(plan, layout, problems):
    """Group name -> resolved entry paths, recording selection problems."""
    owner: dict[str, str] = {}
    resolved = {}
    for g in plan.groups:
        paths = []
        for token in g.members:
            hit = match_paths(layout, token)
            if not hit:
                problems.append(Violation("unknown_member", f"group {g.name}: {layout.type_name} has no member {token!r}"))
            for p in hit:
                if p in owner and owner[p] != g.name:
                    problems.append(Violation("overlapping_groups", f"{p} is in groups {owner[p]} and {g.name}"))
                elif p not in owner:
                    owner[p] = g.name
                    paths.append(p)
        resolved[g.name] = paths
    missing = [p for p in layout.paths if p not in owner]
    if missing:
        problems.append(Violation("not_covering", f"members in no group: {', '.join(missing)}"))
    return resolved


def _align_up(x, a):
    return -(-x // a) * a


def validate_plan(plan, layout, tags=None, row_size=DEFAULT_ROW_SIZE, element_count=None) -> list[Violation]:
    """Every invariant violation of ``plan``; an empty list means valid.

    Checks coverage (each flattened member in exactly one group), region
    references, row alignment of bases and sizes, region overlap and, when
    ``tags`` are given, groups mixing critical and approximate members.
    With ``element_count`` the regions are also checked for room.
    """
    problems: list[Violation] = []
    if row_size <= 0:
        raise ValueError("row_size must be positive")
    names = [g.name for g in plan.groups]
    for n in sorted({n for n in names if names.count(n) > 1}):
        problems.append(Violation("duplicate_group", f"group {n} defined more than once"))
    resolved = _expand_groups(plan, layout, problems)

    users: dict[str, list[str]] = {}
    for g in plan.groups:
        if g.region not in plan.regions:
            problems.append(Violation("unknown_region", f"group {g.name} uses undefined region {g.region}"))
        users.setdefault(g.region, []).append(g.name)
        if not resolved.get(g.name):
            problems.append(Violation("empty_group", f"group {g.name} has no members"))
    for r, gs in users.items():
        if len(gs) > 1:
            problems.append(Violation("shared_region", f"region {r} holds groups {', '.join(gs)}"))

    for r in plan.regions.values():
        if r.base % row_size:
            problems.append(Violation("misaligned", f"region {r.name} base {r.base:#x} is not a multiple of row size {row_size}"))
        if r.size is not None and (r.size <= 0 or r.size % row_size):
            problems.append(Violation("misaligned", f"region {r.name} size {r.size} is not a positive multiple of row size {row_size}"))
        if not 0.0 <= r.error_rate <= 1.0:
            problems.append(Violation("bad_error_rate", f"region {r.name} error rate {r.error_rate} outside [0, 1]"))

    extents = {}
    for r in plan.regions.values():
        need = None
        g = next((g for g in plan.groups if g.region == r.name), None)
        if element_count is not None and g is not None and resolved.get(g.name):
            gl = _group_layout(layout, resolved[g.name], g.name)
            need = element_count * gl.total_size
        if r.size is not None:
            if need is not None and need > r.size:
                problems.append(Violation("too_small", f"region {r.name} has {r.size} bytes, group {g.name} needs {need}"))
            extents[r.name] = r.size
        elif need is not None:
            extents[r.name] = max(_align_up(need, row_size), row_size)
        else:
            extents[r.name] = row_size
    spans = sorted((r.base, r.base + extents[r.name], r.name) for r in plan.regions.values())
    for (b0, e0, n0), (b1, e1, n1) in zip(spans, spans[1:]):
        if b1 < e0:
            problems.append(Violation("overlap", f"regions {n0} [{b0:#x}, {e0:#x}) and {n1} [{b1:#x}, {e1:#x}) overlap"))

    if tags is not None:
        for g in plan.groups:
            kinds = {tags.get(p, UNSPECIFIED) for p in resolved.get(g.name, [])}
            if CRITICAL in kinds and APPROXIMATE in kinds:
                crit = [p for p in resolved[g.name] if tags.get(p) == CRITICAL]
                appx = [p for p in resolved[g.name] if tags.get(p) == APPROXIMATE]
                problems.append(Violation(
                    "mixed_criticality",
                    f"group {g.name} mixes critical ({', '.join(crit)}) and approximate ({', '.join(appx)})",
                ))
    return problems


def plan_warnings(plan, layout, tags) -> list[str]:
    """Members of unspecified criticality; placing them is a judgement call."""
    problems: list[Violation] = []
    resolved = _expand_groups(plan, layout, problems)
    out = []
    for g in plan.groups:
        loose = [p for p in resolved.get(g.name, []) if tags.get(p, UNSPECIFIED) == UNSPECIFIED]
        if loose:
            out.append(f"group {g.name}: unspecified criticality for {', '.join(loose)}")
    return out


def split_layout(layout: FlattenedLayout, plan: PartitionPlan, element_count: int) -> list[GroupGeometry]:
    """Per-group base, stride and member offsets for ``element_count`` elements.

    Raises :class:`PlanError` if the plan is structurally invalid.  Row-size
    alignment and criticality are :func:`validate_plan`'s business.
    """
    problems: list[Violation] = []
    resolved = _expand_groups(plan, layout, problems)
    for g in plan.groups:
        if g.region not in plan.regions:
            problems.append(Violation("unknown_region", f"group {g.name} uses undefined region {g.region}"))
        elif not resolved[g.name]:
            problems.append(Violation("empty_group", f"group {g.name} has no members"))
    if problems:
        raise PlanError(problems)
    out = []
    for g in plan.groups:
        gl = _group_layout(layout, resolved[g.name], g.name)
        out.append(GroupGeometry(g.name, g.region, plan.regions[g.region].base, gl.total_size, gl))
    return out


# --------------------------------------------------------------------------
# trace remapping

def remap_trace(trace: Trace, layout: FlattenedLayout, plan: PartitionPlan, element_count=None,
                *, aos_base=None, type_names=None) -> Trace:
    """Rewrite every access to the type from AoS addresses to split addresses.

    The AoS array base comes from the trace's region named after the type
    unless ``aos_base`` is given.  Other accesses, instruction ids and labels
    are untouched.  The type's region is replaced by one region per group.
    """
    names = set(type_names or ()) | {layout.type_name}
    if aos_base is None:
        if layout.type_name not in trace.regions:
            raise RemapError(f"trace declares no region {layout.type_name!r}; pass aos_base")
        aos_base, length = trace.regions[layout.type_name]
        if element_count is None:
            element_count = length // layout.total_size if layout.total_size else 0
    if element_count is None:
        raise RemapError("element_count is required when aos_base is given")
    geoms = split_layout(layout, plan, element_count)

    entries = layout.entries
    ent_group = np.zeros(len(entries), dtype=np.int64)
    ent_new_off = np.zeros(len(entries), dtype=np.int64)
    where = {p: k for k, p in enumerate(layout.paths)}
    for gi, geo in enumerate(geoms):
        for e in geo.layout.entries:
            ent_group[where[e.path]] = gi
            ent_new_off[where[e.path]] = e.offset
    g_base = np.array([geo.base for geo in geoms], dtype=np.int64)
    g_stride = np.array([geo.stride for geo in geoms], dtype=np.int64)

    lut = np.full(max(layout.total_size, 1), -1, dtype=np.int64)
    for k, e in enumerate(entries):
        lut[e.offset:e.end] = k
    ent_off = np.array([e.offset for e in entries] + [0], dtype=np.int64)
    ent_end = np.array([e.end for e in entries] + [0], dtype=np.int64)
    elem_size = np.array([e.kind.size for e in entries] + [1], dtype=np.int64)

    regions = {n: span for n, span in trace.regions.items() if n not in names}
    for geo in geoms:
        regions[geo.region] = (geo.base, element_count * geo.stride)

    mask = trace.type_mask(names)
    if not mask.any():
        return trace.replace_columns(regions=regions)
    idx = np.nonzero(mask)[0]
    addr = trace.vaddr[idx].astype(np.int64)
    size = trace.size[idx]
    off = addr - int(aos_base)
    stride = layout.total_size
    bad = (off < 0) | (off >= element_count * stride)
    elem = np.where(bad, 0, off // max(stride, 1))
    within = np.where(bad, 0, off % max(stride, 1))
    ent = np.where(bad, -1, lut[within])
    rel = within - ent_off[ent]
    bad |= ent < 0
    bad |= (rel % elem_size[ent]) != 0
    bad |= within + size > ent_end[ent]
    if bad.any():
        k = int(idx[np.argmax(bad)])
        raise RemapError(
            f"access {k} at {int(trace.vaddr[k]):#x} is not base + i*{stride} + member offset "
            f"for {layout.type_name} at {int(aos_base):#x}"
        )
    grp = ent_group[ent]
    new = g_base[grp] + elem * g_stride[grp] + ent_new_off[ent] + rel
    vaddr = trace.vaddr.copy()
    vaddr[idx] = new.astype(np.uint64)
    return trace.replace_columns(vaddr=vaddr, regions=regions)


@dataclass(frozen=True)
class PartitionComparison:
    misses_before: int
    misses_after: int
    ratio: float


def compare_partitioning(trace, layout, plan, cache_config: CacheConfig, element_count=None,
                         *, aos_base=None, backend=None) -> PartitionComparison:
    """Cache misses of the AoS trace versus the split trace (after / before)."""
    split = remap_trace(trace, layout, plan, element_count, aos_base=aos_base)
    before = simulate(trace, cache_config, backend=backend).total_misses
    after = simulate(split, cache_config, backend=backend).total_misses
    if before == 0:
        ratio = 1.0 if after == 0 else math.inf
    else:
        ratio = after / before
    return PartitionComparison(before, after, ratio)


def default_plan(layout, groups, element_count, *, start, gap=0, row_size=DEFAULT_ROW_SIZE,
                 error_rates=None, names=None) -> PartitionPlan:
    """Consecutive row-aligned regions, at least ``gap`` bytes apart.

    ``groups`` is a list of member-token lists.  Use the cache capacity as
    ``gap`` so regions cannot alias each other by accident of placement.
    """
    names = names or [f"g{k}" for k in range(len(groups))]
    error_rates = error_rates or [0.0] * len(groups)
    base = _align_up(start, row_size)
    plan_groups, regions = [], {}
    for name, members, rate in zip(names, groups, error_rates):
        rname = f"{name}_region"
        plan_groups.append(PlanGroup(name, tuple(members), rname))
        paths = [p for t in members for p in match_paths(layout, t)]
        stride = _group_layout(layout, paths, name).total_size
        size = max(_align_up(element_count * stride, row_size), row_size)
        regions[rname] = RegionPlacement(rname, base, rate, size)
        base = _align_up(base + size + gap, row_size)
    return PartitionPlan(plan_groups, regions)


# --------------------------------------------------------------------------
# plan files

def parse_plan(text: str):
    """Parse a plan file into ``(PartitionPlan, tag_overrides)``."""
    groups, regions, tags = [], {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "region":
                kv = dict(zip(parts[2::2], parts[3::2]))
                if len(parts) % 2 or "base" not in kv or set(kv) - {"base", "error_rate", "size"}:
                    raise ValueError("expected: region NAME base ADDR error_rate P [size N]")
                regions[parts[1]] = RegionPlacement(
                    parts[1],
                    int(kv["base"], 0),
                    float(kv.get("error_rate", 0.0)),
                    int(kv["size"], 0) if "size" in kv else None,
                )
            elif parts[0] == "group":
                if len(parts) != 6 or parts[2] != "region" or parts[4] != "members":
                    raise ValueError("expected: group NAME region RNAME members a,b,c")
                members = tuple(m for m in parts[5].split(",") if m)
                groups.append(PlanGroup(parts[1], members, parts[3]))
            elif parts[0] == "tag":
                if len(parts) != 3 or parts[2] not in _TAGS:
                    raise ValueError("expected: tag a,b critical|approximate|unspecified")
                for m in parts[1].split(","):
                    tags[m] = parts[2]
            else:
                raise ValueError(f"unknown directive {parts[0]!r}")
        except ValueError as exc:
            raise ValueError(f"plan line {lineno}: {exc}") from None
    return PartitionPlan(groups, regions), tags


def render_plan(plan: PartitionPlan, tags=None) -> str:
    out = []
    for r in plan.regions.values():
        line = f"region {r.name} base {r.base:#x} error_rate {r.error_rate:g}"
        out.append(line + (f" size {r.size}" if r.size is not None else ""))
    for g in plan.groups:
        out.append(f"group {g.name} region {g.region} members {','.join(g.members)}")
    for m, t in (tags or {}).items():
        out.append(f"tag {m} {t}")
    return "\n".join(out) + "\n"
