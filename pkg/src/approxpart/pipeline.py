"""End-to-end analysis: hottest instruction, its data type, and the criteria.

Optional stages add member affinity for the target type, a split-versus-AoS
cache comparison for a partition plan, and per-region DRAM estimates with a
seeded error-exposure run.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import dram as dram_mod
from .affinity import compute_affinity
from .cachesim import CacheConfig, NoTargetError, TargetTypeError, simulate, target_data_type, target_instruction
from .partition import (
    PlanError,
    RemapError,
    compare_partitioning,
    parse_plan,
    plan_warnings,
    resolve_tags,
    split_layout,
    validate_plan,
)
from .report import AnalysisReport
from .structdsl import LP64, DeclError, classify, find_decl, layout, parse_decls, scalar_layout
from .trace import TraceError, parse_trace

# bare types a trace label may name directly
SCALAR_TYPES = {
    "char", "short", "int", "long", "long long", "float", "double",
    "int8_t", "uint8_t", "int16_t", "uint16_t", "int32_t", "uint32_t",
    "int64_t", "uint64_t", "int64", "size_t",
}


class PipelineError(Exception):
    """Failure attributed to one module; ``exit_code`` follows the CLI contract."""

    exit_code = 1

    def __init__(self, module, message):
        super().__init__(f"{module}: {message}")
        self.module = module


class InputError(PipelineError):
    exit_code = 2


class AnalysisError(PipelineError):
    exit_code = 3


@dataclass(frozen=True)
class AnalyzeOptions:
    threshold: int | None = None
    plan_text: str | None = None
    regions_text: str | None = None
    seed: int = 0
    row_size: int = 4096
    backend: str | None = None


def analyze(decls_text: str, trace_text: str, config: CacheConfig, options: AnalyzeOptions = AnalyzeOptions(),
            abi=LP64) -> AnalysisReport:
    try:
        decls = parse_decls(decls_text)
    except DeclError as exc:
        raise InputError("structdsl", str(exc)) from exc
    try:
        trace = parse_trace(trace_text)
    except TraceError as exc:
        raise InputError("trace", str(exc)) from exc

    stats = simulate(trace, config, backend=options.backend)
    report = AnalysisReport(
        cache={"line_size": config.line_size, "sets": config.sets, "ways": config.ways},
        total_accesses=stats.total_accesses,
        total_misses=stats.total_misses,
        miss_rate=stats.miss_rate,
        read_miss_rate=stats.read_miss_rate,
    )
    if stats.has_writes:
        report.warn("cachesim", "trace contains writes; misses count loads and stores alike")
    try:
        instr = target_instruction(stats)
        target = target_data_type(stats, trace)
    except (NoTargetError, TargetTypeError) as exc:
        raise AnalysisError("cachesim", str(exc)) from exc
    report.top_instruction = {"id": instr, "share": stats.per_instr_misses[instr] / stats.total_misses}
    if target.note:
        report.warn("cachesim", target.note)
    if target.unknown:
        return report

    report.target_type_label = target.name
    decl = find_decl(decls, target.name)
    if decl is not None:
        lay = layout(decl, abi)
        report.target_data_type = decl.display_name()
        report.criteria = classify(lay, True)
    elif target.name in SCALAR_TYPES:
        lay = scalar_layout(target.name, abi)
        report.target_data_type = target.name
        report.criteria = classify(lay, False)
    else:
        report.target_data_type = target.name
        report.warn("structdsl", f"no declaration for target type {target.name!r}; criteria not evaluated")
        return report

    if report.criteria.c1 == "N":
        report.note("structdsl", "target type is not a struct or class: no data partitioning is needed")

    if options.threshold is not None:
        mat = compute_affinity(trace, target.name, options.threshold, backend=options.backend)
        report.affinity = {
            "threshold": options.threshold,
            "members": list(mat.members),
            "counts": mat.counts.astype(int).tolist(),
        }

    plan = tags = geoms = None
    if options.plan_text is not None:
        if decl is None:
            raise AnalysisError("partition", f"target type {target.name!r} is not a struct; nothing to split")
        try:
            plan, overrides = parse_plan(options.plan_text)
            tags = resolve_tags(lay, overrides)
        except ValueError as exc:
            raise InputError("partition", str(exc)) from exc
        region = trace.regions.get(lay.type_name) or trace.regions.get(target.name)
        if region is None:
            raise AnalysisError("partition", f"trace declares no region for {lay.type_name!r}")
        n_elem = region[1] // lay.total_size
        problems = validate_plan(plan, lay, tags, options.row_size, n_elem)
        if problems:
            raise InputError("partition", "; ".join(str(p) for p in problems))
        for w in plan_warnings(plan, lay, tags):
            report.warn("partition", w)
        try:
            cmp = compare_partitioning(
                trace, lay, plan, config, n_elem, aos_base=region[0], backend=options.backend
            )
        except (PlanError, RemapError) as exc:
            raise AnalysisError("partition", str(exc)) from exc
        geoms = split_layout(lay, plan, n_elem)
        report.partition = {"misses_before": cmp.misses_before, "misses_after": cmp.misses_after, "ratio": cmp.ratio}

    if options.regions_text is not None:
        try:
            regions = dram_mod.parse_regions(options.regions_text)
        except ValueError as exc:
            raise InputError("dram", str(exc)) from exc
        report.dram = _dram_estimates(regions, trace, lay, decl, tags, geoms, options.seed, report)
    return report


def _dram_estimates(regions, trace, lay, decl, tags, geoms, seed, report):
    """Latency per region plus one error-exposure pass of what it would hold.

    With a plan, a region holds the group mapped to it; without one, every
    approximate region is assumed to hold the whole unpartitioned array.
    """
    if tags is None:
        tags = resolve_tags(lay) if decl is not None else {}
    span = trace.regions.get(lay.type_name)
    n_elem = span[1] // lay.total_size if span and lay.total_size else 0
    out = []
    for k, r in enumerate(regions):
        held, stride = lay, lay.total_size
        if geoms is not None:
            match = [g for g in geoms if g.region == r.name]
            if not match:
                held = None
            else:
                held, stride = match[0].layout, match[0].stride
        exposed = min(r.size, n_elem * stride) if held is not None else 0
        counts = {"critical": 0, "approximate": 0, "padding": 0}
        if exposed and r.bit_error_rate > 0:
            _, flips = dram_mod.inject_errors(bytes(exposed), r, seed + k)
            counts = dram_mod.criticality_check(flips, held, stride, tags).counts()
            if counts["critical"]:
                report.warn("dram", f"region {r.name}: {counts['critical']} bit flips hit critical members")
        out.append({
            "region": r.name,
            "latency_ns": dram_mod.effective_latency(r.timing),
            "reduction": dram_mod.latency_reduction(r.timing),
            "bit_error_rate": r.bit_error_rate,
            "bytes_exposed": int(exposed),
            "seed": seed + k,
            "flips": counts,
        })
    return out


__all__ = ["AnalysisError", "AnalyzeOptions", "InputError", "PipelineError", "analyze", "SCALAR_TYPES"]
