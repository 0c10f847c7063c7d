"""Command-line entry point.

Exit codes: 0 success, 2 bad input (unreadable or malformed files, invalid
plans), 3 analysis failure (for example a trace with no cache misses).

Defaults for the shared flags can be put in a JSON file named by
``APPROXPART_CONFIG``, e.g. ``{"line_size": 64, "sets": 64, "ways": 8,
"seed": 1, "format": "json"}``.  Command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .affinity import compute_affinity, render_affinity
from .cachesim import CacheConfig
from .dram import criticality_check, effective_latency, inject_errors, latency_reduction, parse_regions
from .partition import RemapError, compare_partitioning, parse_plan, plan_warnings, resolve_tags, split_layout, validate_plan
from .pipeline import SCALAR_TYPES, AnalysisError, AnalyzeOptions, InputError, PipelineError, analyze
from .report import render_report
from .structdsl import ILP32, LP64, ABIProfile, DeclError, classify, find_decl, layout, parse_decls, scalar_layout
from .trace import PatternSpec, TraceError, gen_aos_trace, parse_trace, render_trace

CONFIG_ENV = "APPROXPART_CONFIG"
EXIT_OK, EXIT_INPUT, EXIT_ANALYSIS = 0, 2, 3

_BUILTIN_DEFAULTS = {
    "line_size": 64,
    "sets": 64,
    "ways": 8,
    "threshold": None,
    "seed": 0,
    "format": "text",
    "row_size": 4096,
}


def _load_config():
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError("cli", f"cannot read {CONFIG_ENV}={path}: {exc}") from exc
    unknown = set(data) - set(_BUILTIN_DEFAULTS)
    if unknown:
        raise InputError("cli", f"unknown keys in {path}: {', '.join(sorted(unknown))}")
    return data


def _read(path, module):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(module, f"cannot read {path}: {exc.strerror}") from exc


def _cache_args(p):
    p.add_argument("--line-size", type=int, help="cache line size in bytes (power of two)")
    p.add_argument("--sets", type=int, help="number of sets (power of two)")
    p.add_argument("--ways", type=int, help="associativity")


def _format_arg(p):
    p.add_argument("--format", choices=("text", "json"))


def _abi_args(p):
    p.add_argument("--abi", choices=("lp64", "ilp32"), default="lp64")
    p.add_argument("--packed", action="store_true", help="lay structs out without padding")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="approxpart",
        description="Find the hottest data type in a labeled memory trace and assess splitting it "
        "across approximate-memory regions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full pipeline: misses, target type, criteria, options")
    p.add_argument("--decls", required=True)
    p.add_argument("--trace", required=True)
    _cache_args(p)
    p.add_argument("--threshold", type=int, help="also compute member affinity with this threshold")
    p.add_argument("--plan", help="also compare a partition plan against the AoS layout")
    p.add_argument("--regions", help="also estimate DRAM latency and error exposure")
    p.add_argument("--seed", type=int)
    p.add_argument("--row-size", type=int)
    _abi_args(p)
    _format_arg(p)

    p = sub.add_parser("classify", help="layout and C1/C2/C3 verdicts of declared types")
    p.add_argument("--decls", help="declaration file (optional for bare scalar types)")
    p.add_argument("--type", action="append", dest="types", help="type to classify (repeatable); default all")
    p.add_argument("--layout", action="store_true", help="also print member offsets")
    _abi_args(p)
    _format_arg(p)

    p = sub.add_parser("affinity", help="access affinity between members of one type")
    p.add_argument("--trace", required=True)
    p.add_argument("--type", required=True)
    p.add_argument("--threshold", type=int)
    _format_arg(p)

    p = sub.add_parser("partition-sim", help="cache misses before and after splitting a type")
    p.add_argument("--decls", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--type", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--row-size", type=int)
    _cache_args(p)
    _abi_args(p)
    _format_arg(p)

    p = sub.add_parser("dram-sim", help="latency estimate and seeded bit-flip injection per region")
    p.add_argument("--regions", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--bytes", type=int, default=4096, help="buffer size exposed per region")
    p.add_argument("--decls", help="with --type: classify flips against this type's members")
    p.add_argument("--type")
    _abi_args(p)
    _format_arg(p)

    p = sub.add_parser("gen-trace", help="synthesize an array-of-structs access trace")
    p.add_argument("--decls", required=True)
    p.add_argument("--type", required=True)
    p.add_argument("--members", required=True, help="comma-separated member paths accessed per element")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--order", choices=("sequential", "random", "permutation_chase"), default="sequential")
    p.add_argument("--seed", type=int)
    p.add_argument("--base", type=lambda s: int(s, 0), default=0x100000)
    p.add_argument("--instr-ids", help="member=id pairs, comma-separated")
    p.add_argument("-o", "--output", help="write here instead of stdout")
    _abi_args(p)
    return parser


def _settings(args):
    merged = dict(_BUILTIN_DEFAULTS)
    merged.update(_load_config())
    for key in _BUILTIN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _abi(args):
    base = ILP32 if args.abi == "ilp32" else LP64
    return ABIProfile(base.pointer_size, packed=args.packed)


def _cache(s):
    try:
        return CacheConfig(s["line_size"], s["sets"], s["ways"])
    except ValueError as exc:
        raise InputError("cachesim", str(exc)) from exc


def _decls(path):
    try:
        return parse_decls(_read(path, "structdsl"))
    except DeclError as exc:
        raise InputError("structdsl", f"{path}: {exc}") from exc


def _trace(path):
    try:
        return parse_trace(_read(path, "trace"))
    except TraceError as exc:
        raise InputError("trace", f"{path}: {exc}") from exc


def _type_layout(decls, name, abi):
    decl = find_decl(decls, name)
    if decl is not None:
        return decl, layout(decl, abi)
    if name in SCALAR_TYPES:
        return None, scalar_layout(name, abi)
    raise InputError("structdsl", f"unknown type {name!r}")


def _emit(out, fmt, text_fn, data):
    if fmt == "json":
        out.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    else:
        out.write(text_fn())


def cmd_analyze(args, s, out):
    options = AnalyzeOptions(
        threshold=s["threshold"],
        plan_text=_read(args.plan, "partition") if args.plan else None,
        regions_text=_read(args.regions, "dram") if args.regions else None,
        seed=s["seed"],
        row_size=s["row_size"],
    )
    report = analyze(_read(args.decls, "structdsl"), _read(args.trace, "trace"), _cache(s), options, _abi(args))
    out.write(render_report(report, s["format"]))


def cmd_classify(args, s, out):
    abi = _abi(args)
    decls = _decls(args.decls) if args.decls else []
    names = args.types or [d.name for d in decls]
    rows = []
    for name in names:
        decl, lay = _type_layout(decls, name, abi)
        crit = classify(lay, decl is not None)
        rows.append({
            "type": decl.display_name() if decl else name,
            "c1": crit.c1, "c2": crit.c2, "c3": crit.c3,
            "size": lay.total_size,
            "member_functions": decl.member_function_count if decl else 0,
            "layout": [{"path": e.path, "kind": e.kind.name, "offset": e.offset, "count": e.count} for e in lay.entries],
        })

    def text():
        lines = []
        for r in rows:
            c = [("-" if r[k] == "NA" else r[k]) for k in ("c1", "c2", "c3")]
            lines.append(f"{r['type']} C1 {c[0]} C2 {c[1]} C3 {c[2]} size {r['size']}")
            if args.layout:
                for e in r["layout"]:
                    run = f" x{e['count']}" if e["count"] > 1 else ""
                    lines.append(f"  {e['offset']:#06x} {e['kind']}{run} {e['path']}")
        return "\n".join(lines) + ("\n" if lines else "")

    _emit(out, s["format"], text, {"types": rows})


def cmd_affinity(args, s, out):
    trace = _trace(args.trace)
    threshold = s["threshold"]
    if threshold is None:
        raise InputError("affinity", "--threshold is required")
    try:
        mat = compute_affinity(trace, args.type, threshold)
    except ValueError as exc:
        raise InputError("affinity", str(exc)) from exc
    data = {
        "type": args.type,
        "threshold": threshold,
        "members": list(mat.members),
        "counts": mat.counts.astype(int).tolist(),
        "pairs": [{"u": u, "v": v, "count": c} for u, v, c in mat.rows()],
    }
    _emit(out, s["format"], lambda: render_affinity(mat), data)


def cmd_partition_sim(args, s, out):
    abi = _abi(args)
    decls = _decls(args.decls)
    trace = _trace(args.trace)
    decl, lay = _type_layout(decls, args.type, abi)
    if decl is None:
        raise InputError("partition", f"{args.type!r} is not a struct; nothing to split")
    try:
        plan, overrides = parse_plan(_read(args.plan, "partition"))
        tags = resolve_tags(lay, overrides)
    except ValueError as exc:
        raise InputError("partition", str(exc)) from exc
    span = trace.regions.get(lay.type_name) or trace.regions.get(args.type)
    if span is None:
        raise InputError("partition", f"trace declares no region for {lay.type_name!r}")
    n_elem = span[1] // lay.total_size
    problems = validate_plan(plan, lay, tags, s["row_size"], n_elem)
    if problems:
        raise InputError("partition", "; ".join(str(p) for p in problems))
    try:
        cmp = compare_partitioning(trace, lay, plan, _cache(s), n_elem, aos_base=span[0])
    except RemapError as exc:
        raise AnalysisError("partition", str(exc)) from exc
    geoms = split_layout(lay, plan, n_elem)
    warnings = [{"module": "partition", "message": w} for w in plan_warnings(plan, lay, tags)]
    data = {
        "type": lay.type_name,
        "elements": n_elem,
        "groups": [
            {"group": g.group, "region": g.region, "base": g.base, "stride": g.stride, "offsets": g.offsets}
            for g in geoms
        ],
        "misses_before": cmp.misses_before,
        "misses_after": cmp.misses_after,
        "ratio": cmp.ratio,
        "warnings": warnings,
    }

    def text():
        lines = [f"type {lay.type_name} elements {n_elem} aos_stride {lay.total_size}"]
        for g in geoms:
            offs = " ".join(f"{p}@{o}" for p, o in g.offsets.items())
            lines.append(f"group {g.group} region {g.region} base {g.base:#x} stride {g.stride} {offs}")
        lines.append(f"misses_before {cmp.misses_before} misses_after {cmp.misses_after} ratio {cmp.ratio:.3f}")
        lines.extend(f"warning {w['module']}: {w['message']}" for w in warnings)
        return "\n".join(lines) + "\n"

    _emit(out, s["format"], text, data)


def cmd_dram_sim(args, s, out):
    try:
        regions = parse_regions(_read(args.regions, "dram"))
    except ValueError as exc:
        raise InputError("dram", str(exc)) from exc
    lay = tags = None
    if args.type:
        decls = _decls(args.decls) if args.decls else []
        decl, lay = _type_layout(decls, args.type, _abi(args))
        tags = resolve_tags(lay) if decl is not None else {}
    rows = []
    for k, r in enumerate(regions):
        n = min(args.bytes, r.size)
        _, flips = inject_errors(bytes(n), r, s["seed"] + k)
        row = {
            "region": r.name,
            "latency_ns": effective_latency(r.timing),
            "reduction": latency_reduction(r.timing),
            "refresh_overhead": r.timing.refresh_overhead,
            "bit_error_rate": r.bit_error_rate,
            "bytes": n,
            "seed": s["seed"] + k,
            "flips": len(flips),
        }
        if lay is not None and lay.total_size:
            row["by_category"] = criticality_check(flips, lay, lay.total_size, tags).counts()
        rows.append(row)

    def text():
        lines = []
        for r in rows:
            line = (
                f"{r['region']} latency {r['latency_ns']:.3f} ns reduction {r['reduction'] * 100:.1f}% "
                f"refresh_overhead {r['refresh_overhead']:.4f} ber {r['bit_error_rate']:g} "
                f"flips {r['flips']}/{r['bytes'] * 8}"
            )
            if "by_category" in r:
                c = r["by_category"]
                line += f" critical {c['critical']} approximate {c['approximate']} padding {c['padding']}"
            lines.append(line)
        return "\n".join(lines) + "\n"

    _emit(out, s["format"], text, {"regions": rows})


def cmd_gen_trace(args, s, out):
    decls = _decls(args.decls)
    decl, lay = _type_layout(decls, args.type, _abi(args))
    members = tuple(m for m in args.members.split(",") if m)
    ids = {}
    if args.instr_ids:
        for pair in args.instr_ids.split(","):
            name, _, val = pair.partition("=")
            try:
                ids[name] = int(val, 0)
            except ValueError:
                raise InputError("trace", f"bad --instr-ids entry {pair!r}") from None
    pattern = PatternSpec(members, args.count, args.order, s["seed"], ids)
    try:
        trace = gen_aos_trace(lay, pattern, args.base)
    except TraceError as exc:
        raise InputError("trace", str(exc)) from exc
    text = render_trace(trace)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)


COMMANDS = {
    "analyze": cmd_analyze,
    "classify": cmd_classify,
    "affinity": cmd_affinity,
    "partition-sim": cmd_partition_sim,
    "dram-sim": cmd_dram_sim,
    "gen-trace": cmd_gen_trace,
}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args)
        COMMANDS[args.command](args, settings, out)
    except PipelineError as exc:
        err.write(f"approxpart: {exc}\n")
        return exc.exit_code
    except (ValueError, DeclError) as exc:
        err.write(f"approxpart: {exc}\n")
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
