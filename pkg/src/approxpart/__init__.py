"""Trace-driven assessment of data partitioning for approximate memory.

Finds the data type behind the instruction with the most cache misses,
checks whether it mixes critical and approximate members, and estimates
what splitting it across row-granular error-rate regions costs.
"""

from .affinity import AffinityMatrix, compute_affinity
from .cachesim import (
    CacheConfig,
    MissStats,
    NoTargetError,
    simulate,
    target_data_type,
    target_instruction,
)
from .dram import RegionConfig, TimingParams, criticality_check, effective_latency, inject_errors
from .partition import (
    PartitionPlan,
    PlanGroup,
    RegionPlacement,
    compare_partitioning,
    remap_trace,
    split_layout,
    validate_plan,
)
from .pipeline import AnalyzeOptions, analyze
from .report import AnalysisReport, parse_report, render_report
from .structdsl import LP64, LP64_PACKED, ABIProfile, classify, layout, parse_decls, scalar_layout
from .trace import MemoryAccess, PatternSpec, Trace, gen_aos_trace, parse_trace, render_trace

__version__ = "0.1.0"
