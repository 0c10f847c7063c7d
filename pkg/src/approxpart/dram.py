"""Approximate-DRAM regions: relaxed timing, latency estimate and bit flips.

Latency uses a first-order model: an access pays ``tRCD + tCAS`` and the
bank is unavailable for a fraction ``f = tRFC_total / tREF`` of the time,
so ``L = (tRCD + tCAS) / (1 - f)``.  Command timelines are not simulated.

Bit flips come from SplitMix64: bit ``k`` of the buffer flips iff
``u_k < p``, where ``u_k`` is the top 53 bits of the ``k``-th SplitMix64
output for initial state ``seed`` scaled to [0, 1).  Standard constants;
seed 0 starts ``0xE220A8397B1DCDAF``.  Only 64-bit integer arithmetic is
involved, so flips reproduce bit-exactly on any platform.

Region config format, one region per line, keys in any order::

    region approx base 0x200000 size 8192 row_size 4096 trcd 7.5 tref 128 tcas 12.5 trfc_total 0.5 ber 1e-6
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .partition import APPROXIMATE, CRITICAL, UNSPECIFIED
from .structdsl import FlattenedLayout

__all__ = [
    "SPEC_TIMING",
    "FlipReport",
    "FlipVerdict",
    "RegionConfig",
    "TimingParams",
    "criticality_check",
    "effective_latency",
    "inject_errors",
    "latency_reduction",
    "parse_regions",
    "splitmix64",
    "splitmix64_uniform",
]

SPEC_TRCD_NS = 12.5  # DDR3-1600J
SPEC_TREF_MS = 64.0


@dataclass(frozen=True)
class TimingParams:
    trcd_ns: float = SPEC_TRCD_NS
    tref_ms: float = SPEC_TREF_MS
    tcas_ns: float = 12.5
    trfc_total_ms: float = 0.0

    def __post_init__(self):
        if self.trcd_ns <= 0 or self.tref_ms <= 0 or self.tcas_ns <= 0:
            raise ValueError("tRCD, tREF and tCAS must be positive")
        if self.trfc_total_ms < 0:
            raise ValueError("tRFC_total must be non-negative")

    @property
    def refresh_overhead(self):
        return self.trfc_total_ms / self.tref_ms

    @property
    def is_spec(self):
        return self.trcd_ns == SPEC_TRCD_NS and self.tref_ms == SPEC_TREF_MS

    @property
    def is_relaxed_within_bounds(self):
        """Relaxation only ever shortens tRCD and prolongs tREF."""
        return 0 < self.trcd_ns <= SPEC_TRCD_NS and self.tref_ms >= SPEC_TREF_MS


SPEC_TIMING = TimingParams()


def effective_latency(params: TimingParams) -> float:
    """Average read latency in ns under the first-order refresh model."""
    f = params.refresh_overhead
    if f >= 1.0:
        raise ValueError(f"refresh overhead {f:.3f} leaves no time to serve reads")
    return (params.trcd_ns + params.tcas_ns) / (1.0 - f)


def latency_reduction(params: TimingParams, baseline: TimingParams | None = None) -> float:
    """Fractional latency saving versus ``baseline`` (spec timing with the same tCAS/tRFC)."""
    if baseline is None:
        baseline = TimingParams(tcas_ns=params.tcas_ns, trfc_total_ms=params.trfc_total_ms)
    base = effective_latency(baseline)
    return (base - effective_latency(params)) / base


@dataclass(frozen=True)
class RegionConfig:
    name: str
    base: int
    size: int
    row_size: int = 4096
    timing: TimingParams = field(default_factory=TimingParams)
    bit_error_rate: float = 0.0

    def __post_init__(self):
        if self.row_size <= 0 or self.row_size & (self.row_size - 1):
            raise ValueError(f"region {self.name}: row_size must be a power of two")
        if self.base % self.row_size or self.size % self.row_size or self.size <= 0:
            raise ValueError(
                f"region {self.name}: base {self.base:#x} and size {self.size} must be multiples of row size {self.row_size}"
            )
        if not 0.0 <= self.bit_error_rate <= 1.0:
            raise ValueError(f"region {self.name}: bit error rate must lie in [0, 1]")
        if self.timing.is_spec and self.bit_error_rate != 0.0:
            raise ValueError(f"region {self.name}: spec-timing regions cannot have a nonzero error rate")


_REGION_KEYS = {
    "base": ("base", lambda s: int(s, 0)),
    "size": ("size", lambda s: int(s, 0)),
    "row_size": ("row_size", lambda s: int(s, 0)),
    "ber": ("bit_error_rate", float),
}
_TIMING_KEYS = {"trcd": "trcd_ns", "tref": "tref_ms", "tcas": "tcas_ns", "trfc_total": "trfc_total_ms"}


def parse_regions(text: str) -> list[RegionConfig]:
    regions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "region" or len(parts) < 2 or len(parts) % 2:
            raise ValueError(f"regions line {lineno}: expected 'region NAME key value ...'")
        kw, timing = {}, {}
        try:
            for key, val in zip(parts[2::2], parts[3::2]):
                if key in _REGION_KEYS:
                    attr, conv = _REGION_KEYS[key]
                    kw[attr] = conv(val)
                elif key in _TIMING_KEYS:
                    timing[_TIMING_KEYS[key]] = float(val)
                else:
                    raise ValueError(f"unknown key {key!r}")
            if "base" not in kw or "size" not in kw:
                raise ValueError("base and size are required")
            regions.append(RegionConfig(parts[1], timing=TimingParams(**timing), **kw))
        except ValueError as exc:
            raise ValueError(f"regions line {lineno}: {exc}") from None
    return regions


# --------------------------------------------------------------------------
# error injection

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` SplitMix64 outputs for initial state ``seed``."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.arange(1, n + 1, dtype=np.uint64) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def splitmix64_uniform(seed: int, n: int) -> np.ndarray:
    """``n`` uniforms in [0, 1) built from the top 53 bits of each output."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def inject_errors(data: bytes, region: RegionConfig, seed: int):
    """Flip each bit independently with the region's bit error rate.

    Returns ``(corrupted_bytes, flips)`` where ``flips`` is an ascending
    int64 array of bit positions ``8 * byte + bit`` (bit 0 is the LSB).
    """
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.shape[0] > region.size:
        raise ValueError(f"{buf.shape[0]} bytes do not fit region {region.name} ({region.size} bytes)")
    p = region.bit_error_rate
    n_bits = buf.shape[0] * 8
    if p == 0.0 or n_bits == 0:
        return bytes(buf), np.zeros(0, dtype=np.int64)
    flip = splitmix64_uniform(seed, n_bits) < p
    mask = np.packbits(flip.reshape(-1, 8), axis=1, bitorder="little").ravel()
    return bytes(buf ^ mask), np.flatnonzero(flip).astype(np.int64)


# --------------------------------------------------------------------------
# criticality of flipped bits

@dataclass(frozen=True)
class FlipVerdict:
    bit: int
    element: int
    member: str | None
    category: str  # "critical" | "approximate" | "padding"


@dataclass(frozen=True)
class FlipReport:
    verdicts: tuple[FlipVerdict, ...] = ()

    @property
    def violations(self):
        return [v for v in self.verdicts if v.category == CRITICAL]

    @property
    def benign(self):
        return [v for v in self.verdicts if v.category == APPROXIMATE]

    @property
    def padding(self):
        return [v for v in self.verdicts if v.category == "padding"]

    def counts(self):
        return {
            "critical": len(self.violations),
            "approximate": len(self.benign),
            "padding": len(self.padding),
        }


def criticality_check(flips, layout: FlattenedLayout, element_stride: int, tags) -> FlipReport:
    """Map flipped bits onto members of an array of ``layout`` elements.

    A flip in a critical member is a violation, one in an approximate member
    is benign, and one outside every member is a padding flip.  Members left
    unspecified are treated as critical: nothing says they tolerate errors.
    """
    if element_stride < layout.total_size or element_stride <= 0:
        raise ValueError("element stride must cover the element layout")
    owner = np.full(element_stride, -1, dtype=np.int64)
    for k, e in enumerate(layout.entries):
        owner[e.offset:e.end] = k
    out = []
    for bit in np.asarray(flips, dtype=np.int64).tolist():
        byte = bit // 8
        element, within = divmod(byte, element_stride)
        k = int(owner[within])
        if k < 0:
            out.append(FlipVerdict(bit, element, None, "padding"))
            continue
        path = layout.entries[k].path
        tag = tags.get(path, UNSPECIFIED)
        cat = APPROXIMATE if tag == APPROXIMATE else CRITICAL
        out.append(FlipVerdict(bit, element, path, cat))
    return FlipReport(tuple(out))
