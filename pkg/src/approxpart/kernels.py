"""Hot inner loops: LRU set-associative lookup and member-affinity counting.

Each kernel has an ``@njit`` implementation and a fallback that needs only
numpy and the standard library.  ``backend=None`` picks numba unless it is
unavailable or disabled through ``APPROXPART_DISABLE_NUMBA``.
"""

from collections import OrderedDict

import numpy as np

from ._accel import njit, resolve_backend


# --------------------------------------------------------------------------
# cache lines touched by each access

def expand_lines(vaddr, size, line_size):
    """Split accesses into per-line lookups.

    Returns ``(lines, owner)`` where ``owner[k]`` is the index of the access
    that produced lookup ``k``.  Lookups of one access are contiguous and in
    ascending address order.
    """
    vaddr = np.asarray(vaddr, dtype=np.uint64)
    size = np.asarray(size, dtype=np.uint64)
    shift = np.uint64(int(line_size).bit_length() - 1)
    first = vaddr >> shift
    last = (vaddr + size - np.uint64(1)) >> shift
    span = (last - first + np.uint64(1)).astype(np.int64)
    owner = np.repeat(np.arange(vaddr.shape[0], dtype=np.int64), span)
    if owner.shape[0] == vaddr.shape[0]:
        return first.astype(np.int64), owner
    starts = np.repeat(np.cumsum(span) - span, span)
    step = np.arange(owner.shape[0], dtype=np.int64) - starts
    lines = np.repeat(first.astype(np.int64), span) + step
    return lines, owner


# --------------------------------------------------------------------------
# LRU

@njit(cache=True)
def _lru_numba(lines, sets, ways):
    mask = sets - 1
    tags = np.full((sets, ways), -1, np.int64)
    stamps = np.zeros((sets, ways), np.int64)
    miss = np.zeros(lines.shape[0], np.bool_)
    clock = 0
    for k in range(lines.shape[0]):
        line = lines[k]
        s = line & mask
        clock += 1
        victim = 0
        oldest = stamps[s, 0]
        hit = False
        for w in range(ways):
            if tags[s, w] == line:
                stamps[s, w] = clock
                hit = True
                break
            if stamps[s, w] < oldest:
                oldest = stamps[s, w]
                victim = w
        if not hit:
            miss[k] = True
            tags[s, victim] = line
            stamps[s, victim] = clock
    return miss


def _lru_fallback(lines, sets, ways):
    mask = sets - 1
    resident = [OrderedDict() for _ in range(sets)]
    miss = np.zeros(lines.shape[0], dtype=bool)
    for k, line in enumerate(lines.tolist()):
        od = resident[line & mask]
        if line in od:
            od.move_to_end(line)
            continue
        miss[k] = True
        if len(od) >= ways:
            od.popitem(last=False)
        od[line] = None
    return miss


def lru_miss_flags(lines, sets, ways, backend=None):
    """Return a boolean miss flag per lookup for a cold LRU cache."""
    lines = np.ascontiguousarray(lines, dtype=np.int64)
    if resolve_backend(backend) == "numba":
        return _lru_numba(lines, int(sets), int(ways))
    return _lru_fallback(lines, int(sets), int(ways))


# --------------------------------------------------------------------------
# affinity

@njit(cache=True)
def _affinity_numba(members, n_members, threshold):
    counts = np.zeros((n_members, n_members), np.int64)
    last = np.full(n_members, -1, np.int64)
    for j in range(members.shape[0]):
        v = members[j]
        prev_v = last[v]
        for u in range(n_members):
            if u == v:
                continue
            i = last[u]
            # i > prev_v also implies i >= 0
            if i > prev_v and j - i - 1 < threshold:
                counts[u, v] += 1
                counts[v, u] += 1
        last[v] = j
    return counts


def _affinity_numpy(members, n_members, threshold):
    n = members.shape[0]
    counts = np.zeros((n_members, n_members), dtype=np.int64)
    if n == 0 or threshold <= 0:
        return counts
    idx = np.arange(n, dtype=np.int64)
    rows = np.arange(n_members, dtype=np.int64)[:, None]
    pos = np.where(members[None, :] == rows, idx[None, :], -1)
    upto = np.maximum.accumulate(pos, axis=1)
    # last occurrence of each member strictly before position j
    before = np.full_like(upto, -1)
    before[:, 1:] = upto[:, :-1]
    prev_v = before[members, idx]
    ok = (before > prev_v[None, :]) & (idx[None, :] - before - 1 < threshold)
    ok &= rows != members[None, :]
    u, j = np.nonzero(ok)
    flat = np.bincount(u * n_members + members[j], minlength=n_members * n_members)
    pair = flat.reshape(n_members, n_members)
    return counts + pair + pair.T


def affinity_counts(members, n_members, threshold, backend=None):
    """Symmetric closest-pair affinity counts over a member-index sequence."""
    members = np.ascontiguousarray(members, dtype=np.int64)
    if resolve_backend(backend) == "numba":
        return _affinity_numba(members, int(n_members), int(threshold))
    return _affinity_numpy(members, int(n_members), int(threshold))
