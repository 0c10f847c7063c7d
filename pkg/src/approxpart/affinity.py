"""Access affinity between members of one struct type.

Only accesses labeled with the type are kept (in trace order); accesses to
anything else are dropped rather than treated as interveners.  A pair of
positions ``i < j`` touching distinct members ``u`` and ``v`` adds one to
``counts[u][v]`` when it is a closest pair (no access to ``u`` or ``v`` in
between) and fewer than ``threshold`` accesses to other members separate
them.  The closest-pair rule keeps ``a b a b`` at 3 rather than counting
every ``a``/``b`` combination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .trace import Trace

__all__ = ["AffinityMatrix", "compute_affinity", "render_affinity"]


@dataclass(frozen=True)
class AffinityMatrix:
    members: tuple[str, ...]
    counts: np.ndarray

    def __getitem__(self, pair):
        u, v = pair
        return int(self.counts[self.members.index(u), self.members.index(v)])

    def rows(self):
        """Upper-triangle ``(u, v, count)`` rows in member order."""
        out = []
        for a in range(len(self.members)):
            for b in range(a + 1, len(self.members)):
                out.append((self.members[a], self.members[b], int(self.counts[a, b])))
        return out


def compute_affinity(trace: Trace, type_name: str, threshold: int, *, members=None, backend=None) -> AffinityMatrix:
    """Affinity matrix for the members of ``type_name`` seen in ``trace``.

    Members are ordered by first appearance unless ``members`` fixes the
    order (extra names get all-zero rows).
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    mask = trace.type_mask(type_name)
    if not mask.any():
        raise ValueError(f"trace has no accesses labeled {type_name!r}")
    lids = trace.label_ids[mask]
    paths = [m for _, m in trace.labels]
    seq = [paths[i] for i in lids.tolist()]
    if members is None:
        order = list(dict.fromkeys(seq))
    else:
        order = list(members)
        missing = set(seq) - set(order)
        if missing:
            raise ValueError(f"members not listed: {sorted(missing)}")
    index = {m: k for k, m in enumerate(order)}
    codes = np.fromiter((index[m] for m in seq), dtype=np.int64, count=len(seq))
    counts = kernels.affinity_counts(codes, len(order), threshold, backend=backend)
    return AffinityMatrix(tuple(order), counts)


def render_affinity(matrix: AffinityMatrix) -> str:
    """Aligned matrix followed by ``pair U V COUNT`` rows."""
    names = list(matrix.members)
    width = max([len(n) for n in names] + [len(str(int(matrix.counts.max(initial=0))))] + [1])
    lines = [" " * width + " " + " ".join(n.rjust(width) for n in names)]
    for k, n in enumerate(names):
        lines.append(n.rjust(width) + " " + " ".join(str(int(c)).rjust(width) for c in matrix.counts[k]))
    lines.extend(f"pair {u} {v} {c}" for u, v, c in matrix.rows())
    return "\n".join(lines) + "\n"
