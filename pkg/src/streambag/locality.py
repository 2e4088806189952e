"""Reuse-distance analysis of learner-access traces.

A trace is a sequence of datum identifiers; here one datum is one ensemble
member's model.  The reuse distance of an access is the number of distinct
data touched since the previous access to the same datum, counting the datum
itself, and infinite for a first access.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from .core import DomainError, RngStream, poisson_sample

INF = math.inf


@dataclass
class AccessTrace:
    events: List[int]
    m: Optional[int] = None

    def __post_init__(self):
        self.events = list(self.events)
        if self.m is None:
            self.m = (max(self.events) + 1) if self.events else 0
        for e in self.events:
            if not (0 <= e < self.m):
                raise DomainError(f"trace identifier {e} outside [0, {self.m})")

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def switches(self) -> int:
        """Number of maximal runs of identical consecutive identifiers."""
        ev = self.events
        return sum(1 for i in range(len(ev)) if i == 0 or ev[i] != ev[i - 1])

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(str(e) for e in self.events))
            if self.events:
                fh.write("\n")

    @classmethod
    def read(cls, path, m: Optional[int] = None) -> "AccessTrace":
        with open(path) as fh:
            return cls([int(line) for line in fh if line.strip()], m)


class _Fenwick:
    __slots__ = ("n", "tree")

    def __init__(self, n: int):
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, i: int, delta: int) -> None:
        i += 1
        n = self.n
        tree = self.tree
        while i <= n:
            tree[i] += delta
            i += i & -i

    def prefix(self, i: int) -> int:
        """Sum over positions [0, i)."""
        s = 0
        tree = self.tree
        while i > 0:
            s += tree[i]
            i -= i & -i
        return s


def reuse_distance_sequence(trace: Iterable[int]) -> List[float]:
    """Reuse distance of every access, ``math.inf`` for first accesses.

    A Fenwick tree over trace positions marks the latest access of every
    datum; the distance of an access is the number of marks from the datum's
    previous access to the present.  O(log n) per access.
    """
    events = list(trace)
    n = len(events)
    marks = _Fenwick(n)
    last = {}
    out: List[float] = []
    for t, d in enumerate(events):
        p = last.get(d)
        if p is None:
            out.append(INF)
        else:
            out.append(marks.prefix(t) - marks.prefix(p))
            marks.add(p, -1)
        marks.add(t, 1)
        last[d] = t
    return out


def rd_total(trace: Iterable[int], infinity_as: int) -> int:
    if infinity_as < 1:
        raise DomainError("infinity_as must be >= 1")
    return sum(infinity_as if r == INF else r for r in reuse_distance_sequence(trace))


def rd_bound_minibatch(n: int, m: int, b: int) -> int:
    """Total reuse distance of a fully trained mini-batch trace (first accesses counted as m)."""
    if n < 1 or m < 1 or b < 1:
        raise DomainError("n, m and b must be >= 1")
    full, rest = divmod(n, b)
    total = full * m * (m + b - 1)
    if rest:
        total += m * (m + rest - 1)
    return total


def full_training_trace(n: int, m: int, b: int) -> List[int]:
    """Access trace when every member trains on every instance, in batches of b."""
    out: List[int] = []
    for start in range(0, n, b):
        size = min(b, n - start)
        for i in range(m):
            out.extend([i] * size)
    return out


def poisson_weight_trace(n: int, m: int, b: int, lam: float, seed: int) -> List[int]:
    """Member-access trace of a mini-batch run, derived from the weights alone.

    Member ``i`` draws its weights from the same substream the ensemble uses,
    so the result equals the merged trace an executor run records while
    skipping the learning itself.
    """
    if n < 0 or m < 1 or b < 1:
        raise DomainError("need n >= 0, m >= 1 and b >= 1")
    rngs = [RngStream(seed, ("weights", i)) for i in range(m)]
    out: List[int] = []
    for start in range(0, n, b):
        size = min(b, n - start)
        for i, rng in enumerate(rngs):
            for _ in range(size):
                if poisson_sample(rng, lam) > 0:
                    out.append(i)
    return out


# --- histograms ---------------------------------------------------------------

Bin = Tuple[int, int]


def decade_bins(m: int) -> List[Bin]:
    """[1,1], [2,10], [11,20], ..., up to m (width-10 bins after RD=1)."""
    bins: List[Bin] = [(1, 1)]
    if m >= 2:
        bins.append((2, min(10, m)))
    lo = 11
    while lo <= m:
        bins.append((lo, min(lo + 9, m)))
        lo += 10
    return bins


def log_bins(m: int) -> List[Bin]:
    """{1}, (1,10], (10,100], ... up to m."""
    bins: List[Bin] = [(1, 1)]
    lo, hi = 2, 10
    while lo <= m:
        bins.append((lo, min(hi, m)))
        lo, hi = hi + 1, hi * 10
    return bins


@dataclass
class RDHistogram:
    bins: List[Bin]
    counts: List[int]
    infinite: int

    @property
    def finite(self) -> int:
        return sum(self.counts)

    @property
    def total(self) -> int:
        return self.finite + self.infinite

    def fractions(self) -> List[float]:
        f = self.finite
        return [c / f if f else 0.0 for c in self.counts]

    def fraction(self, lo: int, hi: int) -> float:
        """Fraction of finite distances in bins lying inside [lo, hi]."""
        f = self.finite
        if not f:
            return 0.0
        return sum(c for (a, b), c in zip(self.bins, self.counts) if lo <= a and b <= hi) / f

    def rows(self):
        for (lo, hi), c, fr in zip(self.bins, self.counts, self.fractions()):
            yield lo, hi, c, fr

    def write_csv(self, path, bound: Optional[int] = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["bin_lo", "bin_hi", "count", "fraction"]
            if bound is not None:
                header.append("closed_form_total")
            w.writerow(header)
            for row in self.rows():
                w.writerow(list(row) + ([bound] if bound is not None else []))
            w.writerow(["inf", "inf", self.infinite, ""] + ([bound] if bound is not None else []))


def rd_histogram(trace: Iterable[int], bins: Sequence[Bin]) -> RDHistogram:
    bins = sorted((int(lo), int(hi)) for lo, hi in bins)
    for lo, hi in bins:
        if lo > hi:
            raise DomainError(f"empty bin [{lo}, {hi}]")
    for (a_lo, a_hi), (b_lo, b_hi) in zip(bins, bins[1:]):
        if b_lo <= a_hi:
            raise DomainError(f"bins [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}] overlap")
    # dense lookup: RD values are bounded by the number of distinct data
    top = bins[-1][1] if bins else 0
    lookup = [-1] * (top + 1)
    for k, (lo, hi) in enumerate(bins):
        for v in range(lo, hi + 1):
            lookup[v] = k
    counts = [0] * len(bins)
    infinite = 0
    for r in reuse_distance_sequence(trace):
        if r == INF:
            infinite += 1
            continue
        k = lookup[r] if r <= top else -1
        if k < 0:
            raise DomainError(f"reuse distance {r} falls outside every bin")
        counts[k] += 1
    return RDHistogram(bins, counts, infinite)
