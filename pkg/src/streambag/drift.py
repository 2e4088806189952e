"""ADWIN change detector over an exponential histogram of buckets."""

from __future__ import annotations

import math

from .core import DomainError


class AdwinDetector:
    """Adaptive windowing change detector.

    The window is stored as rows of buckets; row ``r`` holds partial sums of
    ``2**r`` consecutive values, at most ``max_buckets`` per row.  After each
    insertion every bucket boundary is tested as a cut point between an older
    sub-window W0 and a newer W1; a cut drops the oldest bucket and flags a
    change.
    """

    __slots__ = ("delta", "max_buckets", "min_window", "min_sub_window", "clock",
                 "_totals", "_variances", "width", "total", "variance",
                 "time", "n_detections")

    def __init__(self, delta: float = 0.002, max_buckets: int = 5,
                 min_window: int = 10, min_sub_window: int = 5, clock: int = 1):
        if not (0.0 < delta < 1.0):
            raise DomainError(f"delta must lie in (0, 1), got {delta}")
        self.delta = delta
        self.max_buckets = max_buckets
        self.min_window = min_window
        self.min_sub_window = min_sub_window
        self.clock = clock
        self._totals = [[]]      # per row, oldest first
        self._variances = [[]]
        self.width = 0
        self.total = 0.0
        self.variance = 0.0
        self.time = 0
        self.n_detections = 0

    @property
    def estimate(self) -> float:
        return self.total / self.width if self.width > 0 else 0.0

    @property
    def n_buckets(self) -> int:
        return sum(len(r) for r in self._totals)

    def add(self, value: float) -> bool:
        if not (0.0 <= value <= 1.0):
            raise DomainError(f"ADWIN input must lie in [0, 1], got {value}")
        self._insert(value)
        self._compress()
        self.time += 1
        if self.width > self.min_window and self.time % self.clock == 0:
            if self._detect():
                self.n_detections += 1
                return True
        return False

    def _insert(self, value: float) -> None:
        self.width += 1
        self._totals[0].append(value)
        self._variances[0].append(0.0)
        if self.width > 1:
            d = value - self.total / (self.width - 1)
            self.variance += (self.width - 1) * d * d / self.width
        self.total += value

    def _compress(self) -> None:
        totals = self._totals
        variances = self._variances
        cap = self.max_buckets
        r = 0
        while len(totals[r]) > cap:
            if r + 1 == len(totals):
                totals.append([])
                variances.append([])
            size = 1 << r
            t1, t2 = totals[r][0], totals[r][1]
            v1, v2 = variances[r][0], variances[r][1]
            del totals[r][:2]
            del variances[r][:2]
            d = t1 / size - t2 / size
            totals[r + 1].append(t1 + t2)
            variances[r + 1].append(v1 + v2 + size * size * d * d / (2 * size))
            r += 1

    def _drop_oldest(self) -> None:
        r = len(self._totals) - 1
        while not self._totals[r]:
            r -= 1
        size = 1 << r
        t = self._totals[r].pop(0)
        v = self._variances[r].pop(0)
        self.width -= size
        self.total -= t
        if self.width > 0:
            d = t / size - self.total / self.width
            self.variance -= v + size * self.width * d * d / (size + self.width)
            if self.variance < 0.0:
                self.variance = 0.0
        else:
            self.total = 0.0
            self.variance = 0.0
        while len(self._totals) > 1 and not self._totals[-1]:
            self._totals.pop()
            self._variances.pop()

    def _detect(self) -> bool:
        changed = False
        min_len = self.min_sub_window
        shift = min_len - 1
        log = math.log
        while self.width > self.min_window:
            width = self.width
            total = self.total
            dd = log(2.0 * log(width) / self.delta)
            # cut iff |diff| > sqrt(c1 * m) + c2 * m, tested without the sqrt
            c1 = 2.0 * self.variance / width * dd
            c2 = 2.0 / 3.0 * dd
            n0 = 0
            u0 = 0.0
            cut = False
            totals = self._totals
            for r in range(len(totals) - 1, -1, -1):
                size = 1 << r
                for t in totals[r]:
                    n0 += size
                    u0 += t
                    n1 = width - n0
                    if n1 < min_len:
                        break
                    if n0 >= min_len:
                        diff = u0 / n0 - (total - u0) / n1
                        if diff < 0.0:
                            diff = -diff
                        m = 1.0 / (n0 - shift) + 1.0 / (n1 - shift)
                        excess = diff - c2 * m
                        if excess > 0.0 and excess * excess > c1 * m:
                            cut = True
                            break
                if cut or width - n0 < min_len:
                    break
            if not cut:
                break
            changed = True
            self._drop_oldest()
        return changed


def adwin_add(d: AdwinDetector, v: float) -> bool:
    return d.add(v)


def adwin_width(d: AdwinDetector) -> int:
    return d.width


def adwin_estimate(d: AdwinDetector) -> float:
    return d.estimate
