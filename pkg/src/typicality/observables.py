"""Entropy, running moments and histograms over sampled ensembles.

Accumulators are small mergeable value objects: one per chain, merged at the
end.  Standard deviations use the sample (n - 1) convention throughout.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FitError, InsufficientDataError, UsageError

ZERO_CLAMP = 1e-300


def shannon_entropy(p) -> float:
    """-sum p ln p with 0 ln 0 = 0 (entries below 1e-300 count as zero)."""
    p = np.asarray(p, dtype=float)
    nz = p[p >= ZERO_CLAMP]
    return float(-np.sum(nz * np.log(nz)))


def shannon_entropy_rows(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p >= ZERO_CLAMP, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


@dataclass(frozen=True)
class RunningStats:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    def accumulate(self, value) -> "RunningStats":
        return self.merge(RunningStats.of(value))

    @classmethod
    def of(cls, values) -> "RunningStats":
        x = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
        if x.size == 0:
            return cls()
        mean = float(x.mean())
        return cls(int(x.size), mean, float(np.sum((x - mean) ** 2)),
                   float(x.min()), float(x.max()))

    def merge(self, other: "RunningStats") -> "RunningStats":
        # pairwise update (Chan et al.)
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningStats(n, mean, m2, min(self.min, other.min), max(self.max, other.max))

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise InsufficientDataError("need at least two values for a variance")
        return max(self.m2, 0.0) / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def sem(self) -> float:
        return self.std / math.sqrt(self.count)

    def finalize(self) -> dict:
        std = self.std
        rel = std / self.mean if self.mean != 0 else math.nan
        return {"mean": self.mean, "std": std, "rel_width": rel, "n_samples": self.count}


def accumulate(stats: RunningStats, value) -> RunningStats:
    return stats.accumulate(value)


def finalize(stats: RunningStats) -> dict:
    return stats.finalize()


@dataclass(frozen=True, eq=False)
class Histogram:
    """Fixed-range histogram; bins are [lo, hi) except the last, which is closed."""

    lo: float
    hi: float
    bins: int
    counts: np.ndarray = None
    out_of_range: int = 0
    stats: RunningStats = field(default_factory=RunningStats)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise UsageError("histogram needs lo < hi")
        if self.bins < 1:
            raise UsageError("histogram needs at least one bin")
        counts = np.zeros(self.bins, dtype=np.int64) if self.counts is None else np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.bins,):
            raise UsageError("counts do not match the number of bins")
        object.__setattr__(self, "counts", counts)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.out_of_range

    def add(self, values) -> "Histogram":
        x = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
        inside = (x >= self.lo) & (x <= self.hi)
        idx = np.floor((x[inside] - self.lo) / self.width).astype(np.int64)
        np.clip(idx, 0, self.bins - 1, out=idx)
        counts = self.counts + np.bincount(idx, minlength=self.bins)
        return replace(self, counts=counts, out_of_range=self.out_of_range + int((~inside).sum()),
                       stats=self.stats.merge(RunningStats.of(x)))

    def merge(self, other: "Histogram") -> "Histogram":
        if (self.lo, self.hi, self.bins) != (other.lo, other.hi, other.bins):
            raise UsageError("can only merge histograms with identical binning")
        return replace(self, counts=self.counts + other.counts,
                       out_of_range=self.out_of_range + other.out_of_range,
                       stats=self.stats.merge(other.stats))

    def density(self) -> np.ndarray:
        total = self.total
        if total == 0:
            return np.zeros(self.bins)
        return self.counts / (total * self.width)

    def probabilities(self) -> np.ndarray:
        total = self.total
        return self.counts / total if total else np.zeros(self.bins)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "density"])
        edges = self.edges
        for i, (c, d) in enumerate(zip(self.counts, self.density())):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(c), repr(float(d))])
        return buf.getvalue()


def histogram(values, lo: float, hi: float, bins: int) -> Histogram:
    return Histogram(lo, hi, bins).add(values)


def normalize(h: Histogram) -> list[tuple[float, float, float]]:
    """(bin_lo, bin_hi, density) rows; density = count / (total * width)."""
    e = h.edges
    return [(float(e[i]), float(e[i + 1]), float(d)) for i, d in enumerate(h.density())]


def gaussian_fit(h: Histogram) -> dict:
    """Moment-matched normal: exact sample moments when the histogram carries
    them, binned moments otherwise."""
    if np.count_nonzero(h.counts) < 3:
        raise FitError("need at least three non-empty bins for a Gaussian fit")
    if h.stats.count >= 2:
        mu, sigma = h.stats.mean, h.stats.std
    else:
        n = h.counts.sum()
        centers = h.edges[:-1] + 0.5 * h.width
        mu = float(np.dot(h.counts, centers) / n)
        sigma = float(math.sqrt(np.dot(h.counts, (centers - mu) ** 2) / (n - 1)))
    if not sigma > 0:
        raise FitError("degenerate data: zero spread")
    return {"mu": float(mu), "sigma": float(sigma)}


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())
