"""Statistics of event triggering times.

Pipeline: consecutive same-pixel events become :class:`IntervalSample` s,
samples are binned into (mu, L) cells, each cell gets a histogram of its
intervals, the leading empty run of that histogram is the measured delay,
and an inverse-Gaussian curve is fitted by maximum likelihood.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from dvsdelay.errors import DataError, DomainError
from dvsdelay.simulator import EventRecord, events_by_pixel
from dvsdelay.stimulus import LumaTrace

Cell = tuple[float, float]


class IntervalSample(NamedTuple):
    dt: float
    mu: float
    l_avg: float


def intervals_from_events(
    events: Iterable[EventRecord],
    traces: Mapping[tuple[int, int], LumaTrace],
) -> tuple[list[IntervalSample], int]:
    """Turn consecutive event pairs at each pixel into interval samples.

    ``mu`` is the secant speed of light over the interval and ``l_avg`` the
    exact mean of the piecewise-linear trace over it. Events outside their
    pixel's trace (or at pixels without a trace) are skipped; the second
    return value counts them.
    """
    samples: list[IntervalSample] = []
    skipped = 0
    for pixel, evs in sorted(events_by_pixel(events).items(), key=lambda kv: (kv[0][1], kv[0][0])):
        trace = traces.get(pixel)
        t = np.array([e.t for e in evs])
        if trace is None:
            skipped += len(t)
            continue
        inside = (t >= trace.start) & (t <= trace.end)
        skipped += int(np.count_nonzero(~inside))
        t = t[inside]
        if len(t) < 2:
            continue
        t1, t2 = t[:-1], t[1:]
        dt = t2 - t1
        keep = dt > 0
        t1, t2, dt = t1[keep], t2[keep], dt[keep]
        mu = (trace(t2) - trace(t1)) / dt
        l_avg = trace.integral(t1, t2) / dt
        samples.extend(IntervalSample(*row) for row in zip(dt.tolist(), mu.tolist(), l_avg.tolist()))
    return samples, skipped


def centered_edges(centers: Sequence[float], half_width: float) -> tuple[list[float], list[float | None]]:
    """Edges and labels for cells ``[c(1 - h), c(1 + h))`` around each center.

    Bins between neighbouring cells get label ``None``; samples landing there
    are rejected like out-of-range ones.
    """
    if not 0 < half_width < 1:
        raise DomainError("half_width must lie in (0, 1)")
    edges: list[float] = []
    labels: list[float | None] = []
    for c in sorted(centers):
        lo, hi = c * (1 - half_width), c * (1 + half_width)
        if edges:
            if lo < edges[-1]:
                raise DomainError(f"cells around {c} overlap the previous cell; shrink half_width")
            if lo > edges[-1]:
                edges.append(lo)
                labels.append(None)
            edges.append(hi)
        else:
            edges.extend([lo, hi])
        labels.append(float(c))
    return edges, labels


@dataclass
class Binning:
    cells: dict[Cell, list[IntervalSample]]
    rejected: int

    @property
    def assigned(self) -> int:
        return sum(len(v) for v in self.cells.values())


def _check_edges(edges: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(edges, dtype=float)
    if arr.ndim != 1 or len(arr) < 2:
        raise DomainError(f"{name} needs at least two edges")
    if np.any(np.diff(arr) <= 0):
        raise DomainError(f"{name} must be strictly increasing")
    return arr


def bin_samples(
    samples: Sequence[IntervalSample],
    mu_edges: Sequence[float],
    l_edges: Sequence[float],
    mu_labels: Sequence[float | None] | None = None,
    l_labels: Sequence[float | None] | None = None,
) -> Binning:
    """Assign samples to half-open ``[lo, hi)`` cells in (mu, L).

    Without labels, cells are keyed by bin index. Every cell exists in the
    result even when empty.
    """
    mu_e = _check_edges(mu_edges, "mu_edges")
    l_e = _check_edges(l_edges, "l_edges")
    mu_lab = list(range(len(mu_e) - 1)) if mu_labels is None else list(mu_labels)
    l_lab = list(range(len(l_e) - 1)) if l_labels is None else list(l_labels)
    if len(mu_lab) != len(mu_e) - 1 or len(l_lab) != len(l_e) - 1:
        raise DomainError("need exactly one label per bin")
    cells: dict[Cell, list[IntervalSample]] = {
        (m, l): [] for m in mu_lab if m is not None for l in l_lab if l is not None
    }
    rejected = 0
    if len(samples):
        arr = np.asarray(samples, dtype=float).reshape(-1, 3)
        mi = np.searchsorted(mu_e, arr[:, 1], side="right") - 1
        li = np.searchsorted(l_e, arr[:, 2], side="right") - 1
        for s, a, b in zip(samples, mi.tolist(), li.tolist()):
            if not (0 <= a < len(mu_lab) and 0 <= b < len(l_lab)):
                rejected += 1
                continue
            m, l = mu_lab[a], l_lab[b]
            if m is None or l is None:
                rejected += 1
                continue
            cells[(m, l)].append(s)
    return Binning(cells, rejected)


@dataclass
class TriggerTimeHistogram:
    bin_width: float
    counts: list[int]
    origin: float = 0.0
    mu_bin: float | None = None
    l_bin: float | None = None

    def __post_init__(self):
        if not self.bin_width > 0:
            raise DomainError("bin_width must be positive")
        if any(c < 0 for c in self.counts):
            raise DomainError("counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)

    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(len(self.counts) + 1)


def build_histogram(
    samples: Sequence[float],
    bin_width: float,
    mu_bin: float | None = None,
    l_bin: float | None = None,
) -> TriggerTimeHistogram:
    """Histogram of intervals over ``[0, n * bin_width)`` with ``n`` just covering the max."""
    if not bin_width > 0:
        raise DomainError("bin_width must be positive")
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("cannot build a histogram from zero samples")
    if np.any(x < 0):
        raise DomainError("intervals must be non-negative")
    idx = np.floor(x / bin_width).astype(np.int64)
    counts = np.bincount(idx, minlength=int(idx.max()) + 1)
    return TriggerTimeHistogram(bin_width, counts.tolist(), 0.0, mu_bin, l_bin)


class Gap(NamedTuple):
    start: float
    length: float


def detect_gap(hist: TriggerTimeHistogram, floor_fraction: float = 0.02) -> Gap:
    """Length of the leading run of bins at or below ``floor_fraction * peak``."""
    if not 0 <= floor_fraction < 1:
        raise DomainError("floor_fraction must lie in [0, 1)")
    counts = np.asarray(hist.counts)
    if counts.size == 0 or counts.max() == 0:
        raise DomainError("histogram is empty")
    floor = floor_fraction * counts.max()
    above = np.flatnonzero(counts > floor)
    run = int(above[0])
    return Gap(hist.origin, run * hist.bin_width)


@dataclass(frozen=True)
class IGFit:
    mean: float
    shape: float
    log_likelihood: float
    shift: float = 0.0
    n: int = 0

    def pdf(self, x):
        return inverse_gaussian_pdf(np.asarray(x, dtype=float) - self.shift, self.mean, self.shape)


def inverse_gaussian_pdf(x, mean: float, shape: float):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.sqrt(shape / (2 * np.pi * xp**3)) * np.exp(-shape * (xp - mean) ** 2 / (2 * mean**2 * xp))
    return out


def fit_inverse_gaussian(samples: Sequence[float], shift: float = 0.0) -> IGFit:
    """Closed-form maximum-likelihood inverse-Gaussian fit to ``samples - shift``.

    Equal samples make the shape estimate diverge; the fit then reports
    ``shape = inf`` and emits a :class:`RuntimeWarning`.
    """
    x = np.asarray(samples, dtype=float) - shift
    n = x.size
    if n < 2:
        raise DomainError("need at least two samples")
    if np.any(x <= 0):
        raise DomainError(f"all samples must exceed the shift {shift!r}")
    mean = float(x.mean())
    denom = float(np.sum(1.0 / x - 1.0 / mean))
    if denom <= 0:
        warnings.warn("degenerate sample: inverse-Gaussian shape diverges", RuntimeWarning, stacklevel=2)
        return IGFit(mean, math.inf, math.inf, shift, n)
    shape = n / denom
    loglik = float(
        0.5 * n * math.log(shape / (2 * math.pi))
        - 1.5 * np.sum(np.log(x))
        - shape * np.sum((x - mean) ** 2 / x) / (2 * mean**2)
    )
    return IGFit(mean, shape, loglik, shift, n)


@dataclass
class CellRecord:
    mu_bin: float
    l_bin: float
    n_samples: int
    gap_start: float
    gap_length: float
    ig_mean: float = math.nan
    ig_shape: float = math.nan
    ig_mean_gap: float = math.nan
    ig_shape_gap: float = math.nan

    @property
    def product(self) -> float:
        return self.gap_length * self.mu_bin


@dataclass
class DiscontinuityReport:
    records: list[CellRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def cell(self, mu_bin: float, l_bin: float) -> CellRecord:
        for r in self.records:
            if r.mu_bin == mu_bin and r.l_bin == l_bin:
                return r
        raise KeyError((mu_bin, l_bin))

    def gaps_by_mu(self) -> dict[float, list[float]]:
        out: dict[float, list[float]] = {}
        for r in sorted(self.records, key=lambda r: (r.mu_bin, r.l_bin)):
            out.setdefault(r.mu_bin, []).append(r.gap_length)
        return out

    @classmethod
    def from_gaps(cls, rows: Iterable[tuple[float, float, float]]) -> DiscontinuityReport:
        """Report from literal ``(mu, l, gap_length)`` rows, e.g. a published table."""
        return cls([CellRecord(float(m), float(l), 0, 0.0, float(g)) for m, l, g in rows])


def _safe_fit(samples: Sequence[float], shift: float) -> IGFit | None:
    x = [s for s in samples if s > shift]
    if len(x) < 2:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_inverse_gaussian(x, shift)


def analyze_cell(
    samples: Sequence[IntervalSample],
    mu_bin: float,
    l_bin: float,
    bin_width: float = 0.5e-3,
    floor_fraction: float = 0.02,
) -> tuple[CellRecord, TriggerTimeHistogram, IGFit | None]:
    """Histogram, gap and both IG fits for one cell.

    The raw fit covers every interval; the gap-corrected fit uses only the
    intervals beyond the gap, shifted by its length.
    """
    dts = [s.dt for s in samples]
    hist = build_histogram(dts, bin_width, mu_bin, l_bin)
    gap = detect_gap(hist, floor_fraction)
    raw = _safe_fit(dts, 0.0)
    shifted = _safe_fit(dts, gap.length) if gap.length > 0 else raw
    rec = CellRecord(
        mu_bin,
        l_bin,
        len(dts),
        gap.start,
        gap.length,
        raw.mean if raw else math.nan,
        raw.shape if raw else math.nan,
        shifted.mean if shifted else math.nan,
        shifted.shape if shifted else math.nan,
    )
    return rec, hist, raw


def build_report(
    binning: Binning,
    bin_width: float = 0.5e-3,
    floor_fraction: float = 0.02,
    min_samples: int = 1,
) -> tuple[DiscontinuityReport, dict[Cell, tuple[TriggerTimeHistogram, IGFit | None]]]:
    """Analyse every populated cell; returns the report and per-cell plot data."""
    report = DiscontinuityReport()
    extras: dict[Cell, tuple[TriggerTimeHistogram, IGFit | None]] = {}
    for (m, l), samples in sorted(binning.cells.items()):
        if len(samples) < max(min_samples, 1):
            continue
        rec, hist, fit = analyze_cell(samples, m, l, bin_width, floor_fraction)
        report.records.append(rec)
        extras[(m, l)] = (hist, fit)
    return report, extras


class ProductSummary(NamedTuple):
    mean: float
    max_rel_deviation: float
    n_cells: int


def product_check(report: DiscontinuityReport) -> ProductSummary:
    """Mean of gap * mu over cells with a positive gap, and the worst relative deviation."""
    products = np.array([r.product for r in report.records if r.gap_length > 0])
    if products.size == 0:
        raise DataError("no cell has a positive gap")
    mean = float(products.mean())
    dev = float(np.max(np.abs(products - mean)) / mean)
    return ProductSummary(mean, dev, int(products.size))
