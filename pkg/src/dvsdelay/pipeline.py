"""Grid experiments: one ramp cell per (mu, L), many independent pixels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from dvsdelay.analysis import (
    Binning,
    DiscontinuityReport,
    IGFit,
    TriggerTimeHistogram,
    bin_samples,
    build_report,
    centered_edges,
    intervals_from_events,
)
from dvsdelay.simulator import EventRecord, SimConfig, event_sort_key, simulate_pixel
from dvsdelay.stimulus import LumaTrace, ramp_cell, synth_ramp


@dataclass
class CellRun:
    mu: float
    l: float
    trace: LumaTrace
    events: list[EventRecord]
    n_pixels: int
    width: int

    def traces(self) -> dict[tuple[int, int], LumaTrace]:
        return {pixel_xy(i, self.width): self.trace for i in range(self.n_pixels)}


def pixel_xy(index: int, width: int) -> tuple[int, int]:
    return index % width, index // width


def simulate_ramp_cell(
    mu: float,
    l: float,
    cfg: SimConfig,
    n_intervals: int | None = None,
    n_pixels: int | None = None,
    ramp_half_width: float = 0.09,
    width: int = 128,
) -> CellRun:
    """Simulate identical ramps through ``l`` at speed ``mu`` on fresh pixels.

    Either a fixed pixel count or a target number of inter-event intervals
    (pixels are added in raster order until it is reached). Pixel ``i`` sits
    at ``(i % width, i // width)`` and owns its own random stream.
    """
    if (n_intervals is None) == (n_pixels is None):
        raise ValueError("give exactly one of n_intervals or n_pixels")
    trace = synth_ramp(ramp_cell(mu, l, ramp_half_width))
    events: list[EventRecord] = []
    got = 0
    i = 0
    while (n_pixels is not None and i < n_pixels) or (n_intervals is not None and got < n_intervals):
        x, y = pixel_xy(i, width)
        evs = simulate_pixel(trace, cfg, x, y)
        events.extend(evs)
        got += max(len(evs) - 1, 0)
        i += 1
        if n_intervals is not None and i > 1000 * n_intervals + 1000:
            raise RuntimeError(f"cell mu={mu:g} L={l:g} produces too few events")
    events.sort(key=event_sort_key)
    return CellRun(mu, l, trace, events, i, width)


@dataclass
class GridResult:
    report: DiscontinuityReport
    plots: dict[tuple[float, float], tuple[TriggerTimeHistogram, IGFit | None]]
    rejected: int
    skipped: int
    binning: Binning


def analyze_runs(
    runs: Iterable[CellRun],
    mu_centers: Sequence[float],
    l_centers: Sequence[float],
    mu_half_width: float = 0.1,
    l_half_width: float = 0.1,
    bin_width: float = 0.5e-3,
    floor_fraction: float = 0.02,
) -> GridResult:
    samples = []
    skipped = 0
    for run in runs:
        s, k = intervals_from_events(run.events, run.traces())
        samples.extend(s)
        skipped += k
    mu_edges, mu_labels = centered_edges(mu_centers, mu_half_width)
    l_edges, l_labels = centered_edges(l_centers, l_half_width)
    binning = bin_samples(samples, mu_edges, l_edges, mu_labels, l_labels)
    report, plots = build_report(binning, bin_width, floor_fraction)
    return GridResult(report, plots, binning.rejected, skipped, binning)
