"""Light-intensity stimuli: piecewise-linear luma traces and frame sequences."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dvsdelay.errors import DataError, DomainError

BT709 = (0.2126, 0.7152, 0.0722)


class LumaTrace:
    """Piecewise-linear light intensity of one pixel.

    Breakpoint times must be strictly increasing and luma non-negative.
    Evaluation between breakpoints is exact linear interpolation; outside the
    covered span the trace is undefined and :meth:`value` raises.
    """

    __slots__ = ("t", "luma", "_t", "_l", "_slopes", "_slope_arr", "_cum")

    def __init__(self, times: Sequence[float], luma: Sequence[float], slopes: Sequence[float] | None = None):
        t = np.asarray(times, dtype=float)
        v = np.asarray(luma, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise DomainError("times and luma must be 1-D and the same length")
        if len(t) < 1:
            raise DomainError("a trace needs at least one breakpoint")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(v)):
            raise DomainError("trace breakpoints must be finite")
        if np.any(np.diff(t) <= 0):
            raise DomainError("trace times must be strictly increasing")
        if np.any(v < 0):
            raise DomainError("luma must be non-negative")
        t.setflags(write=False)
        v.setflags(write=False)
        self.t = t
        self.luma = v
        # Plain-float copies for the scalar hot loops in the simulator.
        self._t = t.tolist()
        self._l = v.tolist()
        self._slope_arr = np.diff(v) / np.diff(t)
        if slopes is not None:
            # Known segment speeds (e.g. a synthetic ramp) replace the rounded secants.
            given = np.asarray(slopes, dtype=float)
            if given.shape != self._slope_arr.shape or not np.allclose(given, self._slope_arr, rtol=1e-9, atol=1e-12):
                raise DomainError("slopes must match the breakpoint secants")
            self._slope_arr = given
        self._slopes = self._slope_arr.tolist()
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])

    @classmethod
    def from_breakpoints(cls, breakpoints: Sequence[tuple[float, float]]) -> LumaTrace:
        pts = list(breakpoints)
        return cls([p[0] for p in pts], [p[1] for p in pts])

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self._t, self._l))

    @property
    def start(self) -> float:
        return self._t[0]

    @property
    def end(self) -> float:
        return self._t[-1]

    @property
    def n_segments(self) -> int:
        return len(self._t) - 1

    def __len__(self) -> int:
        return len(self._t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LumaTrace):
            return NotImplemented
        return self._t == other._t and self._l == other._l

    def __repr__(self) -> str:
        return f"LumaTrace({len(self)} breakpoints, t=[{self.start:g}, {self.end:g}])"

    def covers(self, t: float) -> bool:
        return self._t[0] <= t <= self._t[-1]

    def segment_index(self, t: float) -> int:
        """Index of the segment used at time ``t`` (right-continuous at breakpoints)."""
        i = bisect.bisect_right(self._t, t) - 1
        return min(max(i, 0), len(self._t) - 2)

    def value(self, t: float) -> float:
        if not self.covers(t):
            raise DomainError(f"t={t!r} outside trace span [{self.start}, {self.end}]")
        if len(self._t) == 1 or t == self._t[-1]:
            return self._l[-1]
        i = self.segment_index(t)
        return self._l[i] + self._slopes[i] * (t - self._t[i])

    def slope(self, t: float) -> float:
        """dL/dt on the segment active at ``t``; zero for a single-point trace."""
        if len(self._t) == 1:
            return 0.0
        return self._slopes[self.segment_index(t)]

    def __call__(self, t):
        """Vectorised evaluation (``np.interp``); no range check."""
        return np.interp(t, self.t, self.luma)

    def integral(self, a, b):
        """Exact integral of L over ``[a, b]`` (vectorised)."""
        return self._antiderivative(b) - self._antiderivative(a)

    def mean(self, a, b):
        return self.integral(a, b) / (np.asarray(b, dtype=float) - np.asarray(a, dtype=float))

    def _antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        if len(self._t) == 1:
            return (x - self.t[0]) * self.luma[0]
        idx = np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, len(self.t) - 2)
        dt = x - self.t[idx]
        return self._cum[idx] + self.luma[idx] * dt + 0.5 * self._slope_arr[idx] * dt * dt


@dataclass(frozen=True)
class RampStimulus:
    l_start: float
    mu: float
    duration: float

    def __post_init__(self):
        if self.l_start < 0:
            raise DomainError(f"l_start must be >= 0, got {self.l_start!r}")
        if not self.duration > 0:
            raise DomainError(f"duration must be positive, got {self.duration!r}")
        if self.l_start + self.mu * self.duration < 0:
            raise DomainError("ramp would drive intensity negative")

    @property
    def l_end(self) -> float:
        return self.l_start + self.mu * self.duration


def synth_ramp(stim: RampStimulus) -> LumaTrace:
    return LumaTrace([0.0, stim.duration], [stim.l_start, stim.l_end], slopes=[stim.mu])


def bt709_luma(r: float, g: float, b: float) -> float:
    """Linear BT.709 luma of an 8-bit RGB triple."""
    for name, c in (("r", r), ("g", g), ("b", b)):
        if not 0 <= c <= 255:
            raise DomainError(f"channel {name}={c!r} outside [0, 255]")
    return BT709[0] * r + BT709[1] * g + BT709[2] * b


def bt709_luma_image(rgb: np.ndarray) -> np.ndarray:
    """Vectorised :func:`bt709_luma` over an ``(..., 3)`` array."""
    rgb = np.asarray(rgb, dtype=float)
    if rgb.shape[-1] != 3:
        raise DomainError("expected a trailing RGB axis of length 3")
    if rgb.min(initial=0) < 0 or rgb.max(initial=0) > 255:
        raise DomainError("channel values outside [0, 255]")
    return rgb @ np.asarray(BT709)


class FrameSequence:
    """Timestamped grayscale rasters of identical shape, values in [0, 255]."""

    def __init__(self, timestamps: Sequence[float], frames: Sequence[np.ndarray]):
        ts = [float(t) for t in timestamps]
        rasters = [np.asarray(f, dtype=float) for f in frames]
        if len(ts) != len(rasters):
            raise DataError(f"{len(ts)} timestamps for {len(rasters)} frames")
        if len(rasters) < 2:
            raise DataError("a frame sequence needs at least two frames")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DataError("frame timestamps must be strictly increasing")
        shape = rasters[0].shape
        if len(shape) != 2:
            raise DataError("frames must be 2-D grayscale rasters")
        for i, r in enumerate(rasters):
            if r.shape != shape:
                raise DataError(f"frame {i} has shape {r.shape}, expected {shape}")
            if r.min() < 0 or r.max() > 255:
                raise DataError(f"frame {i} has values outside [0, 255]")
        self.timestamps = ts
        self.frames = rasters
        self.height, self.width = shape

    def __len__(self) -> int:
        return len(self.frames)

    def stack(self) -> np.ndarray:
        return np.stack(self.frames)


def interpolate_frames(seq: FrameSequence, factor: int) -> FrameSequence:
    """Insert ``factor - 1`` linearly blended frames between each pair.

    Original frames are passed through untouched so they stay bit-exact.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise DomainError(f"interpolation factor must be an integer >= 1, got {factor!r}")
    if factor == 1:
        return FrameSequence(seq.timestamps, seq.frames)
    times: list[float] = []
    frames: list[np.ndarray] = []
    for (t0, f0), (t1, f1) in zip(zip(seq.timestamps, seq.frames), zip(seq.timestamps[1:], seq.frames[1:])):
        times.append(t0)
        frames.append(f0)
        for k in range(1, factor):
            w = k / factor
            times.append(t0 + (t1 - t0) * w)
            frames.append((1.0 - w) * f0 + w * f1)
    times.append(seq.timestamps[-1])
    frames.append(seq.frames[-1])
    return FrameSequence(times, frames)


def trace_from_frames(seq: FrameSequence, x: int, y: int) -> LumaTrace:
    if not (0 <= x < seq.width and 0 <= y < seq.height):
        raise DomainError(f"pixel ({x}, {y}) outside {seq.width}x{seq.height} raster")
    return LumaTrace(seq.timestamps, [float(f[y, x]) for f in seq.frames])


def traces_from_frames(seq: FrameSequence) -> dict[tuple[int, int], LumaTrace]:
    """All per-pixel traces, keyed by ``(x, y)``."""
    stack = seq.stack()
    return {
        (x, y): LumaTrace(seq.timestamps, stack[:, y, x])
        for y in range(seq.height)
        for x in range(seq.width)
    }


def ramp_cell(mu: float, l_center: float, half_width: float) -> RampStimulus:
    """Upward ramp sweeping ``l_center * (1 +/- half_width)`` at speed ``mu``."""
    if not 0 < half_width < 1:
        raise DomainError("half_width must lie in (0, 1)")
    if not (mu > 0 and l_center > 0):
        raise DomainError("mu and l_center must be positive")
    span = 2.0 * half_width * l_center
    return RampStimulus(l_start=l_center * (1.0 - half_width), mu=mu, duration=span / mu)

