"""Event generation from luma traces.

Four modes share one pixel model:

``ideal``
    Events fire when ln L has moved by the contrast threshold since the last
    reset. Crossing times are solved in closed form on each linear segment.
``delayed-mechanistic``
    Each ideal crossing is held back by ``delta_q_e / |delta I_pd|`` while the
    junction capacitor charges. The current step scales with the light level,
    so this delay shrinks as L grows.
``delayed-empirical``
    Same, with the delay ``k_delay / mu`` taken from the local light speed.
``stochastic``
    Waiting times are inverse-Gaussian first-passage times of a noisy log
    intensity, followed by the empirical delay.

In the delayed modes the pixel is blind while the capacitor charges: the
reference level is reset at the emitted event time, not at the ideal crossing.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from dvsdelay.circuit import (
    PixelParams,
    Polarity,
    delay_from_speed,
    event_delay,
    luma_to_photocurrent,
)
from dvsdelay.errors import ConvergenceError, DomainError, InfiniteDelayError
from dvsdelay.stimulus import LumaTrace

logger = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    IDEAL = "ideal"
    MECHANISTIC = "delayed-mechanistic"
    EMPIRICAL = "delayed-empirical"
    STOCHASTIC = "stochastic"


class EventRecord(NamedTuple):
    t: float
    x: int
    y: int
    polarity: Polarity


def event_sort_key(ev: EventRecord):
    return (ev.t, ev.y, ev.x, int(ev.polarity))


@dataclass(frozen=True)
class SimConfig:
    mode: Mode = Mode.IDEAL
    params: PixelParams = field(default_factory=PixelParams)
    k_delay: float = 0.45
    noise_sigma: float = 0.0
    rng_seed: int = 0
    time_step_oracle: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.noise_sigma >= 0:
            raise DomainError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if not self.time_step_oracle > 0:
            raise DomainError(f"time_step_oracle must be positive, got {self.time_step_oracle!r}")
        if self.mode in (Mode.EMPIRICAL, Mode.STOCHASTIC) and not self.k_delay > 0:
            raise DomainError(f"k_delay must be positive in {self.mode.value} mode")
        if not 0 <= self.rng_seed < 2**64:
            raise DomainError("rng_seed must be an unsigned 64-bit integer")


def pixel_rng(seed: int, x: int, y: int) -> np.random.Generator:
    """Independent stream per pixel, so results do not depend on run order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(x, y))))


class _Crossing(NamedTuple):
    t_star: float
    delay: float
    polarity: Polarity


def _walk(trace: LumaTrace, cfg: SimConfig, delayed: bool) -> list[_Crossing]:
    """Deterministic threshold walk over the trace segments."""
    params = cfg.params
    c_on, c_off = params.contrast_on, params.contrast_off
    ts, ls, ss = trace._t, trace._l, trace._slopes
    nseg = len(ts) - 1
    out: list[_Crossing] = []
    if nseg < 1:
        return out

    j = 0
    t_cur = ts[0]
    armed = False
    ref_log = 0.0
    ref_luma = 0.0
    while j < nseg:
        if ls[j] <= 0 or ls[j + 1] <= 0:
            if armed:
                logger.warning("luma reaches 0 on segment [%g, %g]; skipped, pixel disarmed", ts[j], ts[j + 1])
            armed = False
            j += 1
            if j < nseg:
                t_cur = ts[j]
            continue
        s = ss[j]
        if not armed:
            ref_luma = ls[j] + s * (t_cur - ts[j])
            ref_log = math.log(ref_luma)
            armed = True

        t_star = None
        if s > 0:
            level = math.exp(ref_log + c_on)
            t_hit = ts[j] + (level - ls[j]) / s
            if t_hit <= ts[j + 1]:
                t_star, pol, step = max(t_hit, t_cur), Polarity.ON, c_on
        elif s < 0:
            level = math.exp(ref_log - c_off)
            t_hit = ts[j] + (level - ls[j]) / s
            if t_hit <= ts[j + 1]:
                t_star, pol, step = max(t_hit, t_cur), Polarity.OFF, -c_off
        if t_star is None:
            j += 1
            if j < nseg:
                t_cur = ts[j]
            continue

        delay = 0.0
        if delayed and cfg.mode is Mode.MECHANISTIC:
            d_i = luma_to_photocurrent(level, params) - luma_to_photocurrent(ref_luma, params)
            try:
                delay = event_delay(d_i, params)
            except InfiniteDelayError:
                logger.warning("zero stimulated current at t=%g; pixel never fires again", t_star)
                break
        elif delayed:
            delay = delay_from_speed(abs(s), cfg.k_delay)

        if delay == 0.0:
            # Reset at the crossing itself: same update as the ideal pixel.
            out.append(_Crossing(t_star, 0.0, pol))
            ref_log += step
            t_cur = t_star
            continue

        t_emit = t_star + delay
        if t_emit > trace.end:
            break
        out.append(_Crossing(t_star, delay, pol))
        # Reset happens after the capacitor has charged.
        t_cur = t_emit
        j = trace.segment_index(t_emit)
        armed = False
    return out


def simulate_pixel_ideal(trace: LumaTrace, cfg: SimConfig, x: int = 0, y: int = 0) -> list[EventRecord]:
    return [EventRecord(c.t_star, x, y, c.polarity) for c in _walk(trace, cfg, delayed=False)]


def simulate_pixel_delayed(trace: LumaTrace, cfg: SimConfig, x: int = 0, y: int = 0) -> list[EventRecord]:
    if cfg.mode not in (Mode.MECHANISTIC, Mode.EMPIRICAL):
        raise DomainError(f"simulate_pixel_delayed needs a delayed mode, got {cfg.mode.value}")
    return [EventRecord(c.t_star + c.delay, x, y, c.polarity) for c in _walk(trace, cfg, delayed=True)]


def delay_offsets(trace: LumaTrace, cfg: SimConfig) -> list[float]:
    """Per-event delays (emitted time minus ideal crossing) in a delayed mode."""
    if cfg.mode not in (Mode.MECHANISTIC, Mode.EMPIRICAL):
        raise DomainError(f"delay_offsets needs a delayed mode, got {cfg.mode.value}")
    return [c.delay for c in _walk(trace, cfg, delayed=True)]


def simulate_pixel_stochastic(
    trace: LumaTrace,
    cfg: SimConfig,
    x: int = 0,
    y: int = 0,
    rng: np.random.Generator | None = None,
    max_events: int | None = None,
) -> list[EventRecord]:
    """Inverse-Gaussian waiting times plus the empirical delay.

    The waiting time after each event is drawn with mean
    ``contrast / |d ln L / dt|`` (drift taken at the previous event) and shape
    ``(contrast / noise_sigma)**2``. ``noise_sigma == 0`` degenerates to the
    mean. Flat or dark stretches are skipped to the next breakpoint.
    """
    if rng is None:
        rng = pixel_rng(cfg.rng_seed, x, y)
    params = cfg.params
    sigma = cfg.noise_sigma
    ts, ss = trace._t, trace._slopes
    if sigma == 0 and not any(ss):
        raise DomainError("static stimulus with noise disabled: no events can trigger")
    end = trace.end
    out: list[EventRecord] = []
    t_prev = trace.start
    while len(ts) > 1 and (max_events is None or len(out) < max_events):
        j = trace.segment_index(t_prev)
        s = ss[j]
        level = trace.value(t_prev)
        if s == 0 or level <= 0:
            if j + 1 >= len(ts) - 1:
                break
            t_prev = ts[j + 1]
            continue
        drift = s / level
        if drift > 0:
            contrast, pol = params.contrast_on, Polarity.ON
        else:
            contrast, pol = params.contrast_off, Polarity.OFF
        mean = contrast / abs(drift)
        if sigma > 0:
            wait = float(rng.wald(mean, (contrast / sigma) ** 2))
        else:
            wait = mean
        t_star = t_prev + wait
        if t_star > end:
            break
        speed = abs(trace.slope(t_star)) or abs(s)
        t_emit = t_star + delay_from_speed(speed, cfg.k_delay)
        if t_emit > end:
            break
        out.append(EventRecord(t_emit, x, y, pol))
        t_prev = t_emit
    return out


def simulate_pixel(trace: LumaTrace, cfg: SimConfig, x: int = 0, y: int = 0) -> list[EventRecord]:
    if cfg.mode is Mode.IDEAL:
        return simulate_pixel_ideal(trace, cfg, x, y)
    if cfg.mode is Mode.STOCHASTIC:
        return simulate_pixel_stochastic(trace, cfg, x, y)
    return simulate_pixel_delayed(trace, cfg, x, y)


def _simulate_chunk(args) -> list[EventRecord]:
    items, cfg = args
    out: list[EventRecord] = []
    for (x, y), trace in items:
        out.extend(simulate_pixel(trace, cfg, x, y))
    return out


def simulate_sensor(
    traces: Mapping[tuple[int, int], LumaTrace],
    cfg: SimConfig,
    workers: int = 1,
) -> list[EventRecord]:
    """Simulate every pixel and merge into one stream sorted by (t, y, x, polarity)."""
    items = sorted(traces.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    for (x, y), _ in items:
        if x < 0 or y < 0:
            raise DomainError(f"pixel coordinates must be non-negative, got ({x}, {y})")
    if workers > 1 and len(items) > 1:
        chunks = [items[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, [(c, cfg) for c in chunks]))
        events = [ev for part in parts for ev in part]
    else:
        events = _simulate_chunk((items, cfg))
    events.sort(key=event_sort_key)
    return events


def events_by_pixel(events: Iterable[EventRecord]) -> dict[tuple[int, int], list[EventRecord]]:
    grouped: dict[tuple[int, int], list[EventRecord]] = {}
    for ev in events:
        grouped.setdefault((ev.x, ev.y), []).append(ev)
    for evs in grouped.values():
        evs.sort(key=lambda e: e.t)
    return grouped


def oracle_capacitor_integrator(
    i_old: float,
    i_new: float,
    params: PixelParams,
    dt: float,
    ramp_rate: float = 0.0,
    max_steps: int = 50_000_000,
) -> float:
    """Brute-force charging time of C_J, the reference for :func:`event_delay`.

    Integrates ``C_J dv/dt = i(t) - v / R_SH`` with fixed-step RK4, where the
    stimulated current is ``i(t) = |i_new - i_old| + ramp_rate * t``, until the
    node voltage reaches ``delta_q_e / C_J``. The crossing inside the last
    step is located by linear interpolation. ``R_S`` sits in series with an
    ideal current drive and does not enter the node equation.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    if params.delta_q_e == 0:
        return 0.0
    base = abs(i_new - i_old)
    if base == 0 and ramp_rate <= 0:
        raise InfiniteDelayError("no stimulated current: i_old == i_new")
    c = params.c_junction
    g_leak = 0.0 if math.isinf(params.r_shunt) else 1.0 / params.r_shunt
    v_target = params.delta_q_e / c

    def dvdt(t: float, v: float) -> float:
        return (base + ramp_rate * t - g_leak * v) / c

    t = 0.0
    v = 0.0
    half = 0.5 * dt
    for _ in range(max_steps):
        k1 = dvdt(t, v)
        k2 = dvdt(t + half, v + half * k1)
        k3 = dvdt(t + half, v + half * k2)
        k4 = dvdt(t + dt, v + dt * k3)
        v_next = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if v_next >= v_target:
            return t + dt * (v_target - v) / (v_next - v)
        t += dt
        v = v_next
    raise ConvergenceError(
        f"C_J node reached {v:.3e} V of {v_target:.3e} V after {max_steps} steps of {dt:g} s"
    )


def oracle_step_check(
    i_old: float, i_new: float, params: PixelParams, dt: float, **kwargs
) -> tuple[float, float]:
    """Return (result at dt, relative change when dt is halved)."""
    coarse = oracle_capacitor_integrator(i_old, i_new, params, dt, **kwargs)
    fine = oracle_capacitor_integrator(i_old, i_new, params, dt / 2, **kwargs)
    if fine == 0:
        return coarse, 0.0 if coarse == 0 else math.inf
    return coarse, abs(coarse - fine) / fine


def oracle_table(
    delta_currents: Iterable[float], params: PixelParams, dt: float
) -> list[tuple[float, float, float, float]]:
    """Rows of (delta_i, closed-form delay, oracle delay, relative error)."""
    rows = []
    for d_i in delta_currents:
        closed = event_delay(d_i, params)
        oracle = oracle_capacitor_integrator(0.0, d_i, params, dt)
        err = 0.0 if closed == oracle else abs(oracle - closed) / closed
        rows.append((float(d_i), closed, oracle, err))
    return rows

