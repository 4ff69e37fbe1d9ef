"""Pixel circuit constants and the closed-form signal chain.

Signal path of one pixel::

    L --(k_photo)--> I_pd --(log, V_T/kappa_fb)--> V_p --(kappa_sf)--> V_sf
      --(-A = -C1/C2)--> V_d --(comparators)--> ON / OFF

and, on the photodiode side, the junction capacitor C_J has to absorb a fixed
charge ``delta_q_e`` before the feedback loop settles, which delays every
event by ``delta_q_e / |delta I_pd|``.

Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from dvsdelay.errors import DomainError, InfiniteDelayError


class Polarity(enum.IntEnum):
    """Comparator outcome. Integer values match the event file encoding."""

    OFF = 0
    ON = 1
    NONE = 2


# Defaults give an effective log-contrast threshold of 0.15 and put
# mechanistic delays in the millisecond range for luma around 10.
_V_THERMAL = 0.025
_GAIN_DIFF = 20.0
_KAPPA = 0.7
_CONTRAST = 0.15
_THETA = _CONTRAST * _GAIN_DIFF * _V_THERMAL  # kappa_sf == kappa_fb
_GAIN_CASCODE = 100.0
_C_JUNCTION = 2.5e-8
_DELTA_Q_E = _C_JUNCTION * (_V_THERMAL * _CONTRAST / _KAPPA) / _GAIN_CASCODE


@dataclass(frozen=True)
class PixelParams:
    """Circuit constants of one DVS pixel (SI units, luma in pixel values).

    ``r_shunt`` and ``r_series`` describe the photodiode's distributed model.
    The closed-form delay assumes their ideal limits (``inf`` and ``0``);
    only the capacitor integrator looks at them.
    """

    theta_on: float = _THETA
    theta_off: float = _THETA
    gain_diff: float = _GAIN_DIFF
    kappa_sf: float = _KAPPA
    kappa_fb: float = _KAPPA
    v_thermal: float = _V_THERMAL
    gain_cascode: float = _GAIN_CASCODE
    c_junction: float = _C_JUNCTION
    k_photo: float = 1e-10
    delta_q_e: float = _DELTA_Q_E
    r_shunt: float = math.inf
    r_series: float = 0.0

    def __post_init__(self):
        for name in ("theta_on", "theta_off", "gain_diff", "v_thermal", "c_junction", "k_photo"):
            value = getattr(self, name)
            if not value > 0 or math.isinf(value):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        for name in ("kappa_sf", "kappa_fb"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {value!r}")
        if not self.delta_q_e >= 0 or math.isinf(self.delta_q_e):
            raise DomainError(f"delta_q_e must be >= 0 and finite, got {self.delta_q_e!r}")
        if not self.gain_cascode >= 0:
            raise DomainError(f"gain_cascode must be >= 0, got {self.gain_cascode!r}")
        if not self.r_shunt > 0:
            raise DomainError(f"r_shunt must be positive, got {self.r_shunt!r}")
        if not self.r_series >= 0:
            raise DomainError(f"r_series must be >= 0, got {self.r_series!r}")

    @classmethod
    def from_contrast(cls, contrast_on: float, contrast_off: float | None = None, **kwargs) -> PixelParams:
        """Build params whose comparator levels map to the given log contrasts."""
        if contrast_off is None:
            contrast_off = contrast_on
        probe = cls(**kwargs)
        scale = probe.log_gain
        return replace(probe, theta_on=contrast_on * scale, theta_off=contrast_off * scale)

    @property
    def log_gain(self) -> float:
        """Volts of V_d per unit change of ln(I_pd)."""
        return self.gain_diff * self.v_thermal * self.kappa_sf / self.kappa_fb

    @property
    def contrast_on(self) -> float:
        return self.theta_on / self.log_gain

    @property
    def contrast_off(self) -> float:
        return self.theta_off / self.log_gain

    @property
    def contrast_threshold(self) -> float:
        """Effective log-contrast threshold for OFF events (equal to ON by default)."""
        return self.contrast_off

    def as_dict(self) -> dict:
        return asdict(self)


def luma_to_photocurrent(luma: float, params: PixelParams) -> float:
    """Photocurrent in amperes for a luma value, proportional with ``k_photo``."""
    if luma < 0:
        raise DomainError(f"luma must be >= 0, got {luma!r}")
    return params.k_photo * luma


def delta_vd(i_old: float, i_new: float, params: PixelParams) -> float:
    """Change of the differencing amplifier output for a photocurrent change.

    A rise in current drives V_d negative (towards the ON comparator).
    """
    if not (i_old > 0 and i_new > 0):
        raise DomainError(f"currents must be positive, got {i_old!r}, {i_new!r}")
    return -params.log_gain * math.log(i_new / i_old)


def threshold_classify(v_d: float, params: PixelParams) -> Polarity:
    if v_d >= params.theta_off:
        return Polarity.OFF
    if v_d <= -params.theta_on:
        return Polarity.ON
    return Polarity.NONE


def delta_vpd_from_vp(delta_vp: float, params: PixelParams) -> float:
    """Photodiode voltage change that produced a given V_p change via the cascode."""
    if params.gain_cascode == 0:
        raise DomainError("gain_cascode is zero; cascode cannot be inverted")
    return -delta_vp / params.gain_cascode


def vp_from_delta_vpd(delta_vpd: float, params: PixelParams) -> float:
    return -params.gain_cascode * delta_vpd


def charge_delta(delta_vpd: float, params: PixelParams) -> float:
    return delta_vpd * params.c_junction


def vp_per_event(params: PixelParams, polarity: Polarity = Polarity.OFF) -> float:
    """Signed V_p excursion between two consecutive events of one polarity.

    V_p follows ln(I_pd) with slope V_T / kappa_fb, so an ON event (current
    up by the contrast threshold) raises V_p.
    """
    if polarity is Polarity.ON:
        contrast = params.contrast_on
    elif polarity is Polarity.OFF:
        contrast = -params.contrast_off
    else:
        raise DomainError("no V_p excursion for Polarity.NONE")
    return params.v_thermal / params.kappa_fb * contrast


def consistent_delta_q_e(params: PixelParams) -> float:
    """The per-event charge implied by the thresholds, cascode gain and C_J."""
    dvp = abs(vp_per_event(params, Polarity.OFF))
    return abs(charge_delta(delta_vpd_from_vp(dvp, params), params))


def check_charge_consistency(params: PixelParams, rtol: float = 1e-9) -> bool:
    """True when ``delta_q_e`` matches the charge implied by the other constants."""
    expected = consistent_delta_q_e(params)
    return math.isclose(params.delta_q_e, expected, rel_tol=rtol, abs_tol=0.0)


def event_delay(delta_i_pd: float, params: PixelParams) -> float:
    """Time for the stimulated current to move ``delta_q_e`` through C_J.

    Charge and discharge behave the same, so only ``|delta_i_pd|`` matters.
    Raises :class:`InfiniteDelayError` for a zero current with nonzero charge.
    """
    magnitude = abs(delta_i_pd)
    if params.delta_q_e == 0:
        return 0.0
    if magnitude == 0:
        raise InfiniteDelayError("zero stimulated current: the capacitor never charges")
    return params.delta_q_e / magnitude


def delay_from_speed(mu: float, k_delay: float) -> float:
    """Empirical delay ``k_delay / mu`` for a light changing at ``mu`` luma/s."""
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    if not k_delay > 0:
        raise DomainError(f"k_delay must be positive, got {k_delay!r}")
    return k_delay / mu


def calibrate_k_delay(observations: Iterable[Sequence[float]]) -> float:
    """Least-squares ``k`` in ``gap = k / mu`` over ``(mu, gap)`` pairs.

    Minimises sum((gap - k/mu)**2), so ``k = sum(gap/mu) / sum(1/mu**2)``.
    Duplicate rows count twice.
    """
    obs = np.asarray(list(observations), dtype=float)
    if obs.size == 0:
        raise DomainError("calibrate_k_delay needs at least one observation")
    if obs.ndim != 2 or obs.shape[1] != 2:
        raise DomainError("observations must be (mu, gap) pairs")
    mu, gap = obs[:, 0], obs[:, 1]
    if np.any(mu <= 0) or np.any(gap <= 0):
        raise DomainError("all mu and gap values must be positive")
    if len(mu) == 1:
        return float(mu[0] * gap[0])
    inv = 1.0 / mu
    return float(np.dot(gap, inv) / np.dot(inv, inv))
