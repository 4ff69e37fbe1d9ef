"""Run configuration: ``key = value`` text files with ``#`` comments.

Lists are comma separated. Relative paths resolve against the config file's
directory. Every numeric constraint of the owning types is re-checked on load
and reported with the offending line number.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from dvsdelay.circuit import PixelParams
from dvsdelay.errors import ConfigError, DomainError
from dvsdelay.simulator import Mode, SimConfig

DEFAULT_MU = (50.0, 100.0, 200.0, 300.0, 400.0, 500.0)
DEFAULT_L = (10.0, 20.0, 30.0, 40.0, 50.0)

_PARAM_KEYS = tuple(f.name for f in dataclasses.fields(PixelParams))


@dataclass
class RunConfig:
    mode: Mode = Mode.STOCHASTIC
    params: PixelParams = field(default_factory=PixelParams)
    k_delay: float = 0.45
    noise_sigma: float = 15.0
    rng_seed: int = 0
    time_step_oracle: float = 1e-6
    # stimulus
    stimulus: str = "ramps"
    ramp_mu: tuple[float, ...] = DEFAULT_MU
    ramp_l: tuple[float, ...] = DEFAULT_L
    ramp_half_width: float = 0.09
    intervals_per_cell: int = 10_000
    array_width: int = 128
    frames_dir: Path | None = None
    interpolation_factor: int = 10
    # analysis grid
    mu_centers: tuple[float, ...] = DEFAULT_MU
    l_centers: tuple[float, ...] = DEFAULT_L
    mu_half_width: float = 0.1
    l_half_width: float = 0.1
    bin_width: float = 0.5e-3
    floor_fraction: float = 0.02
    output_dir: Path = Path("out")
    workers: int = 1

    def sim_config(self) -> SimConfig:
        return SimConfig(
            mode=self.mode,
            params=self.params,
            k_delay=self.k_delay,
            noise_sigma=self.noise_sigma,
            rng_seed=self.rng_seed,
            time_step_oracle=self.time_step_oracle,
        )

    def validate(self) -> None:
        """Raise :class:`ConfigError` (without line info) on any violated constraint."""
        try:
            self.sim_config()
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if self.stimulus not in ("ramps", "frames"):
            raise ConfigError(f"stimulus must be 'ramps' or 'frames', got {self.stimulus!r}")
        if self.stimulus == "frames":
            if self.frames_dir is None:
                raise ConfigError("stimulus = frames requires frames_dir")
            if not Path(self.frames_dir).is_dir():
                raise ConfigError(f"frames_dir does not exist: {self.frames_dir}")
        if self.stimulus == "ramps" and (not self.ramp_mu or not self.ramp_l):
            raise ConfigError("ramp stimulus needs ramp_mu and ramp_l")
        if any(v <= 0 for v in (*self.ramp_mu, *self.ramp_l, *self.mu_centers, *self.l_centers)):
            raise ConfigError("grid speeds and levels must be positive")
        for name in ("ramp_half_width", "mu_half_width", "l_half_width"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not self.bin_width > 0:
            raise ConfigError("bin_width must be positive")
        if not 0 <= self.floor_fraction < 1:
            raise ConfigError("floor_fraction must lie in [0, 1)")
        for name in ("intervals_per_cell", "array_width", "interpolation_factor", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


def _field_types() -> dict[str, str]:
    kinds = {}
    for f in dataclasses.fields(RunConfig):
        if f.name == "params":
            continue
        default = f.default if f.default is not dataclasses.MISSING else None
        if f.name in ("frames_dir", "output_dir"):
            kinds[f.name] = "path"
        elif f.name in ("mode", "stimulus"):
            kinds[f.name] = "str"
        elif isinstance(default, tuple):
            kinds[f.name] = "floats"
        elif isinstance(default, int):
            kinds[f.name] = "int"
        else:
            kinds[f.name] = "float"
    for name in _PARAM_KEYS:
        kinds[name] = "float"
    return kinds


_KINDS = _field_types()


def _parse_value(kind: str, raw: str, base: Path) -> Any:
    if kind == "float":
        return float(raw)
    if kind == "int":
        return int(raw, 0)
    if kind == "floats":
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(float(s) for s in items)
    if kind == "path":
        if raw.lower() in ("", "none"):
            return None
        p = Path(raw).expanduser()
        return (p if p.is_absolute() else base / p).resolve()
    return raw


def parse_config(text: str, path: str | os.PathLike | None = None) -> RunConfig:
    base = Path(path).resolve().parent if path is not None else Path.cwd()
    src = str(path) if path is not None else None
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}", lineno, src)
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _KINDS:
            raise ConfigError(f"unknown key {key!r}", lineno, src)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", lineno, src)
        try:
            values[key] = _parse_value(_KINDS[key], raw, base)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}", lineno, src) from None
        lines[key] = lineno

    param_values = {k: values.pop(k) for k in list(values) if k in _PARAM_KEYS}
    try:
        params = PixelParams(**param_values)
    except DomainError as exc:
        bad = next((k for k in param_values if k in str(exc)), None)
        raise ConfigError(str(exc), lines.get(bad), src) from None
    if "mode" in values:
        try:
            values["mode"] = Mode(values["mode"])
        except ValueError:
            choices = ", ".join(m.value for m in Mode)
            raise ConfigError(f"mode must be one of {choices}", lines["mode"], src) from None
    if "output_dir" in values and values["output_dir"] is None:
        raise ConfigError("output_dir cannot be empty", lines["output_dir"], src)
    values.setdefault("output_dir", (base / "out").resolve())
    cfg = RunConfig(params=params, **values)
    try:
        cfg.validate()
    except ConfigError as exc:
        msg = str(exc)
        culprit = next((k for k in sorted(lines, key=len, reverse=True) if k in msg), None)
        raise ConfigError(msg, lines.get(culprit), src) from None
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config file not found", path=str(path)) from None
    return parse_config(text, path)


def _format(value: Any) -> str:
    if isinstance(value, Mode):
        return value.value
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        if f.name == "params":
            for name in _PARAM_KEYS:
                lines.append(f"{name} = {_format(getattr(cfg.params, name))}")
            continue
        value = getattr(cfg, f.name)
        if isinstance(value, Path):
            value = str(value.resolve())
        lines.append(f"{f.name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical form, excluding the output directory."""
    text = "\n".join(line for line in dump_config(cfg).splitlines() if not line.startswith("output_dir"))
    return hashlib.sha256(text.encode()).hexdigest()
