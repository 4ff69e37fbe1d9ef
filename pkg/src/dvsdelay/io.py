"""File formats: text event streams, PGM frame folders, gap CSVs."""

from __future__ import annotations

import csv
import io as _io
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from dvsdelay.circuit import Polarity
from dvsdelay.errors import DataError
from dvsdelay.simulator import EventRecord
from dvsdelay.stimulus import FrameSequence

TIMESTAMPS_FILE = "timestamps.txt"


def atomic_write(path: str | os.PathLike, data: str | bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_event(ev: EventRecord) -> str:
    if ev.polarity is Polarity.NONE:
        raise DataError("cannot serialise an event without polarity")
    return f"{ev.t:.9f} {ev.x} {ev.y} {int(ev.polarity)}"


def format_events(events: Iterable[EventRecord]) -> str:
    return "".join(format_event(ev) + "\n" for ev in events)


def write_events(path: str | os.PathLike, events: Iterable[EventRecord]) -> None:
    atomic_write(path, format_events(events))


def parse_events(text: str, source: str = "<string>") -> list[EventRecord]:
    """Parse ``t x y p`` lines. Blank lines and ``#`` comments are ignored."""
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"{source}:{lineno}: expected 't x y p', got {line!r}")
        try:
            t = float(parts[0])
            x, y, p = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            raise DataError(f"{source}:{lineno}: unparseable event {line!r}") from None
        if p not in (0, 1):
            raise DataError(f"{source}:{lineno}: polarity must be 0 or 1, got {p}")
        if t < 0 or x < 0 or y < 0:
            raise DataError(f"{source}:{lineno}: negative time or coordinate")
        events.append(EventRecord(t, x, y, Polarity(p)))
    return events


def read_events(path: str | os.PathLike) -> list[EventRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"event file not found: {path}") from None
    events = parse_events(text, str(path))
    if not events:
        raise DataError(f"event file contains no events: {path}")
    return events


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Binary 8-bit PGM (P5, maxval 255) as a float raster."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(2)
    except FileNotFoundError:
        raise DataError(f"frame file not found: {path}") from None
    if magic != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    with Image.open(path) as img:
        if img.mode != "L":
            raise DataError(f"{path}: expected 8-bit grayscale, got mode {img.mode}")
        return np.asarray(img, dtype=float)


def write_pgm(path: str | os.PathLike, raster: np.ndarray) -> None:
    arr = np.asarray(raster)
    if arr.ndim != 2:
        raise DataError("PGM rasters must be 2-D")
    if arr.min() < 0 or arr.max() > 255:
        raise DataError("PGM values must lie in [0, 255]")
    buf = _io.BytesIO()
    Image.fromarray(np.rint(arr).astype(np.uint8), mode="L").save(buf, format="PPM")
    atomic_write(path, buf.getvalue())


_NUMBER = re.compile(r"(\d+)")


def _frame_number(path: Path) -> int:
    found = _NUMBER.findall(path.stem)
    if not found:
        raise DataError(f"frame file name carries no number: {path.name}")
    return int(found[-1])


def load_frame_manifest(directory: str | os.PathLike) -> FrameSequence:
    """Numbered ``*.pgm`` files plus ``timestamps.txt`` (one time per line)."""
    directory = Path(directory)
    ts_path = directory / TIMESTAMPS_FILE
    if not ts_path.is_file():
        raise DataError(f"missing {TIMESTAMPS_FILE} in {directory}")
    stamps = []
    for lineno, line in enumerate(ts_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            stamps.append(float(line))
        except ValueError:
            raise DataError(f"{ts_path}:{lineno}: bad timestamp {line!r}") from None
    files = sorted(directory.glob("*.pgm"), key=_frame_number)
    if len(files) != len(stamps):
        raise DataError(f"{directory}: {len(stamps)} timestamps but {len(files)} PGM frames")
    return FrameSequence(stamps, [read_pgm(f) for f in files])


def write_frame_manifest(directory: str | os.PathLike, seq: FrameSequence) -> None:
    directory = Path(directory)
    width = max(6, len(str(len(seq))))
    for i, frame in enumerate(seq.frames):
        write_pgm(directory / f"frame_{i:0{width}d}.pgm", frame)
    atomic_write(directory / TIMESTAMPS_FILE, "".join(f"{t:.9f}\n" for t in seq.timestamps))


def read_gap_csv(path: str | os.PathLike) -> list[tuple[float, float]]:
    """``(mu, gap)`` rows from a CSV with ``mu``/``mu_bin`` and ``gap``/``gap_length`` columns."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"gap CSV not found: {path}") from None
    reader = csv.DictReader(_io.StringIO(text))
    fields = reader.fieldnames or []
    mu_key = next((k for k in ("mu", "mu_bin") if k in fields), None)
    gap_key = next((k for k in ("gap", "gap_length") if k in fields), None)
    if mu_key is None or gap_key is None:
        raise DataError(f"{path}: need 'mu' and 'gap' columns, found {fields}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        try:
            rows.append((float(row[mu_key]), float(row[gap_key])))
        except (TypeError, ValueError):
            raise DataError(f"{path}:{lineno}: malformed row {row}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows
