"""Command line: ``dvsdelay {simulate,analyze,calibrate,oracle}``.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dvsdelay import __version__
from dvsdelay.analysis import bin_samples, build_report, centered_edges, intervals_from_events, product_check
from dvsdelay.circuit import calibrate_k_delay, event_delay
from dvsdelay.config import RunConfig, config_hash, load_config
from dvsdelay.errors import ConfigError, ConvergenceError, DataError, DomainError
from dvsdelay.figures import figure_name, histogram_svg
from dvsdelay.io import atomic_write, format_events, load_frame_manifest, read_events, read_gap_csv
from dvsdelay.pipeline import simulate_ramp_cell
from dvsdelay.simulator import Mode, oracle_capacitor_integrator, simulate_sensor
from dvsdelay.stimulus import RampStimulus, interpolate_frames, ramp_cell, synth_ramp, traces_from_frames

logger = logging.getLogger("dvsdelay")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3
STIMULUS_FILE = "stimulus.json"
PROVENANCE_FILE = "provenance.json"
REPORT_FILE = "report.csv"
REPORT_COLUMNS = (
    "mu_bin", "l_bin", "n_samples", "gap_start", "gap_length", "product",
    "ig_mean", "ig_shape", "ig_mean_gap", "ig_shape_gap",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_cells(spec: str | None) -> set[tuple[float, float]] | None:
    if not spec:
        return None
    cells = set()
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            mu, l = item.split(":")
            cells.add((float(mu), float(l)))
        except ValueError:
            raise UsageError(f"bad --cells entry {item!r}; expected mu:l") from None
    return cells


def ramp_events_name(mu: float, l: float) -> str:
    return f"events_mu{mu:g}_L{l:g}.txt"


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.rng_seed = args.seed
        cfg.validate()
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else Path(cfg.output_dir)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    selected = parse_cells(args.cells)
    sim = cfg.sim_config()
    outputs: dict[str, str] = {}

    if cfg.stimulus == "ramps":
        # Deterministic modes give every pixel the same stream; one is enough.
        deterministic = sim.mode is not Mode.STOCHASTIC
        cells = []
        for mu in cfg.ramp_mu:
            for l in cfg.ramp_l:
                if selected is not None and (mu, l) not in selected:
                    continue
                if deterministic:
                    run = simulate_ramp_cell(mu, l, sim, n_pixels=1, ramp_half_width=cfg.ramp_half_width,
                                             width=cfg.array_width)
                else:
                    run = simulate_ramp_cell(mu, l, sim, n_intervals=cfg.intervals_per_cell,
                                             ramp_half_width=cfg.ramp_half_width, width=cfg.array_width)
                name = ramp_events_name(mu, l)
                outputs[name] = format_events(run.events)
                stim = ramp_cell(mu, l, cfg.ramp_half_width)
                cells.append({
                    "file": name, "mu": mu, "l": l, "l_start": stim.l_start,
                    "duration": stim.duration, "n_pixels": run.n_pixels, "n_events": len(run.events),
                })
                logger.info("cell mu=%g L=%g: %d pixels, %d events", mu, l, run.n_pixels, len(run.events))
        if not cells:
            raise UsageError("--cells selects no ramp cell of the config")
        stimulus = {"kind": "ramps", "cells": cells}
    else:
        seq = interpolate_frames(load_frame_manifest(cfg.frames_dir), cfg.interpolation_factor)
        events = simulate_sensor(traces_from_frames(seq), sim, workers=cfg.workers)
        outputs["events.txt"] = format_events(events)
        stimulus = {
            "kind": "frames",
            "frames_dir": str(cfg.frames_dir),
            "interpolation_factor": cfg.interpolation_factor,
            "file": "events.txt",
        }
    files = sorted(outputs)
    outputs[STIMULUS_FILE] = json.dumps(stimulus, indent=2, sort_keys=True) + "\n"
    provenance = {
        "artifact": "dvsdelay",
        "version": __version__,
        "config_sha256": config_hash(cfg),
        "rng_seed": cfg.rng_seed,
        "mode": cfg.mode.value,
        "event_files": files,
    }
    outputs[PROVENANCE_FILE] = json.dumps(provenance, indent=2, sort_keys=True) + "\n"
    # Everything is computed before the first write.
    for name, text in outputs.items():
        atomic_write(out / name, text)
    print(f"wrote {len(files)} event file(s) to {out}")
    return EXIT_OK


def _load_stimulus(events_dir: Path) -> dict:
    path = events_dir / STIMULUS_FILE
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"stimulus manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_analyze(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    events_dir = Path(args.events) if args.events else out
    selected = parse_cells(args.cells)
    stimulus = _load_stimulus(events_dir)

    samples = []
    skipped = 0
    if stimulus.get("kind") == "ramps":
        for cell in stimulus["cells"]:
            events = read_events(events_dir / cell["file"])
            trace = synth_ramp(RampStimulus(cell["l_start"], cell["mu"], cell["duration"]))
            traces = {(e.x, e.y): trace for e in events}
            s, k = intervals_from_events(events, traces)
            samples.extend(s)
            skipped += k
    elif stimulus.get("kind") == "frames":
        seq = interpolate_frames(load_frame_manifest(stimulus["frames_dir"]), int(stimulus["interpolation_factor"]))
        events = read_events(events_dir / stimulus["file"])
        samples, skipped = intervals_from_events(events, traces_from_frames(seq))
    else:
        raise DataError(f"{events_dir / STIMULUS_FILE}: unknown stimulus kind {stimulus.get('kind')!r}")

    mu_edges, mu_labels = centered_edges(cfg.mu_centers, cfg.mu_half_width)
    l_edges, l_labels = centered_edges(cfg.l_centers, cfg.l_half_width)
    binning = bin_samples(samples, mu_edges, l_edges, mu_labels, l_labels)
    if selected is not None:
        binning.cells = {k: v for k, v in binning.cells.items() if k in selected}
    report, plots = build_report(binning, cfg.bin_width, cfg.floor_fraction)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in report.records:
        writer.writerow([
            repr(r.mu_bin), repr(r.l_bin), r.n_samples, repr(r.gap_start), repr(r.gap_length),
            repr(r.product), repr(r.ig_mean), repr(r.ig_shape), repr(r.ig_mean_gap), repr(r.ig_shape_gap),
        ])
    figures = {}
    for rec in report.records:
        hist, fit = plots[(rec.mu_bin, rec.l_bin)]
        figures[figure_name(rec.mu_bin, rec.l_bin)] = histogram_svg(hist, fit, rec.gap_length)
    atomic_write(out / REPORT_FILE, buf.getvalue())
    for name, svg in figures.items():
        atomic_write(out / "figures" / name, svg)

    print(f"{len(samples)} intervals, {binning.rejected} outside the grid, {skipped} events outside the stimulus")
    print(f"{len(report)} populated cell(s) -> {out / REPORT_FILE}")
    if any(r.gap_length > 0 for r in report.records):
        summary = product_check(report)
        print(
            f"mean gap*mu product: {summary.mean:.6g} "
            f"(max relative deviation {summary.max_rel_deviation:.3%} over {summary.n_cells} cells)"
        )
    else:
        print("mean gap*mu product: n/a (no cell has a positive gap)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    rows = read_gap_csv(args.gaps)
    try:
        k = calibrate_k_delay(rows)
    except DomainError as exc:
        raise DataError(f"{args.gaps}: {exc}") from None
    print(f"k_delay = {k:.6g}")
    print(f"{'mu':>10} {'gap':>12} {'model':>12} {'residual':>12}")
    for mu, gap in rows:
        model = k / mu
        print(f"{mu:10.4g} {gap:12.6g} {model:12.6g} {gap - model:12.3e}")
    return EXIT_OK


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"bad --grid {spec!r}; expected lo:hi:n") from None
    if not (0 < lo < hi) or n < 1:
        raise UsageError("--grid needs 0 < lo < hi and n >= 1")
    return np.geomspace(lo, hi, n)


def cmd_oracle(args) -> int:
    cfg = _load(args)
    params = cfg.params
    dt = cfg.time_step_oracle
    grid = _parse_grid(args.grid)
    print(f"{'delta_i (A)':>12} {'closed (s)':>13} {'oracle (s)':>13} {'rel err':>10} {'dt/2 change':>12}")
    failed = False
    for d_i in grid:
        closed = event_delay(d_i, params)
        try:
            coarse = oracle_capacitor_integrator(0.0, d_i, params, dt)
            fine = oracle_capacitor_integrator(0.0, d_i, params, dt / 2)
        except ConvergenceError as exc:
            print(f"integrator did not converge for delta_i={d_i:g}: {exc}", file=sys.stderr)
            return EXIT_VERIFY
        err = 0.0 if coarse == closed else abs(coarse - closed) / closed
        change = 0.0 if coarse == fine else abs(coarse - fine) / fine
        bad = err > 0.01 or change > 0.001
        failed |= bad
        print(f"{d_i:12.4e} {closed:13.6e} {coarse:13.6e} {err:10.2e} {change:12.2e}{'  FAIL' if bad else ''}")
    if failed:
        print("oracle check FAILED", file=sys.stderr)
        return EXIT_VERIFY
    print("oracle check passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dvsdelay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate event files from the configured stimulus")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--cells", help='subset of ramp cells, e.g. "50:10,100:20"')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="histograms, gaps and fits per (mu, L) cell")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--events", help="directory with event files and stimulus.json (default: --out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--cells", help='subset of analysis cells, e.g. "50:10,100:20"')
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="least-squares k_delay from measured (mu, gap) rows")
    p.add_argument("gaps", help="CSV with mu and gap columns")
    p.add_argument("--config", help="accepted for symmetry; not used")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle", help="closed-form delay vs fixed-step capacitor integration")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", default="1e-10:1e-6:20", help="log-spaced delta_i grid lo:hi:n (A)")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"dvsdelay: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"dvsdelay: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError) as exc:
        print(f"dvsdelay: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
