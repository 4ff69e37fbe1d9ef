from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dvsdelay.circuit import PixelParams, Polarity
from dvsdelay.config import RunConfig, config_hash, dump_config, load_config, parse_config
from dvsdelay.errors import ConfigError, DataError
from dvsdelay.io import (
    atomic_write,
    format_events,
    load_frame_manifest,
    parse_events,
    read_events,
    read_gap_csv,
    read_pgm,
    write_events,
    write_frame_manifest,
    write_pgm,
)
from dvsdelay.simulator import EventRecord, Mode
from dvsdelay.stimulus import FrameSequence

event = st.builds(
    EventRecord,
    st.floats(0, 1e4, allow_nan=False),
    st.integers(0, 2000),
    st.integers(0, 2000),
    st.sampled_from([Polarity.OFF, Polarity.ON]),
)


class TestEvents:
    def test_format(self):
        assert format_events([EventRecord(0.5, 3, 4, Polarity.ON)]) == "0.500000000 3 4 1\n"

    @given(st.lists(event, max_size=50))
    def test_round_trip_bytes(self, events):
        text = format_events(events)
        again = format_events(parse_events(text))
        assert again == text

    def test_file_round_trip(self, tmp_path):
        events = [EventRecord(0.1, 1, 2, Polarity.OFF), EventRecord(0.123456789, 0, 0, Polarity.ON)]
        write_events(tmp_path / "a.txt", events)
        write_events(tmp_path / "b.txt", read_events(tmp_path / "a.txt"))
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    def test_comments_and_blanks(self):
        assert len(parse_events("# header\n\n0.1 0 0 1\n")) == 1

    @pytest.mark.parametrize(
        "text, line",
        [
            ("0.1 0 0 1\n0.2 0 0\n", 2),
            ("0.1 0 0 1\n0.2 0 0 1\nabc 0 0 1\n", 3),
            ("0.1 0 0 7\n", 1),
            ("-0.1 0 0 1\n", 1),
        ],
    )
    def test_bad_lines_report_line_number(self, text, line):
        with pytest.raises(DataError, match=f"ev.txt:{line}:"):
            parse_events(text, "ev.txt")

    def test_empty_file_named(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(DataError, match="empty.txt"):
            read_events(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            read_events(tmp_path / "nope.txt")


class TestAtomicWrite:
    def test_no_temp_left(self, tmp_path):
        atomic_write(tmp_path / "sub" / "x.txt", "hello")
        assert (tmp_path / "sub" / "x.txt").read_text() == "hello"
        assert [p.name for p in (tmp_path / "sub").iterdir()] == ["x.txt"]


class TestPGM:
    def test_round_trip(self, tmp_path):
        raster = np.arange(12, dtype=float).reshape(3, 4) * 20
        write_pgm(tmp_path / "f.pgm", raster)
        assert (tmp_path / "f.pgm").read_bytes()[:2] == b"P5"
        assert np.array_equal(read_pgm(tmp_path / "f.pgm"), raster)

    def test_not_pgm(self, tmp_path):
        (tmp_path / "f.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(DataError, match="P5"):
            read_pgm(tmp_path / "f.pgm")

    def test_out_of_range(self, tmp_path):
        with pytest.raises(DataError):
            write_pgm(tmp_path / "f.pgm", np.full((2, 2), 300.0))


class TestManifest:
    def seq(self):
        frames = [np.full((2, 3), v) for v in (10.0, 50.0, 90.0)]
        return FrameSequence([0.0, 0.04, 0.08], frames)

    def test_round_trip(self, tmp_path):
        write_frame_manifest(tmp_path, self.seq())
        got = load_frame_manifest(tmp_path)
        assert got.timestamps == self.seq().timestamps
        assert all(np.array_equal(a, b) for a, b in zip(got.frames, self.seq().frames))

    def test_numeric_order(self, tmp_path):
        for i, v in [(2, 30.0), (10, 90.0), (1, 10.0)]:
            write_pgm(tmp_path / f"f{i}.pgm", np.full((1, 1), v))
        (tmp_path / "timestamps.txt").write_text("0\n1\n2\n")
        got = load_frame_manifest(tmp_path)
        assert [f[0, 0] for f in got.frames] == [10.0, 30.0, 90.0]

    def test_missing_frame(self, tmp_path):
        write_frame_manifest(tmp_path, self.seq())
        sorted(tmp_path.glob("*.pgm"))[1].unlink()
        with pytest.raises(DataError, match="3 timestamps but 2"):
            load_frame_manifest(tmp_path)

    def test_missing_timestamps(self, tmp_path):
        with pytest.raises(DataError, match="timestamps.txt"):
            load_frame_manifest(tmp_path)

    def test_bad_timestamp_line(self, tmp_path):
        write_frame_manifest(tmp_path, self.seq())
        (tmp_path / "timestamps.txt").write_text("0\nx\n0.08\n")
        with pytest.raises(DataError, match="timestamps.txt:2"):
            load_frame_manifest(tmp_path)


class TestGapCSV:
    def test_columns(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("mu_bin,l_bin,gap_length\n50,10,0.009\n100,10,0.0045\n")
        assert read_gap_csv(p) == [(50.0, 0.009), (100.0, 0.0045)]

    def test_malformed(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("mu,gap\n50,abc\n")
        with pytest.raises(DataError, match="g.csv:2"):
            read_gap_csv(p)

    def test_missing_columns(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("speed,delay\n50,0.009\n")
        with pytest.raises(DataError, match="columns"):
            read_gap_csv(p)


class TestConfig:
    def test_defaults(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# nothing set\n")
        cfg = load_config(p)
        assert cfg.mode is Mode.STOCHASTIC
        assert cfg.params == PixelParams()
        assert cfg.output_dir == (tmp_path / "out").resolve()

    def test_values(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "mode = delayed-empirical\n"
            "k_delay = 0.5  # trailing comment\n"
            "ramp_mu = 50, 100\n"
            "theta_on = 0.1\n"
            "rng_seed = 0x10\n"
            "output_dir = results\n"
        )
        cfg = load_config(p)
        assert cfg.mode is Mode.EMPIRICAL and cfg.k_delay == 0.5
        assert cfg.ramp_mu == (50.0, 100.0)
        assert cfg.params.theta_on == 0.1
        assert cfg.rng_seed == 16
        assert cfg.output_dir == (tmp_path / "results").resolve()

    def test_round_trip(self, tmp_path):
        cfg = RunConfig(mode=Mode.MECHANISTIC, k_delay=0.4, ramp_l=(12.5, 20.0), output_dir=tmp_path / "o")
        text = dump_config(cfg)
        again = parse_config(text, tmp_path / "x.cfg")
        assert again == cfg
        assert dump_config(again) == text

    def test_hash_ignores_output_dir(self, tmp_path):
        a = RunConfig(output_dir=tmp_path / "a")
        b = RunConfig(output_dir=tmp_path / "b")
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(RunConfig(rng_seed=1, output_dir=tmp_path / "a"))

    @pytest.mark.parametrize(
        "text, line, needle",
        [
            ("mode = ideal\nbogus = 1\n", 2, "unknown key"),
            ("k_delay = 0.4\n\nk_delay = 0.5\n", 3, "duplicate"),
            ("# c\nnoise_sigma = -1\n", 2, "noise_sigma"),
            ("mode = ideal\ntheta_on = 0\n", 2, "theta_on"),
            ("mode = sideways\n", 1, "mode"),
            ("bin_width = abc\n", 1, "bin_width"),
            ("just some words\n", 1, "key = value"),
            ("stimulus = frames\nframes_dir = missing_dir\n", 2, "frames_dir"),
            ("mu_half_width = 1.5\n", 1, "mu_half_width"),
        ],
    )
    def test_line_precise_errors(self, tmp_path, text, line, needle):
        p = tmp_path / "bad.cfg"
        p.write_text(text)
        with pytest.raises(ConfigError) as info:
            load_config(p)
        assert info.value.line == line
        assert f"bad.cfg:{line}:" in str(info.value)
        assert needle in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "none.cfg")

    def test_relative_frames_dir(self, tmp_path):
        (tmp_path / "frames").mkdir()
        p = tmp_path / "run.cfg"
        p.write_text("stimulus = frames\nframes_dir = frames\n")
        assert load_config(p).frames_dir == Path(tmp_path / "frames").resolve()
