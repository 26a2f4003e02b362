import csv
import json

import numpy as np
import pytest

from eventforge.cli import main
from eventforge.events import SensorGeometry, slide_windows
from eventforge.representations import RepresentationKind, build, encode_window_image
from eventforge.stream_format import read_events, read_metadata


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def sim_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "run"
    assert run("simulate", "--duration", "1", "--seed", "7", "--out", str(out)) == 0
    return out


class TestSimulate:
    def test_outputs_and_manifest(self, sim_run):
        assert (sim_run.parent / "run.evs").exists()
        assert (sim_run.parent / "run.evm").exists()
        manifest = json.loads((sim_run.parent / "run.manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["subcommand"] == "simulate"

    def test_deterministic_across_runs(self, sim_run, tmp_path):
        out = tmp_path / "again"
        assert run("simulate", "--duration", "1", "--seed", "7", "--out", str(out)) == 0
        assert (tmp_path / "again.evs").read_bytes() == (sim_run.parent / "run.evs").read_bytes()
        assert (tmp_path / "again.evm").read_bytes() == (sim_run.parent / "run.evm").read_bytes()

    def test_different_seed_differs(self, sim_run, tmp_path):
        out = tmp_path / "other"
        assert run("simulate", "--duration", "1", "--seed", "8", "--out", str(out)) == 0
        assert (tmp_path / "other.evs").read_bytes() != (sim_run.parent / "run.evs").read_bytes()

    def test_scene_config_overrides_primitive(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "scene": {"primitive": {"kind": "disk", "radius_m": 0.15,
                                    "albedo_a": [1.0, 1.0, 1.0],
                                    "albedo_b": [0.2, 0.2, 0.2]}}
        }))
        a = tmp_path / "a"
        b = tmp_path / "b"
        c = tmp_path / "c"
        assert run("simulate", "--duration", "0.2", "--seed", "3",
                   "--config", str(cfg), "--out", str(a)) == 0
        assert run("simulate", "--duration", "0.2", "--seed", "3",
                   "--config", str(cfg), "--out", str(b)) == 0
        assert run("simulate", "--duration", "0.2", "--seed", "3", "--out", str(c)) == 0
        assert (tmp_path / "a.evs").read_bytes() == (tmp_path / "b.evs").read_bytes()
        assert (tmp_path / "a.evs").read_bytes() != (tmp_path / "c.evs").read_bytes()

    def test_bad_primitive_key_is_data_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scene": {"primitive": {"radius": 0.2}}}))
        assert run("simulate", "--duration", "0.1", "--seed", "1",
                   "--config", str(cfg), "--out", str(tmp_path / "x")) == 2

    def test_pose_count_matches_steps(self, sim_run):
        events, steps = read_events(sim_run.parent / "run.evs")
        poses, _ = read_metadata(sim_run.parent / "run.evm")
        assert steps == 1000
        assert poses.shape == (1000, 12)


class TestWindows:
    def test_full_window_count_on_one_second_stream(self, sim_run, tmp_path):
        out_dir = tmp_path / "w"
        assert run("windows", "--events", str(sim_run.parent / "run.evs"),
                   "--repr", "lnes", "--length-ms", "100", "--stride-ms", "1",
                   "--out-dir", str(out_dir)) == 0
        files = sorted(out_dir.glob("window_*.evrw"))
        assert len(files) == 901  # (1000 - 100) / 1 + 1 full windows

    def test_pipe_composition_matches_in_memory(self, sim_run, tmp_path):
        out_dir = tmp_path / "w2"
        assert run("windows", "--events", str(sim_run.parent / "run.evs"),
                   "--repr", "lnes", "--length-ms", "100", "--stride-ms", "50",
                   "--out-dir", str(out_dir)) == 0
        events, steps = read_events(sim_run.parent / "run.evs")
        geometry = SensorGeometry(240, 180)
        expected = [
            encode_window_image(build(RepresentationKind.LNES, w, geometry))
            for w in slide_windows(events, 100_000, 50_000, end=steps * 1000)
        ]
        files = sorted(out_dir.glob("window_*.evrw"))
        assert len(files) == len(expected)
        for path, blob in zip(files, expected):
            assert path.read_bytes() == blob

    def test_thread_cap_respected(self, sim_run, tmp_path, monkeypatch):
        monkeypatch.setenv("EVENTFORGE_THREADS", "1")
        out_dir = tmp_path / "w3"
        assert run("windows", "--events", str(sim_run.parent / "run.evs"),
                   "--repr", "eci", "--length-ms", "100", "--stride-ms", "100",
                   "--out-dir", str(out_dir), "--limit", "3") == 0
        assert len(list(out_dir.glob("window_*.evrw"))) == 3


class TestEncodeDecode:
    def test_csv_round_trip(self, tmp_path):
        csv_in = tmp_path / "in.csv"
        csv_in.write_text("t,x,y,p\n0,3,4,1\n1000,5,6,-1\n3000,7,8,1\n")
        evs = tmp_path / "out.evs"
        assert run("encode", "--csv", str(csv_in), "--out", str(evs)) == 0
        csv_out = tmp_path / "out.csv"
        assert run("decode", "--events", str(evs), "--out", str(csv_out)) == 0
        rows = list(csv.reader(csv_out.open()))
        assert rows[0] == ["t", "x", "y", "p"]
        assert rows[1:] == [["0", "3", "4", "1"], ["1000", "5", "6", "-1"], ["3000", "7", "8", "1"]]

    def test_data_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.evs"
        bad.write_bytes(bytes([1, 0, 2, 9]))
        out = tmp_path / "x.csv"
        assert run("decode", "--events", str(bad), "--out", str(out)) == 2

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            run("decode", "--no-such-flag")
        assert exc.value.code == 1

    def test_unknown_command_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 1


class TestFilter:
    def test_smooths_noisy_track(self, tmp_path):
        rng = np.random.default_rng(0)
        velocity = rng.uniform(-0.01, 0.01, 12)
        truth = rng.uniform(-1, 1, 12) + np.arange(400)[:, None] * velocity
        noisy = truth + rng.normal(0, 0.2, truth.shape)
        from eventforge.stream_format import write_metadata

        raw = tmp_path / "raw.evm"
        write_metadata(raw, noisy)
        out = tmp_path / "filt.evm"
        assert run("filter", "--in", str(raw), "--out", str(out), "--mode", "slow") == 0
        filtered, _ = read_metadata(out)
        assert filtered.shape == noisy.shape
        rmse_f = np.sqrt(((filtered[100:] - truth[100:]) ** 2).mean())
        rmse_n = np.sqrt(((noisy[100:] - truth[100:]) ** 2).mean())
        assert rmse_f < rmse_n

    def test_auto_mode_runs(self, tmp_path):
        from eventforge.stream_format import write_metadata

        raw = tmp_path / "raw.evm"
        write_metadata(raw, np.zeros((50, 12)))
        out = tmp_path / "filt.evm"
        assert run("filter", "--in", str(raw), "--out", str(out), "--mode", "auto") == 0
        filtered, _ = read_metadata(out)
        assert filtered.shape == (50, 12)


class TestEval:
    def write_keypoints(self, path, frames, offset=0):
        # integer coordinates keep translation invariance exact in floats
        rng = np.random.default_rng(3)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "joint", "x", "y", "z"])
            for f in range(frames):
                pts = rng.integers(-50, 50, (21, 3)) + offset
                for j in range(21):
                    writer.writerow([f, j, *pts[j]])

    def test_perfect_prediction_auc_one(self, tmp_path):
        pred = tmp_path / "p.csv"
        gt = tmp_path / "g.csv"
        self.write_keypoints(pred, 5)
        self.write_keypoints(gt, 5)
        out = tmp_path / "curve.csv"
        plot = tmp_path / "curve.png"
        assert run("eval", "--pred", str(pred), "--gt", str(gt), "--metric", "3d",
                   "--out-curve", str(out), "--plot", str(plot)) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["threshold", "fraction"]
        assert all(float(r[1]) == 1.0 for r in rows[1:])
        assert plot.exists()
        manifest = json.loads(open(str(out) + ".manifest.json").read())
        assert manifest["auc"] == 1.0

    def test_translation_offset_keeps_3d_auc(self, tmp_path):
        pred = tmp_path / "p.csv"
        gt = tmp_path / "g.csv"
        self.write_keypoints(pred, 4, offset=500.0)  # rigid offset, removed by root alignment
        self.write_keypoints(gt, 4)
        out = tmp_path / "curve.csv"
        assert run("eval", "--pred", str(pred), "--gt", str(gt), "--metric", "3d",
                   "--out-curve", str(out)) == 0
        rows = list(csv.reader(out.open()))
        assert all(float(r[1]) == 1.0 for r in rows[1:])


class TestCalibrate:
    def test_pgm_pipeline(self, tmp_path):
        from PIL import Image

        from eventforge.simulator import CameraConfig, LogBrightnessFrame, MemoryFrame, step
        from eventforge.stream_format import write_events
        import numpy as np

        # staircase intensities, monotone per pixel, already 8-bit exact
        levels = np.round(np.linspace(40, 250, 12))
        frames = [np.full((16, 16), lv) for lv in levels]
        config = CameraConfig(SensorGeometry(16, 16), threshold=0.2,
                              noise_rate_positive=0.0, noise_rate_negative=0.0)
        rng = np.random.default_rng(0)
        memory = MemoryFrame(np.log(np.maximum(frames[0], 10.0)))
        chunks = []
        manifest_lines = []
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        for j, frame in enumerate(frames):
            Image.fromarray(frame.astype(np.uint8), mode="L").save(frames_dir / f"f{j:03d}.pgm")
            manifest_lines.append(f"{j * 1000} f{j:03d}.pgm")
            if j:
                lb = LogBrightnessFrame(np.log(np.maximum(frame.astype(np.uint8).astype(float), 10.0)),
                                        timestamp=j * 1000)
                events, memory = step(memory, lb, config, rng)
                if len(events):
                    chunks.append(events)
        events = np.concatenate(chunks)
        evs = tmp_path / "cal.evs"
        write_events(evs, events)
        manifest = tmp_path / "frames.txt"
        manifest.write_text("\n".join(manifest_lines) + "\n")
        assert run("calibrate", "--events", str(evs), "--frames-dir", str(frames_dir),
                   "--manifest", str(manifest)) == 0


class TestInfo:
    def test_reports_counts(self, sim_run, capsys):
        assert run("info", "--events", str(sim_run.parent / "run.evs"),
                   "--metadata", str(sim_run.parent / "run.evm")) == 0
        out = capsys.readouterr().out
        assert "steps: 1000" in out
        assert "N=12" in out
