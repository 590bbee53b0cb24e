import os

import numpy as np
import pytest

from hdfed.channel import read_model
from hdfed.cli import main
from hdfed.config import ConfigError, load_config, parse_config_text
from hdfed.data import Dataset, save_binary

BASE_CONFIG = """
# tiny synthetic run
data.kind = synth
data.synth.classes = 3
data.synth.features = 8
data.synth.train_per_class = 30
data.synth.test_per_class = 10
data.synth.separation = 4.0
data.synth.seed = 2
encoder.dim = 256
encoder.seed = 1
round.clients = 4
round.participation = 1.0
round.epochs = 1
round.batch = 10
round.rounds = 4
round.seed = 5
"""


def write_config(tmp_path, text=BASE_CONFIG, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_rows(path):
    lines = open(path).read().strip().splitlines()
    return lines[0], [l for l in lines[1:] if not l.startswith("#")], [
        l for l in lines[1:] if l.startswith("#")
    ]


class TestConfigParsing:
    def test_parse_flat_text(self):
        entries = parse_config_text("a.b = 1\n# comment\n\nc.d = x # trailing\n")
        assert entries == {"a.b": "1", "c.d": "x"}

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match=":1:"):
            parse_config_text("not a pair")

    def test_defaults_mirror_reference_scale(self):
        cfg = load_config(None)
        assert cfg.round.num_clients == 100
        assert cfg.round.participation == 0.2
        assert cfg.round.rounds == 100
        assert cfg.round.local_epochs == 1
        assert cfg.round.local_batch == 10
        assert cfg.encoder.dim == 10000

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            load_config(None, {"round.clientz": "5"})

    def test_full_batch_keyword(self):
        cfg = load_config(None, {"round.batch": "full"})
        assert cfg.round.local_batch is None

    def test_invalid_channel_kind_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, {"channel.kind": "carrier_pigeon"})

    def test_env_seed_override(self, monkeypatch):
        monkeypatch.setenv("HDFED_SEED", "123")
        cfg = load_config(None)
        assert cfg.round.seed == 123
        # explicit key still wins
        cfg = load_config(None, {"round.seed": "7"})
        assert cfg.round.seed == 7


class TestTrainCommand:
    def test_writes_metrics_and_model(self, tmp_path):
        cfg = write_config(tmp_path)
        metrics = str(tmp_path / "m.csv")
        model = str(tmp_path / "model.hdfm")
        rc = main(
            ["train", "--config", cfg, "--set", f"output.metrics={metrics}",
             "--set", f"output.model={model}"]
        )
        assert rc == 0
        header, rows, comments = read_rows(metrics)
        assert header == (
            "round,accuracy,train_loss,uplink_bytes_cum,downlink_bytes_cum,"
            "participants,wall_ms"
        )
        assert len(rows) == 4
        stored, codec = read_model(model)
        assert stored.vectors.shape == (3, 256)
        assert codec.representation == "float32"

    def test_target_accuracy_summary_line(self, tmp_path):
        cfg = write_config(tmp_path)
        metrics = str(tmp_path / "m.csv")
        rc = main(
            ["train", "--config", cfg,
             "--set", f"output.metrics={metrics}",
             "--set", f"output.model={tmp_path / 'x.hdfm'}",
             "--set", "target_accuracy=0.5"]
        )
        assert rc == 0
        _, _, comments = read_rows(metrics)
        assert len(comments) == 1
        assert "reached_round=" in comments[0]
        assert "uplink_bytes_cum=" in comments[0]

    def test_invalid_channel_kind_exits_nonzero_before_running(self, tmp_path):
        cfg = write_config(tmp_path, BASE_CONFIG + "channel.kind = smoke_signal\n")
        metrics = str(tmp_path / "never.csv")
        rc = main(["train", "--config", cfg, "--set", f"output.metrics={metrics}"])
        assert rc != 0
        assert not os.path.exists(metrics)

    def test_deterministic_metrics_modulo_wall_clock(self, tmp_path):
        cfg = write_config(tmp_path)

        def run(name):
            metrics = str(tmp_path / name)
            rc = main(
                ["train", "--config", cfg,
                 "--set", f"output.metrics={metrics}",
                 "--set", f"output.model={tmp_path / (name + '.hdfm')}"]
            )
            assert rc == 0
            lines = open(metrics).read().strip().splitlines()
            return ["," .join(l.split(",")[:-1]) for l in lines]  # drop wall_ms

        assert run("a.csv") == run("b.csv")

    def test_byte_cumulative_columns_non_decreasing(self, tmp_path):
        cfg = write_config(tmp_path)
        metrics = str(tmp_path / "m.csv")
        main(["train", "--config", cfg, "--set", f"output.metrics={metrics}",
              "--set", f"output.model={tmp_path / 'x.hdfm'}"])
        _, rows, _ = read_rows(metrics)
        up = [int(r.split(",")[3]) for r in rows]
        down = [int(r.split(",")[4]) for r in rows]
        assert up == sorted(up) and down == sorted(down)


class TestEncodeEvalCommands:
    @pytest.fixture()
    def csv_dataset(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = []
        for i in range(60):
            label = i % 2
            center = 3.0 if label else -3.0
            feats = center + rng.standard_normal(4)
            rows.append(",".join(f"{v:.5f}" for v in feats) + f",{label}")
        path = tmp_path / "data.csv"
        path.write_text("\n".join(rows) + "\n")
        return str(path)

    def test_encode_then_train_consumes_encoded_file(self, tmp_path, csv_dataset):
        encoded = str(tmp_path / "enc.hdds")
        rc = main(
            ["encode", "--data", csv_dataset, "--dim", "128", "--seed", "3", "--out", encoded]
        )
        assert rc == 0
        metrics = str(tmp_path / "m.csv")
        rc = main(
            ["train",
             "--set", "data.kind=hdds",
             "--set", f"data.train={encoded}",
             "--set", "data.encoded=true",
             "--set", "round.clients=2",
             "--set", "round.participation=1.0",
             "--set", "round.rounds=3",
             "--set", f"output.metrics={metrics}",
             "--set", f"output.model={tmp_path / 'model.hdfm'}"]
        )
        assert rc == 0
        _, rows, _ = read_rows(metrics)
        assert len(rows) == 3

    def test_encoded_output_size(self, tmp_path, csv_dataset):
        encoded = str(tmp_path / "enc.hdds")
        main(["encode", "--data", csv_dataset, "--dim", "128", "--out", encoded])
        # 18-byte header + n * d * 4 + n * 2
        assert os.path.getsize(encoded) == 18 + 60 * 128 * 4 + 60 * 2

    def test_encode_deterministic_bytes(self, tmp_path, csv_dataset):
        a, b = str(tmp_path / "a.hdds"), str(tmp_path / "b.hdds")
        main(["encode", "--data", csv_dataset, "--dim", "64", "--seed", "5", "--out", a])
        main(["encode", "--data", csv_dataset, "--dim", "64", "--seed", "5", "--out", b])
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_eval_trained_model(self, tmp_path, csv_dataset, capsys):
        metrics = str(tmp_path / "m.csv")
        model = str(tmp_path / "model.hdfm")
        main(
            ["train",
             "--set", "data.kind=csv",
             "--set", f"data.train={csv_dataset}",
             "--set", "encoder.dim=128",
             "--set", "encoder.seed=3",
             "--set", "round.clients=2",
             "--set", "round.participation=1.0",
             "--set", "round.rounds=5",
             "--set", f"output.metrics={metrics}",
             "--set", f"output.model={model}"]
        )
        rc = main(
            ["eval", "--model", model, "--data", csv_dataset, "--dim", "128", "--seed", "3"]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "accuracy 1.0000" in out
        assert "class 0" in out and "class 1" in out

    def test_eval_random_model_scores_chance(self, tmp_path, capsys):
        from hdfed.channel import write_model
        from hdfed.hdc import ClassPrototypes

        # balanced labels on pure-noise features: a random model flips coins
        rng = np.random.default_rng(0)
        rows = [
            ",".join(f"{v:.5f}" for v in rng.standard_normal(4)) + f",{i % 2}"
            for i in range(200)
        ]
        data = tmp_path / "noise.csv"
        data.write_text("\n".join(rows) + "\n")
        model = ClassPrototypes(rng.standard_normal((2, 128)), np.zeros(2, dtype=np.int64))
        path = str(tmp_path / "random.hdfm")
        write_model(model, path)
        rc = main(["eval", "--model", path, "--data", str(data), "--dim", "128", "--seed", "3"])
        assert rc == 0
        line = capsys.readouterr().out.splitlines()[0]
        overall = float(line.split()[1])
        assert abs(overall - 0.5) <= 0.15

    def test_eval_dimension_mismatch_fails(self, tmp_path, csv_dataset):
        model = str(tmp_path / "model.hdfm")
        main(
            ["train",
             "--set", "data.kind=csv",
             "--set", f"data.train={csv_dataset}",
             "--set", "encoder.dim=128",
             "--set", "round.clients=2",
             "--set", "round.rounds=1",
             "--set", f"output.metrics={tmp_path / 'm.csv'}",
             "--set", f"output.model={model}"]
        )
        rc = main(["eval", "--model", model, "--data", csv_dataset, "--dim", "64"])
        assert rc != 0


class TestSweepCommand:
    def test_grid_produces_one_file_per_cell(self, tmp_path):
        cfg = write_config(tmp_path)
        out_dir = str(tmp_path / "sweep")
        rc = main(
            ["sweep", "--config", cfg, "--out-dir", out_dir,
             "--grid", "E=1,2", "--grid", "B=5,10"]
        )
        assert rc == 0
        files = sorted(os.listdir(out_dir))
        assert sum(f.endswith(".csv") and f != "summary.csv" for f in files) == 4
        summary = open(os.path.join(out_dir, "summary.csv")).read().splitlines()
        assert summary[0].startswith("cell,round.epochs,round.batch,status")
        assert len(summary) == 5

    def test_empty_grid_runs_base_only(self, tmp_path):
        cfg = write_config(tmp_path)
        out_dir = str(tmp_path / "sweep0")
        rc = main(["sweep", "--config", cfg, "--out-dir", out_dir])
        assert rc == 0
        files = os.listdir(out_dir)
        assert sum(f.endswith(".csv") and f != "summary.csv" for f in files) == 1

    def test_cell_failure_recorded_and_sweep_continues(self, tmp_path):
        cfg = write_config(tmp_path)
        out_dir = str(tmp_path / "sweepF")
        rc = main(
            ["sweep", "--config", cfg, "--out-dir", out_dir,
             "--grid", "d=64,4"]  # d=4 < input_dim=8 fails
        )
        assert rc == 0
        summary = open(os.path.join(out_dir, "summary.csv")).read()
        assert ",ok," in summary and ",error," in summary

    def test_dimensionality_grid_layout(self, tmp_path):
        # the dimensionality-study shape: one cell per hyperspace size
        cfg = write_config(tmp_path)
        out_dir = str(tmp_path / "sweepd")
        rc = main(
            ["sweep", "--config", cfg, "--out-dir", out_dir,
             "--grid", "d=128,256,512"]
        )
        assert rc == 0
        summary = open(os.path.join(out_dir, "summary.csv")).read().splitlines()
        assert len(summary) == 4 and summary[0].startswith("cell,encoder.dim,")
