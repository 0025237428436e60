import csv
import json

import pytest

from phvae.cli import main
from phvae.config import example1_config


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg.to_dict()))
    return path


@pytest.fixture
def small(tmp_path):
    cfg = example1_config(S=2).replace(**{
        "model.hidden_dim": 8, "optimizer.epochs": 3, "dataset.n_samples": 10, "dataset.n_features": 3,
        "eval.n_repeats": 4, "eval.seeds": [0], "eval.S_grid": [1], "eval.A_grid": [1.0],
        "output_dir": str(tmp_path / "out")})
    return write_config(tmp_path, cfg)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestGenData:
    def test_example1_shape(self, tmp_path):
        cfg = write_config(tmp_path, example1_config())
        assert main(["gen-data", str(cfg), "--out", str(tmp_path / "o")]) == 0
        rows = read_rows(tmp_path / "o" / "data.csv")
        assert rows[0] == [f"x{j}" for j in range(1, 21)]
        assert len(rows) == 51 and all(len(r) == 20 for r in rows)
        side = json.loads((tmp_path / "o" / "data.json").read_text())
        assert side["dataset"]["seed"] == 2024

    def test_same_seed_same_bytes(self, tmp_path, small):
        main(["gen-data", str(small), "--data-out", str(tmp_path / "a.csv")])
        main(["gen-data", str(small), "--data-out", str(tmp_path / "b.csv")])
        a = (tmp_path / "a.csv").read_bytes()
        assert a == (tmp_path / "b.csv").read_bytes()
        assert b"\r" not in a

    def test_malformed_spec(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"dataset": {"source": "uniform", "n_samples": -4, "n_features": 2}}))
        assert main(["gen-data", str(bad), "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["gen-data", str(bad)]) == 2


class TestTrain:
    def test_artifacts(self, tmp_path, small):
        assert main(["train", str(small)]) == 0
        out = tmp_path / "out"
        rows = read_rows(out / "epochs.csv")
        assert rows[0] == ["epoch", "recon", "kl_1", "kl_2", "ph", "mi", "total"] and len(rows) == 4
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["model"]["S"] == 2
        assert (out / "params.json").exists()

    def test_zero_epochs(self, tmp_path, small):
        assert main(["train", str(small), "--epochs", "0"]) == 0
        assert len(read_rows(tmp_path / "out" / "epochs.csv")) == 1
        assert (tmp_path / "out" / "params.json").exists()

    def test_flag_overrides(self, tmp_path, small):
        assert main(["train", str(small), "--s-max", "1", "--amplitude", "3", "--out", str(tmp_path / "o2")]) == 0
        cfg = json.loads((tmp_path / "o2" / "config.json").read_text())
        assert cfg["model"]["S"] == 1 and cfg["model"]["A"] == 3.0

    def test_missing_dataset_file(self, tmp_path, capsys):
        cfg = example1_config().to_dict()
        cfg["dataset"] = {"source": "csv_file", "path": str(tmp_path / "nowhere.csv")}
        cfg["output_dir"] = str(tmp_path / "out")
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        assert main(["train", str(path)]) == 3
        assert "nowhere.csv" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_exit(self, tmp_path, small):
        assert main(["train", str(small), "--lr", "1e4", "--epochs", "20"]) == 4
        assert (tmp_path / "out" / "epochs.csv").exists()


def test_reconstruct(tmp_path, small):
    main(["train", str(small)])
    assert main(["reconstruct", str(small)]) == 0
    rows = read_rows(tmp_path / "out" / "reconstructions.csv")
    assert len(rows) == 1 + 4 * 10
    assert len(read_rows(tmp_path / "out" / "density_reconstructed.csv")) == 21


class TestCompare:
    def test_single_cell(self, tmp_path, small):
        assert main(["compare", str(small)]) == 0
        rows = read_rows(tmp_path / "out" / "comparison.csv")
        assert len(rows) == 2 and rows[1][-1] == "VAE baseline"
        for name in ("density_truth.csv", "density_baseline.csv", "density_best.csv"):
            assert (tmp_path / "out" / name).exists()

    def test_reproducible_except_timing(self, tmp_path, small):
        main(["compare", str(small), "--out", str(tmp_path / "a")])
        main(["compare", str(small), "--out", str(tmp_path / "b")])
        ra, rb = read_rows(tmp_path / "a" / "comparison.csv"), read_rows(tmp_path / "b" / "comparison.csv")
        wall = ra[0].index("wall_seconds")
        strip = lambda rows: [r[:wall] + r[wall + 1:] for r in rows]
        assert strip(ra) == strip(rb)
        assert (tmp_path / "a" / "density_best.csv").read_bytes() == (tmp_path / "b" / "density_best.csv").read_bytes()


def test_selfcheck(capsys):
    assert main(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 4 and "max relative error" in out
