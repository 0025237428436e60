import numpy as np
import pytest

from phvae.config import example1_config
from phvae.errors import NumericalError
from phvae.model import init_params
from phvae.rng import Rng
from phvae.train import AdamState, adam_step, read_epoch_csv, reconstruct, stabilized_loss, train


def tiny_config(**overrides):
    cfg = example1_config(S=2, A=1.0, seed=3)
    base = {"model.hidden_dim": 16, "optimizer.epochs": 5, "dataset.n_samples": 12,
            "dataset.n_features": 4}
    base.update(overrides)
    return cfg.replace(**base)


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        adam_step(p, {"w": np.zeros(2)}, AdamState(lr=0.1))
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])

    def test_first_step(self):
        g = np.array([0.3, -2.0, 1e-3])
        p = {"w": np.zeros(3)}
        st = AdamState(lr=0.01)
        adam_step(p, {"w": g}, st)
        np.testing.assert_allclose(p["w"], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
        assert st.t == 1

    def test_two_constant_steps(self):
        lr, b1, b2, eps, g = 0.05, 0.9, 0.999, 1e-8, 0.7
        # hand recurrence
        m1, v1 = (1 - b1) * g, (1 - b2) * g * g
        d1 = -lr * (m1 / (1 - b1)) / ((v1 / (1 - b2)) ** 0.5 + eps)
        m2, v2 = b1 * m1 + (1 - b1) * g, b2 * v1 + (1 - b2) * g * g
        d2 = -lr * (m2 / (1 - b1 ** 2)) / ((v2 / (1 - b2 ** 2)) ** 0.5 + eps)
        p = {"w": np.array([1.0])}
        st = AdamState(lr=lr)
        adam_step(p, {"w": np.array([g])}, st)
        assert p["w"][0] == pytest.approx(1.0 + d1, abs=1e-15)
        adam_step(p, {"w": np.array([g])}, st)
        assert p["w"][0] == pytest.approx(1.0 + d1 + d2, abs=1e-15)

    def test_zero_lr_bit_identical(self):
        w = Rng(0).normal(20)
        p = {"w": w.copy()}
        st = AdamState(lr=0.0)
        for k in range(3):
            adam_step(p, {"w": Rng(k).normal(20)}, st)
        assert p["w"].tobytes() == w.tobytes()

    def test_non_finite_gradient_names_parameter(self):
        p = {"a": np.zeros(2), "b": np.zeros(2)}
        with pytest.raises(NumericalError, match="'b'"):
            adam_step(p, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, AdamState())
        np.testing.assert_array_equal(p["a"], [0.0, 0.0])


class TestTrain:
    def test_rows_and_columns(self, tmp_path):
        rep = train(tiny_config(), output_dir=tmp_path)
        assert len(rep.rows) == 5
        rows = read_epoch_csv(tmp_path / "epochs.csv")
        assert list(rows[0]) == ["epoch", "recon", "kl_1", "kl_2", "ph", "mi", "total"]
        for r, row in zip(rows, rep.rows):
            assert r["total"] == row.total
            assert abs(r["total"] - r["recon"] - r["ph"]) < 1e-9
        assert (tmp_path / "params.json").exists() and (tmp_path / "report.json").exists()

    def test_deterministic(self):
        a, b = train(tiny_config()), train(tiny_config())
        assert a.totals().tobytes() == b.totals().tobytes()
        for k in a.params.arrays:
            assert a.params.arrays[k].tobytes() == b.params.arrays[k].tobytes()

    def test_zero_epochs(self, tmp_path):
        cfg = tiny_config(**{"optimizer.epochs": 0})
        rep = train(cfg, output_dir=tmp_path)
        assert rep.rows == []
        init = init_params(rep.params.config)
        for k in init.arrays:
            assert rep.params.arrays[k].tobytes() == init.arrays[k].tobytes()
        assert (tmp_path / "epochs.csv").read_text().count("\n") == 1

    def test_epochs_do_not_perturb_init(self):
        a = train(tiny_config(**{"optimizer.epochs": 0}))
        b = train(tiny_config(**{"optimizer.epochs": 2}))
        c = train(tiny_config(**{"optimizer.epochs": 3}))
        np.testing.assert_array_equal(b.totals(), c.totals()[:2])
        assert a.params.config == b.params.config

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_halts_with_location(self, tmp_path):
        cfg = tiny_config(**{"optimizer.lr": 1e4, "optimizer.epochs": 20})
        with pytest.raises(NumericalError, match=r"epoch \d+, batch \d+"):
            train(cfg, output_dir=tmp_path)
        assert (tmp_path / "epochs.csv").exists()

    def test_loss_decreases(self):
        rep = train(example1_config(S=3, A=1.0, seed=0))
        t = rep.totals()
        assert np.isfinite(t).all()
        assert t[-10:].mean() < t[:10].mean()


class TestReconstruct:
    def test_counts_and_range(self):
        rep = train(tiny_config(**{"optimizer.epochs": 1}))
        x = Rng(0).uniform((50, 4))
        out = reconstruct(rep.params, x, 1.0, 100, Rng(1))
        assert out.shape == (5000, 4)
        assert ((out > 0) & (out < 1)).all()

    def test_zero_amplitude_repeats_identical(self):
        rep = train(tiny_config(**{"optimizer.epochs": 1}))
        x = Rng(0).uniform((7, 4))
        out = reconstruct(rep.params, x, 0.0, 2, Rng(1))
        assert out[:7].tobytes() == out[7:].tobytes()

    def test_dimension_mismatch(self):
        rep = train(tiny_config(**{"optimizer.epochs": 0}))
        from phvae.errors import DimensionError
        with pytest.raises(DimensionError):
            reconstruct(rep.params, np.zeros((3, 5)), 1.0, 1, Rng(0))


def test_stabilized_loss():
    assert stabilized_loss(np.arange(20.0)) == pytest.approx(np.arange(10.0, 20.0).mean())
    assert stabilized_loss([3.0, 5.0]) == 4.0
