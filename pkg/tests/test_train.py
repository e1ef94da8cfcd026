import numpy as np
import pytest

from glaubernet.dataset import Dataset, DatasetSpec, build_splits
from glaubernet.dynamics import SimParams
from glaubernet.nn import Adam, Model, load_checkpoint, nll_loss
from glaubernet.train import (EpochRecord, TrainConfig, TrainHistory,
                              TrainingDiverged, detect_plateau, fine_tune,
                              gradient_norm_trace, read_history_csv, train,
                              write_history_csv)

TINY_ARCH = [
    {"op": "conv2d", "kernel": [3, 3], "channels": 2},
    {"op": "relu"},
    {"op": "maxpool", "pool": [1, 2]},
    {"op": "flatten"},
    {"op": "dense", "width": 8},
    {"op": "relu"},
]


@pytest.fixture(scope="module")
def tiny_data():
    spec = DatasetSpec(L=5, E=4, N_L=2, sim=SimParams(T=0.5, tau=0.1, M=8),
                       seed=7, n_train=12, N_test=6)
    ds = Dataset(spec, build_splits(spec))
    return ds.split("train").arrays(), ds.split("test").arrays()


def tiny_model(seed=0):
    return Model(5, 8, TINY_ARCH, seed=seed)


class TestTrain:
    def test_history_shape_and_epochs(self, tiny_data):
        tr, te = tiny_data
        _, hist = train(tiny_model(), tr, te, TrainConfig(epochs=3, seed=1))
        assert len(hist) == 3
        assert [r.epoch for r in hist] == [0, 1, 2]
        assert all(np.isfinite(r.loss) for r in hist)
        assert all(0 <= r.train_gamma <= 1 for r in hist)

    def test_determinism(self, tiny_data):
        tr, te = tiny_data
        m1, h1 = train(tiny_model(), tr, te, TrainConfig(epochs=2, seed=5))
        m2, h2 = train(tiny_model(), tr, te, TrainConfig(epochs=2, seed=5))
        for k in m1.params():
            assert np.array_equal(m1.params()[k], m2.params()[k])
        assert h1.records == h2.records

    def test_single_sample_descent(self, tiny_data):
        (X, Y), _ = tiny_data
        x, y = X[:1], Y[:1]
        model = tiny_model()
        config = TrainConfig(epochs=1, batch_size=1, lr=1e-4, seed=0)
        before = nll_loss(model.forward(x), y)
        grads = None
        model.forward(x, train=True)
        grads = model.backward(y)
        gnorm2 = sum(float((g ** 2).sum()) for g in grads.values())
        train(model, (x, y), None, config)
        after = nll_loss(model.forward(x), y)
        assert after <= before or abs(after - before) < 2 * config.lr * gnorm2

    def test_epochs_zero_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_empty_train_set_rejected(self, tiny_data):
        _, te = tiny_data
        with pytest.raises(ValueError):
            train(tiny_model(), (np.zeros((0, 5, 8)), np.zeros((0, 10))), te,
                  TrainConfig(epochs=1))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_history(self, tiny_data):
        tr, te = tiny_data
        model = tiny_model()
        model.set_params({k: np.full_like(v, 1e30)
                          for k, v in model.params().items()})
        with pytest.raises(TrainingDiverged) as err:
            train(model, tr, te, TrainConfig(epochs=1, seed=0))
        assert isinstance(err.value.history, TrainHistory)

    def test_resume_matches_uninterrupted(self, tiny_data, tmp_path):
        tr, te = tiny_data
        ckpt = tmp_path / "part.ckpt"
        straight, hist_all = train(tiny_model(seed=2), tr, te,
                                   TrainConfig(epochs=4, seed=9))
        _, hist_a = train(tiny_model(seed=2), tr, te,
                          TrainConfig(epochs=2, seed=9, checkpoint_path=ckpt))
        model_b, opt_b, meta = load_checkpoint(ckpt)
        resumed, hist_b = train(model_b, tr, te, TrainConfig(epochs=2, seed=9),
                                optimizer=opt_b, start_epoch=meta["epoch"])
        for k in straight.params():
            assert np.array_equal(straight.params()[k], resumed.params()[k])
        assert hist_all.records == hist_a.records + hist_b.records


class TestFineTune:
    def test_zero_pretrain_equals_cold_start(self, tiny_data):
        tr, te = tiny_data
        config = TrainConfig(epochs=2, seed=3, pretrain_epochs=0)
        ft_model, hist_pre, hist_ft = fine_tune(tr, te, tr, te, config,
                                                architecture=TINY_ARCH)
        assert len(hist_pre) == 0
        cold = Model(5, 8, TINY_ARCH, seed=3)
        cold, hist_cold = train(cold, tr, te, TrainConfig(epochs=2, seed=3))
        for k in cold.params():
            assert np.array_equal(cold.params()[k], ft_model.params()[k])
        assert hist_cold.records == hist_ft.records

    def test_two_stage_histories(self, tiny_data):
        tr, te = tiny_data
        config = TrainConfig(epochs=2, seed=1, pretrain_epochs=3)
        model, hist_pre, hist_ft = fine_tune(tr, te, tr, te, config,
                                             architecture=TINY_ARCH)
        assert len(hist_pre) == 3 and len(hist_ft) == 2

    def test_carry_optimizer_changes_result(self, tiny_data):
        tr, te = tiny_data
        config = TrainConfig(epochs=2, seed=1, pretrain_epochs=2)
        fresh, _, _ = fine_tune(tr, te, tr, te, config,
                                architecture=TINY_ARCH)
        carried, _, _ = fine_tune(tr, te, tr, te, config,
                                  architecture=TINY_ARCH, carry_optimizer=True)
        same = all(np.array_equal(fresh.params()[k], carried.params()[k])
                   for k in fresh.params())
        assert not same


class TestGradientTrace:
    def test_empty(self, tiny_data):
        tr, _ = tiny_data
        assert gradient_norm_trace(tiny_model(), tr, 0) == []

    def test_zero_model_balanced_labels_norm_is_zero(self):
        # complementary labels make the head-bias gradient cancel exactly,
        # and a zero model has no other live gradient path
        X = np.random.default_rng(0).uniform(-1, 1, (2, 5, 8)).astype(np.float32)
        Y = np.stack([np.zeros(10, dtype=np.uint8), np.ones(10, dtype=np.uint8)])
        model = tiny_model()
        model.set_params({k: np.zeros_like(v) for k, v in model.params().items()})
        trace = gradient_norm_trace(model, (X, Y), 1,
                                    TrainConfig(epochs=1, batch_size=2))
        assert trace[0] == 0.0

    def test_zero_model_single_sample_closed_form(self):
        # p = 0.5 everywhere: only head-bias gradients are alive, each head
        # contributes (0.5, -0.5)/K, so the norm is 0.5*sqrt(2/K)
        X = np.random.default_rng(0).uniform(-1, 1, (1, 5, 8)).astype(np.float32)
        Y = np.ones((1, 10), dtype=np.uint8)
        model = tiny_model()
        model.set_params({k: np.zeros_like(v) for k, v in model.params().items()})
        trace = gradient_norm_trace(model, (X, Y), 1,
                                    TrainConfig(epochs=1, batch_size=1))
        assert trace[0] == pytest.approx(0.5 * np.sqrt(2.0 / 10.0), rel=1e-6)

    def test_trace_length(self, tiny_data):
        tr, _ = tiny_data
        trace = gradient_norm_trace(tiny_model(), tr, 3,
                                    TrainConfig(epochs=3, seed=2))
        assert len(trace) == 3 and all(n >= 0 for n in trace)


class TestPlateau:
    def test_detects_low_window(self):
        norms = [1.0] * 10 + [1e-6] * 10
        assert detect_plateau(norms, threshold=1e-3, window=5) == 14

    def test_none_when_loud(self):
        assert detect_plateau([1.0] * 30, threshold=1e-3, window=5) is None

    def test_short_series(self):
        assert detect_plateau([1e-9], threshold=1e-3, window=5) is None


class TestHistoryCsv:
    def test_round_trip(self, tmp_path):
        hist = TrainHistory([
            EpochRecord(0, 0.5, 0.7, 0.65, 0.123456789),
            EpochRecord(1, 0.25, 0.8, 0.75, 0.01),
        ])
        path = tmp_path / "h.csv"
        write_history_csv(hist, path)
        back = read_history_csv(path)
        assert back.records == hist.records
        header = path.read_text().splitlines()[0]
        assert header == "epoch,loss,train_gamma,test_gamma,grad_norm"
