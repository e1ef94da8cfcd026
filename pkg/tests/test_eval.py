import math

import numpy as np
import pytest

from glaubernet.eval import (EntropySplit, PredictionReport, accuracy,
                             confidence_sweep, decode_bits, entropy_split,
                             linear_fit, predict_adjacency, read_report_csv,
                             write_report_csv, evaluate_batch, LN2)
from glaubernet.dynamics import AdjacencyMatrix, num_pairs
from glaubernet.nn import Model

TINY_ARCH = [
    {"op": "conv2d", "kernel": [3, 3], "channels": 2},
    {"op": "relu"},
    {"op": "maxpool", "pool": [1, 2]},
    {"op": "flatten"},
    {"op": "dense", "width": 8},
    {"op": "relu"},
]


def heads(p_present):
    p1 = np.asarray(p_present, dtype=np.float64)
    return np.stack([1.0 - p1, p1], axis=-1)


def make_report(predicted, truth, entropy=None, tag="test"):
    predicted = np.asarray(predicted, dtype=np.uint8)
    truth = np.asarray(truth, dtype=np.uint8)
    n = len(predicted)
    if entropy is None:
        entropy = np.zeros(n)
    return PredictionReport(
        set_tag=tag, L=3,
        instance_index=np.zeros(n, dtype=int),
        pair_i=np.zeros(n, dtype=int), pair_j=np.ones(n, dtype=int),
        predicted=predicted, truth=truth,
        p_absent=1.0 - predicted.astype(float),
        p_present=predicted.astype(float),
        entropy=np.asarray(entropy, dtype=float))


class TestDecode:
    def test_tie_decodes_to_absent(self):
        assert decode_bits(np.array([0.5, 0.5])) == 0

    def test_certain_absent(self):
        assert decode_bits(np.array([1.0, 0.0])) == 0

    def test_majority_present(self):
        assert decode_bits(np.array([0.1, 0.9])) == 1

    def test_positive_rescale_keeps_decision(self):
        rng = np.random.default_rng(0)
        p1 = rng.uniform(0, 1, size=200)
        p = heads(p1)
        scaled = p * 7.3
        renorm = scaled / scaled.sum(axis=-1, keepdims=True)
        assert np.array_equal(decode_bits(p), decode_bits(renorm))


class TestPredictAdjacency:
    def test_shapes_and_entropy(self):
        model = Model(5, 8, TINY_ARCH, seed=1)
        inst = np.random.default_rng(0).uniform(-1, 1, (5, 8))
        adj, s = predict_adjacency(model, inst)
        assert isinstance(adj, AdjacencyMatrix)
        assert adj.L == 5
        assert s.shape == (10,)
        assert np.all(s >= 0) and np.all(s <= LN2 + 1e-12)

    def test_uniform_head_entropy(self):
        model = Model(5, 8, TINY_ARCH, seed=1)
        model.set_params({k: np.zeros_like(v) for k, v in model.params().items()})
        adj, s = predict_adjacency(model, np.ones((5, 8)))
        assert adj.E == 0  # ties all decode to no-connection
        assert np.allclose(s, math.log(2), atol=1e-7)


class TestAccuracy:
    def test_all_correct(self):
        r = make_report([1, 0, 1], [1, 0, 1])
        assert accuracy(r) == 1.0
        assert r.gamma == 1.0

    def test_pooling_over_reports(self):
        r1 = make_report([1, 1], [1, 0])
        r2 = make_report([0, 0], [0, 0])
        assert accuracy([r1, r2]) == pytest.approx(3 / 4)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accuracy([])

    def test_brute_force_recount(self):
        rng = np.random.default_rng(3)
        pred = rng.integers(0, 2, 97)
        truth = rng.integers(0, 2, 97)
        r = make_report(pred, truth)
        manual = sum(1 for p, t in zip(pred, truth) if p == t) / 97
        assert r.gamma == pytest.approx(manual, abs=1e-15)

    def test_random_heads_near_half(self):
        # off-tie random heads vs random labels: gamma -> 0.5
        rng = np.random.default_rng(11)
        n, K = 1000, 15
        p1 = np.where(rng.uniform(size=(n, K)) < 0.5,
                      0.5 - rng.uniform(0.01, 0.4, (n, K)),
                      0.5 + rng.uniform(0.01, 0.4, (n, K)))
        bits = decode_bits(heads(p1))
        labels = rng.integers(0, 2, (n, K))
        gamma = float((bits == labels).mean())
        assert abs(gamma - 0.5) < 0.02


class TestEntropySplit:
    def test_two_records(self):
        r = make_report([1, 0], [1, 1], entropy=[0.0, LN2])
        split = entropy_split(r)
        assert split == EntropySplit(mean_correct=0.0, mean_incorrect=LN2)

    def test_all_correct_flags_incorrect_mean(self):
        r = make_report([1, 1], [1, 1], entropy=[0.1, 0.2])
        split = entropy_split(r)
        assert split.mean_incorrect is None
        assert split.mean_correct == pytest.approx(0.15)


class TestConfidenceSweep:
    def test_threshold_above_ln2_keeps_everything(self):
        rng = np.random.default_rng(0)
        r = make_report(rng.integers(0, 2, 50), rng.integers(0, 2, 50),
                        entropy=rng.uniform(0, LN2, 50))
        (pt,) = confidence_sweep(r, [LN2 + 1e-9])
        assert pt.eta == 1.0
        assert pt.gamma_filtered == pytest.approx(r.gamma)

    def test_eta_monotone(self):
        rng = np.random.default_rng(1)
        r = make_report(rng.integers(0, 2, 200), rng.integers(0, 2, 200),
                        entropy=rng.uniform(0, LN2, 200))
        pts = confidence_sweep(r, np.linspace(0.01, LN2, 20))
        etas = [p.eta for p in pts]
        assert all(a <= b for a, b in zip(etas, etas[1:]))

    def test_empty_subset_flagged(self):
        r = make_report([1, 0], [1, 0], entropy=[0.5, 0.6])
        (pt,) = confidence_sweep(r, [0.1])
        assert pt.eta == 0.0 and pt.gamma_filtered is None


class TestLinearFit:
    def test_exact_line(self):
        pts = [(x, 2.0 * x + 1.0) for x in (0, 1, 2, 5, 9)]
        fit = linear_fit(pts)
        assert abs(fit.a - 2.0) < 1e-9
        assert abs(fit.b - 1.0) < 1e-9
        assert abs(fit.r2 - 1.0) < 1e-9

    def test_hand_ols(self):
        fit = linear_fit([(0, 0), (1, 1), (2, 0)])
        assert fit.a == pytest.approx(0.0, abs=1e-12)
        assert fit.b == pytest.approx(1 / 3, abs=1e-12)
        assert fit.r2 == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_abscissae(self):
        with pytest.raises(ValueError):
            linear_fit([(1.0, 2.0), (1.0, 3.0)])

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            linear_fit([(1.0, 2.0)])

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 30, 40)
        y = 0.8 * x - 2.0 + rng.normal(0, 0.3, 40)
        fit = linear_fit(zip(x, y))
        resid = y - fit.predict(x)
        assert abs(resid.sum()) < 1e-9
        assert abs(resid @ x) < 1e-9

    def test_r2_never_above_one(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x = rng.uniform(0, 10, 8)
            y = rng.uniform(-5, 5, 8)
            assert linear_fit(zip(x, y)).r2 <= 1.0


class TestReportRoundTrip:
    def test_csv_round_trip(self, tmp_path):
        model = Model(5, 8, TINY_ARCH, seed=2)
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (4, 5, 8)).astype(np.float32)
        Y = rng.integers(0, 2, (4, 10)).astype(np.uint8)
        report = evaluate_batch(model, X, Y, set_tag="test")
        assert len(report) == 4 * num_pairs(5)
        path = tmp_path / "r.csv"
        write_report_csv(report, path)
        back = read_report_csv(path, set_tag="test")
        assert np.array_equal(back.predicted, report.predicted)
        assert np.array_equal(back.truth, report.truth)
        assert np.allclose(back.entropy, report.entropy, atol=0)
        assert back.gamma == report.gamma
