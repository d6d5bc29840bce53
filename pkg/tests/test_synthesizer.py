import numpy as np
import pytest

from conftest import crandn
from fdbeam import autodiff as ad
from fdbeam import channel, metrics
from fdbeam import synthesizer as syn
from fdbeam.autodiff import Tensor
from fdbeam.probing import NOISELESS, init_codebooks, measure
from fdbeam.synthesizer import (
    CheckpointError,
    DatasetSource,
    DataExhaustedError,
    StreamSource,
    SynthesizerNet,
    TrainConfig,
    TrainingDivergedError,
)


@pytest.fixture
def net(rng):
    return SynthesizerNet.create(4, 4, 4, rng)


@pytest.fixture
def data(small_scenario):
    return channel.draw_batch(small_scenario, 3, 0, 8)


def tiny_config(**kw):
    base = dict(batch_size=16, max_batches=5, conv_window=100, seed=2)
    base.update(kw)
    return TrainConfig(**base)


class TestNetwork:
    def test_layer_widths(self, rng):
        net = SynthesizerNet.create(8, 4, 6, rng)
        widths = [w.shape for w, _ in net.layers]
        assert widths == [(36, 192), (192, 192), (192, 96), (96, 96), (96, 24)]
        assert all(not b.data.any() for _, b in net.layers)

    def test_glorot_bounds(self, rng):
        net = SynthesizerNet.create(4, 4, 4, rng)
        for w, _ in net.layers:
            bound = np.sqrt(6 / sum(w.shape))
            assert np.all(np.abs(w.data) <= bound)
            assert np.abs(w.data).max() > 0.9 * bound

    def test_inconsistent_layers(self, rng):
        net = SynthesizerNet.create(2, 2, 2, rng)
        layers = net.layers[:-1]
        with pytest.raises(ValueError):
            SynthesizerNet(layers, 2, 2, 2)

    def test_forward_matches_predict(self, net, rng):
        x = rng.standard_normal((5, net.in_dim))
        np.testing.assert_allclose(net.forward(Tensor(x)).data, net.predict(x), rtol=1e-14)


class TestSynthesize:
    def test_beams_feasible_for_any_input(self, rng):
        net = SynthesizerNet.create(4, 4, 4, rng)
        for w, b in net.layers:
            w.data *= 50
        for _ in range(20):
            pair = syn.synthesize(net, 1e3 * crandn(rng, 4), crandn(rng, 4), crandn(rng, 4), metrics.LinkBudget())
            assert metrics.is_feasible(pair.f) and metrics.is_feasible(pair.w)

    def test_zero_weights_give_zero_beams(self, net, rng, budget):
        for w, b in net.layers:
            w.data[...] = 0
        pair = syn.synthesize(net, crandn(rng, 4), crandn(rng, 4), crandn(rng, 4), budget)
        assert not pair.f.any() and not pair.w.any()
        with pytest.raises(metrics.ZeroBeamError):
            metrics.snr_ul(pair.w, np.ones(4), budget)

    def test_deterministic(self, net, rng, budget):
        args = (crandn(rng, 4), crandn(rng, 4), crandn(rng, 4), budget)
        a, b = syn.synthesize(net, *args), syn.synthesize(net, *args)
        np.testing.assert_array_equal(a.f, b.f)
        np.testing.assert_array_equal(a.w, b.w)

    def test_interleaved_features(self, budget):
        x = syn.features(np.array([1 + 2j]), np.array([3 + 4j, 5 + 6j]), np.array([7 + 8j]), budget)
        s = syn.measurement_scale(budget)
        np.testing.assert_allclose(x, [s, 2 * s, 3, 4, 5, 6, 7, 8])

    def test_dimension_mismatch(self, net, budget):
        with pytest.raises(ValueError):
            syn.synthesize(net, np.zeros(3), np.zeros(4), np.zeros(4), budget)


class TestLoss:
    def test_graph_matches_numpy_metrics(self, net, data, rng, budget):
        f = crandn(rng, 8, 4) * 0.5
        w = crandn(rng, 8, 4)
        r_dl, r_ul = syn.sse_graph(Tensor(syn._pair(f)), Tensor(syn._pair(w)), data, budget)
        ref_dl, ref_ul, _ = metrics.sse(f, w, data, budget)
        np.testing.assert_allclose(r_dl.data, ref_dl, rtol=1e-12)
        np.testing.assert_allclose(r_ul.data, ref_ul, rtol=1e-12)

    def test_graph_measurement_matches_probing(self, data, rng, budget):
        cb = init_codebooks(4, 4, 3, rng)
        z = syn.measure_graph(data.H, syn.CodebookTensors.wrap(cb), budget, NOISELESS)
        np.testing.assert_allclose(z.data[..., 0] + 1j * z.data[..., 1], measure(data.H, cb, budget, NOISELESS), rtol=1e-12)

    def test_loss_is_negated_mean(self, net, data, rng, budget, monkeypatch):
        monkeypatch.setattr(syn, "sse_graph", lambda f, w, b, bud: (Tensor(np.array([1.0, 2.0])), Tensor(np.array([2.0, 3.0]))))
        value, _ = syn.loss(net, init_codebooks(4, 4, 4, rng), data[:2], budget, NOISELESS)
        assert value == -4.0

    def test_matches_numpy_pipeline(self, net, data, rng, budget):
        cb = init_codebooks(4, 4, 4, rng)
        value, _ = syn.loss(net, cb, data, budget, NOISELESS)
        z = measure(data.H, cb, budget, NOISELESS)
        f, w = syn.synthesize_batch(net, z, data.y_dl, data.y_ul, budget)
        _, _, r = metrics.sse(f, w, data, budget)
        assert value == pytest.approx(-r.mean(), rel=1e-12)

    def test_permutation_invariant(self, net, data, rng, budget):
        cb = init_codebooks(4, 4, 4, rng)
        perm = rng.permutation(len(data))
        shuffled = channel.ChannelBatch.stack([data[int(i)] for i in perm])
        a, _ = syn.loss(net, cb, data, budget, NOISELESS)
        b, _ = syn.loss(net, cb, shuffled, budget, NOISELESS)
        assert a == pytest.approx(b, abs=1e-12)

    def test_gradient_names(self, net, data, rng, budget):
        _, grads = syn.loss(net, init_codebooks(4, 4, 4, rng), data, budget, rng)
        assert set(grads) == {"F_re", "F_im", "W_re", "W_im"} | {t.name for t in net.parameters()}
        assert grads["F_re"].shape == (4, 4)


class TestTrain:
    def test_deterministic_history(self, small_scenario, budget):
        runs = [syn.train(tiny_config(), StreamSource(small_scenario, 0, 16), budget, m=4) for _ in range(2)]
        assert runs[0].history == runs[1].history
        np.testing.assert_array_equal(runs[0].codebooks.f_im, runs[1].codebooks.f_im)

    def test_zero_learning_rates_freeze_weights(self, small_scenario, budget):
        cfg = tiny_config(lr_net=0.0, lr_cb_base=0.0, lr_cb_min=0.0)
        res = syn.train(cfg, StreamSource(small_scenario, 0, 16), budget, m=4)
        init_rng = np.random.default_rng([cfg.seed, syn._INIT_TAG])
        cb0 = init_codebooks(4, 4, 4, init_rng)
        net0 = SynthesizerNet.create(4, 4, 4, init_rng)
        np.testing.assert_array_equal(res.codebooks.w_re, cb0.w_re)
        for a, b in zip(res.net.parameters(), net0.parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_codebooks_stay_in_disk(self, small_scenario, budget):
        res = syn.train(tiny_config(lr_cb_base=0.5, lr_cb_min=0.1, lr_cb_period=3), StreamSource(small_scenario, 0, 16), budget, m=4)
        assert np.all(np.abs(res.codebooks.f_re + 1j * res.codebooks.f_im) <= 1 + 1e-15)
        assert np.all(np.abs(res.codebooks.w_re + 1j * res.codebooks.w_im) <= 1 + 1e-15)

    def test_descends(self, small_scenario, budget):
        cfg = TrainConfig(batch_size=64, max_batches=2000, conv_window=2000, seed=0)
        res = syn.train(cfg, StreamSource(small_scenario, 0, 64), budget, m=4)
        assert len(res.history) == 2000
        assert np.mean(res.history[-100:]) < np.mean(res.history[:100])

    def test_convergence_stop(self, small_scenario, budget):
        cfg = tiny_config(max_batches=1000, conv_window=3, conv_tol=1e9)
        res = syn.train(cfg, StreamSource(small_scenario, 0, 16), budget, m=4)
        assert res.converged and len(res.history) == 6

    def test_dataset_source_cycles(self, small_scenario):
        src = DatasetSource(channel.draw_batch(small_scenario, 0, 0, 10), 4)
        np.testing.assert_array_equal(src.batch(2).H, src.batch(0).H)
        with pytest.raises(DataExhaustedError):
            DatasetSource(channel.draw_batch(small_scenario, 0, 0, 3), 4)

    def test_divergence_reported(self, small_scenario, budget, monkeypatch):
        monkeypatch.setattr(syn, "loss_graph", lambda *a: Tensor(np.nan))
        with pytest.raises(TrainingDivergedError, match="batch 0"):
            syn.train(tiny_config(), StreamSource(small_scenario, 0, 16), budget, m=4)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, net, rng):
        cb = init_codebooks(4, 4, 4, rng)
        path = tmp_path / "m.fdck"
        syn.save_checkpoint(path, net, cb)
        net2, cb2 = syn.load_checkpoint(path)
        for a, b in zip(net.parameters(), net2.parameters()):
            assert a.name == b.name
            np.testing.assert_array_equal(a.data, b.data)
        np.testing.assert_array_equal(cb.f_im, cb2.f_im)
        syn.save_checkpoint(tmp_path / "again", net2, cb2)
        assert (tmp_path / "again").read_bytes() == path.read_bytes()

    def test_layout(self, tmp_path, net, rng):
        path = tmp_path / "m"
        syn.save_checkpoint(path, net, init_codebooks(4, 4, 4, rng))
        raw = path.read_bytes()
        assert raw[:4] == b"FDCK"
        version, count, name_len = np.frombuffer(raw[4:16], "<u4")
        assert (version, count, name_len) == (1, 4 + 2 * len(net.layers), 4)
        assert raw[16:20] == b"F_re"

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(b"XXXX" + bytes(8))
        with pytest.raises(CheckpointError, match="magic"):
            syn.load_checkpoint(p)

    def test_truncated(self, tmp_path, net, rng):
        p = tmp_path / "m"
        syn.save_checkpoint(p, net, init_codebooks(4, 4, 4, rng))
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(CheckpointError, match="truncated"):
            syn.load_checkpoint(p)

    def test_trained_model_reevaluates_identically(self, tmp_path, small_scenario, budget):
        res = syn.train(tiny_config(max_batches=20), StreamSource(small_scenario, 0, 16), budget, m=4)
        test = channel.draw_batch(small_scenario, 99, 0, 32)
        before, _ = syn.loss(res.net, res.codebooks, test, budget, np.random.default_rng(5))
        syn.save_checkpoint(tmp_path / "c", res.net, res.codebooks)
        net, cb = syn.load_checkpoint(tmp_path / "c")
        after, _ = syn.loss(net, cb, test, budget, np.random.default_rng(5))
        assert before == after
