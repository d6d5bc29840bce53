import numpy as np
import pytest

from conftest import crandn, random_feasible
from fdbeam import metrics
from fdbeam.channel import ChannelRealization
from fdbeam.metrics import BeamPair, LinkBudget


def _realization(rng, nt=4, nr=3):
    return ChannelRealization(crandn(rng, nr, nt), crandn(rng, nt), crandn(rng, nr), crandn(rng, nt), crandn(rng, nr))


class TestSnr:
    def test_zero_beam(self, budget):
        assert metrics.snr_dl(np.zeros(4), np.ones(4), budget) == 0

    def test_all_ones(self, budget):
        assert metrics.snr_dl(np.ones(16), np.ones(16), budget) == pytest.approx(16)

    def test_snr_dl_direct_sum(self, rng):
        budget = LinkBudget(p_dl=2.5, noise_dl=0.3)
        for _ in range(20):
            f, h = random_feasible(rng, 6), crandn(rng, 6)
            acc = 0j
            for i in range(6):
                acc += np.conj(h[i]) * f[i]
            expected = 2.5 * abs(acc) ** 2 / (6 * 0.3)
            assert metrics.snr_dl(f, h, budget) == pytest.approx(expected, rel=1e-12)

    def test_snr_ul_matched(self, rng):
        budget = LinkBudget(p_ul=3.0, noise_ul=0.5)
        h = crandn(rng, 5)
        assert metrics.snr_ul(h, h, budget) == pytest.approx(3.0 * np.vdot(h, h).real / 0.5, rel=1e-12)

    def test_snr_ul_orthogonal(self, budget):
        assert metrics.snr_ul(np.array([1, 1j]), np.array([1, -1j]) * 1j, budget) == pytest.approx(0, abs=1e-15)

    def test_snr_ul_scale_invariant(self, rng, budget):
        w, h = crandn(rng, 5), crandn(rng, 5)
        for c in (1e-3, 2 - 3j, 1e4j):
            assert metrics.snr_ul(c * w, h, budget) == pytest.approx(metrics.snr_ul(w, h, budget), rel=1e-12)

    def test_zero_w_rejected(self, budget):
        with pytest.raises(metrics.ZeroBeamError):
            metrics.snr_ul(np.zeros(3), np.ones(3), budget)
        with pytest.raises(metrics.ZeroBeamError):
            metrics.inr_ul(np.ones(2), np.zeros(3), np.ones((3, 2)), budget)

    def test_dim_mismatch(self, budget):
        with pytest.raises(ValueError):
            metrics.snr_dl(np.ones(3), np.ones(4), budget)
        with pytest.raises(ValueError):
            metrics.inr_ul(np.ones(3), np.ones(3), np.ones((3, 4)), budget)


class TestInr:
    def test_zero_channel(self, rng, budget):
        assert metrics.inr_ul(crandn(rng, 4), crandn(rng, 3), np.zeros((3, 4)), budget) == 0

    def test_null_space(self, rng, budget):
        H, f = crandn(rng, 3, 4), crandn(rng, 4)
        v = H @ f
        w = np.array([np.conj(v[1]), -np.conj(v[0]), 0])
        assert abs(np.vdot(w, v)) < 1e-12
        assert metrics.inr_ul(f, w, H, budget) < 1e-25

    def test_triple_sum(self, rng):
        budget = LinkBudget(p_dl=1.7, noise_ul=0.2)
        for _ in range(20):
            H, f, w = crandn(rng, 3, 5), random_feasible(rng, 5), crandn(rng, 3)
            acc = 0j
            for i in range(3):
                for j in range(5):
                    acc += np.conj(w[i]) * H[i, j] * f[j]
            expected = 1.7 * abs(acc) ** 2 / (5 * np.sum(abs(w) ** 2) * 0.2)
            assert metrics.inr_ul(f, w, H, budget) == pytest.approx(expected, rel=1e-12)

    def test_inr_ul_scale_invariant_in_w(self, rng, budget):
        H, f, w = crandn(rng, 3, 4), crandn(rng, 4), crandn(rng, 3)
        assert metrics.inr_ul(f, (0.3 - 2j) * w, H, budget) == pytest.approx(metrics.inr_ul(f, w, H, budget), rel=1e-12)

    def test_inr_dl(self):
        assert metrics.inr_dl(0, LinkBudget()) == 0
        assert metrics.inr_dl(1j, LinkBudget()) == 1
        assert metrics.inr_dl(0.3, LinkBudget(p_ul=2)) == pytest.approx(2 * metrics.inr_dl(0.3, LinkBudget()))


class TestSse:
    def test_all_zero_channels(self, budget):
        real = ChannelRealization(np.zeros((2, 2)), np.zeros(2), np.zeros(2), np.ones(2), np.ones(2))
        assert metrics.sse(np.ones(2), np.ones(2), real, budget) == (0, 0, 0)

    def test_no_interference_reduces_to_snr(self, rng, budget):
        real = _realization(rng)
        real.H = np.zeros_like(real.H)
        w = crandn(rng, 3)
        _, r_ul, _ = metrics.sse(np.ones(4), w, real, budget)
        assert r_ul == pytest.approx(np.log2(1 + metrics.snr_ul(w, real.h_ul, budget)), rel=1e-12)

    def test_composition(self, rng):
        budget = LinkBudget(p_dl=2, p_ul=0.5, noise_dl=0.7, noise_ul=1.3)
        real = _realization(rng)
        real.crosslink = 0.4 - 0.2j
        f, w = random_feasible(rng, 4), random_feasible(rng, 3)
        r_dl, r_ul, r = metrics.sse(f, w, real, budget)
        s_dl = metrics.snr_dl(f, real.h_dl, budget) / (1 + metrics.inr_dl(real.crosslink, budget))
        s_ul = metrics.snr_ul(w, real.h_ul, budget) / (1 + metrics.inr_ul(f, w, real.H, budget))
        assert r_dl == pytest.approx(np.log2(1 + s_dl), rel=1e-12)
        assert r_ul == pytest.approx(np.log2(1 + s_ul), rel=1e-12)
        assert r == pytest.approx(r_dl + r_ul, rel=1e-12)


class TestMaxima:
    def test_max_snr_dl_all_ones(self):
        assert metrics.max_snr_dl(np.ones(16), LinkBudget(p_dl=2, noise_dl=0.5)) == pytest.approx(16 * 2 / 0.5)

    def test_max_snr_dl_attained_by_phase_match(self, rng, budget):
        h = crandn(rng, 8)
        # SNR_DL is |h^* f|^2 with ^* the conjugate transpose, so f takes h's phase
        f = h / np.abs(h)
        assert metrics.snr_dl(f, h, budget) == pytest.approx(metrics.max_snr_dl(h, budget), rel=1e-12)

    def test_max_snr_dl_random_search_bound(self, rng, budget):
        h = crandn(rng, 6)
        best = metrics.max_snr_dl(h, budget)
        for _ in range(10):
            f = random_feasible(rng, 100_000, 6)
            assert np.max(metrics.snr_dl(f, h, budget)) <= best * (1 + 1e-12)

    def test_max_snr_ul(self, rng):
        budget = LinkBudget(p_ul=2, noise_ul=4)
        h = crandn(rng, 5)
        assert metrics.max_snr_ul(h, budget) == pytest.approx(0.5 * np.sum(abs(h) ** 2))

    def test_max_inr_identity(self):
        assert metrics.max_inr(np.eye(4), LinkBudget(p_dl=3, noise_ul=2)) == pytest.approx(1.5, rel=1e-12)

    def test_max_inr_rank_one(self, rng):
        u, v = crandn(rng, 5), crandn(rng, 4)
        budget = LinkBudget(p_dl=2.0, noise_ul=0.5)
        expected = 2.0 * np.sum(abs(u) ** 2) * np.sum(abs(v) ** 2) / 0.5
        assert metrics.max_inr(np.outer(u, v.conj()), budget) == pytest.approx(expected, rel=1e-12)

    def test_max_inr_matches_eigh(self, rng, budget):
        for _ in range(50):
            H = crandn(rng, 8, 8)
            oracle = np.linalg.eigvalsh(H.conj().T @ H)[-1]
            assert metrics.max_inr(H, budget) == pytest.approx(oracle, rel=1e-8)

    def test_max_inr_batched(self, rng, budget):
        H = crandn(rng, 3, 2, 5, 4)
        out = metrics.max_inr(H, budget)
        assert out.shape == (3, 2)
        assert out[1, 0] == pytest.approx(metrics.max_inr(H[1, 0], budget), rel=1e-12)

    def test_max_inr_bounds_feasible_beams(self, rng, budget):
        H = crandn(rng, 4, 4)
        top = metrics.max_inr(H, budget)
        f, w = random_feasible(rng, 10_000, 4), crandn(rng, 10_000, 4)
        assert np.all(metrics.inr_ul(f, w, H, budget) <= top * (1 + 1e-12))

    def test_power_iteration_cap(self, rng):
        with pytest.raises(metrics.ConvergenceError):
            metrics.spectral_norm_sq(crandn(rng, 6, 6), max_iter=2)


class TestBaselines:
    def test_equal_magnitude_gives_unit_modulus(self, rng):
        y = 3.0 * np.exp(2j * np.pi * rng.uniform(size=8))
        pair = metrics.mrt_mrc_baseline(y, crandn(rng, 4))
        np.testing.assert_allclose(np.abs(pair.f), 1.0, atol=1e-15)

    def test_mrc_reaches_max_snr_ul(self, rng, budget):
        y = crandn(rng, 6)
        pair = metrics.mrt_mrc_baseline(crandn(rng, 4), y)
        assert metrics.snr_ul(pair.w, y, budget) == pytest.approx(metrics.max_snr_ul(y, budget), rel=1e-12)

    def test_mrt_reaches_max_snr_dl(self, rng, budget):
        y = crandn(rng, 6)
        pair = metrics.mrt_mrc_baseline(y, crandn(rng, 4))
        assert metrics.snr_dl(pair.f, y, budget) == pytest.approx(metrics.max_snr_dl(y, budget), rel=1e-12)

    def test_feasible_with_peak_at_one(self, rng):
        for _ in range(100):
            pair = metrics.mrt_mrc_baseline(crandn(rng, 5), crandn(rng, 7))
            assert metrics.is_feasible(pair.f) and metrics.is_feasible(pair.w)
            assert np.max(np.abs(pair.w)) == pytest.approx(1.0)

    def test_zero_input_rejected(self):
        with pytest.raises(ValueError):
            metrics.mrt_mrc_baseline(np.zeros(3), np.ones(3))

    def test_beam_pair_rejects_infeasible(self):
        with pytest.raises(ValueError):
            BeamPair(np.array([1.1]), np.array([0.5]))

    def test_capacity_analytic(self, budget):
        real = ChannelRealization(np.eye(2), np.ones(2) * np.sqrt(5), np.ones(2) * np.sqrt(5), np.ones(2), np.ones(2))
        # max_snr_dl = (2 sqrt5)^2 / 2 = 10, max_snr_ul = 10
        assert metrics.fd_capacity(real, budget) == pytest.approx(2 * np.log2(11))

    def test_capacity_monotone_in_snr(self, rng, budget):
        real = _realization(rng)
        c1 = metrics.fd_capacity(real, budget)
        real.h_dl = real.h_dl * 1.5
        assert metrics.fd_capacity(real, budget) > c1

    def test_capacity_upper_bounds_sse(self, rng, budget):
        real = _realization(rng)
        f, w = random_feasible(rng, 10_000, 4), random_feasible(rng, 10_000, 3)
        _, _, r = metrics.sse(f, w, real, budget)
        assert np.all(r <= metrics.fd_capacity(real, budget))
