"""Temporal / derivative / frequency view transforms against their oracles."""

import numpy as np
import pytest

from triview import views


class TestDerivativeView:
    def test_linear_exact_everywhere(self):
        t = np.arange(16.0)[:, None]
        d = views.derivative_view(t, dt=1.0)
        assert np.allclose(d, 1.0, atol=1e-12)

    def test_quadratic_exact_from_t2(self):
        # (3t^2 - 4(t-1)^2 + (t-2)^2) / 2 = 2t: the stencil is exact on quadratics
        rng = np.random.default_rng(0)
        t = np.arange(32.0)
        for _ in range(100):
            a, b, c = rng.standard_normal(3)
            x = (a * t**2 + b * t + c)[:, None]
            d = views.derivative_view(x, dt=1.0)
            expect = 2 * a * t + b
            assert np.abs(d[2:, 0] - expect[2:]).max() < 1e-9

    def test_edge_replication(self):
        x = (np.arange(8.0) ** 2)[:, None]
        d = views.derivative_view(x, dt=1.0)
        assert d[0, 0] == d[2, 0] and d[1, 0] == d[2, 0]

    def test_constant_is_zero(self):
        d = views.derivative_view(np.full((10, 2), 4.2), dt=0.5)
        assert np.allclose(d, 0.0)

    def test_dt_scales(self):
        x = np.arange(8.0)[:, None]
        assert np.allclose(views.derivative_view(x, dt=0.5), 2.0)

    def test_too_short(self):
        with pytest.raises(views.ViewError):
            views.derivative_view(np.zeros((2, 1)))


class TestFFT:
    def test_dc_only(self):
        f = views.frequency_view(np.full((4, 1), 2.0))
        assert np.allclose(f[:, 0], [8.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_pure_cosine_bins(self):
        t = np.arange(8.0)
        x = np.cos(2 * np.pi * t / 8)[:, None]
        f = views.frequency_view(x)
        expect = np.zeros(8)
        expect[1] = expect[7] = 4.0
        assert np.abs(f[:, 0] - expect).max() < 1e-9

    def test_oracle_impulse(self):
        spec = views.dft_oracle(np.array([1.0, 0.0, 0.0, 0.0]))
        assert np.allclose(spec, np.ones(4), atol=1e-12)

    def test_fast_matches_oracle_many_lengths(self):
        rng = np.random.default_rng(1)
        for L in [3, 5, 8, 16, 21, 37, 64, 100, 128]:
            x = rng.standard_normal(L)
            fast = views.fft(x)
            oracle = views.dft_oracle(x)
            rel = np.abs(fast - oracle).max() / max(np.abs(oracle).max(), 1e-30)
            assert rel < 1e-6, f"L={L}: {rel}"

    def test_parseval(self):
        rng = np.random.default_rng(2)
        for L in (7, 32, 50):
            x = rng.standard_normal(L)
            spec = views.dft_oracle(x)
            lhs = np.sum(x**2)
            rhs = np.sum(np.abs(spec) ** 2) / L
            assert abs(lhs - rhs) / abs(lhs) < 1e-6

    def test_shift_invariance_of_modulus(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((32, 1))
        f1 = views.frequency_view(x)
        f2 = views.frequency_view(np.roll(x, 5, axis=0))
        assert np.abs(f1 - f2).max() < 1e-9


class TestExtractViews:
    def test_shapes_and_nonnegativity(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((24, 3))
        vs = views.extract_views(x, dt=1.0)
        assert vs.temporal.shape == vs.derivative.shape == vs.frequency.shape == (24, 3)
        assert (vs.frequency >= 0).all()

    def test_purity(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((16, 2))
        a = views.extract_views(x)
        b = views.extract_views(x)
        assert np.array_equal(a.derivative, b.derivative)
        assert np.array_equal(a.frequency, b.frequency)
        assert np.array_equal(x, a.temporal)  # input untouched

    def test_constant_input(self):
        vs = views.extract_views(np.full((8, 1), 3.0))
        assert np.allclose(vs.derivative, 0.0)
        assert np.allclose(vs.frequency[1:, 0], 0.0, atol=1e-9)
        assert vs.frequency[0, 0] == pytest.approx(24.0)

    def test_sinusoid_plus_trend_decomposition(self):
        # derivative: slope + scaled cosine (stencil truncation ~ w^3/3);
        # frequency: peak at the sinusoid bin once past the ramp leakage
        L = 64
        t = np.arange(L, dtype=np.float64)
        slope, freq, amp = 0.01, 8.0, 1.0
        w = 2 * np.pi * freq / L
        x = (slope * t + amp * np.sin(w * t))[:, None]
        vs = views.extract_views(x, dt=1.0)
        expect_d = slope + amp * w * np.cos(w * t)
        err = np.abs(vs.derivative[2:, 0] - expect_d[2:]).max()
        assert err < amp * w**3 / 3 + 1e-9
        assert vs.derivative[2:, 0].mean() == pytest.approx(expect_d[2:].mean(), abs=5e-3)
        inner = vs.frequency[2 : L // 2, 0]
        assert np.argmax(inner) + 2 == freq

    def test_batched_input(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5, 16, 2))
        vs = views.extract_views(x)
        single = views.extract_views(x[3])
        assert np.allclose(vs.frequency[3], single.frequency, atol=1e-12)
        assert np.allclose(vs.derivative[3], single.derivative, atol=1e-12)

    def test_view_shape_consistency_guard(self):
        with pytest.raises(views.ViewError):
            views.ViewSet(np.zeros((4, 1)), np.zeros((4, 1)), np.zeros((5, 1)))
