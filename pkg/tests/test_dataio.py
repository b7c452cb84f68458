"""Dataset IO, spline resampling, dropping, synthesis, normalization."""

import json

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from triview import dataio
from triview.dataio import (
    DataError,
    SyntheticShiftSpec,
    ClassSpec,
    TimeSeriesDataset,
    TimeSeriesSample,
    drop_observations,
    generate_synthetic,
    load_dataset,
    normalize,
    resample_uniform,
    save_dataset,
    xor_preset,
)


def write_dataset(tmp_path, lines, channels=1, classes=2, splits=None):
    splits = splits or {"train": len(lines), "val": 0, "test": 0}
    (tmp_path / "meta.json").write_text(
        json.dumps({"channels": channels, "classes": classes, "splits": splits})
    )
    (tmp_path / "data.jsonl").write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    return tmp_path


class TestLoadDataset:
    def test_two_line_file(self, tmp_path):
        lines = [
            {"values": [[0.0], [1.0], [2.0], [3.0]], "label": 0},
            {"values": [[1.0], [0.0], [1.0], [0.0]], "label": 1},
        ]
        ds = load_dataset(write_dataset(tmp_path, lines))
        assert len(ds) == 2 and ds.channel_count == 1
        assert ds.samples[0].length == 4

    def test_label_out_of_range_cites_line(self, tmp_path):
        lines = [{"values": [[0.0], [1.0], [2.0]], "label": 5}]
        with pytest.raises(DataError, match=r"data\.jsonl:1"):
            load_dataset(write_dataset(tmp_path, lines, classes=2))

    def test_ragged_channels_cites_line(self, tmp_path):
        lines = [
            {"values": [[0.0], [1.0], [2.0]], "label": 0},
            {"values": [[0.0], [1.0, 2.0], [2.0]], "label": 0},
        ]
        with pytest.raises(DataError, match=r"data\.jsonl:2"):
            load_dataset(write_dataset(tmp_path, lines))

    def test_nonincreasing_timestamps_cites_line(self, tmp_path):
        lines = [{"values": [[0.0], [1.0], [2.0]], "label": 0, "t": [0.0, 2.0, 1.0]}]
        with pytest.raises(DataError, match=r"data\.jsonl:1"):
            load_dataset(write_dataset(tmp_path, lines))

    def test_split_sizes_must_cover_file(self, tmp_path):
        lines = [{"values": [[0.0], [1.0], [2.0]], "label": 0}]
        with pytest.raises(DataError, match="split sizes"):
            load_dataset(write_dataset(tmp_path, lines, splits={"train": 2, "val": 0, "test": 0}))

    def test_roundtrip(self, tmp_path):
        spec = xor_preset(n_train=6, n_val=3, n_test=3, length=16, f_lo=3, f_hi=5, seed=5)
        src, _ = generate_synthetic(spec)
        save_dataset(src, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert len(back) == len(src)
        assert back.split_tags == src.split_tags
        for a, b in zip(src.samples, back.samples):
            assert np.allclose(a.values, b.values, atol=0)
            assert a.label == b.label

    def test_epilepsy_shaped_export(self, tmp_path):
        # full-scale split bookkeeping: 11,500 samples split 60/20/11,420
        rng = np.random.default_rng(0)
        n, T = 11500, 178
        rows = rng.standard_normal((n, T)).astype(np.float32)
        labels = rng.integers(0, 2, size=n)
        with open(tmp_path / "data.jsonl", "w") as fh:
            for i in range(n):
                fh.write(json.dumps({"values": [[round(float(v), 4)] for v in rows[i]],
                                     "label": int(labels[i])}) + "\n")
        (tmp_path / "meta.json").write_text(json.dumps(
            {"channels": 1, "classes": 2, "freq_hz": 174,
             "splits": {"train": 60, "val": 20, "test": 11420}}))
        ds = load_dataset(tmp_path)
        assert len(ds) == 11500
        assert len(ds.split("train")) == 60
        assert len(ds.split("val")) == 20
        assert len(ds.split("test")) == 11420
        assert ds.samples[0].length == 178


class TestResample:
    def test_linear_series_exact(self):
        s = TimeSeriesSample(values=(2.0 * np.arange(4.0))[:, None], timestamps=[0, 1, 2, 3])
        out = resample_uniform(s, 7)
        grid = np.linspace(0, 3, 7)
        assert np.abs(out.values[:, 0] - 2 * grid).max() < 1e-9
        assert np.allclose(out.timestamps, grid)

    def test_linear_exact_on_irregular_grids(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            t = np.sort(rng.uniform(0, 10, size=rng.integers(5, 30)))
            t += np.arange(t.size) * 1e-6  # enforce strict increase
            a, b = rng.standard_normal(2)
            s = TimeSeriesSample(values=(a * t + b)[:, None], timestamps=t)
            L = int(rng.integers(4, 40))
            out = resample_uniform(s, L)
            grid = np.linspace(t[0], t[-1], L)
            assert np.abs(out.values[:, 0] - (a * grid + b)).max() < 1e-9

    def test_identity_at_uniform_knots(self):
        rng = np.random.default_rng(2)
        vals = rng.standard_normal((9, 2))
        s = TimeSeriesSample(values=vals, timestamps=np.arange(9.0))
        out = resample_uniform(s, 9)
        assert np.abs(out.values - vals).max() < 1e-9

    def test_quadratic_matches_natural_spline_oracle(self):
        # natural end conditions deviate from t^2 near the boundary; the
        # independent oracle (scipy natural spline) is the reference
        t9 = np.linspace(0.0, 8.0, 9)
        s = TimeSeriesSample(values=(t9**2)[:, None], timestamps=t9)
        out = resample_uniform(s, 17)
        oracle = CubicSpline(t9, t9**2, bc_type="natural")(np.linspace(0, 8, 17))
        assert np.abs(out.values[:, 0] - oracle).max() < 1e-9

    def test_idempotent_on_uniform_grid(self):
        rng = np.random.default_rng(3)
        s = TimeSeriesSample(values=rng.standard_normal((11, 1)), timestamps=np.linspace(0, 1, 11))
        once = resample_uniform(s, 11)
        twice = resample_uniform(once, 11)
        assert np.abs(once.values - twice.values).max() < 1e-6

    def test_duplicate_timestamps_rejected(self):
        s = TimeSeriesSample(values=np.zeros((3, 1)), timestamps=None)
        s.timestamps = np.array([0.0, 0.0, 1.0])  # bypass ctor check deliberately
        with pytest.raises(DataError, match="duplicate|increasing"):
            resample_uniform(s, 5)

    def test_linear_interpolation_flag(self):
        s = TimeSeriesSample(values=np.array([[0.0], [2.0], [0.0]]), timestamps=[0, 1, 2])
        out = resample_uniform(s, 5, method="linear")
        assert np.allclose(out.values[:, 0], [0.0, 1.0, 2.0, 1.0, 0.0])


class TestDropObservations:
    def test_fraction_zero_identity(self):
        s = TimeSeriesSample(values=np.arange(5.0)[:, None])
        out = drop_observations(s, 0.0, seed=1)
        assert np.array_equal(out.values, s.values)
        assert out.timestamps is None

    def test_half_drop_counts_and_monotonic_timestamps(self):
        s = TimeSeriesSample(values=np.random.default_rng(0).standard_normal((178, 1)))
        out = drop_observations(s, 0.5, seed=42)
        # binomial(178, 0.5): 89 +/- ~4 sigma bounds
        assert 62 <= out.length <= 116
        assert (np.diff(out.timestamps) > 0).all()

    def test_deterministic(self):
        s = TimeSeriesSample(values=np.random.default_rng(1).standard_normal((50, 1)))
        a = drop_observations(s, 0.4, seed=7)
        b = drop_observations(s, 0.4, seed=7)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.timestamps, b.timestamps)

    def test_too_few_survivors_rejected(self):
        s = TimeSeriesSample(values=np.zeros((100, 1)))
        with pytest.raises(DataError, match="survive"):
            drop_observations(s, 0.99, seed=3)

    def test_drop_then_resample_preserves_low_frequency(self):
        # sinusoid at freq <= T/8, 30% drop: relative L2 error < 0.1
        T = 256
        t = np.arange(T, dtype=np.float64)
        rng_seeds = range(5)
        for seed in rng_seeds:
            x = np.sin(2 * np.pi * 16.0 * t / T)
            s = TimeSeriesSample(values=x[:, None])
            dropped = drop_observations(s, 0.3, seed=seed)
            rec = resample_uniform(dropped, T)
            ref = np.sin(2 * np.pi * 16.0 * rec.timestamps / T)
            rel = np.linalg.norm(rec.values[:, 0] - ref) / np.linalg.norm(ref)
            assert rel < 0.1


class TestNormalize:
    def test_closed_form(self):
        s = TimeSeriesSample(values=np.array([[1.0], [2.0], [3.0]]))
        out = normalize(s)
        assert np.allclose(out.values[:, 0], [-1.2247448, 0.0, 1.2247448], atol=1e-6)

    def test_constant_channel_zeros(self):
        s = TimeSeriesSample(values=np.hstack([np.full((5, 1), 2.0), np.arange(5.0)[:, None]]))
        out = normalize(s)
        assert np.allclose(out.values[:, 0], 0.0)
        assert np.abs(out.values[:, 1].std() - 1.0) < 1e-9

    def test_moments(self):
        rng = np.random.default_rng(4)
        s = TimeSeriesSample(values=rng.standard_normal((64, 3)) * 7 + 3)
        out = normalize(s)
        assert np.abs(out.values.mean(axis=0)).max() < 1e-6
        assert np.abs(out.values.std(axis=0) - 1).max() < 1e-6


class TestSynthetic:
    def test_noise_free_line(self):
        spec = SyntheticShiftSpec(
            classes=(ClassSpec(slope=1.0, freq=4.0, amplitude=0.0, noise_std=0.0),),
            length=16,
            channels=1,
            counts={"train": 2, "val": 0, "test": 0},
        )
        src, _ = generate_synthetic(spec)
        t = np.arange(16.0)
        assert np.allclose(src.samples[0].values[:, 0], t, atol=1e-12)

    def test_determinism(self):
        spec = xor_preset(n_train=10, n_val=5, n_test=5, length=32, f_lo=5, f_hi=9, seed=9)
        a_src, a_tgt = generate_synthetic(spec)
        b_src, b_tgt = generate_synthetic(spec)
        for a, b in [(a_src, b_src), (a_tgt, b_tgt)]:
            assert all(np.array_equal(x.values, y.values) for x, y in zip(a.samples, b.samples))

    def test_aliasing_rejected(self):
        spec = SyntheticShiftSpec(
            classes=(ClassSpec(slope=0.0, freq=10.0, amplitude=1.0, noise_std=0.0),),
            length=16,
            channels=1,
            counts={"train": 1},
        )
        with pytest.raises(DataError, match="aliasing"):
            generate_synthetic(spec)

    def test_target_offsets_applied(self):
        spec = xor_preset(n_train=4, n_val=0, n_test=0, length=64, noise_std=0.0,
                          slope_offset=0.0, freq_offset=3.0, seed=2)
        src, tgt = generate_synthetic(spec)
        # target frequency peaks must sit at the offset bins
        from triview import views

        def peak(sample):
            f = views.frequency_view(sample.values - sample.values.mean(axis=0))
            return np.argmax(f[1:32, 0]) + 1

        assert {peak(s) for s in src.samples} <= {12, 15}
        assert {peak(t) for t in tgt.samples} <= {15, 18}

    def test_xor_slope_alone_is_chance(self):
        # least-squares slope estimate + threshold: the single-factor oracle
        spec = xor_preset(n_train=2000, n_val=0, n_test=0, seed=0)
        src, _ = generate_synthetic(spec)
        X = np.stack([s.values[:, 0] for s in src.samples])
        y = src.labels("train")
        t = np.arange(X.shape[1]) - (X.shape[1] - 1) / 2
        slopes = X @ t / (t @ t)
        best = 0.0
        for thr in np.quantile(slopes, np.linspace(0.05, 0.95, 19)):
            acc = max(np.mean((slopes > thr) == y), np.mean((slopes <= thr) == y))
            best = max(best, acc)
        assert best < 0.6

    def test_xor_balanced_labels(self):
        spec = xor_preset(n_train=100, n_val=0, n_test=0, seed=1)
        src, tgt = generate_synthetic(spec)
        assert np.bincount(src.labels("train")).tolist() == [50, 50]


class TestDatasetValidation:
    def test_channel_mismatch(self):
        good = TimeSeriesSample(values=np.zeros((4, 2)))
        bad = TimeSeriesSample(values=np.zeros((4, 3)))
        with pytest.raises(DataError, match="channels"):
            TimeSeriesDataset(samples=[good, bad], channel_count=2)

    def test_too_short_series(self):
        with pytest.raises(DataError, match="at least 3"):
            TimeSeriesSample(values=np.zeros((2, 1)))

    def test_labels_validated(self):
        s = TimeSeriesSample(values=np.zeros((4, 1)), label=3)
        with pytest.raises(DataError, match="label"):
            TimeSeriesDataset(samples=[s], channel_count=1, num_classes=2)
