"""Dataset loading, validation, resampling, and synthesis.

On-disk format: a directory holding ``meta.json`` (channels, classes, optional
freq_hz, split sizes) and ``data.jsonl`` with one sample per line:
``{"values": [[c1..cd], ...], "label": int?, "t": [...]?}`` in time-major row
order. Irregularly sampled series are recovered onto a uniform grid with a
natural cubic spline (linear interpolation available as a fallback flag).

All randomness flows from one explicit seed through counter-based Philox
streams keyed by (purpose, split, sample index), so per-sample draws never
depend on iteration order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")


class DataError(ValueError):
    pass


def seeded_rng(seed, *stream):
    """A Philox generator for one (seed, stream...) key; independent per key."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class TimeSeriesSample:
    """One series: values [T, d] time-major, optional timestamps and label."""

    values: np.ndarray
    timestamps: np.ndarray | None = None
    label: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"values must be [T, d], got shape {self.values.shape}")
        if self.values.shape[0] < 3:
            raise DataError(f"need at least 3 observations, got {self.values.shape[0]}")
        if not np.isfinite(self.values).all():
            raise DataError("values contain NaN/Inf")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
            if self.timestamps.shape != (self.values.shape[0],):
                raise DataError(
                    f"timestamps length {self.timestamps.shape} != series length {self.values.shape[0]}"
                )
            if not (np.diff(self.timestamps) > 0).all():
                raise DataError("timestamps must be strictly increasing")

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]

    def times(self):
        """Timestamps, or the index grid 0..T-1 when none were recorded."""
        if self.timestamps is not None:
            return self.timestamps
        return np.arange(self.length, dtype=np.float64)


@dataclass
class TimeSeriesDataset:
    samples: list[TimeSeriesSample]
    channel_count: int
    num_classes: int | None = None
    split_tags: list[str] = field(default_factory=list)
    freq_hz: float | None = None
    channel_stats: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        for i, s in enumerate(self.samples):
            if s.channels != self.channel_count:
                raise DataError(f"sample {i}: {s.channels} channels, expected {self.channel_count}")
            if s.label is not None:
                if self.num_classes is None or not 0 <= s.label < self.num_classes:
                    raise DataError(
                        f"sample {i}: label {s.label} outside [0, {self.num_classes})"
                    )
        if not self.split_tags:
            self.split_tags = ["train"] * len(self.samples)
        if len(self.split_tags) != len(self.samples):
            raise DataError("split tag per sample required")
        if self.channel_stats is None and self.samples:
            flat = np.concatenate([s.values for s in self.samples], axis=0)
            self.channel_stats = (flat.mean(axis=0), flat.std(axis=0))

    def __len__(self):
        return len(self.samples)

    def split(self, tag):
        """Samples carrying the given split tag, in file order."""
        if tag not in SPLITS:
            raise DataError(f"unknown split {tag!r}")
        return [s for s, t in zip(self.samples, self.split_tags) if t == tag]

    def labels(self, tag=None):
        samples = self.samples if tag is None else self.split(tag)
        if any(s.label is None for s in samples):
            raise DataError("dataset has unlabeled samples")
        return np.array([s.label for s in samples], dtype=np.int64)


# -- on-disk format -----------------------------------------------------------


def load_dataset(path):
    """Read a meta.json + data.jsonl directory; errors cite the bad line."""
    root = Path(path)
    meta_path = root / "meta.json"
    data_path = root / "data.jsonl"
    if not meta_path.is_file() or not data_path.is_file():
        raise DataError(f"{root}: expected meta.json and data.jsonl")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{meta_path}: invalid JSON ({e})") from e
    for key in ("channels", "splits"):
        if key not in meta:
            raise DataError(f"{meta_path}: missing required key {key!r}")
    d = int(meta["channels"])
    classes = meta.get("classes")
    num_classes = None if classes is None else int(classes)
    splits = meta["splits"]
    counts = [int(splits.get(tag, 0)) for tag in SPLITS]

    samples = []
    with open(data_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{data_path}:{lineno}: invalid JSON ({e})") from e
            values = rec.get("values")
            if not isinstance(values, list) or not values:
                raise DataError(f"{data_path}:{lineno}: missing or empty 'values'")
            widths = {len(row) for row in values}
            if widths != {d}:
                raise DataError(
                    f"{data_path}:{lineno}: ragged channel counts {sorted(widths)}, expected {d}"
                )
            label = rec.get("label")
            if label is not None:
                if num_classes is None or not 0 <= int(label) < num_classes:
                    raise DataError(
                        f"{data_path}:{lineno}: label {label} outside [0, {num_classes})"
                    )
                label = int(label)
            try:
                sample = TimeSeriesSample(
                    values=np.asarray(values, dtype=np.float64),
                    timestamps=rec.get("t"),
                    label=label,
                )
            except DataError as e:
                raise DataError(f"{data_path}:{lineno}: {e}") from e
            samples.append(sample)

    if sum(counts) != len(samples):
        raise DataError(
            f"{meta_path}: split sizes {counts} sum to {sum(counts)}, file has {len(samples)} samples"
        )
    tags = []
    for tag, n in zip(SPLITS, counts):
        tags.extend([tag] * n)
    return TimeSeriesDataset(
        samples=samples,
        channel_count=d,
        num_classes=num_classes,
        split_tags=tags,
        freq_hz=meta.get("freq_hz"),
    )


def save_dataset(dataset, path):
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    counts = {tag: sum(1 for t in dataset.split_tags if t == tag) for tag in SPLITS}
    meta = {
        "channels": dataset.channel_count,
        "classes": dataset.num_classes,
        "freq_hz": dataset.freq_hz,
        "splits": counts,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    order = sorted(range(len(dataset)), key=lambda i: SPLITS.index(dataset.split_tags[i]))
    with open(root / "data.jsonl", "w") as fh:
        for i in order:
            s = dataset.samples[i]
            rec = {"values": [[float(v) for v in row] for row in s.values]}
            if s.label is not None:
                rec["label"] = int(s.label)
            if s.timestamps is not None:
                rec["t"] = [float(t) for t in s.timestamps]
            fh.write(json.dumps(rec) + "\n")
    return root


# -- resampling ----------------------------------------------------------------


def _natural_spline_second_derivs(t, y):
    """Second derivatives of the natural cubic spline through (t, y).

    t: [T] strictly increasing; y: [T, m] (any number of series sharing t).
    Natural boundary: second derivative zero at both ends.
    """
    T = t.size
    h = np.diff(t)
    m = np.zeros_like(y)
    if T == 2:
        return m
    # Thomas algorithm on the interior tridiagonal system
    lower = h[:-1] / 6.0
    diag = (h[:-1] + h[1:]) / 3.0
    upper = h[1:] / 6.0
    rhs = (y[2:] - y[1:-1]) / h[1:, None] - (y[1:-1] - y[:-2]) / h[:-1, None]
    n = T - 2
    cp = np.empty(n)
    dp = np.empty((n, y.shape[1]))
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
    sol = np.empty((n, y.shape[1]))
    sol[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        sol[i] = dp[i] - cp[i] * sol[i + 1]
    m[1:-1] = sol
    return m


def _spline_eval(t, y, m, grid):
    """Evaluate the cubic spline with knot second-derivatives ``m`` at ``grid``."""
    idx = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, t.size - 2)
    t0, t1 = t[idx], t[idx + 1]
    h = (t1 - t0)[:, None]
    a = ((t1 - grid))[:, None]
    b = ((grid - t0))[:, None]
    y0, y1 = y[idx], y[idx + 1]
    m0, m1 = m[idx], m[idx + 1]
    return (
        m0 * a**3 / (6.0 * h)
        + m1 * b**3 / (6.0 * h)
        + (y0 / h - m0 * h / 6.0) * a
        + (y1 / h - m1 * h / 6.0) * b
    )


def resample_uniform(sample, target_length, method="spline"):
    """Interpolate onto ``target_length`` equispaced points over the original
    span. ``method`` is "spline" (natural cubic) or "linear"."""
    if target_length < 2:
        raise DataError(f"target length must be >= 2, got {target_length}")
    t = sample.times()
    if np.unique(t).size != t.size:
        raise DataError("duplicate timestamps")
    grid = np.linspace(t[0], t[-1], target_length)
    y = sample.values.astype(np.float64)
    if method == "spline":
        m = _natural_spline_second_derivs(t, y)
        out = _spline_eval(t, y, m, grid)
    elif method == "linear":
        out = np.stack([np.interp(grid, t, y[:, c]) for c in range(y.shape[1])], axis=1)
    else:
        raise DataError(f"unknown interpolation method {method!r}")
    return TimeSeriesSample(values=out, timestamps=grid, label=sample.label)


def drop_observations(sample, fraction, seed):
    """Remove each observation independently with probability ``fraction``;
    survivors keep their timestamps. Deterministic given the seed."""
    if not 0 <= fraction < 1:
        raise DataError(f"drop fraction must be in [0, 1), got {fraction}")
    if fraction == 0:
        return replace(sample)
    rng = seeded_rng(seed, 0xD70B)
    keep = rng.random(sample.length) >= fraction
    if keep.sum() < 3:
        raise DataError(f"only {int(keep.sum())} observations would survive; need >= 3")
    return TimeSeriesSample(
        values=sample.values[keep],
        timestamps=sample.times()[keep],
        label=sample.label,
    )


def normalize(sample):
    """Per-sample, per-channel z-score (population std); constant channels
    map to zeros."""
    values = normalize_values(sample.values)
    return TimeSeriesSample(values=values, timestamps=sample.timestamps, label=sample.label)


def normalize_values(values):
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=-2, keepdims=True)
    std = values.std(axis=-2, keepdims=True)
    return np.where(std > 0, (values - mean) / np.where(std > 0, std, 1.0), 0.0)


# -- synthetic data --------------------------------------------------------------


@dataclass(frozen=True)
class ClassSpec:
    """One latent generator: trend slope, sinusoid frequency (cycles/window),
    sinusoid amplitude, and additive noise std."""

    slope: float
    freq: float
    amplitude: float
    noise_std: float


@dataclass(frozen=True)
class SyntheticShiftSpec:
    classes: tuple[ClassSpec, ...]
    length: int
    channels: int
    counts: dict[str, int]
    labels: tuple[int, ...] | None = None  # latent combo -> label; default identity
    num_classes: int | None = None
    slope_offset: float = 0.0
    freq_offset: float = 0.0
    amp_jitter: float = 0.0   # amplitude factor ~ U[1-a, 1+a] per sample
    freq_jitter: int = 0      # per-sample integer shift in {-j..0} off the combo frequency
    seed: int = 0

    def combo_labels(self):
        if self.labels is not None:
            return self.labels
        return tuple(range(len(self.classes)))

    def class_count(self):
        if self.num_classes is not None:
            return self.num_classes
        return max(self.combo_labels()) + 1

    def validate(self):
        if not self.classes:
            raise DataError("synthetic spec needs at least one class")
        if self.length < 3:
            raise DataError("synthetic length must be >= 3")
        limit = self.length / 2
        for domain_offset in (0.0, self.freq_offset):
            for c in self.classes:
                for shift in (0.0, -float(self.freq_jitter)):
                    f = c.freq + domain_offset + shift
                    if not 0 < f < limit:
                        raise DataError(
                            f"frequency {f} outside (0, {limit}) cycles/window (aliasing)"
                        )
        if not 0 <= self.amp_jitter < 1:
            raise DataError(f"amp_jitter must be in [0, 1), got {self.amp_jitter}")
        if len(self.combo_labels()) != len(self.classes):
            raise DataError("one label per latent combo required")
        for tag in self.counts:
            if tag not in SPLITS:
                raise DataError(f"unknown split {tag!r} in counts")


def xor_preset(
    n_train=2000,
    n_val=500,
    n_test=500,
    length=64,
    channels=1,
    slope=0.04,
    f_lo=12.0,
    f_hi=15.0,
    amplitude=1.0,
    noise_std=0.8,
    amp_jitter=0.0,
    freq_jitter=0,
    slope_offset=0.01,
    freq_offset=2.0,
    seed=0,
):
    """Composite two-class task: label = (slope sign positive) XOR (frequency
    is the high one), over 4 latent combos. The amplitude spectrum never sees
    the slope sign, and the trend never determines the frequency level, so
    neither factor alone separates the classes."""
    combos = (
        ClassSpec(+slope, f_lo, amplitude, noise_std),
        ClassSpec(+slope, f_hi, amplitude, noise_std),
        ClassSpec(-slope, f_lo, amplitude, noise_std),
        ClassSpec(-slope, f_hi, amplitude, noise_std),
    )
    labels = tuple(int(c.slope > 0) ^ int(c.freq == f_hi) for c in combos)
    return SyntheticShiftSpec(
        classes=combos,
        length=length,
        channels=channels,
        counts={"train": n_train, "val": n_val, "test": n_test},
        labels=labels,
        num_classes=2,
        slope_offset=slope_offset,
        freq_offset=freq_offset,
        amp_jitter=amp_jitter,
        freq_jitter=freq_jitter,
        seed=seed,
    )


def _synth_domain(spec, domain_id, slope_offset, freq_offset):
    T = spec.length
    t = np.arange(T, dtype=np.float64)
    combo_labels = spec.combo_labels()
    num_classes = spec.class_count()
    by_label = {}
    for idx, lab in enumerate(combo_labels):
        by_label.setdefault(lab, []).append(idx)

    samples, tags = [], []
    for split_id, tag in enumerate(SPLITS):
        n = int(spec.counts.get(tag, 0))
        for i in range(n):
            label = i % num_classes
            rng = seeded_rng(spec.seed, domain_id, split_id, i)
            options = by_label[label]
            combo = spec.classes[options[int(rng.integers(len(options)))]]
            slope = combo.slope + slope_offset
            freq = combo.freq + freq_offset
            if spec.freq_jitter:
                freq -= float(rng.integers(0, spec.freq_jitter + 1))
            amplitude = combo.amplitude
            if spec.amp_jitter:
                amplitude *= rng.uniform(1.0 - spec.amp_jitter, 1.0 + spec.amp_jitter)
            values = np.empty((T, spec.channels), dtype=np.float64)
            for c in range(spec.channels):
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x = slope * t + amplitude * np.sin(2.0 * np.pi * freq * t / T + phase)
                if combo.noise_std > 0:
                    x = x + rng.normal(0.0, combo.noise_std, size=T)
                values[:, c] = x
            samples.append(TimeSeriesSample(values=values, label=label))
            tags.append(tag)
    return TimeSeriesDataset(
        samples=samples,
        channel_count=spec.channels,
        num_classes=num_classes,
        split_tags=tags,
    )


def generate_synthetic(spec):
    """Build (source, target) datasets; the target applies the spec's
    slope/frequency offsets. Pure function of the spec including its seed."""
    spec.validate()
    source = _synth_domain(spec, domain_id=0, slope_offset=0.0, freq_offset=0.0)
    target = _synth_domain(
        spec, domain_id=1, slope_offset=spec.slope_offset, freq_offset=spec.freq_offset
    )
    return source, target


# -- CSV ingestion -----------------------------------------------------------------


def convert_csv(files, out_dir, channels=None, labels=None, num_classes=None, splits=None, freq_hz=None):
    """Convert plain CSV samples (one file per sample, columns = channels)
    into the dataset directory format. ``labels`` maps file stem -> label."""
    samples = []
    d = channels
    for path in files:
        path = Path(path)
        with open(path) as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        if not rows:
            raise DataError(f"{path}: empty CSV")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise DataError(f"{path}: ragged rows with widths {sorted(widths)}")
        if d is None:
            d = widths.pop()
        elif widths != {d}:
            raise DataError(f"{path}: {widths.pop()} columns, expected {d}")
        label = None if labels is None else labels.get(path.stem)
        samples.append(TimeSeriesSample(values=np.asarray(rows, dtype=np.float64), label=label))
    if splits is None:
        splits = {"train": len(samples), "val": 0, "test": 0}
    tags = []
    for tag in SPLITS:
        tags.extend([tag] * int(splits.get(tag, 0)))
    if len(tags) != len(samples):
        raise DataError(f"split sizes {splits} do not cover {len(samples)} samples")
    ds = TimeSeriesDataset(
        samples=samples,
        channel_count=d,
        num_classes=num_classes,
        split_tags=tags,
        freq_hz=freq_hz,
    )
    return save_dataset(ds, out_dir)
