"""Irregular sampling recovered by natural cubic splines.

Randomly removes half the observations of a clean series, rebuilds a uniform
grid with spline interpolation, and compares the three views computed from
the original versus the reconstruction: low-frequency structure survives.
"""

import numpy as np

from triview import views
from triview.dataio import TimeSeriesSample, drop_observations, normalize, resample_uniform

T = 256
t = np.arange(T, dtype=np.float64)
rng = np.random.default_rng(3)
signal = (np.sin(2 * np.pi * 10 * t / T) + 0.4 * np.sin(2 * np.pi * 3 * t / T + 1.1))[:, None]

sample = TimeSeriesSample(values=signal)
sparse = drop_observations(sample, fraction=0.5, seed=42)
print(f"kept {sparse.length}/{T} observations after 50% random removal")

recovered = resample_uniform(sparse, T)
truth = (np.sin(2 * np.pi * 10 * recovered.timestamps / T)
         + 0.4 * np.sin(2 * np.pi * 3 * recovered.timestamps / T + 1.1))[:, None]
rel = np.linalg.norm(recovered.values - truth) / np.linalg.norm(truth)
print(f"relative L2 reconstruction error: {rel:.4f}")

orig_views = views.extract_views(normalize(sample).values)
rec_views = views.extract_views(normalize(recovered).values)
for name in ("temporal", "derivative", "frequency"):
    a = getattr(orig_views, name)
    b = getattr(rec_views, name)
    rel = np.linalg.norm(a - b) / np.linalg.norm(a)
    print(f"{name:>10} view: relative deviation {rel:.4f}")

print("\ncore patterns survive interpolation; deviations grow with view order")
print("(derivative amplifies local error, spectrum keeps peak structure)")
peaks = np.argsort(rec_views.frequency[1 : T // 2, 0])[-2:] + 1
print(f"reconstructed spectrum peaks at bins {sorted(peaks.tolist())} (true: [3, 10])")
