"""The three complementary signal views: raw temporal, backward-difference
derivative, and FFT amplitude spectrum.

All functions here are pure and operate on plain numpy arrays shaped
``[..., L, d]`` (leading batch axes welcome). The fast transform is a
radix-2 Cooley-Tukey for power-of-two lengths and a direct matrix DFT
otherwise; ``dft_oracle`` is the independent O(L^2) reference both paths
are tested against.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np


class ViewError(ValueError):
    pass


@dataclass(frozen=True)
class ViewSet:
    """Per-view encoder inputs, all shaped L x d with nonnegative spectrum."""

    temporal: np.ndarray
    derivative: np.ndarray
    frequency: np.ndarray

    def __post_init__(self):
        if not (self.temporal.shape == self.derivative.shape == self.frequency.shape):
            raise ViewError(
                "views must share one shape, got "
                f"{self.temporal.shape}/{self.derivative.shape}/{self.frequency.shape}"
            )

    def as_tuple(self):
        return self.temporal, self.derivative, self.frequency


def derivative_view(x, dt=1.0):
    """Second-order backward difference (3x_t - 4x_{t-1} + x_{t-2}) / (2 dt).

    Valid from t=2 on; the first two positions replicate the t=2 value so the
    output keeps length L. Exact for polynomials of degree <= 2.
    """
    x = np.asarray(x)
    L = x.shape[-2]
    if L < 3:
        raise ViewError(f"derivative stencil needs length >= 3, got {L}")
    if dt <= 0:
        raise ViewError(f"dt must be positive, got {dt}")
    out = np.empty_like(x)
    out[..., 2:, :] = (3.0 * x[..., 2:, :] - 4.0 * x[..., 1:-1, :] + x[..., :-2, :]) / (2.0 * dt)
    out[..., 0, :] = out[..., 2, :]
    out[..., 1, :] = out[..., 2, :]
    return out


def _bit_reverse_indices(n):
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    bits = n.bit_length() - 1
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_pow2(x):
    """Iterative radix-2 Cooley-Tukey over the last axis (length = power of 2)."""
    n = x.shape[-1]
    y = x[..., _bit_reverse_indices(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        y = y.reshape(x.shape[:-1] + (n // size, size))
        even = y[..., :half]
        odd = y[..., half:] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return y.reshape(x.shape)


def _dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def fft(x):
    """Complex DFT over the last axis: radix-2 when the length is a power of
    two, direct matrix product otherwise."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0:
        raise ViewError("empty signal")
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    return x.astype(np.complex128) @ _dft_matrix(n).T


def dft_oracle(x):
    """Direct-summation DFT of a 1-D signal; the ground truth for ``fft``."""
    x = np.asarray(x).reshape(-1)
    n = x.size
    out = np.empty(n, dtype=np.complex128)
    vals = [complex(v) for v in x]
    for k in range(n):
        acc = 0j
        w = -2j * cmath.pi * k / n
        for t in range(n):
            acc += vals[t] * cmath.exp(w * t)
        out[k] = acc
    return out


def frequency_view(x):
    """Element-wise modulus of the per-channel DFT; both spectrum halves are
    kept so the view has the same length as the signal."""
    x = np.asarray(x)
    spectra = fft(np.swapaxes(x, -1, -2))
    return np.abs(np.swapaxes(spectra, -1, -2)).astype(x.dtype)


def extract_views(x, dt=1.0):
    """Compute the temporal/derivative/frequency triple of an L x d signal."""
    x = np.asarray(x)
    if x.ndim < 2:
        raise ViewError(f"expected a [..., L, d] array, got shape {x.shape}")
    return ViewSet(
        temporal=x.copy(),
        derivative=derivative_view(x, dt),
        frequency=frequency_view(x),
    )
