"""Positive-pair augmentations and the losses.

Augmentations perturb the raw (already normalized) series; the caller
recomputes all three views from the augmented signal so the positive pair
stays mutually consistent across views. InfoNCE follows the single-direction
form: the denominator ranges over the batch of augmented embeddings only
(a symmetric two-way variant sits behind a flag, off by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .dataio import seeded_rng
from .numerics import Tensor

VIEW_KEYS = ("t", "d", "f")


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentationPolicy:
    """Jitter adds Gaussian noise scaled by the per-channel std; scaling
    multiplies each channel by a factor drawn from Normal(1, scale_std)."""

    jitter_std: float = 0.1
    scale_std: float = 0.1
    jitter: bool = True
    scaling: bool = True


def augment(x, policy, seed):
    """Augmented copy of a [..., L, d] series; deterministic given ``seed``
    (an int or a tuple of ints identifying the sample's stream)."""
    x = np.asarray(x)
    rng = seeded_rng(seed if not isinstance(seed, (tuple, list)) else list(seed), 0xA76)
    out = x.astype(np.float64, copy=True)
    d = x.shape[-1]
    if policy.scaling and policy.scale_std > 0:
        factors = rng.normal(1.0, policy.scale_std, size=d)
        out *= factors
    if policy.jitter and policy.jitter_std > 0:
        ch_std = x.std(axis=-2, keepdims=True)
        out += rng.standard_normal(x.shape) * (policy.jitter_std * ch_std)
    return out


def augment_batch(x, policy, seed, epoch, indices):
    """Per-sample streams keyed by (seed, epoch, dataset index): the draw for a
    sample never depends on batch order or worker scheduling."""
    out = np.empty(x.shape, dtype=np.float64)
    for row, idx in enumerate(indices):
        out[row] = augment(x[row], policy, (seed, epoch, int(idx)))
    return out


def info_nce(z, z_aug, tau=0.07, symmetric=False):
    """-mean_i log [ exp(sim(z_i, za_i)/tau) / sum_j exp(sim(z_i, za_j)/tau) ]
    with cosine similarity; in-batch negatives are the augmented embeddings."""
    if tau <= 0:
        raise ObjectiveError(f"temperature must be positive, got {tau}")
    n = z.shape[0]
    if n < 2:
        raise ObjectiveError(f"InfoNCE needs a batch of >= 2, got {n}")
    if z.shape != z_aug.shape:
        raise nx.ShapeMismatch(f"embedding shapes differ: {z.shape} vs {z_aug.shape}")
    zn = nx.normalize_rows(z)
    zan = nx.normalize_rows(z_aug)
    sims = nx.matmul(zn, nx.transpose(zan, (1, 0)))
    inv_tau = Tensor(np.asarray(1.0 / tau, dtype=z.dtype))
    logp = nx.log_softmax(sims * inv_tau, axis=1)
    eye = Tensor(np.eye(n, dtype=z.dtype))
    loss = -(nx.tensor_sum(nx.mul(logp, eye)) * Tensor(np.asarray(1.0 / n, dtype=z.dtype)))
    if symmetric:
        rev = info_nce(z_aug, z, tau=tau, symmetric=False)
        half = Tensor(np.asarray(0.5, dtype=z.dtype))
        loss = (loss + rev) * half
    return loss


def cross_entropy(logits, labels):
    """Mean negative log softmax probability of the true class."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ObjectiveError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ObjectiveError(
            f"labels outside [0, {c}): min {labels.min()}, max {labels.max()}"
        )
    logp = nx.log_softmax(logits, axis=1)
    onehot = np.zeros((n, c), dtype=logits.dtype)
    onehot[np.arange(n), labels] = 1.0
    loss = -(nx.tensor_sum(nx.mul(logp, Tensor(onehot))) * Tensor(np.asarray(1.0 / n, dtype=logits.dtype)))
    return loss


@dataclass
class LossReport:
    """Per-step loss breakdown; the contrastive total is the sum of the
    per-view terms (inactive views contribute zero)."""

    l_cl_t: float
    l_cl_d: float
    l_cl_f: float
    l_ce: float
    l_total: float
    lam: float

    CSV_FIELDS = ("l_cl_t", "l_cl_d", "l_cl_f", "l_ce", "l_total")

    @property
    def l_cl(self):
        return self.l_cl_t + self.l_cl_d + self.l_cl_f

    def row(self):
        return [self.l_cl_t, self.l_cl_d, self.l_cl_f, self.l_ce, self.l_total]


def total_loss(z, z_aug, logits, labels, lam=0.1, tau=0.07, views=VIEW_KEYS, pretrain=False, symmetric=False):
    """Combine per-view InfoNCE with cross-entropy.

    Pre-training ignores labels and uses the contrastive sum alone; fine-tuning
    uses lam * L_CL + L_CE. ``z_aug`` may be omitted only when the contrastive
    term is off (lam == 0, not pre-training). Returns (scalar Tensor, LossReport).
    """
    per_view = {k: 0.0 for k in VIEW_KEYS}
    cl_tensor = None
    if z_aug is not None:
        for k in views:
            term = info_nce(z[k], z_aug[k], tau=tau, symmetric=symmetric)
            per_view[k] = term.item()
            cl_tensor = term if cl_tensor is None else cl_tensor + term
    elif pretrain or lam != 0:
        raise ObjectiveError("augmented embeddings required when the contrastive term is active")

    if pretrain:
        total = cl_tensor
        report = LossReport(per_view["t"], per_view["d"], per_view["f"], 0.0, total.item(), lam)
        return total, report

    ce = cross_entropy(logits, labels)
    if cl_tensor is not None and lam != 0:
        lam_c = Tensor(np.asarray(lam, dtype=logits.dtype))
        total = cl_tensor * lam_c + ce
    else:
        total = ce
    report = LossReport(per_view["t"], per_view["d"], per_view["f"], ce.item(), total.item(), lam)
    return total, report
