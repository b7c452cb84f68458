"""Two-stage optimization: contrastive pre-training on an unlabeled source,
then fine-tuning on a labeled target with the combined loss.

Both stages share the same machinery: seeded shuffling, Adam with classic
L2-into-gradient weight decay, a reduce-on-plateau learning-rate schedule,
early stopping, and best-model snapshots. Pre-training monitors its own
epoch-mean contrastive loss (no validation labels exist); fine-tuning monitors
validation cross-entropy. Given (config, seed, dataset), every logged loss
and final metric is reproducible bit for bit.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from multiprocessing import get_context

import numpy as np

from . import numerics as nx
from . import views as views_mod
from .dataio import SPLITS, TimeSeriesDataset, normalize_values, resample_uniform, seeded_rng
from .model import Model, ModelConfig, VIEW_KEYS, load_for_transfer
from .objectives import AugmentationPolicy, augment_batch, cross_entropy, total_loss


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one stage; defaults follow the published recipe
    (pretrain: batch 128 / 200 epochs, finetune: batch 16 / 100 epochs,
    lr 1e-3, weight decay 1e-5, lambda 0.1, tau 0.07, plateau 0.1/10,
    early stop 20)."""

    stage: str = "finetune"
    batch_size: int = 16
    max_epochs: int = 100
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    lam: float = 0.1
    tau: float = 0.07
    plateau_factor: float = 0.1
    plateau_patience: int = 10
    early_stop_patience: int = 20
    min_improve: float = 1e-6
    lr_floor: float = 1e-7
    seed: int = 0
    views: tuple[str, ...] = VIEW_KEYS
    fusion: bool = True
    freeze_encoders: bool = False
    length: int = 256
    hidden: int = 128
    num_layers: int = 3
    num_heads: int = 4
    jitter_std: float = 0.1
    scale_std: float = 0.1
    symmetric_nce: bool = False
    interpolation: str = "spline"
    step_budget: int | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.stage not in ("pretrain", "finetune"):
            raise TrainingError(f"stage must be pretrain or finetune, got {self.stage!r}")
        for name in ("batch_size", "max_epochs", "learning_rate", "tau", "plateau_factor"):
            if getattr(self, name) <= 0:
                raise TrainingError(f"{name} must be positive")
        if self.lam < 0 or self.weight_decay < 0:
            raise TrainingError("lam and weight_decay must be nonnegative")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise TrainingError("patience values must be >= 1")
        object.__setattr__(self, "views", tuple(self.views))

    @classmethod
    def pretrain_defaults(cls, **overrides):
        base = dict(stage="pretrain", batch_size=128, max_epochs=200)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def finetune_defaults(cls, **overrides):
        base = dict(stage="finetune", batch_size=16, max_epochs=100)
        base.update(overrides)
        return cls(**base)

    def model_config(self, in_channels, num_classes):
        return ModelConfig(
            length=self.length,
            hidden=self.hidden,
            in_channels=in_channels,
            num_classes=num_classes,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            views=self.views,
            fusion=self.fusion,
            dtype=self.dtype,
        )

    def policy(self):
        return AugmentationPolicy(jitter_std=self.jitter_std, scale_std=self.scale_std)


# -- optimizer ------------------------------------------------------------------


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update, in place.

    ``params``/``grads`` are aligned lists of arrays; ``state`` holds ``step``
    plus first/second moment arrays. Weight decay is folded into the gradient
    (classic Adam-with-L2). Non-finite gradients reject the whole step.
    """
    if len(params) != len(grads):
        raise TrainingError("params and grads must align")
    if state.get("m") is None:
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
        state["step"] = 0
    for i, g in enumerate(grads):
        if g is None:
            continue
        if g.shape != params[i].shape:
            raise TrainingError(f"grad shape {g.shape} != param shape {params[i].shape}")
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient at index {i}; step rejected")
    state["step"] += 1
    t = state["step"]
    b1, b2 = betas
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        if weight_decay:
            g = g + weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (lr / c1) * m / (np.sqrt(v / c2) + eps)
    return state


class Adam:
    """Adam over a name -> Tensor mapping (insertion order fixes update order)."""

    def __init__(self, named_params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.names = list(named_params)
        self.tensors = [named_params[n] for n in self.names]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = {}

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None

    def step(self, lr=None):
        grads = [t.grad for t in self.tensors]
        adam_step(
            [t.data for t in self.tensors],
            grads,
            self.state,
            lr=self.lr if lr is None else lr,
            betas=self.betas,
            eps=self.eps,
            weight_decay=self.weight_decay,
        )


# -- schedules ---------------------------------------------------------------------


class PlateauScheduler:
    """Multiply lr by ``factor`` after ``patience`` consecutive epochs without
    an improvement > ``min_improve``; lr never drops below ``floor``."""

    def __init__(self, lr, factor=0.1, patience=10, min_improve=1e-6, floor=1e-7):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_improve = min_improve
        self.floor = floor
        self.best = None
        self.stale = 0

    def step(self, loss):
        if self.best is None or self.best - loss > self.min_improve:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr = max(self.lr * self.factor, self.floor)
                self.stale = 0
        return self.lr


class EarlyStopper:
    """True once the loss has failed to improve by > ``min_improve`` for
    ``patience`` consecutive epochs."""

    def __init__(self, patience=20, min_improve=1e-6):
        self.patience = patience
        self.min_improve = min_improve
        self.best = None
        self.stale = 0

    def step(self, loss):
        if self.best is None or self.best - loss > self.min_improve:
            self.best = loss
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


# -- metrics ------------------------------------------------------------------------


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list[dict]
    confusion: np.ndarray

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class,
            "confusion": self.confusion.tolist(),
        }


def compute_metrics(y_true, y_pred, num_classes):
    """Confusion matrix (rows = truth), accuracy, and macro P/R/F1 averaged
    over the classes present in the ground truth; empty denominators give 0."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise TrainingError("empty evaluation split")
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    accuracy = float(np.trace(conf)) / float(conf.sum())
    per_class = []
    for c in range(num_classes):
        tp = float(conf[c, c])
        pred_c = float(conf[:, c].sum())
        true_c = float(conf[c, :].sum())
        precision = tp / pred_c if pred_c > 0 else 0.0
        recall = tp / true_c if true_c > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class.append(
            {"class": c, "precision": precision, "recall": recall, "f1": f1, "support": int(true_c)}
        )
    present = [m for m in per_class if m["support"] > 0]
    macro = lambda key: float(np.mean([m[key] for m in present]))
    return MetricsReport(accuracy, macro("precision"), macro("recall"), macro("f1"), per_class, conf)


# -- data preparation -----------------------------------------------------------------


@dataclass
class PreparedSplit:
    x: np.ndarray  # [N, L, d] normalized temporal signal
    views: views_mod.ViewSet
    labels: np.ndarray | None
    indices: np.ndarray  # positions within the original split, for seeding

    def __len__(self):
        return self.x.shape[0]


def _is_uniform(times):
    if times is None:
        return True
    d = np.diff(times)
    return np.allclose(d, d[0], rtol=1e-9, atol=1e-12)


def prepare_split(samples, length, dt, interpolation="spline"):
    arrays = []
    labels = []
    for s in samples:
        if s.length != length or not _is_uniform(s.timestamps):
            s = resample_uniform(s, length, method=interpolation)
        arrays.append(normalize_values(s.values))
        labels.append(s.label)
    x = np.stack(arrays).astype(np.float32)
    vs = views_mod.extract_views(x.astype(np.float64), dt=dt)
    vset = views_mod.ViewSet(
        temporal=x,
        derivative=vs.derivative.astype(np.float32),
        frequency=vs.frequency.astype(np.float32),
    )
    lab = None if any(l is None for l in labels) else np.asarray(labels, dtype=np.int64)
    return PreparedSplit(x=x, views=vset, labels=lab, indices=np.arange(len(samples)))


def prepare_dataset(dataset, config):
    dt = 1.0 / dataset.freq_hz if dataset.freq_hz else 1.0
    out = {}
    for tag in SPLITS:
        samples = dataset.split(tag)
        if samples:
            out[tag] = prepare_split(samples, config.length, dt, config.interpolation)
    out["_dt"] = dt
    return out


def _cast_views(vset):
    return views_mod.ViewSet(
        temporal=vset.temporal.astype(np.float32),
        derivative=vset.derivative.astype(np.float32),
        frequency=vset.frequency.astype(np.float32),
    )


def _slice_views(vset, idx):
    return views_mod.ViewSet(
        temporal=vset.temporal[idx],
        derivative=vset.derivative[idx],
        frequency=vset.frequency[idx],
    )


# -- evaluation --------------------------------------------------------------------


def evaluate(model, split, batch_size=256):
    """Argmax predictions over a prepared labeled split."""
    if split.labels is None:
        raise TrainingError("evaluation needs labels")
    n = len(split)
    if n == 0:
        raise TrainingError("empty evaluation split")
    preds = np.empty(n, dtype=np.int64)
    with nx.no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(start + batch_size, n))
            _, logits = model.forward(_slice_views(split.views, idx))
            preds[idx] = logits.data.argmax(axis=1)
    return compute_metrics(split.labels, preds, model.config.num_classes)


def _validation_ce(model, split, batch_size=256):
    n = len(split)
    total = 0.0
    with nx.no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(start + batch_size, n))
            _, logits = model.forward(_slice_views(split.views, idx))
            ce = cross_entropy(logits, split.labels[idx])
            total += ce.item() * idx.size
    return total / n


# -- training loops -------------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float | None
    lr: float


@dataclass
class TrainResult:
    model: Model
    history: list[EpochLog] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def _snapshot(model):
    return {n: t.data.copy() for n, t in model.params.items()}


def _restore(model, snap):
    for n, t in model.params.items():
        t.data[...] = snap[n]


def pretrain(model, source, config):
    """Stage 1: contrastive-only training on the source's train split,
    monitoring the epoch-mean contrastive loss. Returns the best snapshot."""
    if config.stage != "pretrain":
        raise TrainingError("config.stage must be 'pretrain'")
    prepared = prepare_dataset(source, config)
    if "train" not in prepared:
        raise TrainingError("source dataset has no train samples")
    train = prepared["train"]
    dt = prepared["_dt"]
    n = len(train)
    if n < config.batch_size:
        raise TrainingError(f"{n} samples cannot fill one batch of {config.batch_size}")
    policy = config.policy()
    opt = Adam(
        model.trainable(),
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    sched = PlateauScheduler(
        config.learning_rate,
        factor=config.plateau_factor,
        patience=config.plateau_patience,
        min_improve=config.min_improve,
        floor=config.lr_floor,
    )
    stopper = EarlyStopper(config.early_stop_patience, config.min_improve)
    result = TrainResult(model=model)
    best_loss = np.inf
    best_snap = _snapshot(model)
    lr = config.learning_rate
    step = 0
    budget_hit = False

    for epoch in range(config.max_epochs):
        order = seeded_rng(config.seed, 0x5E9, epoch).permutation(n)
        losses = []
        for b in range(n // config.batch_size):  # incomplete batch dropped
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            xb = train.x[idx]
            vb = _slice_views(train.views, idx)
            xa = augment_batch(xb, policy, config.seed, epoch, idx)
            va = _cast_views(views_mod.extract_views(xa, dt=dt))
            z, za, _ = model.forward_pair(vb, va)
            loss, report = total_loss(
                z, za, None, None, lam=config.lam, tau=config.tau,
                views=config.views, pretrain=True, symmetric=config.symmetric_nce,
            )
            opt.zero_grad()
            loss.backward()
            opt.step(lr=lr)
            losses.append(report.l_total)
            result.steps.append({"step": step, **dict(zip(report.CSV_FIELDS, report.row())), "lr": lr})
            step += 1
            if config.step_budget is not None and step >= config.step_budget:
                budget_hit = True
                break
        mean_loss = float(np.mean(losses))
        result.history.append(EpochLog(epoch, mean_loss, None, lr))
        if mean_loss < best_loss:
            best_loss = mean_loss
            best_snap = _snapshot(model)
            result.best_epoch = epoch
        lr = sched.step(mean_loss)
        if stopper.step(mean_loss):
            result.stopped_early = True
            break
        if budget_hit:
            break
    _restore(model, best_snap)
    return result


def finetune(model, target, config):
    """Stage 2: re-initialize the classifier, optionally freeze everything
    else, train on lam * L_CL + L_CE, monitor validation cross-entropy, and
    evaluate the best snapshot once on the test split.

    Returns (TrainResult, MetricsReport).
    """
    if config.stage != "finetune":
        raise TrainingError("config.stage must be 'finetune'")
    prepared = prepare_dataset(target, config)
    for tag in SPLITS:
        if tag not in prepared:
            raise TrainingError(f"target dataset has no {tag} samples")
        if prepared[tag].labels is None:
            raise TrainingError(f"target {tag} split has unlabeled samples")
    train, val, test = prepared["train"], prepared["val"], prepared["test"]
    dt = prepared["_dt"]
    n = len(train)
    model.reinit_classifier(seed=config.seed)
    policy = config.policy()
    opt = Adam(
        model.trainable(freeze_encoders=config.freeze_encoders),
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    sched = PlateauScheduler(
        config.learning_rate,
        factor=config.plateau_factor,
        patience=config.plateau_patience,
        min_improve=config.min_improve,
        floor=config.lr_floor,
    )
    stopper = EarlyStopper(config.early_stop_patience, config.min_improve)
    result = TrainResult(model=model)
    best_val = np.inf
    best_snap = _snapshot(model)
    lr = config.learning_rate
    step = 0
    budget_hit = False

    for epoch in range(config.max_epochs):
        order = seeded_rng(config.seed, 0xF17E, epoch).permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):  # incomplete batch kept
            idx = order[start : start + config.batch_size]
            if idx.size < 2:  # InfoNCE needs >= 2; a 1-sample tail is skipped
                continue
            vb = _slice_views(train.views, idx)
            za = None
            if config.lam > 0:
                xa = augment_batch(train.x[idx], policy, config.seed, epoch, idx)
                va = _cast_views(views_mod.extract_views(xa, dt=dt))
                z, za, logits = model.forward_pair(vb, va)
            else:
                z, logits = model.forward(vb)
            loss, report = total_loss(
                z, za, logits, train.labels[idx], lam=config.lam, tau=config.tau,
                views=config.views, pretrain=False, symmetric=config.symmetric_nce,
            )
            opt.zero_grad()
            loss.backward()
            opt.step(lr=lr)
            losses.append(report.l_total)
            result.steps.append({"step": step, **dict(zip(report.CSV_FIELDS, report.row())), "lr": lr})
            step += 1
            if config.step_budget is not None and step >= config.step_budget:
                budget_hit = True
                break
        val_loss = _validation_ce(model, val)
        result.history.append(EpochLog(epoch, float(np.mean(losses)), val_loss, lr))
        if val_loss < best_val:
            best_val = val_loss
            best_snap = _snapshot(model)
            result.best_epoch = epoch
        lr = sched.step(val_loss)
        if stopper.step(val_loss):
            result.stopped_early = True
            break
        if budget_hit:
            break
    _restore(model, best_snap)
    metrics = evaluate(model, test)
    return result, metrics


# -- ablation grid ----------------------------------------------------------------------


_GRID_AXES = None


def _grid_axes():
    global _GRID_AXES
    if _GRID_AXES is None:
        _GRID_AXES = {f.name for f in TrainConfig.__dataclass_fields__.values()}
    return _GRID_AXES


def _run_one(args):
    config, target, checkpoint, seed = args
    config = replace(config, seed=seed)
    if checkpoint is not None:
        model, _ = load_for_transfer(
            checkpoint,
            in_channels=target.channel_count,
            num_classes=target.num_classes,
            views=config.views,
            fusion=config.fusion,
            seed=seed,
        )
    else:
        model = Model.build(config.model_config(target.channel_count, target.num_classes), seed=seed)
    _, metrics = finetune(model, target, config)
    return metrics


def run_ablation_grid(base_config, grid, target, seeds, checkpoint=None, workers=1):
    """Cartesian sweep over TrainConfig axes x seeds.

    Returns (per-run rows, aggregate rows); aggregates carry mean and sample
    std per metric over the seeded repetitions.
    """
    if not grid:
        raise TrainingError("empty ablation grid")
    for axis in grid:
        if axis not in _grid_axes():
            raise TrainingError(f"invalid grid axis {axis!r}")
    axes = list(grid)
    combos = list(itertools.product(*(grid[a] for a in axes)))
    jobs = []
    for combo in combos:
        config = replace(base_config, **dict(zip(axes, combo)))
        for seed in seeds:
            jobs.append((config, target, checkpoint, seed))

    if workers > 1:
        prev = {k: os.environ.get(k) for k in ("OPENBLAS_NUM_THREADS", "NUMBA_NUM_THREADS")}
        os.environ["OPENBLAS_NUM_THREADS"] = "1"
        os.environ["NUMBA_NUM_THREADS"] = "1"
        try:
            with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn")) as pool:
                metrics_list = list(pool.map(_run_one, jobs))
        finally:
            for k, v in prev.items():
                if v is None:
                    os.environ.pop(k, None)
                else:
                    os.environ[k] = v
    else:
        metrics_list = [_run_one(job) for job in jobs]

    metric_keys = ("accuracy", "macro_precision", "macro_recall", "macro_f1")
    rows = []
    i = 0
    for combo in combos:
        for seed in seeds:
            m = metrics_list[i]
            row = dict(zip(axes, combo))
            row["seed"] = seed
            for key in metric_keys:
                row[key] = getattr(m, key)
            rows.append(row)
            i += 1
    aggregates = []
    for combo in combos:
        sel = [r for r in rows if all(r[a] == v for a, v in zip(axes, combo))]
        agg = dict(zip(axes, combo))
        agg["runs"] = len(sel)
        for key in metric_keys:
            vals = np.array([r[key] for r in sel])
            agg[f"{key}_mean"] = float(vals.mean())
            agg[f"{key}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        aggregates.append(agg)
    return rows, aggregates


def _format_cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, tuple):
        return "+".join(str(x) for x in v)
    return str(v)


def results_to_csv(rows):
    if not rows:
        return ""
    cols = list(rows[0])
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(_format_cell(r[c]) for c in cols))
    return "\n".join(lines) + "\n"


def results_to_markdown(rows):
    if not rows:
        return ""
    cols = list(rows[0])
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join(["---"] * len(cols)) + "|"]
    for r in rows:
        lines.append("| " + " | ".join(_format_cell(r[c]) for c in cols) + " |")
    return "\n".join(lines) + "\n"
