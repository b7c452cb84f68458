"""The finite-difference gradient battery.

Each case builds a small scalar-valued function of explicit parameter tensors
and compares reverse-mode gradients against central differences. The battery
covers every differentiable public op plus a full model loss at toy scale
(L=8, D=4, batch 2, 2 classes); it is the acceptance oracle for all training
code and backs the ``gradcheck`` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from . import views as views_mod
from .model import Model, ModelConfig
from .numerics import Tensor
from .objectives import AugmentationPolicy, augment, cross_entropy, info_nce, total_loss

THRESHOLD_64 = 1e-5
THRESHOLD_32 = 1e-2


@dataclass
class CaseResult:
    name: str
    shapes: str
    max_rel_error: float
    threshold: float

    @property
    def passed(self):
        return self.max_rel_error < self.threshold

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<28} shapes={self.shapes:<24} max_rel_err={self.max_rel_error:.3e}"


def _away_from_kink(x, margin=0.05):
    # FD across the ReLU kink is meaningless; keep inputs clear of it
    return x + np.sign(x) * margin


def _weights(rng, shape, dtype):
    return Tensor(rng.standard_normal(shape).astype(dtype))


def op_cases(dtype, seed=0):
    """(name, make) pairs; make() -> (f, params, shapes)."""
    rng = np.random.default_rng(seed)

    def p(shape):
        return Tensor(rng.standard_normal(shape).astype(dtype), requires_grad=True)

    cases = []

    def case(name, builder):
        cases.append((name, builder))

    def simple(name, build_f, *shapes):
        def builder():
            params = [p(s) for s in shapes]
            w = _weights(rng, build_f.out_shape(*shapes), dtype)
            return (lambda: nx.tensor_sum(nx.mul(build_f(*params), w))), params, "x".join(map(str, shapes))

        case(name, builder)

    # elementwise / broadcasting
    def make_binary(op, out_shape):
        def f(a, b):
            return op(a, b)

        f.out_shape = lambda sa, sb: out_shape
        return f

    simple("add-broadcast", make_binary(nx.add, (3, 4)), (3, 4), (4,))
    simple("sub", make_binary(nx.sub, (3, 4)), (3, 4), (3, 4))
    simple("mul-broadcast", make_binary(nx.mul, (2, 3, 4)), (2, 3, 4), (3, 4))

    def make_div():
        def f(a, b):
            return nx.div(a, b)

        f.out_shape = lambda sa, sb: sa
        return f

    def div_builder():
        a = p((3, 4))
        b = Tensor((rng.standard_normal((3, 4)) + np.sign(rng.standard_normal((3, 4))) * 1.5).astype(dtype), requires_grad=True)
        w = _weights(rng, (3, 4), dtype)
        return (lambda: nx.tensor_sum(nx.mul(nx.div(a, b), w))), [a, b], "3x4/3x4"

    case("div", div_builder)

    def unary_builder(op, transform=None, shape=(3, 5)):
        def builder():
            raw = rng.standard_normal(shape)
            if transform is not None:
                raw = transform(raw)
            t = Tensor(raw.astype(dtype), requires_grad=True)
            w = _weights(rng, shape, dtype)
            return (lambda: nx.tensor_sum(nx.mul(op(t), w))), [t], "x".join(map(str, shape))

        return builder

    case("neg", unary_builder(nx.neg))
    case("relu", unary_builder(nx.relu, _away_from_kink))
    case("exp", unary_builder(nx.exp))
    case("log", unary_builder(nx.log, lambda x: np.abs(x) + 0.5))
    case("sqrt", unary_builder(nx.sqrt, lambda x: np.abs(x) + 0.5))

    # matmul: plain and batched-broadcast
    def matmul_builder(sa, sb):
        def builder():
            a, b = p(sa), p(sb)
            out = np.matmul(np.zeros(sa), np.zeros(sb)).shape
            w = _weights(rng, out, dtype)
            return (lambda: nx.tensor_sum(nx.mul(nx.matmul(a, b), w))), [a, b], f"{sa}x{sb}"

        return builder

    case("matmul", matmul_builder((3, 4), (4, 5)))
    case("matmul-batched", matmul_builder((2, 3, 4, 5), (5, 6)))
    case("matmul-broadcast", matmul_builder((2, 1, 3, 4), (2, 4, 2)))

    # reductions
    case("sum-axis", unary_builder(lambda t: nx.tensor_sum(t, axis=1, keepdims=True)))

    def mean_builder():
        t = p((4, 6))
        w = _weights(rng, (4,), dtype)
        return (lambda: nx.tensor_sum(nx.mul(nx.tensor_mean(t, axis=-1), w))), [t], "4x6"

    case("mean", mean_builder)

    # fused ops
    def softmax_builder(axis):
        def builder():
            t = p((4, 5, 6))
            w = _weights(rng, (4, 5, 6), dtype)
            return (lambda: nx.tensor_sum(nx.mul(nx.softmax(t, axis=axis), w))), [t], "4x5x6"

        return builder

    case("softmax-lastaxis", softmax_builder(-1))
    case("softmax-midaxis", softmax_builder(1))

    def log_softmax_builder():
        t = p((5, 7))
        w = _weights(rng, (5, 7), dtype)
        return (lambda: nx.tensor_sum(nx.mul(nx.log_softmax(t, axis=1), w))), [t], "5x7"

    case("log_softmax", log_softmax_builder)

    def layer_norm_builder():
        t, g, b = p((3, 4, 6)), p((6,)), p((6,))
        w = _weights(rng, (3, 4, 6), dtype)
        return (lambda: nx.tensor_sum(nx.mul(nx.layer_norm(t, g, b), w))), [t, g, b], "3x4x6"

    case("layer_norm", layer_norm_builder)

    def normalize_rows_builder():
        raw = rng.standard_normal((4, 6)) + 0.1
        t = Tensor(raw.astype(dtype), requires_grad=True)
        w = _weights(rng, (4, 6), dtype)
        return (lambda: nx.tensor_sum(nx.mul(nx.normalize_rows(t), w))), [t], "4x6"

    case("normalize_rows", normalize_rows_builder)

    # shape plumbing in one composite graph
    def shapes_builder():
        t = p((4, 6))
        w = _weights(rng, (2, 24), dtype)

        def f():
            s = nx.stack([t, nx.mul(t, t)], axis=1)  # [4, 2, 6]
            tr = nx.transpose(s, (1, 0, 2))          # [2, 4, 6]
            parts = nx.split(tr, axis=0)             # two [4, 6]
            c = nx.concat(parts, axis=1)             # [4, 12]
            r = nx.reshape(c, (2, 24))
            top = nx.take_rows(r, 0, 1)
            return nx.tensor_sum(nx.mul(nx.concat([top, top], axis=0), w))

        return f, [t], "4x6"

    case("shape-ops", shapes_builder)

    # losses
    def info_nce_builder():
        z = Tensor((rng.standard_normal((4, 6)) + 0.2).astype(dtype), requires_grad=True)
        za = Tensor((rng.standard_normal((4, 6)) + 0.2).astype(dtype), requires_grad=True)
        return (lambda: info_nce(z, za, tau=0.2)), [z, za], "4x6"

    case("info_nce", info_nce_builder)

    def ce_builder():
        logits = p((5, 3))
        labels = np.array([0, 2, 1, 2, 0])
        return (lambda: cross_entropy(logits, labels)), [logits], "5x3"

    case("cross_entropy", ce_builder)

    return cases


def model_loss_case(dtype, seed=0, batch=2, length=8, hidden=4, num_classes=2):
    """Full pipeline loss (views -> encoders -> fusion -> heads -> combined
    loss) as a single scalar function of every trainable parameter."""
    rng = np.random.default_rng(seed)
    config = ModelConfig(
        length=length,
        hidden=hidden,
        in_channels=1,
        num_classes=num_classes,
        num_layers=2,
        num_heads=2,
        dtype="float64" if dtype == np.float64 else "float32",
    )
    model = Model.build(config, seed=seed)
    x = rng.standard_normal((batch, length, 1))
    policy = AugmentationPolicy()
    xa = np.stack([augment(x[i], policy, (seed, i)) for i in range(batch)])
    vb = views_mod.extract_views(x)
    va = views_mod.extract_views(xa)
    labels = rng.integers(0, num_classes, size=batch)

    def f():
        z, za, logits = model.forward_pair(vb, va)
        loss, _ = total_loss(z, za, logits, labels, lam=0.1, tau=0.07)
        return loss

    params = [t for t in model.params.values() if t.requires_grad]
    return f, params, f"{batch}x{length}x1, {len(params)} tensors"


def model_check_32bit(seed=0, step=1e-5, rel_floor=1e-3):
    """Verify the float32 backward against a float64 finite-difference twin.

    The two models share parameter values exactly (float32 values widened),
    so the oracle differentiates the same function free of 32-bit forward
    rounding noise; only the 32-bit reverse pass is under test.
    """
    f32_f, f32_params, shapes = model_loss_case(np.float32, seed=seed)
    f64_f, f64_params, _ = model_loss_case(np.float64, seed=seed)
    for p64, p32 in zip(f64_params, f32_params):
        p64.data[...] = p32.data.astype(np.float64)
    err = nx.gradient_check(
        f32_f, f32_params, step=step, rel_floor=rel_floor, f_ref=f64_f, params_ref=f64_params
    )
    return CaseResult("model-end-to-end-32bit", shapes, err, THRESHOLD_32)


def run_battery(dtype=np.float64, seeds=(0,), include_model=True, step=None, rel_floor=None):
    """Run every case at every seed; returns the per-case worst results."""
    threshold = THRESHOLD_64 if dtype == np.float64 else THRESHOLD_32
    worst = {}
    for seed in seeds:
        for name, builder in op_cases(dtype, seed):
            f, params, shapes = builder()
            err = nx.gradient_check(f, params, step=step, rel_floor=rel_floor)
            if name not in worst or err > worst[name].max_rel_error:
                worst[name] = CaseResult(name, shapes, err, threshold)
    if include_model:
        f, params, shapes = model_loss_case(dtype, seed=seeds[0])
        err = nx.gradient_check(f, params, step=step, rel_floor=rel_floor)
        worst["model-end-to-end"] = CaseResult("model-end-to-end", shapes, err, threshold)
    return list(worst.values())
