"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array and records the operations applied to it; calling
``backward()`` on a scalar result walks the recorded graph once in reverse
topological order and accumulates gradients into every leaf that was created
with ``requires_grad=True``. Backward rules are hand-written per op and are
validated against central finite differences by ``gradient_check``.

Every public op checks its result for NaN/Inf and raises instead of silently
propagating. Default width is float32; pass float64 arrays for verification
runs (widths are never mixed inside one graph).
"""

from __future__ import annotations

import numpy as np

from . import _kernels

DEFAULT_DTYPE = np.float32


class NumericsError(Exception):
    """Base class for tensor arithmetic failures."""


class ShapeMismatch(NumericsError):
    pass


class NonFiniteValue(NumericsError):
    pass


class OracleError(NumericsError):
    """The finite-difference oracle could not run (e.g. non-deterministic f)."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (evaluation paths)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _check_finite(arr, op):
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"{op} produced NaN/Inf values")


class Tensor:
    """A dense n-dimensional float array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- graph machinery ----------------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward, op, check=True):
        if check:
            _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._parents = ()
        out._backward = None
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad=None):
        """Reverse pass from this node; accumulates into leaf ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise NumericsError("backward() without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeMismatch(f"seed gradient shape {grad.shape} != output shape {self.data.shape}")

        # iterative post-order DFS; each node visited exactly once
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and (p._parents or p.requires_grad):
                    stack.append((p, False))

        self.grad = grad if self.grad is None else self.grad + grad
        # Accumulation borrows the first contribution and only copies when a
        # second one arrives, so single-consumer chains never allocate.
        borrowed = set()
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            partials = node._backward(node.grad)
            for p, pg in zip(node._parents, partials):
                if pg is None or not (p.requires_grad or p._parents):
                    continue
                if pg.shape != p.data.shape:
                    raise ShapeMismatch(
                        f"gradient shape {pg.shape} does not match tensor shape {p.data.shape}"
                    )
                if p.grad is None:
                    p.grad = pg
                    borrowed.add(id(p))
                elif id(p) in borrowed:
                    p.grad = p.grad + pg
                    borrowed.discard(id(p))
                else:
                    p.grad += pg
            if node is not self:
                node.grad = None  # interior grads are transient

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other, self))

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other, self))

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other, self))

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def _coerce(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(g, shape):
    """Sum ``g`` over the axes that were broadcast to reach ``g.shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _require_same_dtype(*tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise NumericsError(
                f"mixed dtypes in one op: {dt.name} vs {t.data.dtype.name}"
            )
    return dt


# -- elementwise ops ---------------------------------------------------------


def add(a, b):
    _require_same_dtype(a, b)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor._from_op(data, (a, b), backward, "add")


def sub(a, b):
    _require_same_dtype(a, b)
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor._from_op(data, (a, b), backward, "sub")


def mul(a, b):
    _require_same_dtype(a, b)
    data = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if (a.requires_grad or a._parents) else None
        gb = _unbroadcast(g * a.data, b.data.shape) if (b.requires_grad or b._parents) else None
        return ga, gb

    return Tensor._from_op(data, (a, b), backward, "mul")


def div(a, b):
    _require_same_dtype(a, b)
    data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.data.shape) if (a.requires_grad or a._parents) else None
        gb = (
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
            if (b.requires_grad or b._parents)
            else None
        )
        return ga, gb

    return Tensor._from_op(data, (a, b), backward, "div")


def neg(a):
    def backward(g):
        return (-g,)

    return Tensor._from_op(-a.data, (a,), backward, "neg", check=False)


def relu(a):
    data = np.maximum(a.data, 0)

    def backward(g):
        return (g * (a.data > 0),)

    return Tensor._from_op(data, (a,), backward, "relu", check=False)


def exp(a):
    data = np.exp(a.data)

    def backward(g):
        return (g * data,)

    return Tensor._from_op(data, (a,), backward, "exp")


def log(a):
    data = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return Tensor._from_op(data, (a,), backward, "log")


def sqrt(a):
    data = np.sqrt(a.data)

    def backward(g):
        return (g * (0.5 / data),)

    return Tensor._from_op(data, (a,), backward, "sqrt")


# -- matmul ------------------------------------------------------------------


def _gemm_operand(x):
    # numpy dispatches batched matmul to BLAS only when each matrix slice is
    # strictly C- or F-contiguous; anything else hits a slow buffered path
    if x.ndim <= 2:
        return x
    it = x.itemsize
    s = x.strides
    if s[-1] == it and s[-2] == it * x.shape[-1]:
        return x
    if s[-2] == it and s[-1] == it * x.shape[-2]:
        return x
    return np.ascontiguousarray(x)


def _swap_last(x):
    return _gemm_operand(np.swapaxes(x, -1, -2))


def matmul(a, b):
    """Batched matrix product; leading axes broadcast, inner axes must agree."""
    _require_same_dtype(a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch(f"matmul needs >=2-D operands, got {a.data.shape} x {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    try:
        data = np.matmul(_gemm_operand(a.data), _gemm_operand(b.data))
    except ValueError as e:
        raise ShapeMismatch(f"matmul broadcast failure: {a.data.shape} x {b.data.shape}") from e

    def backward(g):
        ga = gb = None
        g = _gemm_operand(g)
        if a.requires_grad or a._parents:
            ga = _unbroadcast(np.matmul(g, _swap_last(b.data)), a.data.shape)
        if b.requires_grad or b._parents:
            gb = _unbroadcast(np.matmul(_swap_last(a.data), g), b.data.shape)
        return ga, gb

    return Tensor._from_op(data, (a, b), backward, "matmul")


# -- reductions ---------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tensor_sum(a, axis=None, keepdims=False):
    axes = _norm_axes(axis, a.data.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axes)
        return (np.broadcast_to(gg, a.data.shape).astype(a.data.dtype, copy=True),)

    return Tensor._from_op(np.asarray(data), (a,), backward, "sum")


def tensor_mean(a, axis=None, keepdims=False):
    axes = _norm_axes(axis, a.data.ndim)
    count = 1
    for ax in axes:
        count *= a.data.shape[ax]
    out = tensor_sum(a, axis=axis, keepdims=keepdims)
    return mul(out, Tensor(np.asarray(1.0 / count, dtype=a.data.dtype)))


# -- shape ops -----------------------------------------------------------------


def reshape(a, shape):
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return Tensor._from_op(data, (a,), backward, "reshape", check=False)


def transpose(a, axes=None):
    data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inv),)

    return Tensor._from_op(data, (a,), backward, "transpose", check=False)


def stack(tensors, axis=0):
    _require_same_dtype(*tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._from_op(data, tuple(tensors), backward, "stack", check=False)


def concat(tensors, axis=-1):
    _require_same_dtype(*tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        outs = []
        for i in range(len(tensors)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offsets[i], offsets[i + 1])
            outs.append(np.ascontiguousarray(g[tuple(idx)]))
        return tuple(outs)

    return Tensor._from_op(data, tuple(tensors), backward, "concat", check=False)


def linear(x, w, b):
    """Fused affine map ``x @ w + b`` over the last axis."""
    _require_same_dtype(x, w, b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeMismatch(f"linear: input {x.data.shape} does not match weight {w.data.shape}")
    data = np.matmul(_gemm_operand(x.data), w.data) + b.data

    def backward(g):
        g = _gemm_operand(g)
        gx = gw = gb = None
        if x.requires_grad or x._parents:
            gx = np.matmul(g, w.data.T)
        if w.requires_grad or w._parents:
            rows = g.reshape(-1, g.shape[-1])
            gw = np.matmul(x.data.reshape(-1, x.data.shape[-1]).T, rows)
        if b.requires_grad or b._parents:
            gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return gx, gw, gb

    return Tensor._from_op(data, (x, w, b), backward, "linear")


def slice_lastaxis(a, start, stop):
    """Contiguous slice along the last axis."""
    data = np.ascontiguousarray(a.data[..., start:stop])

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        return (full,)

    return Tensor._from_op(data, (a,), backward, "slice_lastaxis", check=False)


def take_rows(a, start, stop):
    """Contiguous row slice along the first axis."""
    data = a.data[start:stop]

    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return Tensor._from_op(data, (a,), backward, "take_rows", check=False)


def split(a, axis):
    """Split into single slices along ``axis`` (inverse of stack)."""
    n = a.data.shape[axis]
    outs = []
    for i in range(n):
        piece = np.take(a.data, i, axis=axis)

        def backward(g, _i=i):
            full = np.zeros_like(a.data)
            idx = [slice(None)] * a.data.ndim
            idx[axis] = _i
            full[tuple(idx)] = g
            return (full,)

        outs.append(Tensor._from_op(piece, (a,), backward, "split", check=False))
    return outs


# -- fused ops -----------------------------------------------------------------


def _move_lastaxis(a_data, axis):
    if axis in (-1, a_data.ndim - 1):
        return a_data, None
    moved = np.moveaxis(a_data, axis, -1)
    return np.ascontiguousarray(moved), axis


def softmax(a, axis=-1):
    """Numerically stable softmax: rows are shifted by their max before exp."""
    if not -a.data.ndim <= axis < a.data.ndim:
        raise NumericsError(f"softmax axis {axis} invalid for shape {a.data.shape}")
    x, moved = _move_lastaxis(a.data, axis)
    y = _kernels.softmax_lastaxis(x)
    data = y if moved is None else np.moveaxis(y, -1, moved)

    def backward(g):
        gm = g if moved is None else np.ascontiguousarray(np.moveaxis(g, moved, -1))
        gx = _kernels.softmax_lastaxis_bwd(y, gm)
        return (gx if moved is None else np.moveaxis(gx, -1, moved),)

    return Tensor._from_op(data, (a,), backward, "softmax", check=False)


def log_softmax(a, axis=-1):
    if not -a.data.ndim <= axis < a.data.ndim:
        raise NumericsError(f"log_softmax axis {axis} invalid for shape {a.data.shape}")
    x, moved = _move_lastaxis(a.data, axis)
    y = _kernels.log_softmax_lastaxis(x)
    data = y if moved is None else np.moveaxis(y, -1, moved)

    def backward(g):
        gm = g if moved is None else np.ascontiguousarray(np.moveaxis(g, moved, -1))
        p = np.exp(y)
        gx = gm - p * gm.sum(axis=-1, keepdims=True)
        return (gx if moved is None else np.moveaxis(gx, -1, moved),)

    return Tensor._from_op(data, (a,), backward, "log_softmax", check=False)


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalize the last axis to mean 0 / variance 1, then apply gain & bias."""
    if eps <= 0:
        raise NumericsError(f"layer_norm eps must be positive, got {eps}")
    _require_same_dtype(a, gain, bias)
    d = a.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeMismatch(
            f"layer_norm gain/bias must have shape ({d},), got {gain.data.shape} / {bias.data.shape}"
        )
    xhat, rstd = _kernels.layernorm_lastaxis(a.data, eps)
    data = xhat * gain.data + bias.data

    def backward(g):
        ga = None
        if a.requires_grad or a._parents:
            ga = _kernels.layernorm_lastaxis_bwd(xhat, rstd, g * gain.data)
        red = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=red) if (gain.requires_grad or gain._parents) else None
        gbias = g.sum(axis=red) if (bias.requires_grad or bias._parents) else None
        return ga, ggain, gbias

    return Tensor._from_op(data, (a, gain, bias), backward, "layer_norm")


def normalize_rows(a):
    """Scale each last-axis row to unit L2 norm; zero-norm rows are an error."""
    sq = tensor_sum(mul(a, a), axis=-1, keepdims=True)
    if np.any(sq.data <= 0):
        raise NumericsError("normalize_rows: zero-norm row (cosine similarity undefined)")
    return div(a, sqrt(sq))


# -- finite-difference oracle ----------------------------------------------------


def gradient_check(f, params, step=None, rel_floor=None, f_ref=None, params_ref=None):
    """Max relative error between reverse-mode gradients of ``f`` and central
    finite differences ``(f(p+h) - f(p-h)) / (2h)``, over all elements of all
    ``params``.

    ``f`` takes no arguments, reads ``params``, and returns a scalar Tensor.
    It must be deterministic; this is probed by evaluating it twice.

    For 32-bit graphs, forward rounding noise can drown the differences;
    pass a float64 twin via ``f_ref``/``params_ref`` (same values, wider
    dtype) and the oracle differentiates that instead, still element-aligned
    with ``params``.
    """
    if not params:
        raise OracleError("gradient_check needs at least one parameter")
    dtype = params[0].data.dtype
    for p in params:
        if p.data.dtype != dtype:
            raise OracleError("gradient_check params must share one dtype")
        if not p.requires_grad:
            raise OracleError("gradient_check params must have requires_grad=True")

    if (f_ref is None) != (params_ref is None):
        raise OracleError("f_ref and params_ref must be given together")
    fd_f = f if f_ref is None else f_ref
    fd_params = params if params_ref is None else params_ref
    if len(fd_params) != len(params) or any(
        q.data.shape != p.data.shape for q, p in zip(fd_params, params)
    ):
        raise OracleError("reference params must mirror params in count and shape")

    fd_dtype = fd_params[0].data.dtype
    if step is None:
        # central differences balance truncation vs roundoff around eps^(1/3)
        step = 1e-5 if fd_dtype == np.float64 else 5e-3
    if rel_floor is None:
        # floor absorbs FD noise on near-zero gradient entries
        rel_floor = 1e-4 if dtype == np.float64 else 3e-2
    if step <= 0:
        raise OracleError(f"step must be positive, got {step}")

    for p in params:
        p.grad = None
    out = f()
    if out.data.size != 1:
        raise OracleError("gradient_check target must be scalar-valued")
    with no_grad():
        probe = f()
    if out.item() != probe.item():
        raise OracleError("f is not deterministic: repeated evaluation differs")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    max_rel = 0.0
    h = fd_params[0].data.dtype.type(step)
    with no_grad():
        for p, a in zip(fd_params, analytic):
            aflat = a.reshape(-1)
            for i in range(p.data.size):
                orig = p.data.flat[i]
                p.data.flat[i] = orig + h
                fp = fd_f().item()
                p.data.flat[i] = orig - h
                fm = fd_f().item()
                p.data.flat[i] = orig
                num = (fp - fm) / (2.0 * float(h))
                ana = float(aflat[i])
                rel = abs(ana - num) / max(abs(ana), abs(num), rel_floor)
                if rel > max_rel:
                    max_rel = rel
    for p in params:
        p.grad = None
    return max_rel
