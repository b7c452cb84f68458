"""The learnable architecture.

Three transformer encoders (one per view) feed a cross-view attention fusion
block; per-view feed-forward heads mean-pool over time into embedding vectors
z_t / z_d / z_f, and a single linear classifier reads their concatenation.
Parameters live in one flat name -> Tensor mapping so the optimizer, freezing,
and checkpoint code can treat the model uniformly.

Checkpoints are a one-line UTF-8 JSON header (version, config, tensor names /
shapes / byte offsets) followed by a little-endian float payload in header
order; roundtrips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .numerics import Tensor

VIEW_KEYS = ("t", "d", "f")
CHECKPOINT_VERSION = 1


class CheckpointError(IOError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    length: int = 256
    hidden: int = 128
    in_channels: int = 1
    num_classes: int = 2
    num_layers: int = 3
    num_heads: int = 4
    ffn_mult: int = 4
    views: tuple[str, ...] = VIEW_KEYS
    fusion: bool = True
    dtype: str = "float32"
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.hidden % self.num_heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by {self.num_heads} heads")
        bad = [v for v in self.views if v not in VIEW_KEYS]
        if bad or not self.views:
            raise ValueError(f"views must be a nonempty subset of {VIEW_KEYS}, got {self.views}")
        object.__setattr__(self, "views", tuple(self.views))

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_json_dict(self):
        d = asdict(self)
        d["views"] = list(self.views)
        return d

    @classmethod
    def from_json_dict(cls, d):
        d = dict(d)
        d["views"] = tuple(d.get("views", VIEW_KEYS))
        return cls(**d)


def sinusoidal_positions(length, dim, dtype=np.float32):
    """Fixed sin/cos position table: sin on even columns, cos on odd."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(0, dim, 2, dtype=np.float64)
    angles = pos / np.power(10000.0, idx / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim // 2])
    return table.astype(dtype)


def _linear_init(rng, fan_in, shape, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Model:
    """Flat parameter store plus the forward computation."""

    def __init__(self, config, params):
        self.config = config
        self.params = params  # dict name -> Tensor, insertion-ordered

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, config, seed=0):
        rng = np.random.default_rng(seed)
        dt = config.np_dtype
        D, L = config.hidden, config.length
        params: dict[str, Tensor] = {}

        def linear(name, fan_in, fan_out):
            params[f"{name}.w"] = Tensor(_linear_init(rng, fan_in, (fan_in, fan_out), dt), requires_grad=True)
            params[f"{name}.b"] = Tensor(_linear_init(rng, fan_in, (fan_out,), dt), requires_grad=True)

        def layer_norm_pair(name):
            params[f"{name}.g"] = Tensor(np.ones(D, dtype=dt), requires_grad=True)
            params[f"{name}.b"] = Tensor(np.zeros(D, dtype=dt), requires_grad=True)

        for k in VIEW_KEYS:
            linear(f"enc_{k}.in_proj", config.in_channels, D)
            params[f"enc_{k}.pos"] = Tensor(sinusoidal_positions(L, D, dt), requires_grad=False)
            for i in range(config.num_layers):
                base = f"enc_{k}.layer{i}"
                layer_norm_pair(f"{base}.ln1")
                for proj in ("wq", "wk", "wv", "wo"):
                    linear(f"{base}.attn.{proj}", D, D)
                layer_norm_pair(f"{base}.ln2")
                linear(f"{base}.ffn.l1", D, config.ffn_mult * D)
                linear(f"{base}.ffn.l2", config.ffn_mult * D, D)
        for proj in ("wq", "wk", "wv", "wo"):
            linear(f"fusion.attn.{proj}", D, D)
        layer_norm_pair("fusion.ln")
        for k in VIEW_KEYS:
            linear(f"head_{k}.l1", D, D)
            linear(f"head_{k}.l2", D, D)
        linear("classifier", 3 * D, config.num_classes)
        return cls(config, params)

    # -- bookkeeping ----------------------------------------------------------

    def parameter_count(self):
        """Trainable scalar count (the architecture drift guard)."""
        return sum(t.size for t in self.params.values() if t.requires_grad)

    def trainable(self, freeze_encoders=False):
        """Name -> Tensor of parameters the optimizer may update."""
        out = {}
        for name, t in self.params.items():
            if not t.requires_grad:
                continue
            if freeze_encoders and not name.startswith("classifier"):
                continue
            out[name] = t
        return out

    def copy(self):
        return Model(
            self.config,
            {
                n: Tensor(t.data.copy(), requires_grad=t.requires_grad)
                for n, t in self.params.items()
            },
        )

    def reinit_classifier(self, seed):
        rng = np.random.default_rng(seed)
        dt = self.config.np_dtype
        D = self.config.hidden
        self.params["classifier.w"] = Tensor(
            _linear_init(rng, 3 * D, (3 * D, self.config.num_classes), dt), requires_grad=True
        )
        self.params["classifier.b"] = Tensor(
            _linear_init(rng, 3 * D, (self.config.num_classes,), dt), requires_grad=True
        )

    # -- forward pieces ---------------------------------------------------------

    def _mha(self, h, base, axis_len, heads):
        """Multi-head self-attention over the second-to-last axis of ``h``."""
        p = self.params
        D = self.config.hidden
        Dh = D // heads
        lead = h.shape[:-2]
        nd = len(lead)
        wqkv = nx.concat([p[f"{base}.wq.w"], p[f"{base}.wk.w"], p[f"{base}.wv.w"]], axis=1)
        bqkv = nx.concat([p[f"{base}.wq.b"], p[f"{base}.wk.b"], p[f"{base}.wv.b"]], axis=0)
        qkv = nx.linear(h, wqkv, bqkv)
        head_perm = tuple(range(nd)) + (nd + 1, nd, nd + 2)

        def heads_of(sl):
            x = nx.reshape(sl, lead + (axis_len, heads, Dh))
            return nx.transpose(x, head_perm)  # [..., heads, axis_len, Dh]

        q = heads_of(nx.slice_lastaxis(qkv, 0, D))
        k = heads_of(nx.slice_lastaxis(qkv, D, 2 * D))
        v = heads_of(nx.slice_lastaxis(qkv, 2 * D, 3 * D))
        scale = Tensor(np.asarray(1.0 / np.sqrt(Dh), dtype=h.dtype))
        scores = nx.matmul(q * scale, nx.transpose(k, tuple(range(nd)) + (nd, nd + 2, nd + 1)))
        attn = nx.softmax(scores, axis=-1)
        out = nx.matmul(attn, v)  # [..., heads, axis_len, Dh]
        out = nx.reshape(nx.transpose(out, head_perm), lead + (axis_len, D))
        return nx.linear(out, p[f"{base}.wo.w"], p[f"{base}.wo.b"])

    def _plain_norm(self, h):
        dt = self.config.np_dtype
        D = self.config.hidden
        one = Tensor(np.ones(D, dtype=dt))
        zero = Tensor(np.zeros(D, dtype=dt))
        return nx.layer_norm(h, one, zero, eps=self.config.ln_eps)

    def encode(self, key, x):
        """One view encoder: project, add positions, pre-norm transformer
        layers, final (affine-free) normalization. x: Tensor [N, L, d]."""
        cfg = self.config
        p = self.params
        if x.shape[-1] != cfg.in_channels or x.shape[-2] != cfg.length:
            raise nx.ShapeMismatch(
                f"encoder input {x.shape} incompatible with L={cfg.length}, d={cfg.in_channels}"
            )
        h = nx.linear(x, p[f"enc_{key}.in_proj.w"], p[f"enc_{key}.in_proj.b"])
        h = h + p[f"enc_{key}.pos"]
        for i in range(cfg.num_layers):
            base = f"enc_{key}.layer{i}"
            hn = nx.layer_norm(h, p[f"{base}.ln1.g"], p[f"{base}.ln1.b"], eps=cfg.ln_eps)
            h = h + self._mha(hn, f"{base}.attn", cfg.length, cfg.num_heads)
            hn = nx.layer_norm(h, p[f"{base}.ln2.g"], p[f"{base}.ln2.b"], eps=cfg.ln_eps)
            ff = nx.relu(nx.linear(hn, p[f"{base}.ffn.l1.w"], p[f"{base}.ffn.l1.b"]))
            h = h + nx.linear(ff, p[f"{base}.ffn.l2.w"], p[f"{base}.ffn.l2.b"])
        return self._plain_norm(h)

    def fuse(self, h_t, h_d, h_f):
        """Stack the views, attend across the 3-slot view axis independently
        per time position, add residual, layer-norm, split back."""
        p = self.params
        H = nx.stack([h_t, h_d, h_f], axis=2)  # [N, L, 3, D]
        attn = self._mha(H, "fusion.attn", 3, self.config.num_heads)
        out = nx.layer_norm(H + attn, p["fusion.ln.g"], p["fusion.ln.b"], eps=self.config.ln_eps)
        return tuple(nx.split(out, axis=2))

    def project(self, key, h):
        """Per-view head: position-wise 2-layer ReLU net, then mean over time."""
        p = self.params
        z = nx.relu(nx.linear(h, p[f"head_{key}.l1.w"], p[f"head_{key}.l1.b"]))
        z = nx.linear(z, p[f"head_{key}.l2.w"], p[f"head_{key}.l2.b"])
        return nx.tensor_mean(z, axis=-2)

    def classify(self, z_t, z_d, z_f):
        z = nx.concat([z_t, z_d, z_f], axis=-1)
        return nx.linear(z, self.params["classifier.w"], self.params["classifier.b"])

    def forward(self, view_batch):
        """Full pass over a batch of view triples (numpy arrays [N, L, d]).

        Masked views never enter the computation: their fusion slots and
        embeddings are zeros, so the output is independent of their inputs.
        Returns (z: dict view -> Tensor [N, D], logits: Tensor [N, C]).
        """
        cfg = self.config
        dt = cfg.np_dtype
        arrays = {
            "t": view_batch.temporal,
            "d": view_batch.derivative,
            "f": view_batch.frequency,
        }
        n = arrays["t"].shape[0]
        if n == 0:
            raise nx.NumericsError("empty batch")
        zeros_h = None
        h = {}
        for k in VIEW_KEYS:
            if k in cfg.views:
                h[k] = self.encode(k, Tensor(arrays[k].astype(dt, copy=False)))
            else:
                if zeros_h is None:
                    zeros_h = Tensor(np.zeros((n, cfg.length, cfg.hidden), dtype=dt))
                h[k] = zeros_h
        if cfg.fusion:
            h["t"], h["d"], h["f"] = self.fuse(h["t"], h["d"], h["f"])
        z = {}
        zeros_z = Tensor(np.zeros((n, cfg.hidden), dtype=dt))
        for k in VIEW_KEYS:
            z[k] = self.project(k, h[k]) if k in cfg.views else zeros_z
        logits = self.classify(z["t"], z["d"], z["f"])
        return z, logits

    def forward_pair(self, view_batch, view_batch_aug):
        """Run original and augmented batches through one stacked forward
        (row-wise ops make this identical to two passes, at half the graph
        overhead). Returns (z, z_aug, logits-of-originals)."""
        n = view_batch.temporal.shape[0]
        stacked = type(view_batch)(
            temporal=np.concatenate([view_batch.temporal, view_batch_aug.temporal]),
            derivative=np.concatenate([view_batch.derivative, view_batch_aug.derivative]),
            frequency=np.concatenate([view_batch.frequency, view_batch_aug.frequency]),
        )
        z_all, logits_all = self.forward(stacked)
        z = {k: nx.take_rows(v, 0, n) for k, v in z_all.items()}
        z_aug = {k: nx.take_rows(v, n, 2 * n) for k, v in z_all.items()}
        return z, z_aug, nx.take_rows(logits_all, 0, n)


# -- checkpoints ------------------------------------------------------------------


def save_checkpoint(model, path):
    """Write header JSON + raw little-endian payload; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dt = model.config.np_dtype
    wire = np.dtype("<f4") if dt == np.float32 else np.dtype("<f8")
    entries = []
    offset = 0
    blobs = []
    for name, t in model.params.items():
        raw = np.ascontiguousarray(t.data, dtype=wire).tobytes()
        entries.append(
            {"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": wire.str,
        "config": model.config.to_json_dict(),
        "tensors": entries,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for raw in blobs:
            fh.write(raw)
    return path


def _read_checkpoint(path):
    path = Path(path)
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from e
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unknown format version {header.get('format_version')}")
    expected = sum(e["nbytes"] for e in header["tensors"])
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected} (corrupt/truncated)"
        )
    return header, payload


def load_checkpoint(path):
    """Exact reload: every tensor identical to what was saved."""
    header, payload = _read_checkpoint(path)
    config = ModelConfig.from_json_dict(header["config"])
    wire = np.dtype(header["dtype"])
    fresh = Model.build(config, seed=0)
    params = {}
    for entry in header["tensors"]:
        name = entry["name"]
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=wire).reshape(entry["shape"]).astype(config.np_dtype)
        requires = fresh.params[name].requires_grad if name in fresh.params else True
        params[name] = Tensor(arr.copy(), requires_grad=requires)
    missing = set(fresh.params) - set(params)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    return Model(config, params)


def load_for_transfer(path, in_channels=None, num_classes=None, views=None, fusion=None, seed=0):
    """Load a checkpoint onto a possibly different data shape.

    Tensors whose shapes match are copied; the rest (input projections when the
    channel count changes, the classifier when the class count changes) keep
    their fresh seeded initialization. Returns (model, reinitialized_names).
    """
    header, payload = _read_checkpoint(path)
    src_config = ModelConfig.from_json_dict(header["config"])
    updates = {}
    if in_channels is not None:
        updates["in_channels"] = in_channels
    if num_classes is not None:
        updates["num_classes"] = num_classes
    if views is not None:
        updates["views"] = tuple(views)
    if fusion is not None:
        updates["fusion"] = fusion
    config = ModelConfig.from_json_dict({**src_config.to_json_dict(), **updates})
    model = Model.build(config, seed=seed)
    wire = np.dtype(header["dtype"])
    reinitialized = []
    by_name = {e["name"]: e for e in header["tensors"]}
    for name, t in model.params.items():
        entry = by_name.get(name)
        if entry is None:
            reinitialized.append(name)
            continue
        if tuple(entry["shape"]) != t.shape:
            reinitialized.append(name)
            continue
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=wire).reshape(entry["shape"]).astype(config.np_dtype)
        model.params[name] = Tensor(arr.copy(), requires_grad=t.requires_grad)
    return model, reinitialized
