"""Minimal network substrate: MLPs, exact gradients, Adam, embeddings.

Parameters are stored f32; all forward/backward arithmetic runs in f64 so
losses and gradients accumulate at full precision (finite-difference
checks sit at ~1e-7 relative error this way). Networks are values:
forward and grad are pure functions, updates return new arrays.

Model files use the layout
``"RMBM" | version u16 | meta-JSON len u32 | meta JSON | f32 LE parameter
blob | crc32(blob) u32`` where the meta JSON records tensor shapes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagic, CrcMismatch, NonFiniteParameters, OddDim,
                     ShapeMismatch, VersionUnsupported)
from .rng import STREAM_INIT, make_rng

MODEL_MAGIC = b"RMBM"
MODEL_VERSION = 1

ACTIVATIONS = ("relu", "tanh")


@dataclass
class Mlp:
    """Fully connected net, chosen activation on hidden layers, linear output."""

    widths: tuple[int, ...]
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[i], self.widths[i + 1]) or b.shape != (self.widths[i + 1],):
                raise ShapeMismatch(f"layer {i} parameter shapes inconsistent with widths")

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: list[np.ndarray]) -> "Mlp":
        ws = [params[2 * i] for i in range(len(self.weights))]
        bs = [params[2 * i + 1] for i in range(len(self.weights))]
        return Mlp(self.widths, self.activation, ws, bs)


def init_mlp(widths: tuple[int, ...], activation: str = "tanh", seed: int = 0,
             stream_index: int = 0, zero: bool = False) -> Mlp:
    """Seeded init: weights uniform +-sqrt(6/(fan_in+fan_out)), biases zero."""
    rng = make_rng(seed, STREAM_INIT, stream_index)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        if zero:
            w = np.zeros((fan_in, fan_out), dtype=np.float32)
        else:
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)
        weights.append(w)
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return Mlp(tuple(widths), activation, weights, biases)


def _act(h: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(h, 0.0) if kind == "relu" else np.tanh(h)


def _act_grad(a: np.ndarray, h: np.ndarray, kind: str) -> np.ndarray:
    return (h > 0).astype(np.float64) if kind == "relu" else 1.0 - a * a


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Batched forward pass, [B, in] -> [B, out]."""
    return forward_cache(net, x)[0]


def forward_cache(net: Mlp, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeMismatch(f"expected input [B, {net.in_dim}], got {x.shape}")
    acts = [x]
    pre = []
    h = x
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.astype(np.float64) + b.astype(np.float64)
        pre.append(z)
        h = _act(z, net.activation) if i < n_layers - 1 else z
        acts.append(h)
    return h, (acts, pre)


def backward(net: Mlp, cache, d_out: np.ndarray):
    """Backprop an output cotangent; returns (d_input, param grads)."""
    acts, pre = cache
    n_layers = len(net.weights)
    grads: list[np.ndarray] = [None] * (2 * n_layers)
    d = np.asarray(d_out, dtype=np.float64)
    for i in reversed(range(n_layers)):
        if i < n_layers - 1:
            d = d * _act_grad(acts[i + 1], pre[i], net.activation)
        grads[2 * i] = acts[i].T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        d = d @ net.weights[i].astype(np.float64).T
    return d, grads


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over batch and dims, plus d(loss)/d(pred)."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff ** 2))
    return loss, 2.0 * diff / diff.size


def grad(net: Mlp, x: np.ndarray, y_target: np.ndarray):
    """Exact gradients of the batch MSE; returns (loss, param grads)."""
    pred, cache = forward_cache(net, x)
    loss, d_out = mse_loss(pred, np.asarray(y_target))
    _, grads = backward(net, cache, d_out)
    return loss, grads


@dataclass
class AdamState:
    """Adaptive-moment optimizer state over a flat list of tensors."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(params: list[np.ndarray], lr: float = 1e-3) -> "AdamState":
        return AdamState(m=[np.zeros(p.shape) for p in params],
                         v=[np.zeros(p.shape) for p in params], lr=lr)


def adam_step_params(params: list[np.ndarray], grads: list[np.ndarray],
                     state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected update; raises if any parameter goes non-finite."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params/grads/state length mismatch")
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        m = state.beta1 * state.m[i] + (1 - state.beta1) * g
        v = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        p_new = p.astype(np.float64) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.all(np.isfinite(p_new)):
            raise NonFiniteParameters(
                f"tensor {i} went non-finite at step {t} "
                f"(grad max {np.max(np.abs(g)):.3e})")
        new_params.append(p_new.astype(p.dtype))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_params, new_state


def adam_step(net: Mlp, grads: list[np.ndarray], state: AdamState) -> tuple[Mlp, AdamState]:
    new_params, new_state = adam_step_params(net.params(), grads, state)
    return net.with_params(new_params), new_state


def timestep_embed(t: int, dim: int) -> np.ndarray:
    """Interleaved sin/cos at geometric frequencies 10000^(-2k/dim)."""
    if dim % 2 != 0:
        raise OddDim(f"embedding dim must be even, got {dim}")
    k = np.arange(dim // 2)
    freqs = 10000.0 ** (-2.0 * k / dim)
    angles = float(t) * freqs
    out = np.empty(dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


# --- serialization ---

def save_params(path: str | Path, meta: dict, params: list[np.ndarray]) -> None:
    """Write a model file; `meta` must be JSON-serializable."""
    meta = dict(meta)
    meta["tensors"] = [list(p.shape) for p in params]
    blob = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in params)
    doc = json.dumps(meta).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<HI", MODEL_VERSION, len(doc)))
        f.write(doc)
        f.write(blob)
        f.write(struct.pack("<I", zlib.crc32(blob)))


def load_params(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MODEL_MAGIC:
        raise BadMagic(f"bad model magic {data[:4]!r}")
    version, doc_len = struct.unpack("<HI", data[4:10])
    if version != MODEL_VERSION:
        raise VersionUnsupported(f"model version {version} unsupported")
    meta = json.loads(data[10:10 + doc_len].decode("utf-8"))
    blob = data[10 + doc_len:-4]
    crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(blob) != crc:
        raise CrcMismatch("model parameter blob", 0)
    params = []
    offset = 0
    for shape in meta["tensors"]:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        params.append(arr.reshape(shape).copy())
        offset += 4 * n
    return meta, params
