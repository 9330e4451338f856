"""Fully convolutional time series classifier (the model being explained).

Three conv blocks (conv -> optional batch norm -> ReLU), global average pooling
over time, a dense layer and softmax. Forward and reverse passes are written
out in numpy so that input gradients are exact.

Parameters are stored as float32 (the checkpoint precision); every forward pass
promotes them to float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import LabeledDataset, TimeSeries
from .optim import Adam

FULL_FILTERS = (128, 256, 128)
DESK_FILTERS = (32, 64, 32)
KERNELS = (8, 5, 3)
BN_EPS = 1e-3
BN_MOMENTUM = 0.1

MAGIC = b"FCN1"
FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training diverged: loss became non-finite at epoch {epoch}")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class FcnArch:
    filters: tuple
    kernels: tuple
    num_classes: int
    length: int
    batch_norm: bool

    def __post_init__(self):
        if len(self.filters) != len(self.kernels):
            raise ValueError("filters and kernels must have the same number of blocks")
        if any(k < 1 or k > self.length for k in self.kernels):
            raise ValueError(f"kernel widths must lie in [1, {self.length}]")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")

    def param_shapes(self) -> list[tuple[str, tuple]]:
        """Tensor names and shapes in declaration (checkpoint) order."""
        shapes = []
        c_in = 1
        for i, (f, k) in enumerate(zip(self.filters, self.kernels)):
            shapes.append((f"conv{i}.weight", (f, c_in, k)))
            shapes.append((f"conv{i}.bias", (f,)))
            if self.batch_norm:
                for p in ("gamma", "beta", "running_mean", "running_var"):
                    shapes.append((f"bn{i}.{p}", (f,)))
            c_in = f
        shapes.append(("dense.weight", (self.num_classes, c_in)))
        shapes.append(("dense.bias", (self.num_classes,)))
        return shapes


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 0  # 0 or >= N means full batch
    seed: int = 0
    desk_scale: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 0:
            raise ValueError("batch size must be >= 0")


@dataclass
class FcnModel:
    arch: FcnArch
    params: dict
    history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        expected = dict(self.arch.param_shapes())
        if set(expected) != set(self.params):
            raise ValueError("parameter names do not match the architecture")
        for name, shape in expected.items():
            p = np.asarray(self.params[name], dtype=np.float32)
            if p.shape != shape:
                raise ValueError(f"{name}: shape {p.shape}, expected {shape}")
            if not np.all(np.isfinite(p)):
                raise ValueError(f"{name} has non-finite entries")
            p = p.copy()
            p.setflags(write=False)
            self.params[name] = p
        self._p64 = {k: v.astype(np.float64) for k, v in self.params.items()}

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    @property
    def length(self) -> int:
        return self.arch.length


def _glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(arch: FcnArch, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.param_shapes():
        if name.endswith(".weight") and name.startswith("conv"):
            f, c_in, k = shape
            params[name] = _glorot(rng, shape, c_in * k, f * k)
        elif name == "dense.weight":
            c, f = shape
            params[name] = _glorot(rng, shape, f, c)
        elif name.endswith(("gamma", "running_var")):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


# ---------------------------------------------------------------------------
# forward / backward on float64 parameter dicts, activations laid out (N, T, C)
# ---------------------------------------------------------------------------

def _same_pad(k: int) -> tuple[int, int]:
    left = (k - 1) // 2
    return left, k - 1 - left


def _im2col(h: np.ndarray, k: int) -> np.ndarray:
    n, t, c = h.shape
    left, right = _same_pad(k)
    hp = np.pad(h, ((0, 0), (left, right), (0, 0)))
    # (N, T, C, K) -> (N, T, C*K); weight layout (F, C, K) flattens identically
    return sliding_window_view(hp, k, axis=1).reshape(n, t, c * k)


def _col2im(dcols: np.ndarray, k: int, c: int) -> np.ndarray:
    n, t, _ = dcols.shape
    left, _ = _same_pad(k)
    d = dcols.reshape(n, t, c, k)
    dhp = np.zeros((n, t + k - 1, c))
    for j in range(k):
        dhp[:, j:j + t, :] += d[:, :, :, j]
    return dhp[:, left:left + t, :]


def _forward(p: dict, arch: FcnArch, X: np.ndarray, train: bool = False):
    """Return (logits, cache). With ``train`` batch norm uses batch statistics."""
    h = X[:, :, None]
    blocks = []
    for i, k in enumerate(arch.kernels):
        W = p[f"conv{i}.weight"]
        f = W.shape[0]
        cols = _im2col(h, k)
        Wm = W.reshape(f, -1).T
        z = cols @ Wm + p[f"conv{i}.bias"]
        bn = None
        if arch.batch_norm:
            if train:
                mean = z.mean(axis=(0, 1))
                var = z.var(axis=(0, 1))
            else:
                mean = p[f"bn{i}.running_mean"]
                var = p[f"bn{i}.running_var"]
            std = np.sqrt(var + BN_EPS)
            xhat = (z - mean) / std
            zb = p[f"bn{i}.gamma"] * xhat + p[f"bn{i}.beta"]
            bn = (xhat, std, mean, var)
        else:
            zb = z
        a = np.maximum(zb, 0.0)
        blocks.append((h.shape[2], cols, Wm, zb, bn))
        h = a
    pooled = h.mean(axis=1)
    logits = pooled @ p["dense.weight"].T + p["dense.bias"]
    return logits, (blocks, pooled, h.shape[1])


def _backward(p: dict, arch: FcnArch, cache, dlogits: np.ndarray, train: bool = False,
              want_params: bool = True):
    """Reverse pass. Returns (param_grads or None, d_input of shape (N, T))."""
    blocks, pooled, t = cache
    grads = {} if want_params else None
    if want_params:
        grads["dense.weight"] = dlogits.T @ pooled
        grads["dense.bias"] = dlogits.sum(axis=0)
    dpooled = dlogits @ p["dense.weight"]
    da = np.broadcast_to(dpooled[:, None, :] / t, (dpooled.shape[0], t, dpooled.shape[1]))
    for i in reversed(range(len(arch.kernels))):
        c_in, cols, Wm, zb, bn = blocks[i]
        dzb = da * (zb > 0)
        if bn is not None:
            xhat, std, _, _ = bn
            gamma = p[f"bn{i}.gamma"]
            if want_params:
                grads[f"bn{i}.gamma"] = (dzb * xhat).sum(axis=(0, 1))
                grads[f"bn{i}.beta"] = dzb.sum(axis=(0, 1))
                grads[f"bn{i}.running_mean"] = np.zeros_like(gamma)
                grads[f"bn{i}.running_var"] = np.zeros_like(gamma)
            dxhat = dzb * gamma
            if train:
                m = dxhat.shape[0] * dxhat.shape[1]
                dz = (m * dxhat - dxhat.sum(axis=(0, 1))
                      - xhat * (dxhat * xhat).sum(axis=(0, 1))) / (m * std)
            else:
                dz = dxhat / std
        else:
            dz = dzb
        f = Wm.shape[1]
        if want_params:
            dWm = cols.reshape(-1, cols.shape[2]).T @ dz.reshape(-1, f)
            grads[f"conv{i}.weight"] = dWm.T.reshape(f, c_in, arch.kernels[i])
            grads[f"conv{i}.bias"] = dz.sum(axis=(0, 1))
        dcols = dz @ Wm.T
        da = _col2im(dcols, arch.kernels[i], c_in)
    return grads, da[:, :, 0]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _as_batch(model: FcnModel, x) -> tuple[np.ndarray, bool]:
    if isinstance(x, TimeSeries):
        x = x.values
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.length:
        raise ValueError(f"series length {X.shape[1]} does not match model input length {model.length}")
    return X, single


def predict_proba(model: FcnModel, x) -> np.ndarray:
    """Class probabilities for one series (C,) or a batch (N, C)."""
    X, single = _as_batch(model, x)
    logits, _ = _forward(model._p64, model.arch, X)
    probs = _softmax(logits)
    return probs[0] if single else probs


def predict(model: FcnModel, x) -> tuple[np.ndarray, int]:
    probs = predict_proba(model, x)
    if probs.ndim != 1:
        raise ValueError("predict takes a single series; use predict_proba for batches")
    return probs, int(np.argmax(probs))


def prob_and_input_gradient(model: FcnModel, x, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and dP(class c | x)/dx in one forward/backward pass."""
    if not 0 <= c < model.num_classes:
        raise ValueError(f"class {c} out of range 0..{model.num_classes - 1}")
    X, single = _as_batch(model, x)
    logits, cache = _forward(model._p64, model.arch, X)
    probs = _softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[:, c] = 1.0
    dlogits = probs[:, c:c + 1] * (onehot - probs)
    _, dx = _backward(model._p64, model.arch, cache, dlogits, want_params=False)
    if single:
        return probs[0], dx[0]
    return probs, dx


def input_gradient(model: FcnModel, x, c: int) -> np.ndarray:
    """Exact gradient of P(y_c | x) with respect to every time step of ``x``."""
    return prob_and_input_gradient(model, x, c)[1]


def _cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    return float(-np.mean(np.log(np.clip(probs[np.arange(y.size), y], 1e-300, None))))


def accuracy(model: FcnModel, ds: LabeledDataset) -> float:
    return float(np.mean(predict_proba(model, ds.X).argmax(axis=1) == ds.y))


def train(ds: LabeledDataset, cfg: TrainConfig) -> FcnModel:
    """Fit the FCN with Adam on categorical cross-entropy.

    Per-epoch (epoch, loss, accuracy) rows are left in ``model.history``.
    """
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    arch = FcnArch(DESK_FILTERS if cfg.desk_scale else FULL_FILTERS, KERNELS,
                   ds.num_classes, ds.length, batch_norm=not cfg.desk_scale)
    rng = np.random.default_rng(cfg.seed)
    p = init_params(arch, int(rng.integers(2**31)))
    trainable = [n for n, _ in arch.param_shapes() if "running" not in n]
    adam = {n: Adam(cfg.learning_rate) for n in trainable}
    n_total = len(ds)
    bs = n_total if cfg.batch_size == 0 or cfg.batch_size >= n_total else cfg.batch_size
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = np.arange(n_total) if bs == n_total else rng.permutation(n_total)
        losses, correct = [], 0
        for start in range(0, n_total, bs):
            idx = order[start:start + bs]
            X, y = ds.X[idx], ds.y[idx]
            logits, cache = _forward(p, arch, X, train=arch.batch_norm)
            probs = _softmax(logits)
            loss = _cross_entropy(probs, y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            losses.append(loss * idx.size)
            correct += int(np.sum(probs.argmax(axis=1) == y))
            dlogits = probs.copy()
            dlogits[np.arange(y.size), y] -= 1.0
            dlogits /= y.size
            grads, _ = _backward(p, arch, cache, dlogits, train=arch.batch_norm)
            for n in trainable:
                p[n] = adam[n].step(p[n], grads[n])
            if arch.batch_norm:
                for i, (_, _, _, _, bn) in enumerate(cache[0]):
                    _, _, mean, var = bn
                    k = idx.size * ds.length
                    unbiased = var * k / max(k - 1, 1)
                    p[f"bn{i}.running_mean"] = (1 - BN_MOMENTUM) * p[f"bn{i}.running_mean"] + BN_MOMENTUM * mean
                    p[f"bn{i}.running_var"] = (1 - BN_MOMENTUM) * p[f"bn{i}.running_var"] + BN_MOMENTUM * unbiased
        epoch_loss = sum(losses) / n_total
        if not all(np.all(np.isfinite(p[n])) for n in p):
            raise TrainingDivergedError(epoch)
        history.append((epoch, epoch_loss, correct / n_total))
    model = FcnModel(arch, {n: p[n].astype(np.float32) for n in p})
    model.history = history
    return model


# ---------------------------------------------------------------------------
# checkpoint I/O
# ---------------------------------------------------------------------------

def _header(arch: FcnArch) -> bytes:
    lines = [
        "filters=" + ",".join(map(str, arch.filters)),
        "kernels=" + ",".join(map(str, arch.kernels)),
        f"num_classes={arch.num_classes}",
        f"length={arch.length}",
        f"batch_norm={int(arch.batch_norm)}",
    ]
    return ("\n".join(lines) + "\n\n").encode("ascii")


def save_model(model: FcnModel, path) -> None:
    chunks = [MAGIC, struct.pack("<H", FORMAT_VERSION), _header(model.arch)]
    for name, _ in model.arch.param_shapes():
        chunks.append(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path) -> FcnModel:
    blob = Path(path).read_bytes()
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic (not an FCN checkpoint)")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    end = blob.find(b"\n\n", 6)
    if end < 0:
        raise CheckpointError(f"{path}: truncated header at byte offset {len(blob)}")
    try:
        fields = dict(line.split("=", 1) for line in blob[6:end].decode("ascii").splitlines())
        arch = FcnArch(
            filters=tuple(int(v) for v in fields["filters"].split(",")),
            kernels=tuple(int(v) for v in fields["kernels"].split(",")),
            num_classes=int(fields["num_classes"]),
            length=int(fields["length"]),
            batch_norm=bool(int(fields["batch_norm"])),
        )
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from None
    offset = end + 2
    params = {}
    for name, shape in arch.param_shapes():
        nbytes = 4 * int(np.prod(shape))
        if offset + nbytes > len(blob):
            raise CheckpointError(
                f"{path}: truncated payload at byte offset {len(blob)} "
                f"while reading {name} (needs bytes {offset}..{offset + nbytes})")
        params[name] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} unexpected trailing bytes at offset {offset}")
    return FcnModel(arch, params)
