"""A small NHWC convolutional network in numpy with Adam and early stopping.

The default architecture reproduces the spectrogram classifier: four valid
3x3 convolutions (32, 128, 128, 128 filters) each followed by 2x2 max
pooling, then flatten, dropout 0.25, a 1024-unit ReLU layer and a single
sigmoid output.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)

INPUT_SHAPE = (224, 224, 3)


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


# -- layers -----------------------------------------------------------------

class Layer:
    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self.input_shape: tuple | None = None
        self.output_shape: tuple | None = None

    def build(self, input_shape, rng, dtype) -> dict:
        self.input_shape = tuple(input_shape)
        self.output_shape = self.compute_output_shape(self.input_shape)
        return {}

    def compute_output_shape(self, shape):
        return shape

    def check(self, x):
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"layer {self.name!r} expects input {self.input_shape}, got {x.shape[1:]}")

    def config(self) -> dict:
        return {}


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0)
    if activation in ("sigmoid", None, "linear"):
        # the sigmoid is folded into the loss; layers emit logits
        return z
    raise ValueError(f"unknown activation {activation!r}")


def _activation_grad(dout, out, activation):
    if activation == "relu":
        return dout * (out > 0)
    return dout


def _init_limit(fan_in, fan_out, activation):
    if activation == "relu":
        return np.sqrt(6.0 / fan_in)  # He uniform
    return np.sqrt(6.0 / (fan_in + fan_out))  # Glorot uniform


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, name, filters, kernel_size=3, activation="relu"):
        super().__init__(name)
        self.filters = filters
        self.kernel_size = kernel_size
        self.activation = activation

    def compute_output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"layer {self.name!r} needs (H, W, C) input, got {shape}")
        h, w, _ = shape
        k = self.kernel_size
        if h < k or w < k:
            raise ShapeError(f"layer {self.name!r}: input {shape} smaller than kernel {k}")
        return (h - k + 1, w - k + 1, self.filters)

    def build(self, input_shape, rng, dtype):
        super().build(input_shape, rng, dtype)
        k, cin = self.kernel_size, input_shape[2]
        fan_in, fan_out = k * k * cin, k * k * self.filters
        lim = _init_limit(fan_in, fan_out, self.activation)
        return {
            "W": rng.uniform(-lim, lim, size=(k, k, cin, self.filters)).astype(dtype),
            "b": np.zeros(self.filters, dtype=dtype),
        }

    def forward(self, x, params, training, rng):
        self.check(x)
        k = self.kernel_size
        B = x.shape[0]
        ho, wo, cout = self.output_shape
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))  # (B, ho, wo, C, k, k)
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(B * ho * wo, -1)
        z = cols @ params["W"].reshape(-1, cout) + params["b"]
        out = _activate(z, self.activation).reshape(B, ho, wo, cout)
        return out, (cols, out) if training else None

    def backward(self, dout, cache, params, need_dx=True):
        cols, out = cache
        k = self.kernel_size
        B = dout.shape[0]
        ho, wo, cout = self.output_shape
        dz = _activation_grad(dout, out, self.activation).reshape(-1, cout)
        grads = {"W": (cols.T @ dz).reshape(params["W"].shape), "b": dz.sum(axis=0)}
        if not need_dx:
            return None, grads
        cin = self.input_shape[2]
        dcols = (dz @ params["W"].reshape(-1, cout).T).reshape(B, ho, wo, k, k, cin)
        dx = np.zeros((B,) + self.input_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, i : i + ho, j : j + wo, :] += dcols[:, :, :, i, j, :]
        return dx, grads

    def config(self):
        return {"filters": self.filters, "kernel_size": self.kernel_size, "activation": self.activation}


class MaxPool2D(Layer):
    """2x2 pooling with stride 2; odd trailing rows/columns are dropped."""

    kind = "maxpool2d"

    def compute_output_shape(self, shape):
        h, w, c = shape
        return (h // 2, w // 2, c)

    def forward(self, x, params, training, rng):
        self.check(x)
        B = x.shape[0]
        ho, wo, c = self.output_shape
        win = x[:, : 2 * ho, : 2 * wo, :].reshape(B, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(B, ho, wo, c, 4)
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return out, idx if training else None

    def backward(self, dout, idx, params, need_dx=True):
        B = dout.shape[0]
        ho, wo, c = self.output_shape
        win = np.zeros((B, ho, wo, c, 4), dtype=dout.dtype)
        np.put_along_axis(win, idx[..., None], dout[..., None], axis=-1)
        dx = np.zeros((B,) + self.input_shape, dtype=dout.dtype)
        dx[:, : 2 * ho, : 2 * wo, :] = win.reshape(B, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(B, 2 * ho, 2 * wo, c)
        return dx, {}


class Flatten(Layer):
    kind = "flatten"

    def compute_output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, params, training, rng):
        self.check(x)
        return x.reshape(x.shape[0], -1), None

    def backward(self, dout, cache, params, need_dx=True):
        return dout.reshape((dout.shape[0],) + self.input_shape), {}


class Dropout(Layer):
    """Inverted dropout: kept activations are scaled by ``1 / (1 - rate)`` during training."""

    kind = "dropout"

    def __init__(self, name, rate=0.25):
        super().__init__(name)
        self.rate = rate

    def forward(self, x, params, training, rng):
        self.check(x)
        if not training or self.rate == 0:
            return x, None
        keep = 1.0 - self.rate
        mask = ((rng.random(x.shape) < keep) / keep).astype(x.dtype)
        return x * mask, mask

    def backward(self, dout, mask, params, need_dx=True):
        return (dout if mask is None else dout * mask), {}

    def config(self):
        return {"rate": self.rate}


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, units, activation="relu"):
        super().__init__(name)
        self.units = units
        self.activation = activation

    def compute_output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"layer {self.name!r} needs flat input, got {shape}")
        return (self.units,)

    def build(self, input_shape, rng, dtype):
        super().build(input_shape, rng, dtype)
        fan_in = input_shape[0]
        lim = _init_limit(fan_in, self.units, self.activation)
        return {
            "W": rng.uniform(-lim, lim, size=(fan_in, self.units)).astype(dtype),
            "b": np.zeros(self.units, dtype=dtype),
        }

    def forward(self, x, params, training, rng):
        self.check(x)
        out = _activate(x @ params["W"] + params["b"], self.activation)
        return out, (x, out) if training else None

    def backward(self, dout, cache, params, need_dx=True):
        x, out = cache
        dz = _activation_grad(dout, out, self.activation)
        grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        return (dz @ params["W"].T if need_dx else None), grads

    def config(self):
        return {"units": self.units, "activation": self.activation}


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, Flatten, Dropout, Dense)}


# -- network ----------------------------------------------------------------

class CnnNetwork:
    """Sequential network ending in a single sigmoid unit."""

    def __init__(self, layers: list[Layer], input_shape=INPUT_SHAPE, seed: int = 0, dtype=np.float32):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params: list[dict] = []
        shape = self.input_shape
        for layer in layers:
            self.params.append(layer.build(shape, rng, self.dtype))
            shape = layer.output_shape
        if shape != (1,):
            raise ShapeError(f"network must end in one unit, ends in {shape}")

    def shape_chain(self) -> list[tuple[str, tuple]]:
        return [("input", self.input_shape)] + [(l.name, l.output_shape) for l in self.layers]

    def n_params(self) -> int:
        return sum(int(v.size) for p in self.params for v in p.values())

    def copy_params(self):
        return [{k: v.copy() for k, v in p.items()} for p in self.params]

    def set_params(self, params):
        self.params = [{k: v.copy() for k, v in p.items()} for p in params]

    def manifest(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [
                {"name": l.name, "type": l.kind, "config": l.config(),
                 "params": {k: list(v.shape) for k, v in p.items()}}
                for l, p in zip(self.layers, self.params)
            ],
        }


def build_cnn(seed: int = 0, input_shape=INPUT_SHAPE, dtype=np.float32) -> CnnNetwork:
    layers = [
        Conv2D("conv2d_1", 32), MaxPool2D("maxpool_1"),
        Conv2D("conv2d_2", 128), MaxPool2D("maxpool_2"),
        Conv2D("conv2d_3", 128), MaxPool2D("maxpool_3"),
        Conv2D("conv2d_4", 128), MaxPool2D("maxpool_4"),
        Flatten("flatten"), Dropout("dropout", 0.25),
        Dense("dense_1", 1024, "relu"), Dense("dense_out", 1, "sigmoid"),
    ]
    return CnnNetwork(layers, input_shape, seed, dtype)


@dataclass
class ForwardCache:
    layer_caches: list
    logits: np.ndarray


def forward(net: CnnNetwork, x, training: bool = False, rng=None):
    """Return ``(probabilities, cache)``; the cache is only populated when training."""
    x = np.asarray(x, dtype=net.dtype)
    if x.ndim != len(net.input_shape) + 1 or x.shape[1:] != net.input_shape:
        raise ShapeError(f"layer 'input' expects (B, {', '.join(map(str, net.input_shape))}), got {x.shape}")
    if training and rng is None:
        rng = np.random.default_rng()
    caches = []
    h = x
    for layer, p in zip(net.layers, net.params):
        h, c = layer.forward(h, p, training, rng)
        caches.append(c)
    logits = h[:, 0]
    return expit(logits), ForwardCache(caches, logits)


def bce_loss(logits, y) -> float:
    """Mean binary cross-entropy computed from logits."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(logits, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def output_grad(p, y):
    """d(mean BCE)/d(logit) for a sigmoid output: ``(p - y) / B``."""
    p = np.asarray(p)
    return (p - np.asarray(y, dtype=p.dtype)) / len(p)


def backward(net: CnnNetwork, cache: ForwardCache, y) -> list[dict]:
    y = np.asarray(y)
    if y.shape != cache.logits.shape:
        raise ShapeError(f"labels {y.shape} do not match batch {cache.logits.shape}")
    if any(c is None for c, l in zip(cache.layer_caches, net.layers) if l.kind in ("conv2d", "dense", "maxpool2d")):
        raise ValueError("backward needs a cache from a training-mode forward pass")
    dout = output_grad(expit(cache.logits), y).astype(net.dtype)[:, None]
    grads: list[dict] = [None] * len(net.layers)
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        dout, g = layer.backward(dout, cache.layer_caches[idx], net.params[idx], need_dx=idx > 0)
        grads[idx] = g
    return grads


def predict_proba(net: CnnNetwork, X, batch_size: int = 16) -> np.ndarray:
    X = np.asarray(X)
    out = [forward(net, X[i : i + batch_size])[0] for i in range(0, len(X), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def predict_logits(net: CnnNetwork, X, batch_size: int = 16) -> np.ndarray:
    X = np.asarray(X)
    out = [forward(net, X[i : i + batch_size])[1].logits for i in range(0, len(X), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


# -- optimisation -----------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params: list[dict], grads: list[dict]) -> list[dict]:
    """In-place Adam update with bias correction; returns ``params``."""
    if not state.m:
        state.m = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        state.v = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
    for g in grads:
        for name, arr in g.items():
            if not np.all(np.isfinite(arr)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    c1 = 1 - state.beta1**state.t
    c2 = 1 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        for k in p:
            if p[k].shape != g[k].shape:
                raise ShapeError(f"gradient shape {g[k].shape} does not match parameter {p[k].shape}")
            m[k] = state.beta1 * m[k] + (1 - state.beta1) * g[k]
            v[k] = state.beta2 * v[k] + (1 - state.beta2) * g[k] ** 2
            p[k] -= (state.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + state.eps)).astype(p[k].dtype)
    return params


class EarlyStopper:
    """Tracks the best validation loss and signals a stop after ``patience`` stale epochs."""

    def __init__(self, patience: int = 15):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = -1
        self.best_params = None
        self.since_improvement = 0

    def update(self, epoch: int, val_loss: float, params) -> bool:
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_params = [{k: v.copy() for k, v in p.items()} for p in params]
            self.since_improvement = 0
        else:
            self.since_improvement += 1
        return self.since_improvement >= self.patience


@dataclass
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 16
    lr: float = 0.001
    patience: int = 15
    seed: int = 0


def evaluate_loss(net, X, y, batch_size=16) -> tuple[float, float]:
    logits = predict_logits(net, X, batch_size)
    return bce_loss(logits, y), float(np.mean((logits > 0).astype(int) == np.asarray(y)))


def train(net: CnnNetwork, X_train, y_train, X_val, y_val, config: TrainConfig = TrainConfig()):
    """Mini-batch Adam on mean BCE with early stopping on validation loss.

    Returns ``(net, history)``; the network holds the best-epoch weights.
    History rows carry epoch, train/val loss and accuracy.
    """
    X_train = np.asarray(X_train)
    y_train = np.asarray(y_train).astype(int)
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    state = AdamState(lr=config.lr)
    stopper = EarlyStopper(config.patience)
    history = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(X_train))
        loss_sum = correct = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            _, cache = forward(net, X_train[idx], training=True, rng=rng)
            if not np.all(np.isfinite(cache.logits)):
                raise TrainingError(f"non-finite output at epoch {epoch}")
            # training metrics are running means over the epoch's batches (dropout active)
            loss_sum += bce_loss(cache.logits, y_train[idx]) * len(idx)
            correct += float(np.sum((cache.logits > 0).astype(int) == y_train[idx]))
            adam_step(state, net.params, backward(net, cache, y_train[idx]))
        tr_loss, tr_acc = loss_sum / len(order), correct / len(order)
        va_loss, va_acc = evaluate_loss(net, X_val, y_val, config.batch_size)
        if not np.isfinite(va_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": tr_loss, "train_accuracy": tr_acc,
                        "val_loss": va_loss, "val_accuracy": va_acc})
        log.info("epoch %d train_loss=%.4f val_loss=%.4f val_acc=%.3f", epoch, tr_loss, va_loss, va_acc)
        if stopper.update(epoch, va_loss, net.params):
            break
    net.set_params(stopper.best_params)
    return net, history


def write_history(path, history) -> None:
    cols = ["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])


# -- checkpoints ------------------------------------------------------------

def save_weights(net: CnnNetwork, path) -> None:
    """JSON layer manifest on the first line, then every parameter as little-endian float32."""
    with open(path, "wb") as fh:
        fh.write(json.dumps(net.manifest(), sort_keys=True).encode("utf-8") + b"\n")
        for p in net.params:
            for k in sorted(p):
                fh.write(np.ascontiguousarray(p[k], dtype="<f4").tobytes())


def load_weights(path) -> CnnNetwork:
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    layers = [LAYER_TYPES[spec["type"]](spec["name"], **spec["config"]) for spec in manifest["layers"]]
    net = CnnNetwork(layers, tuple(manifest["input_shape"]), seed=0, dtype=np.float32)
    offset = 0
    for spec, p in zip(manifest["layers"], net.params):
        for k in sorted(p):
            n = int(np.prod(spec["params"][k]))
            p[k] = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(spec["params"][k]).astype(np.float32)
            offset += 4 * n
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after parameters")
    return net


def clone(net: CnnNetwork) -> CnnNetwork:
    return copy.deepcopy(net)
