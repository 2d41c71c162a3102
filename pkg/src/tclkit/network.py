"""Config-driven network assembly, SGD training, and evaluation.

A network is described declaratively as an ordered list of layer specs;
shape chaining is validated before anything is built, and every tensor
contraction layer gets a batch normalization layer inserted before and
after it (disable with `tcl_batchnorm=False` for ablations).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from math import prod
from typing import Optional

import numpy as np

from .layers import (
    BatchNormLayer,
    Conv2dLayer,
    DenseLayer,
    FlattenLayer,
    MaxPool2dLayer,
    NumericError,
    ReluLayer,
    TensorContractionLayer,
    softmax_cross_entropy,
)


class ConfigError(ValueError):
    """A network or run configuration is inconsistent."""


@dataclass
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)


def conv(out_channels, kernel, stride=1, padding=0) -> LayerSpec:
    return LayerSpec("conv", dict(out_channels=out_channels, kernel=kernel,
                                  stride=stride, padding=padding))


def maxpool(window) -> LayerSpec:
    return LayerSpec("maxpool", dict(window=window))


def relu() -> LayerSpec:
    return LayerSpec("relu")


def batchnorm() -> LayerSpec:
    return LayerSpec("batchnorm")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def tcl(*ranks, init="scaled") -> LayerSpec:
    return LayerSpec("tcl", dict(ranks=tuple(ranks), init=init))


def fc(units) -> LayerSpec:
    return LayerSpec("fc", dict(units=units))


def classifier(classes) -> LayerSpec:
    return LayerSpec("classifier", dict(classes=classes))


@dataclass
class NetworkConfig:
    name: str
    input_shape: tuple
    layers: list
    variant: str = "baseline"  # baseline | added-tcl | substitute-1 | substitute-2
    tcl_batchnorm: bool = True

    def normalized(self) -> "NetworkConfig":
        """Insert batch normalization before and after each tcl spec."""
        if not self.tcl_batchnorm:
            return replace(self, layers=list(self.layers))
        out = []
        for spec in self.layers:
            if spec.kind == "tcl":
                if not (out and out[-1].kind == "batchnorm"):
                    out.append(batchnorm())
                out.append(spec)
                out.append(batchnorm())
            else:
                if spec.kind == "batchnorm" and out and out[-1].kind == "batchnorm":
                    continue
                out.append(spec)
        return replace(self, layers=out)


def infer_shapes(input_shape, specs) -> list:
    """Output shape (without batch) after each spec; raises ConfigError
    naming the first layer whose shapes do not chain."""
    cur = tuple(int(d) for d in input_shape)
    shapes = []
    saw_classifier = False
    for i, spec in enumerate(specs):
        where = f"layer {i} ({spec.kind})"
        if saw_classifier:
            raise ConfigError(f"{where}: classifier must be the last layer")
        k = spec.kind
        if k == "conv":
            if len(cur) != 3:
                raise ConfigError(f"{where}: needs a (C, H, W) input, got {cur}")
            c, h, w = cur
            kk, s, p = spec.params["kernel"], spec.params["stride"], spec.params["padding"]
            if kk < 1 or s < 1 or p < 0:
                raise ConfigError(f"{where}: bad kernel/stride/padding")
            if h + 2 * p < kk or w + 2 * p < kk:
                raise ConfigError(
                    f"{where}: kernel {kk} exceeds padded input {h + 2 * p}x{w + 2 * p}"
                )
            cur = (spec.params["out_channels"],
                   (h + 2 * p - kk) // s + 1,
                   (w + 2 * p - kk) // s + 1)
        elif k == "maxpool":
            if len(cur) != 3:
                raise ConfigError(f"{where}: needs a (C, H, W) input, got {cur}")
            c, h, w = cur
            win = spec.params["window"]
            if h % win or w % win:
                raise ConfigError(
                    f"{where}: input {h}x{w} not divisible by window {win}"
                )
            cur = (c, h // win, w // win)
        elif k in ("relu", "batchnorm"):
            pass
        elif k == "flatten":
            cur = (prod(cur),)
        elif k == "tcl":
            ranks = spec.params["ranks"]
            if len(ranks) != len(cur):
                raise ConfigError(
                    f"{where}: ranks {ranks} do not cover input shape {cur}"
                )
            if any(r < 1 for r in ranks):
                raise ConfigError(f"{where}: ranks must be >= 1")
            cur = tuple(ranks)
        elif k in ("fc", "classifier"):
            if len(cur) != 1:
                raise ConfigError(
                    f"{where}: needs a flat input, got {cur} (insert flatten)"
                )
            cur = (spec.params["units" if k == "fc" else "classes"],)
            if k == "classifier":
                saw_classifier = True
        else:
            raise ConfigError(f"{where}: unknown layer kind {k!r}")
        shapes.append(cur)
    if not saw_classifier:
        raise ConfigError("network needs a final classifier layer")
    return shapes


class Network:
    """An ordered stack of layer instances built from a NetworkConfig."""

    def __init__(self, config: NetworkConfig, layers: list):
        self.config = config
        self.layers = layers

    def forward(self, x, train: bool = False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, upstream):
        for layer in reversed(self.layers):
            upstream = layer.backward(upstream)
        return upstream

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def named_params(self):
        return [
            (layer.name, p, g)
            for layer in self.layers
            for p, g in zip(layer.params(), layer.grads())
        ]

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def layer(self, name: str):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)


def build_network(config: NetworkConfig, seed: int = 0,
                  dtype=np.float64) -> Network:
    """Instantiate the layer stack; initialization is deterministic
    under the seed."""
    cfg = config.normalized()
    shapes = infer_shapes(cfg.input_shape, cfg.layers)
    rng = np.random.default_rng(seed)
    layers = []
    cur = tuple(cfg.input_shape)
    for i, spec in enumerate(cfg.layers):
        name = f"{spec.kind}{i}"
        k = spec.kind
        if k == "conv":
            layers.append(Conv2dLayer(cur[0], spec.params["out_channels"],
                                      spec.params["kernel"], spec.params["stride"],
                                      spec.params["padding"], rng=rng, name=name))
        elif k == "maxpool":
            layers.append(MaxPool2dLayer(spec.params["window"], name=name))
        elif k == "relu":
            layers.append(ReluLayer(name=name))
        elif k == "batchnorm":
            layers.append(BatchNormLayer(cur[0], name=name))
        elif k == "flatten":
            layers.append(FlattenLayer(name=name))
        elif k == "tcl":
            layers.append(TensorContractionLayer(cur, spec.params["ranks"],
                                                 init=spec.params.get("init", "scaled"),
                                                 rng=rng, name=name))
        elif k == "fc":
            layers.append(DenseLayer(cur[0], spec.params["units"], rng=rng, name=name))
        elif k == "classifier":
            layers.append(DenseLayer(cur[0], spec.params["classes"], rng=rng, name=name))
        cur = shapes[i]
    net = Network(cfg, layers)
    if np.dtype(dtype) != np.float64:
        net.astype(dtype)
    return net


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    precision: str = "f64"
    dataset: str = ""
    lr_decay: bool = True      # x0.1 after 50% and again after 75% of epochs
    wall_clock: bool = False   # record wall seconds (not run-reproducible)
    shuffle: bool = True

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch norm)")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_top1: float
    test_top1: float
    wall_seconds: float


@dataclass
class TrainMetrics:
    records: list
    cost_report: object = None


class SGD:
    """Momentum SGD with weight decay: v <- mu v - lr (g + wd w); w <- w + v."""

    def __init__(self, named_params, lr, momentum=0.0, weight_decay=0.0):
        self.named_params = list(named_params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities = [np.zeros_like(p) for _, p, _ in self.named_params]

    def step(self):
        for (name, w, g), v in zip(self.named_params, self.velocities):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in layer {name}")
            v *= self.momentum
            v -= self.lr * (g + self.weight_decay * w)
            w += v


def _decayed_lr(base_lr, epoch, epochs, enabled):
    if not enabled:
        return base_lr
    passed = (epoch > epochs // 2) + (epoch > (3 * epochs) // 4)
    return base_lr * (0.1 ** passed)


def train_epoch(network: Network, dataset, cfg: TrainConfig,
                optimizer: SGD, rng: np.random.Generator):
    """One full pass over `dataset` in a seed-deterministic shuffle
    order; returns (mean loss, train top-1)."""
    n = dataset.images.shape[0]
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")
    order = rng.permutation(n) if cfg.shuffle else np.arange(n)
    dtype = cfg.dtype
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        xb = np.asarray(dataset.images[idx], dtype=dtype)
        yb = dataset.labels[idx]
        network.zero_grads()
        logits = network.forward(xb, train=True)
        loss, grad = softmax_cross_entropy(logits, yb)
        network.backward(grad)
        optimizer.step()
        loss_sum += loss * len(idx)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return loss_sum / n, correct / n


def evaluate(network: Network, dataset, batch_size: int = 256,
             dtype=np.float64):
    """Loss and top-1 accuracy in eval mode (running batch-norm stats).

    Argmax ties resolve to the lowest class index.
    """
    n = dataset.images.shape[0]
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        xb = np.asarray(dataset.images[start : start + batch_size], dtype=dtype)
        yb = dataset.labels[start : start + batch_size]
        logits = network.forward(xb, train=False)
        loss, _ = softmax_cross_entropy(logits, yb)
        loss_sum += loss * len(yb)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return loss_sum / n, correct / n


def train(network: Network, train_set, test_set, cfg: TrainConfig,
          sink=None, progress=None) -> TrainMetrics:
    """Full training run; appends one EpochRecord per epoch to `sink`
    (if given) as soon as the epoch finishes."""
    cfg.validate()
    optimizer = SGD(network.named_params(), cfg.lr, cfg.momentum, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    records = []
    for epoch in range(1, cfg.epochs + 1):
        optimizer.lr = _decayed_lr(cfg.lr, epoch, cfg.epochs, cfg.lr_decay)
        t0 = time.perf_counter()
        train_loss, train_top1 = train_epoch(network, train_set, cfg, optimizer, rng)
        if test_set is not None:
            _, test_top1 = evaluate(network, test_set, dtype=cfg.dtype)
        else:
            test_top1 = float("nan")
        wall = time.perf_counter() - t0 if cfg.wall_clock else 0.0
        rec = EpochRecord(epoch, train_loss, train_top1, test_top1, wall)
        records.append(rec)
        if sink is not None:
            sink.write_record(rec)
        if progress is not None:
            progress(rec)
    return TrainMetrics(records)
