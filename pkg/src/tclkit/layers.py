"""Trainable layers with explicit forward/backward passes.

Includes the tensor contraction layer, fully-connected, batch
normalization, ReLU, 2-D convolution and max pooling, a softmax
cross-entropy head, and a finite-difference gradient checker.

Every layer follows one small protocol: `forward(x, train=...)` caches
whatever backward needs, `backward(upstream)` returns the gradient with
respect to the input and accumulates parameter gradients into the
buffers returned by `grads()`. Gradients are summed over the batch; the
1/batch scaling happens once, in the loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import ShapeError, multi_mode_product, unfold


class NumericError(ArithmeticError):
    """A non-finite value turned up where finite numbers are required."""


class LabelError(ValueError):
    """A class label lies outside [0, num_classes)."""


class DegenerateBatchError(ValueError):
    """Batch statistics were requested for a batch smaller than 2."""


@dataclass
class FactorSet:
    """Per-mode projection matrices; None marks a mode passed through.

    `factors[k]` is either a (R_k, D_k) matrix contracting mode k+1 of a
    tensor shaped `input_shape`, or None for an identity pass-through.
    R_k may exceed D_k; the only requirement is R_k >= 1.
    """

    input_shape: tuple
    factors: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        if len(self.factors) != len(self.input_shape):
            raise ShapeError(
                f"need one factor entry per mode: got {len(self.factors)} "
                f"for shape {self.input_shape}"
            )
        for k, (f, d) in enumerate(zip(self.factors, self.input_shape), start=1):
            if f is None:
                continue
            if f.ndim != 2 or f.shape[1] != d:
                raise ShapeError(
                    f"mode {k}: factor shape {f.shape} does not match dimension {d}"
                )
            if f.shape[0] < 1:
                raise ShapeError(f"mode {k}: rank must be >= 1")

    @property
    def output_shape(self) -> tuple:
        return tuple(
            d if f is None else f.shape[0]
            for f, d in zip(self.factors, self.input_shape)
        )

    def param_count(self) -> int:
        return sum(f.size for f in self.factors if f is not None)


class Layer:
    """Base class: a named block with optional parameters."""

    def __init__(self, name: str):
        self.name = name

    def params(self) -> list:
        return []

    def grads(self) -> list:
        return []

    def zero_grads(self):
        for g in self.grads():
            g[...] = 0.0

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def astype(self, dtype):
        return self

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, upstream):
        raise NotImplementedError


class TensorContractionLayer(Layer):
    """Multilinear projection of a batched activation tensor.

    Maps (batch, D_1, ..., D_N) to (batch, R_1, ..., R_N) through one
    trainable (R_k, D_k) factor per non-batch mode; the batch mode is
    never contracted. There is no bias term, so the parameter count is
    sum_k D_k * R_k.
    """

    def __init__(self, input_shape, ranks, init: str = "scaled",
                 rng: Optional[np.random.Generator] = None, name: str = "tcl"):
        super().__init__(name)
        input_shape = tuple(int(d) for d in input_shape)
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != len(input_shape):
            raise ShapeError(
                f"ranks {ranks} do not cover input shape {input_shape}"
            )
        if any(r < 1 for r in ranks) or any(d < 1 for d in input_shape):
            raise ShapeError("dimensions and ranks must be >= 1")
        if rng is None:
            rng = np.random.default_rng()
        self.input_shape = input_shape
        self.ranks = ranks
        self.factors = []
        for d, r in zip(input_shape, ranks):
            if init == "identity":
                if r != d:
                    raise ShapeError(
                        f"identity init needs R_k == D_k, got {r} != {d}"
                    )
                v = np.eye(r)
            elif init == "scaled":
                v = rng.normal(0.0, math.sqrt(2.0 / (d + r)), size=(r, d))
            else:
                raise ValueError(f"unknown init {init!r}")
            self.factors.append(v)
        self.factor_grads = [np.zeros_like(v) for v in self.factors]
        self._x = None

    def factor_set(self) -> FactorSet:
        return FactorSet(self.input_shape, list(self.factors))

    def params(self):
        return list(self.factors)

    def grads(self):
        return list(self.factor_grads)

    def astype(self, dtype):
        self.factors = [v.astype(dtype) for v in self.factors]
        self.factor_grads = [g.astype(dtype) for g in self.factor_grads]
        return self

    def forward(self, x, train: bool = False):
        x = np.asarray(x)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"{self.name}: expected input (batch, {self.input_shape}), "
                f"got {x.shape}"
            )
        self._x = x
        return multi_mode_product(x, [None, *self.factors])

    def backward(self, upstream):
        upstream = np.asarray(upstream)
        x = self._x
        if upstream.shape != (x.shape[0], *self.ranks):
            raise ShapeError(
                f"{self.name}: upstream shape {upstream.shape} does not match "
                f"output (batch, {self.ranks})"
            )
        n = len(self.factors)
        gx = multi_mode_product(upstream, [None, *(v.T for v in self.factors)])
        for k in range(n):
            others = [None] + [
                self.factors[j] if j != k else None for j in range(n)
            ]
            partial = multi_mode_product(x, others)
            gu = unfold(upstream, k + 2).data
            gp = unfold(partial, k + 2).data
            self.factor_grads[k] += gu @ gp.T
        return gx


class DenseLayer(Layer):
    """Affine map y = x W^T + b over 2-D batches."""

    def __init__(self, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None, name: str = "fc"):
        super().__init__(name)
        if rng is None:
            rng = np.random.default_rng()
        scale = math.sqrt(2.0 / (in_features + out_features))
        self.weight = rng.normal(0.0, scale, size=(out_features, in_features))
        self.bias = np.zeros(out_features)
        self.weight_grad = np.zeros_like(self.weight)
        self.bias_grad = np.zeros_like(self.bias)
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.weight_grad, self.bias_grad]

    def astype(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)
        self.weight_grad = self.weight_grad.astype(dtype)
        self.bias_grad = self.bias_grad.astype(dtype)
        return self

    def forward(self, x, train: bool = False):
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ShapeError(
                f"{self.name}: expected (batch, {self.weight.shape[1]}), "
                f"got {x.shape}"
            )
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, upstream):
        upstream = np.asarray(upstream)
        x = self._x
        if upstream.shape != (x.shape[0], self.weight.shape[0]):
            raise ShapeError(f"{self.name}: bad upstream shape {upstream.shape}")
        self.weight_grad += upstream.T @ x
        self.bias_grad += upstream.sum(axis=0)
        return upstream @ self.weight


class BatchNormLayer(Layer):
    """Normalize features (axis 1) over the batch and any trailing axes.

    On a 2-D input every column is a feature; on an NCHW activation the
    channel is the feature and statistics pool over batch and space.
    Train mode normalizes with batch statistics and updates running
    stats as new = momentum * old + (1 - momentum) * batch; eval mode
    applies the running stats.
    """

    def __init__(self, num_features: int, eps: float = 1e-5,
                 momentum: float = 0.9, name: str = "batchnorm"):
        super().__init__(name)
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(num_features)
        self.beta = np.zeros(num_features)
        self.gamma_grad = np.zeros_like(self.gamma)
        self.beta_grad = np.zeros_like(self.beta)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.gamma_grad, self.beta_grad]

    def astype(self, dtype):
        for attr in ("gamma", "beta", "gamma_grad", "beta_grad",
                     "running_mean", "running_var"):
            setattr(self, attr, getattr(self, attr).astype(dtype))
        return self

    def _broadcast(self, v, ndim):
        return v.reshape((1, self.num_features) + (1,) * (ndim - 2))

    def forward(self, x, train: bool = False):
        x = np.asarray(x)
        if x.ndim < 2 or x.shape[1] != self.num_features:
            raise ShapeError(
                f"{self.name}: expected {self.num_features} features on axis 1, "
                f"got shape {x.shape}"
            )
        axes = (0,) + tuple(range(2, x.ndim))
        if train:
            if x.shape[0] < 2:
                raise DegenerateBatchError(
                    f"{self.name}: batch size {x.shape[0]} < 2 in train mode"
                )
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (
                self.momentum * self.running_mean + (1.0 - self.momentum) * mean
            )
            self.running_var = (
                self.momentum * self.running_var + (1.0 - self.momentum) * var
            )
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._broadcast(mean, x.ndim)) * self._broadcast(inv_std, x.ndim)
        self._cache = (xhat, inv_std, axes, train, x.size // self.num_features)
        return self._broadcast(self.gamma, x.ndim) * xhat + self._broadcast(
            self.beta, x.ndim
        )

    def backward(self, upstream):
        upstream = np.asarray(upstream)
        xhat, inv_std, axes, train, m = self._cache
        if upstream.shape != xhat.shape:
            raise ShapeError(f"{self.name}: bad upstream shape {upstream.shape}")
        self.gamma_grad += (upstream * xhat).sum(axis=axes)
        self.beta_grad += upstream.sum(axis=axes)
        dxhat = upstream * self._broadcast(self.gamma, upstream.ndim)
        inv = self._broadcast(inv_std, upstream.ndim)
        if not train:
            return dxhat * inv
        s1 = dxhat.sum(axis=axes, keepdims=True)
        s2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
        return (inv / m) * (m * dxhat - s1 - xhat * s2)


class ReluLayer(Layer):
    """Elementwise max(x, 0); the subgradient at 0 is taken as 0."""

    def __init__(self, name: str = "relu"):
        super().__init__(name)
        self._mask = None

    def forward(self, x, train: bool = False):
        x = np.asarray(x)
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, upstream):
        return np.asarray(upstream) * self._mask


def _im2col(padded, kernel, stride, h_out, w_out):
    b, c, _, _ = padded.shape
    cols = np.empty((b, c, kernel, kernel, h_out, w_out), dtype=padded.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols[:, :, i, j] = padded[
                :, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride
            ]
    return cols.reshape(b, c * kernel * kernel, h_out * w_out)


def _col2im(cols, padded_shape, kernel, stride, h_out, w_out):
    b, c, _, _ = padded_shape
    grad = np.zeros(padded_shape, dtype=cols.dtype)
    c6 = cols.reshape(b, c, kernel, kernel, h_out, w_out)
    for i in range(kernel):
        for j in range(kernel):
            grad[
                :, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride
            ] += c6[:, :, i, j]
    return grad


class Conv2dLayer(Layer):
    """2-D convolution over NCHW inputs with zero padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int = 0,
                 rng: Optional[np.random.Generator] = None, name: str = "conv"):
        super().__init__(name)
        if kernel < 1 or stride < 1 or padding < 0:
            raise ShapeError(f"{name}: bad kernel/stride/padding")
        if rng is None:
            rng = np.random.default_rng()
        scale = math.sqrt(2.0 / (in_channels * kernel * kernel))
        self.weight = rng.normal(
            0.0, scale, size=(out_channels, in_channels, kernel, kernel)
        )
        self.bias = np.zeros(out_channels)
        self.weight_grad = np.zeros_like(self.weight)
        self.bias_grad = np.zeros_like(self.bias)
        self.stride = stride
        self.padding = padding
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.weight_grad, self.bias_grad]

    def astype(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)
        self.weight_grad = self.weight_grad.astype(dtype)
        self.bias_grad = self.bias_grad.astype(dtype)
        return self

    def out_size(self, h, w):
        k, s, p = self.weight.shape[2], self.stride, self.padding
        if h + 2 * p < k or w + 2 * p < k:
            raise ShapeError(
                f"{self.name}: kernel {k} exceeds padded input {h + 2 * p}x{w + 2 * p}"
            )
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x, train: bool = False):
        x = np.asarray(x)
        c_out, c_in, k, _ = self.weight.shape
        if x.ndim != 4 or x.shape[1] != c_in:
            raise ShapeError(
                f"{self.name}: expected (batch, {c_in}, H, W), got {x.shape}"
            )
        b, _, h, w = x.shape
        h_out, w_out = self.out_size(h, w)
        p = self.padding
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = _im2col(padded, k, self.stride, h_out, w_out)
        wmat = self.weight.reshape(c_out, -1)
        out = np.matmul(wmat, cols).reshape(b, c_out, h_out, w_out)
        out += self.bias[None, :, None, None]
        self._cache = (cols, x.shape, padded.shape, h_out, w_out)
        return out

    def backward(self, upstream):
        upstream = np.asarray(upstream)
        cols, x_shape, padded_shape, h_out, w_out = self._cache
        c_out, _, k, _ = self.weight.shape
        b = x_shape[0]
        if upstream.shape != (b, c_out, h_out, w_out):
            raise ShapeError(f"{self.name}: bad upstream shape {upstream.shape}")
        um = upstream.reshape(b, c_out, h_out * w_out)
        self.bias_grad += upstream.sum(axis=(0, 2, 3))
        self.weight_grad += np.einsum("bol,bcl->oc", um, cols).reshape(
            self.weight.shape
        )
        wmat = self.weight.reshape(c_out, -1)
        gcols = np.matmul(wmat.T, um)
        gpad = _col2im(gcols, padded_shape, k, self.stride, h_out, w_out)
        p = self.padding
        h, w = x_shape[2], x_shape[3]
        return gpad[:, :, p : p + h, p : p + w]


class MaxPool2dLayer(Layer):
    """Non-overlapping max pooling: window w, stride w, no padding.

    Ties inside a window go to the first index in row-major scan order.
    """

    def __init__(self, window: int, name: str = "maxpool"):
        super().__init__(name)
        if window < 1:
            raise ShapeError(f"{name}: window must be >= 1")
        self.window = window
        self._cache = None

    def forward(self, x, train: bool = False):
        x = np.asarray(x)
        w = self.window
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected NCHW input, got {x.shape}")
        b, c, h, wd = x.shape
        if h % w or wd % w:
            raise ShapeError(
                f"{self.name}: input {h}x{wd} not divisible by window {w}"
            )
        h_out, w_out = h // w, wd // w
        windows = (
            x.reshape(b, c, h_out, w, w_out, w)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h_out, w_out, w * w)
        )
        idx = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return out

    def backward(self, upstream):
        upstream = np.asarray(upstream)
        idx, x_shape = self._cache
        b, c, h, wd = x_shape
        w = self.window
        h_out, w_out = h // w, wd // w
        if upstream.shape != (b, c, h_out, w_out):
            raise ShapeError(f"{self.name}: bad upstream shape {upstream.shape}")
        flat = np.zeros((b, c, h_out, w_out, w * w), dtype=upstream.dtype)
        np.put_along_axis(flat, idx[..., None], upstream[..., None], axis=-1)
        return (
            flat.reshape(b, c, h_out, w_out, w, w)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h, wd)
        )


class FlattenLayer(Layer):
    """Collapse everything after the batch mode into one axis."""

    def __init__(self, name: str = "flatten"):
        super().__init__(name)
        self._shape = None

    def forward(self, x, train: bool = False):
        x = np.asarray(x)
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, upstream):
        return np.asarray(upstream).reshape(self._shape)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. logits.

    Uses log-sum-exp stabilization; the gradient is
    (softmax - onehot) / batch, so its rows sum to zero.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got {logits.shape}")
    b, c = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels must have shape ({b},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise LabelError(
            f"labels must lie in [0, {c}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(b), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b


def grad_check(layer: Layer, x, seed: int = 0, step: float = 1e-5) -> float:
    """Check a layer's analytic gradients against central differences.

    The loss is a fixed random projection sum(R * forward(x)); every
    entry of the input and of every parameter is perturbed by +-step.
    Returns the worst scaled error max|a - n| / max(1, |a|, |n|) over
    all entries. Intended for small layers (at most 1e4 entries).
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    params = layer.params()
    total = x.size + sum(p.size for p in params)
    if total > 10_000:
        raise ValueError(f"gradient check limited to 1e4 entries, got {total}")

    out = layer.forward(x, train=True)
    proj = rng.standard_normal(np.shape(out))

    def loss():
        return float(np.sum(proj * layer.forward(x, train=True)))

    layer.zero_grads()
    layer.forward(x, train=True)
    gx = layer.backward(proj)
    analytic = [np.asarray(gx)] + [np.asarray(g) for g in layer.grads()]
    arrays = [x] + list(params)

    worst = 0.0
    for arr, ana in zip(arrays, analytic):
        flat = arr.reshape(-1)
        aflat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = loss()
            flat[i] = orig - step
            f_minus = loss()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = aflat[i]
            if not (np.isfinite(numeric) and np.isfinite(a)):
                raise NumericError(
                    f"non-finite value in gradient check of {layer.name}"
                )
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst


def _spread_values(rng, shape, low=-1.0, high=1.0):
    # evenly spaced magnitudes in random order: keeps max-pool windows
    # tie-free and ReLU inputs away from the kink (an odd count would
    # place a value exactly at the midpoint, so shift it off the grid)
    n = int(np.prod(shape))
    vals = np.linspace(low, high, n)
    if n % 2 and n > 1:
        vals = vals + (high - low) / (2.0 * (n - 1))
    return rng.permutation(vals).reshape(shape)


def gradient_suite(seed: int = 0) -> list:
    """Finite-difference checks for every layer type at small shapes.

    Returns (name, max_error, tolerance) triples; a suite passes when
    every max_error is below its tolerance.
    """
    rng = np.random.default_rng(seed)
    results = []

    tcl = TensorContractionLayer((3, 4, 4), (2, 2, 2), rng=rng)
    results.append(("tcl", grad_check(tcl, rng.standard_normal((2, 3, 4, 4)),
                                      seed=seed), 1e-6))

    dense = DenseLayer(6, 5, rng=rng)
    results.append(("fc", grad_check(dense, rng.standard_normal((4, 6)),
                                     seed=seed), 1e-6))

    sm = _SoftmaxCheckAdapter(np.array([0, 2, 1, 3]))
    results.append(("softmax", grad_check(sm, rng.standard_normal((4, 4)),
                                          seed=seed), 1e-6))

    bn = BatchNormLayer(3)
    results.append(("batchnorm", grad_check(bn, rng.standard_normal((4, 3, 3, 3)),
                                            seed=seed), 1e-5))

    conv = Conv2dLayer(2, 3, 3, stride=1, padding=1, rng=rng)
    results.append(("conv", grad_check(conv, rng.standard_normal((2, 2, 5, 5)),
                                       seed=seed), 1e-5))

    pool = MaxPool2dLayer(2)
    results.append(("maxpool", grad_check(pool, _spread_values(rng, (2, 2, 4, 4)),
                                          seed=seed), 1e-5))

    rl = ReluLayer()
    x = _spread_values(rng, (3, 10))
    results.append(("relu", grad_check(rl, x, seed=seed), 1e-5))

    return results


class _SoftmaxCheckAdapter(Layer):
    """Wraps the softmax cross-entropy loss in the layer protocol so the
    gradient checker can drive it; forward returns the scalar loss."""

    def __init__(self, labels):
        super().__init__("softmax")
        self.labels = labels
        self._grad = None

    def forward(self, x, train: bool = False):
        loss, grad = softmax_cross_entropy(x, self.labels)
        self._grad = grad
        return np.asarray(loss)

    def backward(self, upstream):
        return float(upstream) * self._grad
