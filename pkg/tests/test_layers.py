import numpy as np
import pytest

from tclkit.layers import (
    BatchNormLayer,
    Conv2dLayer,
    DegenerateBatchError,
    DenseLayer,
    FactorSet,
    FlattenLayer,
    LabelError,
    Layer,
    MaxPool2dLayer,
    ReluLayer,
    TensorContractionLayer,
    grad_check,
    gradient_suite,
    softmax_cross_entropy,
)
from tclkit.tensor import ShapeError

from oracles import (
    conv2d_direct,
    kron_chain,
    maxpool_direct,
    multi_mode_elementwise,
    unfold_np,
)


# ---------------------------------------------------------------- factor set

def test_factor_set_shapes_and_count():
    fs = FactorSet((3, 4), [np.zeros((2, 3)), None])
    assert fs.output_shape == (2, 4)
    assert fs.param_count() == 6
    with pytest.raises(ShapeError):
        FactorSet((3, 4), [np.zeros((2, 5)), None])
    with pytest.raises(ShapeError):
        FactorSet((3, 4), [None])


# ----------------------------------------------------------------------- tcl

def _identity_tcl(shape):
    return TensorContractionLayer(shape, shape, init="identity")


def test_tcl_identity_is_exact():
    layer = _identity_tcl((2, 3, 4))
    x = np.random.default_rng(0).standard_normal((5, 2, 3, 4))
    assert np.array_equal(layer.forward(x), x)


def test_tcl_preserves_spatial_shape():
    layer = TensorContractionLayer((256, 3, 3), (128, 3, 3),
                                   rng=np.random.default_rng(0))
    layer.factors[1] = np.eye(3)
    layer.factors[2] = np.eye(3)
    out = layer.forward(np.random.default_rng(1).standard_normal((1, 256, 3, 3)))
    assert out.shape == (1, 128, 3, 3)


def test_tcl_channel_sum_frozen():
    layer = TensorContractionLayer((2, 2, 2), (1, 2, 2),
                                   rng=np.random.default_rng(0))
    layer.factors[0] = np.array([[1.0, 1.0]])
    layer.factors[1] = np.eye(2)
    layer.factors[2] = np.eye(2)
    x = np.arange(8, dtype=float).reshape(1, 2, 2, 2)
    out = layer.forward(x)
    assert out.shape == (1, 1, 2, 2)
    assert out[0, 0].tolist() == [[4.0, 6.0], [8.0, 10.0]]


def test_tcl_param_count():
    layer = TensorContractionLayer((256, 3, 3), (128, 3, 3),
                                   rng=np.random.default_rng(0))
    assert layer.param_count() == 256 * 128 + 9 + 9
    assert layer.factor_set().param_count() == layer.param_count()


def test_tcl_forward_linear_in_input():
    rng = np.random.default_rng(1)
    layer = TensorContractionLayer((3, 4), (2, 2), rng=rng)
    x = rng.standard_normal((2, 3, 4))
    y = rng.standard_normal((2, 3, 4))
    lhs = layer.forward(0.3 * x - 1.7 * y)
    rhs = 0.3 * layer.forward(x) - 1.7 * layer.forward(y)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_tcl_zero_upstream_zero_grads():
    rng = np.random.default_rng(2)
    layer = TensorContractionLayer((2, 3), (2, 2), rng=rng)
    x = rng.standard_normal((2, 2, 3))
    layer.forward(x)
    gx = layer.backward(np.zeros((2, 2, 2)))
    assert not gx.any()
    assert all(not g.any() for g in layer.grads())


def test_tcl_identity_backward_passes_upstream():
    layer = _identity_tcl((2, 3))
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 2, 3))
    layer.forward(x)
    upstream = rng.standard_normal((4, 2, 3))
    assert np.array_equal(layer.backward(upstream), upstream)


def test_tcl_forward_matches_elementwise_oracle():
    rng = np.random.default_rng(4)
    layer = TensorContractionLayer((2, 3, 2), (2, 2, 3), rng=rng)
    x = rng.standard_normal((2, 2, 3, 2))
    expected = multi_mode_elementwise(x, [None, *layer.factors])
    assert np.allclose(layer.forward(x), expected, rtol=0, atol=1e-12)


def test_tcl_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    layer = TensorContractionLayer((3, 4, 4), (2, 2, 2), rng=rng)
    x = rng.standard_normal((2, 3, 4, 4))
    assert grad_check(layer, x, seed=0) < 1e-6


def test_tcl_gradients_match_matricized_route():
    # independent path: factor grads and input grad through explicit
    # np.kron chains on the batched tensor (identity on the batch mode)
    rng = np.random.default_rng(6)
    layer = TensorContractionLayer((2, 3, 2), (2, 2, 2), rng=rng)
    x = rng.standard_normal((2, 2, 3, 2))
    upstream = rng.standard_normal((2, 2, 2, 2))
    layer.zero_grads()
    layer.forward(x)
    gx = layer.backward(upstream)

    batched = [np.eye(x.shape[0]), *layer.factors]
    for k in range(3):
        mode = k + 2
        chain = kron_chain([f for j, f in enumerate(batched, 1) if j != mode])
        expected = unfold_np(upstream, mode) @ chain @ unfold_np(x, mode).T
        rel = np.linalg.norm(layer.factor_grads[k] - expected) / max(
            np.linalg.norm(expected), 1e-300)
        assert rel < 1e-10

    full = kron_chain(batched)
    expected_gx = (full.T @ upstream.ravel()).reshape(x.shape)
    rel = np.linalg.norm(gx - expected_gx) / np.linalg.norm(expected_gx)
    assert rel < 1e-10


def test_tcl_shape_errors():
    layer = TensorContractionLayer((2, 3), (2, 2), rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((2, 3, 2)))
    layer.forward(np.zeros((2, 2, 3)))
    with pytest.raises(ShapeError):
        layer.backward(np.zeros((2, 3, 3)))
    with pytest.raises(ShapeError):
        TensorContractionLayer((2, 3), (2, 2, 2))
    with pytest.raises(ShapeError):
        TensorContractionLayer((2, 3), (2, 2), init="identity")


# -------------------------------------------------------------------- dense

def test_dense_identity():
    layer = DenseLayer(3, 3, rng=np.random.default_rng(0))
    layer.weight[...] = np.eye(3)
    layer.bias[...] = 0.0
    x = np.random.default_rng(1).standard_normal((4, 3))
    assert np.array_equal(layer.forward(x), x)


def test_dense_hand_example():
    layer = DenseLayer(2, 2, rng=np.random.default_rng(0))
    layer.weight[...] = [[1.0, 1.0], [1.0, -1.0]]
    layer.bias[...] = [0.0, 1.0]
    out = layer.forward(np.array([[1.0, 2.0]]))
    assert out.tolist() == [[3.0, 0.0]]


def test_dense_identity_backward_passes_upstream():
    layer = DenseLayer(3, 3, rng=np.random.default_rng(0))
    layer.weight[...] = np.eye(3)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 3))
    layer.forward(x)
    upstream = rng.standard_normal((4, 3))
    assert np.array_equal(layer.backward(upstream), upstream)


def test_dense_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    layer = DenseLayer(6, 5, rng=rng)
    assert grad_check(layer, rng.standard_normal((4, 6)), seed=1) < 1e-6


# ---------------------------------------------------------------- batch norm

def test_batchnorm_constant_input_gives_beta():
    layer = BatchNormLayer(3)
    layer.beta[...] = [1.0, -2.0, 0.5]
    x = np.ones((4, 3, 2, 2)) * np.array([5.0, -1.0, 3.0])[None, :, None, None]
    out = layer.forward(x, train=True)
    assert np.allclose(out, layer.beta[None, :, None, None] * np.ones_like(x),
                       rtol=0, atol=1e-12)


def test_batchnorm_normalizes_batch_statistics():
    # variance scaled so the eps correction var/(var+eps) sits below 1e-10
    rng = np.random.default_rng(4)
    layer = BatchNormLayer(5)
    x = rng.standard_normal((16, 5, 3, 3)) * 1000.0 + 300.0
    out = layer.forward(x, train=True)
    assert np.max(np.abs(out.mean(axis=(0, 2, 3)))) < 1e-10
    assert np.max(np.abs(out.var(axis=(0, 2, 3)) - 1.0)) < 1e-10


def test_batchnorm_eps_correction_at_unit_scale():
    rng = np.random.default_rng(14)
    layer = BatchNormLayer(5)
    x = rng.standard_normal((16, 5, 3, 3)) * 3.0 + 1.5
    out = layer.forward(x, train=True)
    var = out.var(axis=(0, 2, 3))
    expected = 1.0 / (1.0 + layer.eps / x.var(axis=(0, 2, 3)))
    assert np.max(np.abs(var - expected)) < 1e-10


def test_batchnorm_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    layer = BatchNormLayer(3)
    assert grad_check(layer, rng.standard_normal((4, 3, 3, 3)), seed=2) < 1e-5


def test_batchnorm_2d_gradients():
    rng = np.random.default_rng(6)
    layer = BatchNormLayer(4)
    assert grad_check(layer, rng.standard_normal((6, 4)), seed=3) < 1e-5


def test_batchnorm_degenerate_batch():
    layer = BatchNormLayer(3)
    with pytest.raises(DegenerateBatchError):
        layer.forward(np.zeros((1, 3, 2, 2)), train=True)


def test_batchnorm_eval_uses_running_stats():
    rng = np.random.default_rng(7)
    layer = BatchNormLayer(3)
    x = rng.standard_normal((8, 3)) * 2.0 + 3.0
    for _ in range(200):
        layer.forward(x, train=True)
    out = layer.forward(x, train=False)
    # running stats converge to the batch stats, so eval also normalizes
    assert np.max(np.abs(out.mean(axis=0))) < 1e-3
    assert np.max(np.abs(out.var(axis=0) - 1.0)) < 1e-2


def test_batchnorm_wrong_feature_count():
    layer = BatchNormLayer(3)
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((4, 5)), train=True)


# --------------------------------------------------------------------- conv

def test_conv_1x1_identity_kernel_is_channel_mix():
    layer = Conv2dLayer(3, 3, 1, rng=np.random.default_rng(0))
    layer.weight[...] = np.eye(3).reshape(3, 3, 1, 1)
    layer.bias[...] = 0.0
    x = np.random.default_rng(1).standard_normal((2, 3, 4, 4))
    assert np.allclose(layer.forward(x), x, rtol=0, atol=0)


def test_conv_matches_direct_oracle():
    rng = np.random.default_rng(2)
    for stride, padding in [(1, 0), (1, 1), (2, 1), (2, 2)]:
        layer = Conv2dLayer(2, 3, 3, stride=stride, padding=padding, rng=rng)
        x = rng.standard_normal((2, 2, 6, 5))
        expected = conv2d_direct(x, layer.weight, layer.bias, stride, padding)
        assert np.allclose(layer.forward(x), expected, rtol=0, atol=1e-12)


def test_conv_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    layer = Conv2dLayer(2, 3, 3, stride=1, padding=1, rng=rng)
    assert grad_check(layer, rng.standard_normal((2, 2, 5, 5)), seed=4) < 1e-5


def test_conv_shape_errors():
    layer = Conv2dLayer(2, 3, 5, rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 2, 3, 3)))   # kernel larger than input
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 3, 8, 8)))   # wrong channel count


# ------------------------------------------------------------------ max pool

def test_maxpool_matches_window_oracle():
    rng = np.random.default_rng(4)
    layer = MaxPool2dLayer(2)
    x = rng.standard_normal((2, 3, 4, 4))
    assert np.array_equal(layer.forward(x), maxpool_direct(x, 2))


def test_maxpool_indivisible_input():
    layer = MaxPool2dLayer(2)
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 1, 3, 4)))


def test_maxpool_tie_goes_to_first_in_scan_order():
    layer = MaxPool2dLayer(2)
    x = np.zeros((1, 1, 2, 2))          # all four entries tie
    layer.forward(x)
    g = layer.backward(np.array([[[[1.0]]]]))
    assert g[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_maxpool_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    layer = MaxPool2dLayer(2)
    x = rng.permutation(np.linspace(-1.0, 1.0, 64)).reshape(2, 2, 4, 4)
    assert grad_check(layer, x, seed=5) < 1e-5


# ------------------------------------------------------------ relu / flatten

def test_relu_forward_backward():
    layer = ReluLayer()
    x = np.array([[-1.0, 0.0, 2.0]])
    assert layer.forward(x).tolist() == [[0.0, 0.0, 2.0]]
    assert layer.backward(np.ones((1, 3))).tolist() == [[0.0, 0.0, 1.0]]


def test_flatten_roundtrip():
    layer = FlattenLayer()
    x = np.random.default_rng(6).standard_normal((3, 2, 2, 2))
    out = layer.forward(x)
    assert out.shape == (3, 8)
    assert np.array_equal(layer.backward(out), x)


# ------------------------------------------------------------------- softmax

def test_softmax_uniform_logits():
    loss, grad = softmax_cross_entropy(np.zeros((3, 4)), np.array([0, 1, 2]))
    assert abs(loss - np.log(4.0)) < 1e-12


def test_softmax_grad_rows_sum_to_zero():
    rng = np.random.default_rng(7)
    logits = rng.standard_normal((6, 5))
    _, grad = softmax_cross_entropy(logits, rng.integers(0, 5, 6))
    assert np.max(np.abs(grad.sum(axis=1))) < 1e-12


def test_softmax_label_out_of_range():
    with pytest.raises(LabelError):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(LabelError):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([-1, 0]))


def test_softmax_extreme_logits_stable():
    loss, grad = softmax_cross_entropy(
        np.array([[1000.0, 0.0], [-1000.0, 0.0]]), np.array([0, 0]))
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


# ---------------------------------------------------------------- grad check

class _LinearProbe(Layer):
    """y = a * x with exact analytic gradients."""

    def __init__(self):
        super().__init__("linear")
        self.a = np.array([1.5])
        self.ga = np.zeros(1)
        self._x = None

    def params(self):
        return [self.a]

    def grads(self):
        return [self.ga]

    def forward(self, x, train=False):
        self._x = x
        return self.a[0] * x

    def backward(self, upstream):
        self.ga += np.sum(upstream * self._x)
        return self.a[0] * upstream


class _CorruptedGrad(Layer):
    """Delegates to an inner layer but doubles the largest factor-gradient
    entry: the checker must notice."""

    def __init__(self, inner):
        super().__init__("corrupted")
        self.inner = inner

    def params(self):
        return self.inner.params()

    def grads(self):
        return self.inner.grads()

    def zero_grads(self):
        self.inner.zero_grads()

    def forward(self, x, train=False):
        return self.inner.forward(x, train=train)

    def backward(self, upstream):
        out = self.inner.backward(upstream)
        g = self.inner.grads()[0]
        flat = g.reshape(-1)
        flat[np.abs(flat).argmax()] *= 2.0
        return out


def test_grad_check_linear_layer_is_exact():
    layer = _LinearProbe()
    x = np.random.default_rng(8).standard_normal((2, 3))
    assert grad_check(layer, x, seed=6) < 1e-8


def test_grad_check_detects_corrupted_gradient():
    rng = np.random.default_rng(9)
    layer = _CorruptedGrad(DenseLayer(4, 3, rng=rng))
    assert grad_check(layer, rng.standard_normal((3, 4)), seed=7) > 1e-2


def test_grad_check_entry_budget():
    layer = DenseLayer(200, 200, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        grad_check(layer, np.zeros((2, 200)))


def test_gradient_suite_passes_thresholds():
    for name, err, tol in gradient_suite(seed=0):
        assert err < tol, f"{name}: {err} >= {tol}"
