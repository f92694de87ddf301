import numpy as np
import pytest

from deltasim.errors import ShapeMismatch
from deltasim.learn import AdamW, Linear, Mlp, gradient_check
from deltasim.learn.encoder import ObsEncoder


def mse_with_backward(net, x, y):
    pred = net.forward(x)
    diff = pred - y
    net.backward(2.0 / diff.size * diff)
    return float(np.mean(diff**2))


class TestLinear:
    def test_identity_layer(self):
        rng = np.random.default_rng(0)
        layer = Linear(4, 4, rng, "id", dtype=np.float64)
        layer.W.value[...] = np.eye(4)
        layer.b.value[...] = 0.0
        x = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(layer.forward(x), x)

    def test_shape_mismatch(self):
        layer = Linear(4, 2, np.random.default_rng(0), "l")
        with pytest.raises(ShapeMismatch):
            layer.forward(np.zeros((3, 5), dtype=np.float32))


class TestMlpGradients:
    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(1)
        net = Mlp((5, 8, 6, 3), rng, dtype=np.float64)
        x = rng.standard_normal((4, 5))
        y = rng.standard_normal((4, 3))
        for p in net.params():
            p.grad[...] = 0.0
        mse_with_backward(net, x, y)
        worst = gradient_check(net.params(), lambda: float(np.mean((net.forward(x) - y) ** 2)))
        assert worst <= 1e-4

    def test_dead_relu_case(self):
        rng = np.random.default_rng(2)
        net = Mlp((4, 6, 2), rng, dtype=np.float64)
        for layer in net.layers:
            layer.b.value[...] = 0.0
        x = np.zeros((3, 4))
        y = net.forward(x)
        np.testing.assert_array_equal(y, np.zeros((3, 2)))
        for p in net.params():
            p.grad[...] = 0.0
        net.backward(np.ones((3, 2)))
        np.testing.assert_array_equal(net.layers[0].W.grad, 0.0)


class TestEncoderGradients:
    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(3)
        enc = ObsEncoder((6, 6), obs_horizon=2, rng=rng, dtype=np.float64)
        images = rng.uniform(0, 1, (2, 2, 6, 6))
        joints = rng.uniform(-1, 1, (2, 2, 12))
        target = rng.standard_normal((2, enc.out_dim))

        def loss_only():
            return float(np.mean((enc.forward(images, joints) - target) ** 2))

        for p in enc.params():
            p.grad[...] = 0.0
        emb = enc.forward(images, joints)
        diff = emb - target
        enc.backward(2.0 / diff.size * diff)
        assert gradient_check(enc.params(), loss_only) <= 1e-4


class TestAdamW:
    def test_decoupled_decay_without_gradient(self):
        layer = Linear(2, 2, np.random.default_rng(4), "l", dtype=np.float64)
        layer.W.value[...] = 1.0
        opt = AdamW(layer.params(), lr=0.1, weight_decay=0.5)
        opt.zero_grad()
        opt.step()
        # Zero gradient: only the decay term acts, W -> W - lr*wd*W.
        np.testing.assert_allclose(layer.W.value, np.full((2, 2), 1.0 - 0.1 * 0.5))

    def test_descends_a_quadratic(self):
        rng = np.random.default_rng(5)
        net = Mlp((3, 16, 1), rng, dtype=np.float64)
        x = rng.standard_normal((64, 3))
        y = (x.sum(axis=1, keepdims=True)) * 0.5
        opt = AdamW(net.params(), lr=1e-2, weight_decay=0.0)
        first = None
        for _ in range(300):
            opt.zero_grad()
            loss = mse_with_backward(net, x, y)
            opt.step()
            first = loss if first is None else first
        assert loss < first * 0.05
