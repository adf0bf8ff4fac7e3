import numpy as np
import pytest

from deepq.errors import NonFiniteError
from deepq.layers import LayerSpec, make_layer
from deepq.network import Network, build_network, init_params
from deepq.optim import RmsProp, clip_gradients, sync_target


def scalar_net(weight):
    net = Network([make_layer(LayerSpec.linear(1), "fc1")], (1,),
                  dtype=np.float64)
    net.params()[0].weight.values[...] = weight
    return net


class TestRmsProp:
    def test_scalar_hand_computation(self):
        # w=1, g=1, decay=0.95, lr=0.000625, eps=1e-6:
        # acc = 0.05, w = 1 - 0.000625 / (sqrt(0.05) + 1e-6) ~= 0.997205
        net = scalar_net(1.0)
        opt = RmsProp(net, learning_rate=0.000625, decay=0.95, epsilon=1e-6)
        w = net.params()[0].weight
        w.grad[...] = 1.0
        net.params()[0].bias.grad[...] = 0.0
        opt.step()
        assert opt.acc["fc1.weight"][0, 0] == pytest.approx(0.05, rel=1e-12)
        expected = 1.0 - 0.000625 / (np.sqrt(0.05) + 1e-6)
        assert w.values[0, 0] == pytest.approx(expected, rel=1e-12)
        assert w.values[0, 0] == pytest.approx(0.997205, abs=1e-6)
        assert np.all(w.grad == 0.0)  # grads zeroed after apply

    def test_zero_gradient_leaves_weights(self):
        net = scalar_net(2.5)
        opt = RmsProp(net, learning_rate=0.01)
        opt.acc["fc1.weight"][...] = 0.8
        opt.step()
        assert net.params()[0].weight.values[0, 0] == 2.5
        # accumulator decays by the decay factor when g = 0
        assert opt.acc["fc1.weight"][0, 0] == pytest.approx(0.8 * 0.95)

    def test_second_identical_step_is_smaller(self):
        net = scalar_net(0.0)
        opt = RmsProp(net, learning_rate=0.01)
        w = net.params()[0].weight

        def step_with_unit_grad():
            before = w.values[0, 0]
            w.grad[...] = 1.0
            opt.step()
            return abs(w.values[0, 0] - before)

        first = step_with_unit_grad()
        second = step_with_unit_grad()
        assert second < first  # accumulator grows, update shrinks

    def test_zero_learning_rate_never_moves(self):
        net = build_network("desk", (24, 24, 4), 3, dueling=True)
        init_params(net, 0)
        opt = RmsProp(net, learning_rate=0.0)
        before = {n: t.values.copy() for n, t in net.named_tensors()}
        for _ in range(3):
            for _, t in net.named_tensors():
                t.grad[...] = np.random.default_rng(1).random(t.shape)
            opt.step()
        for n, t in net.named_tensors():
            np.testing.assert_array_equal(t.values, before[n])

    def test_update_opposes_gradient(self):
        # sum(g * delta_w) <= 0 for random gradients.
        rng = np.random.default_rng(5)
        net = build_network("desk", (24, 24, 4), 3, dueling=False,
                            dtype=np.float64)
        init_params(net, 1)
        opt = RmsProp(net, learning_rate=0.01)
        for _ in range(5):
            grads = {}
            for n, t in net.named_tensors():
                g = rng.standard_normal(t.shape)
                t.grad[...] = g
                grads[n] = g
            before = {n: t.values.copy() for n, t in net.named_tensors()}
            opt.step()
            inner = sum(float(np.sum(grads[n] * (t.values - before[n])))
                        for n, t in net.named_tensors())
            assert inner <= 0.0

    def test_non_finite_grad_aborts(self):
        net = scalar_net(1.0)
        opt = RmsProp(net)
        net.params()[0].weight.grad[...] = np.nan
        with pytest.raises(NonFiniteError, match="fc1.weight"):
            opt.step()

    def test_accumulators_stay_nonnegative(self):
        rng = np.random.default_rng(9)
        net = scalar_net(0.0)
        opt = RmsProp(net, learning_rate=0.1)
        for _ in range(50):
            net.params()[0].weight.grad[...] = rng.standard_normal()
            opt.step()
            assert all(np.all(a >= 0.0) for a in opt.acc.values())


class TestClipGradients:
    def test_below_threshold_untouched(self):
        net = scalar_net(0.0)
        net.params()[0].weight.grad[...] = 0.5
        norm = clip_gradients(net, 1.0)
        assert norm == pytest.approx(0.5)
        assert net.params()[0].weight.grad[0, 0] == 0.5

    def test_three_four_five(self):
        net = Network([make_layer(LayerSpec.linear(2), "fc1")], (1,),
                      dtype=np.float64)
        net.params()[0].weight.values[...] = 0.0
        net.params()[0].weight.grad[...] = [[3.0, 4.0]]
        norm = clip_gradients(net, 1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(net.params()[0].weight.grad,
                                   [[0.6, 0.8]], rtol=1e-6)

    def test_post_clip_norm_bounded(self):
        rng = np.random.default_rng(3)
        net = build_network("desk", (24, 24, 4), 3, dueling=True,
                            dtype=np.float64)
        for _, t in net.named_tensors():
            t.grad[...] = rng.standard_normal(t.shape) * 10.0
        clip_gradients(net, 1.0)
        total = sum(float(np.sum(t.grad.astype(np.float64) ** 2))
                    for _, t in net.named_tensors())
        assert np.sqrt(total) <= 1.0 + 1e-9


class TestSyncTarget:
    def build_pair(self):
        a = build_network("desk", (24, 24, 4), 3, dueling=True)
        b = build_network("desk", (24, 24, 4), 3, dueling=True)
        init_params(a, 11)
        init_params(b, 22)
        return a, b

    def test_outputs_coincide_after_sync(self):
        online, target = self.build_pair()
        sync_target(online, target)
        x = np.random.default_rng(0).random((4, 24, 24, 4), dtype=np.float32)
        np.testing.assert_array_equal(online.forward(x).copy(),
                                      target.forward(x))

    def test_bit_identical_params(self):
        online, target = self.build_pair()
        sync_target(online, target)
        for (_, src), (_, dst) in zip(online.named_tensors(),
                                      target.named_tensors()):
            np.testing.assert_array_equal(src.values, dst.values)

    def test_target_frozen_while_online_trains(self):
        online, target = self.build_pair()
        sync_target(online, target)
        x = np.random.default_rng(1).random((2, 24, 24, 4), dtype=np.float32)
        frozen = target.forward(x).copy()
        opt = RmsProp(online, learning_rate=0.05)
        for _ in range(3):
            online.forward(x)
            online.backward(np.ones((2, 3), dtype=np.float32))
            online.calculate_gradient()
            opt.step()
        np.testing.assert_array_equal(target.forward(x), frozen)
        assert not np.array_equal(online.forward(x).copy(), frozen)

    def test_registry_mismatch_rejected(self):
        from deepq.errors import GeometryError
        dueling = build_network("desk", (24, 24, 4), 3, dueling=True)
        plain = build_network("desk", (24, 24, 4), 3, dueling=False)
        with pytest.raises(GeometryError):
            sync_target(dueling, plain)
