import numpy as np
import pytest

from fgrn.errors import NotScalar, ShapeMismatch
from fgrn.gradcheck import check_gradients, numerical_grad, rel_error
from fgrn.tensor import (
    Tensor,
    backward,
    clamp,
    concat_channels,
    conv2d,
    exp,
    l1_mean,
    leaky_relu,
    no_grad,
    split_channels,
    tanh,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


class TestElementwise:
    def test_add(self):
        out = Tensor([1.0, 2.0]) + Tensor([3.0, 4.0])
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_add_zero_is_identity(self, rng):
        x = rng.standard_normal((2, 3))
        np.testing.assert_array_equal((Tensor(x) + 0).data, x)

    def test_broadcast_mismatch(self):
        with pytest.raises(ShapeMismatch):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))

    def test_mul_grad_is_other_operand(self, rng):
        a = param(rng.standard_normal((3, 4)))
        b = param(rng.standard_normal((3, 4)))
        backward((a * b).sum())
        np.testing.assert_allclose(a.grad, b.data)
        assert rel_error(a.grad, numerical_grad(lambda: (a * b).sum(), a)) < 1e-6

    def test_broadcast_grad_is_sum_reduced(self, rng):
        a = param(rng.standard_normal((2, 3, 4)))
        b = param(rng.standard_normal((1, 3, 1)))
        assert check_gradients(lambda: ((a - b) * (a + b)).sum(), [a, b]) < 1e-6
        assert b.grad.shape == b.shape

    def test_neg_and_scalar_ops(self, rng):
        a = param(rng.standard_normal(5))
        assert check_gradients(lambda: (2.0 - (-a) * 3.0 + 1.0).sum() / 4.0, [a]) < 1e-6

    def test_exp_values(self):
        assert exp(Tensor(0.0)).item() == 1.0
        np.testing.assert_allclose(exp(Tensor([np.log(2.0)])).data, [2.0])

    def test_exp_grad(self, rng):
        a = param(rng.standard_normal((3, 3)))
        assert check_gradients(lambda: exp(a).sum(), [a]) < 1e-6

    def test_tanh_grad(self, rng):
        a = param(rng.standard_normal((3, 3)))
        assert check_gradients(lambda: (tanh(a) * tanh(a)).sum(), [a]) < 1e-6

    def test_leaky_relu_values(self):
        assert leaky_relu(Tensor(2.0), 0.2).item() == 2.0
        assert leaky_relu(Tensor(-1.0), 0.2).item() == pytest.approx(-0.2)

    def test_leaky_relu_grad_away_from_zero(self, rng):
        x = rng.standard_normal(20)
        x[np.abs(x) < 0.1] += 0.5
        a = param(x)
        assert check_gradients(lambda: (leaky_relu(a, 0.2) * a).sum(), [a]) < 1e-6

    def test_clamp_grad_masks(self):
        a = param([-0.5, 0.5, 1.5])
        backward(clamp(a, 0.0, 1.0).sum())
        np.testing.assert_array_equal(a.grad, [0.0, 1.0, 0.0])


class TestChannels:
    def test_split_concat_round_trip(self, rng):
        a = Tensor(rng.standard_normal((2, 1, 3, 3)))
        b = Tensor(rng.standard_normal((2, 2, 3, 3)))
        x, y = split_channels(concat_channels([a, b]), [1, 2])
        np.testing.assert_array_equal(x.data, a.data)
        np.testing.assert_array_equal(y.data, b.data)

    def test_concat_layout(self):
        a = Tensor(np.full((1, 1, 2, 2), 7.0))
        b = Tensor(np.stack([np.full((2, 2), 1.0), np.full((2, 2), 2.0)])[None])
        out = concat_channels([a, b]).data
        assert (out[0, 0] == 7).all() and (out[0, 1] == 1).all() and (out[0, 2] == 2).all()

    def test_split_grad_routes_to_slice(self, rng):
        x = param(rng.standard_normal((1, 3, 2, 2)))
        backward(split_channels(x, [1, 2])[0].sum())
        expected = np.zeros((1, 3, 2, 2))
        expected[:, 0] = 1.0
        np.testing.assert_array_equal(x.grad, expected)

    def test_split_bad_sizes(self):
        with pytest.raises(ShapeMismatch):
            split_channels(Tensor(np.zeros((1, 3, 2, 2))), [1, 1])

    def test_concat_mismatch(self):
        with pytest.raises(ShapeMismatch):
            concat_channels([Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 2)))])

    def test_concat_grad(self, rng):
        a = param(rng.standard_normal((2, 1, 3, 3)))
        b = param(rng.standard_normal((2, 2, 3, 3)))
        w = rng.standard_normal((2, 3, 3, 3))
        assert check_gradients(lambda: (concat_channels([a, b]) * w).sum(), [a, b]) < 1e-6


class TestL1:
    def test_self_distance_zero(self, rng):
        x = Tensor(rng.standard_normal(6))
        assert l1_mean(x, x).item() == 0.0

    def test_value(self):
        assert l1_mean(Tensor([0.0, 2.0]), Tensor([1.0, 0.0])).item() == 1.5

    def test_grad(self, rng):
        a = param(rng.standard_normal(10))
        b = param(a.data + rng.choice([-1, 1], 10) * rng.uniform(0.1, 1.0, 10))
        assert check_gradients(lambda: l1_mean(a, b), [a, b]) < 1e-6

    def test_subgradient_zero(self):
        a = param([1.0, 2.0])
        b = param([1.0, 3.0])
        backward(l1_mean(a, b))
        np.testing.assert_array_equal(a.grad, [0.0, -0.5])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            l1_mean(Tensor(np.zeros(2)), Tensor(np.zeros(3)))


class TestConv:
    def test_ones_center(self):
        out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)), 1, 1)
        assert out.shape == (1, 1, 3, 3)
        assert out.data[0, 0, 1, 1] == 9.0
        assert out.data[0, 0, 0, 0] == 4.0

    def test_identity_kernel(self, rng):
        x = rng.standard_normal((2, 3, 5, 5))
        w = np.zeros((3, 3, 3, 3))
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3)), 1, 1)
        np.testing.assert_array_equal(out.data, x)

    def test_against_direct_loops(self, rng):
        x = rng.standard_normal((1, 2, 6, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, pad=1).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ho, wo = (6 + 2 - 3) // 2 + 1, (5 + 2 - 3) // 2 + 1
        ref = np.zeros((1, 3, ho, wo))
        for o in range(3):
            for i in range(ho):
                for j in range(wo):
                    ref[0, o, i, j] = (xp[0, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]).sum() + b[o]
        np.testing.assert_allclose(out, ref, atol=1e-12)

    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
    def test_grads(self, rng, stride, pad):
        x = param(rng.standard_normal((2, 3, 5, 5)))
        w = param(rng.standard_normal((4, 3, 3, 3)))
        b = param(rng.standard_normal(4))
        mix = rng.standard_normal(conv2d(x, w, b, stride, pad).shape)
        assert check_gradients(lambda: (conv2d(x, w, b, stride, pad) * mix).sum(), [x, w, b]) < 1e-5

    def test_channel_mismatch(self):
        with pytest.raises(ShapeMismatch):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


class TestBackward:
    def test_sum_grad_is_ones(self, rng):
        x = param(rng.standard_normal((2, 3)))
        backward(x.sum())
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_accumulates(self, rng):
        x = param(rng.standard_normal(4))
        w = rng.standard_normal(4)
        backward((x * w).sum())
        backward((x * w).sum())
        np.testing.assert_allclose(x.grad, 2 * w)

    def test_not_scalar(self):
        with pytest.raises(NotScalar):
            backward(param(np.ones(3)) * 2.0)

    def test_shared_subexpression_visited_once(self):
        x = param([3.0])
        y = x * x
        backward((y + y).sum())
        np.testing.assert_allclose(x.grad, [12.0])

    def test_composite_network(self, rng):
        x = param(rng.standard_normal((1, 3, 4, 4)))
        w1 = param(rng.standard_normal((4, 3, 3, 3)) * 0.3)
        w2 = param(rng.standard_normal((2, 4, 3, 3)) * 0.3)
        b1 = param(rng.standard_normal(4) * 0.1)
        target = Tensor(rng.standard_normal((1, 2, 4, 4)))

        def loss():
            h = leaky_relu(conv2d(x, w1, b1, 1, 1), 0.2)
            a, c = split_channels(h, [1, 3])
            h = concat_channels([exp(tanh(a)), c])
            return l1_mean(conv2d(h, w2, None, 1, 1), target)

        assert check_gradients(loss, [x, w1, w2, b1]) < 1e-4

    def test_no_grad_records_nothing(self):
        x = param([1.0])
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_deterministic_replay(self, rng):
        x = rng.standard_normal((1, 3, 6, 6))
        w = rng.standard_normal((3, 3, 3, 3))
        a = conv2d(Tensor(x), Tensor(w), None, 1, 1).data
        b = conv2d(Tensor(x), Tensor(w), None, 1, 1).data
        assert a.tobytes() == b.tobytes()

    def test_detach_cuts_graph(self):
        x = param([2.0])
        y = (x * 3.0).detach() * x
        backward(y.sum())
        np.testing.assert_allclose(x.grad, [6.0])
