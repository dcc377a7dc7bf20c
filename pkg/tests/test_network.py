import numpy as np
import pytest

from advrecon.errors import FormatError
from advrecon.measurement import gen_gaussian_operator
from advrecon.neural import (
    Adam,
    Mlp,
    MlpReconstructor,
    PerturbationGenerator,
    checkpoint_load,
    checkpoint_save,
    hinge_penalty,
    orthogonality_gap,
    parseval_penalty,
    reconstruct,
)
from advrecon.neural.checkpoint import decode_network, encode_network

from conftest import assert_grad_close, fd_gradient


def _perturbed(net, rng):
    # random biases so no unit sits exactly at the ReLU kink
    for W, b in net.weights:
        b += 0.1 * rng.standard_normal(b.shape)
    return net


class TestMlp:
    def test_default_activations(self):
        assert MlpReconstructor([4, 8, 4]).activations == ["relu", "tanh"]
        assert PerturbationGenerator([3, 5, 5, 3]).activations == ["relu", "relu", "linear"]

    def test_weight_shapes(self):
        net = Mlp([3, 5, 2])
        assert [W.shape for W, _ in net.weights] == [(5, 3), (2, 5)]
        assert all(not b.any() for _, b in net.weights)

    def test_forward_by_hand(self):
        W1 = np.array([[1.0, -1.0], [0.5, 2.0]])
        W2 = np.array([[1.0, 1.0]])
        net = Mlp([2, 2, 1], [(W1, np.zeros(2)), (W2, np.array([0.5]))], ["relu", "linear"])
        # hidden = relu([1 - 2, 0.5 + 4]) = [0, 4.5]
        assert net.forward(np.array([1.0, 2.0])) == pytest.approx([5.0])

    def test_tanh_output_bounded(self, rng):
        net = MlpReconstructor([5, 16, 5], seed=0)
        out = net.forward(100 * rng.standard_normal((10, 5)))
        assert np.all(np.abs(out) <= 1)

    def test_input_width_checked(self):
        with pytest.raises(ValueError):
            Mlp([3, 2]).forward(np.zeros(4))

    @pytest.mark.parametrize("args", [([3],), ([3, 0, 2],), ([3, 2], None, ["sigmoid"]),
                                      ([3, 2], [(np.zeros((3, 2)), np.zeros(2))])])
    def test_construction_errors(self, args):
        with pytest.raises(ValueError):
            Mlp(*args)

    def test_seeded_init(self):
        a, b = Mlp([4, 6, 2], seed=5), Mlp([4, 6, 2], seed=5)
        assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))

    def test_copy_is_independent(self):
        net = Mlp([2, 3, 1])
        dup = net.copy()
        dup.weights[0][0][0, 0] += 1
        assert net.weights[0][0][0, 0] != dup.weights[0][0][0, 0]

    @pytest.mark.parametrize("cls,dims", [(MlpReconstructor, [4, 6, 5, 4]), (PerturbationGenerator, [3, 5, 5, 3]),
                                          (Mlp, [3, 4, 2])])
    def test_parameter_gradients(self, rng, cls, dims):
        net = _perturbed(cls(dims, seed=1), rng)
        X = rng.standard_normal((5, dims[0]))
        G = rng.standard_normal((5, dims[-1]))
        out, cache = net.forward(X, return_cache=True)
        grads, _ = net.backward(cache, G)
        for k, p in enumerate(net.parameters()):
            def f(v, p=p):
                saved = p.copy()
                p[...] = v
                val = float(np.sum(G * net.forward(X)))
                p[...] = saved
                return val
            assert_grad_close(grads[k], fd_gradient(f, p.copy()))

    def test_input_gradient(self, rng):
        net = _perturbed(MlpReconstructor([4, 6, 4], seed=2), rng)
        x = rng.standard_normal(4)
        g = rng.standard_normal(4)
        _, cache = net.forward(x, return_cache=True)
        _, gin = net.backward(cache, g)
        assert_grad_close(gin, fd_gradient(lambda v: float(g @ net.forward(v)), x))

    def test_relu_derivative_at_zero_is_zero(self):
        net = Mlp([1, 1, 1], [(np.ones((1, 1)), np.zeros(1)), (np.ones((1, 1)), np.zeros(1))], ["relu", "linear"])
        _, cache = net.forward(np.zeros((1, 1)), return_cache=True)
        _, gin = net.backward(cache, np.ones((1, 1)))
        assert gin[0, 0] == 0.0

    def test_reconstruct_uses_back_projection(self, rng):
        A = gen_gaussian_operator(3, 4, seed=0)
        net = MlpReconstructor([4, 5, 4], seed=0)
        Y = rng.standard_normal((2, 3))
        np.testing.assert_allclose(reconstruct(net, A, Y), net.forward(Y @ A.entries))
        with pytest.raises(ValueError):
            reconstruct(net, A, np.zeros((2, 4)))


class TestPenalties:
    def test_hinge_inside_ball(self):
        v, g = hinge_penalty(np.array([[0.3, 0.4]]), 1.0)
        assert v[0] == 0 and not g.any()

    def test_hinge_outside_ball(self):
        v, g = hinge_penalty(np.array([[3.0, 4.0]]), 2.0)
        assert v[0] == pytest.approx(25 - 4)
        np.testing.assert_allclose(g, [[6.0, 8.0]])

    def test_hinge_gradient(self, rng):
        d = 2 * rng.standard_normal(5)
        _, g = hinge_penalty(d, 1.0)
        assert_grad_close(g, fd_gradient(lambda x: float(hinge_penalty(x, 1.0)[0]), d))

    def test_parseval_zero_on_orthonormal_columns(self):
        Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 3)))
        net = Mlp([3, 5], [(Q, np.zeros(5))], ["linear"])
        value, _ = parseval_penalty(net, 1.0)
        assert value == pytest.approx(0, abs=1e-24)
        assert orthogonality_gap(net) == pytest.approx(0, abs=1e-12)

    def test_parseval_value(self):
        net = Mlp([2, 2], [(2 * np.eye(2), np.zeros(2))], ["linear"])
        # W^T W - I = 3 I, squared Frobenius norm 18
        assert parseval_penalty(net, 0.5)[0] == pytest.approx(0.25 * 18)
        assert orthogonality_gap(net) == pytest.approx(np.sqrt(18))

    def test_parseval_gradient(self, rng):
        net = Mlp([3, 4, 2], seed=0)
        _, grads = parseval_penalty(net, 0.7)
        for k, p in enumerate(net.parameters()):
            def f(v, p=p):
                saved = p.copy()
                p[...] = v
                val = parseval_penalty(net, 0.7)[0]
                p[...] = saved
                return val
            num = fd_gradient(f, p.copy())
            if k % 2:
                assert not grads[k].any() and not num.any()
            else:
                assert_grad_close(grads[k], num)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        p = np.array([1.0, -2.0])
        Adam([p], learning_rate=0.1).step([p], [np.array([3.0, -0.5])])
        np.testing.assert_allclose(p, [0.9, -1.9], atol=1e-8)

    def test_maximize(self):
        p = np.array([0.0])
        Adam([p], learning_rate=0.1).step([p], [np.array([1.0])], maximize=True)
        assert p[0] == pytest.approx(0.1, abs=1e-8)

    def test_minimizes_quadratic(self):
        p = np.array([5.0, -3.0])
        opt = Adam([p], learning_rate=0.05, beta1=0.9)
        for _ in range(2000):
            opt.step([p], [2 * p])
        assert np.linalg.norm(p) < 1e-2


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = MlpReconstructor([4, 6, 4], seed=3)
        checkpoint_save(net, tmp_path / "f.net")
        back = checkpoint_load(tmp_path / "f.net")
        assert isinstance(back, MlpReconstructor)
        assert back.layer_dims == net.layer_dims and back.activations == net.activations
        assert all(np.array_equal(p, q) for p, q in zip(net.parameters(), back.parameters()))

    def test_generator_type(self):
        assert isinstance(decode_network(encode_network(PerturbationGenerator([2, 3, 2]))), PerturbationGenerator)

    def test_layout(self):
        net = Mlp([2, 1], [(np.array([[1.0, 2.0]]), np.array([3.0]))], ["tanh"])
        data = encode_network(net)
        assert data[:13] == b"ADVRECON-NET\0"
        assert data[13] == 1
        assert int.from_bytes(data[14:22], "little") == 1
        assert [int.from_bytes(data[22 + 8 * i:30 + 8 * i], "little") for i in range(2)] == [2, 1]
        assert data[38] == 1
        assert np.frombuffer(data[39:], "<f8").tolist() == [1.0, 2.0, 3.0]

    def test_bad_magic(self):
        data = bytearray(encode_network(Mlp([2, 1])))
        data[:4] = b"JUNK"
        with pytest.raises(FormatError, match="magic"):
            decode_network(bytes(data))

    def test_version_mismatch(self):
        data = bytearray(encode_network(Mlp([2, 1])))
        data[13] = 2
        with pytest.raises(FormatError, match="version"):
            decode_network(bytes(data))

    def test_truncated(self):
        data = encode_network(Mlp([3, 4, 2]))
        for cut in (10, 20, 40, len(data) - 8):
            with pytest.raises(FormatError):
                decode_network(data[:cut])

    def test_unknown_activation(self):
        data = bytearray(encode_network(Mlp([2, 1])))
        data[38] = 9
        with pytest.raises(FormatError, match="activation"):
            decode_network(bytes(data))
