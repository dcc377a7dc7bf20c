"""Fully-connected networks with hand-written reverse-mode gradients.

Batches are stored row-wise: a layer computes ``h = x @ W.T + b`` with ``W``
of shape ``(out, in)``. The ReLU derivative at exactly zero is taken as 0.
"""

import numpy as np

ACTIVATION_TAGS = {"relu": 0, "tanh": 1, "linear": 2}


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name, z, a, upstream):
    if name == "relu":
        return upstream * (z > 0)
    if name == "tanh":
        return upstream * (1.0 - a * a)
    return upstream


class Mlp:
    """Multilayer perceptron; ``activations[i]`` follows weight layer ``i``."""

    output_activation = "linear"

    def __init__(self, layer_dims, weights=None, activations=None, seed=0):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2 or min(layer_dims) < 1:
            raise ValueError("need at least an input and an output dimension, all positive")
        self.layer_dims = layer_dims
        n_layers = len(layer_dims) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + [self.output_activation]
        if len(activations) != n_layers or any(a not in ACTIVATION_TAGS for a in activations):
            raise ValueError("need one known activation per layer, got %r" % (activations,))
        self.activations = list(activations)
        if weights is None:
            weights = self._init_weights(np.random.default_rng(seed))
        self.weights = []
        for i, (W, b) in enumerate(weights):
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if W.shape != (layer_dims[i + 1], layer_dims[i]) or b.shape != (layer_dims[i + 1],):
                raise ValueError("layer %d has shapes %s/%s, expected (%d, %d)/(%d,)" % (
                    i, W.shape, b.shape, layer_dims[i + 1], layer_dims[i], layer_dims[i + 1]))
            self.weights.append((W, b))
        if len(self.weights) != n_layers:
            raise ValueError("expected %d weight layers, got %d" % (n_layers, len(self.weights)))

    def _init_weights(self, rng):
        out = []
        for fan_in, fan_out, act in zip(self.layer_dims[:-1], self.layer_dims[1:], self.activations):
            scale = np.sqrt((2.0 if act == "relu" else 1.0) / fan_in)
            out.append((rng.normal(0.0, scale, size=(fan_out, fan_in)), np.zeros(fan_out)))
        return out

    @property
    def n_inputs(self):
        return self.layer_dims[0]

    @property
    def n_outputs(self):
        return self.layer_dims[-1]

    def copy(self):
        return type(self)(self.layer_dims, [(W.copy(), b.copy()) for W, b in self.weights],
                          self.activations)

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        return [p for pair in self.weights for p in pair]

    def forward(self, X, return_cache=False):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_inputs:
            raise ValueError("input width %d does not match network input %d" % (X.shape[-1], self.n_inputs))
        a = X
        cache = []
        for (W, b), act in zip(self.weights, self.activations):
            z = a @ W.T + b
            out = _activate(act, z)
            cache.append((a, z, out))
            a = out
        return (a, cache) if return_cache else a

    __call__ = forward

    def backward(self, cache, grad_out):
        """Gradients of ``sum(grad_out * output)``.

        Returns ``(grads, grad_input)`` where ``grads`` mirrors :meth:`parameters`.
        """
        upstream = np.asarray(grad_out, dtype=np.float64)
        grads = []
        for (W, _), act, (a_in, z, a_out) in zip(reversed(self.weights), reversed(self.activations),
                                                 reversed(cache)):
            dz = _activation_grad(act, z, a_out, upstream)
            if dz.ndim == 1:
                grads.append((np.outer(dz, a_in), dz.copy()))
            else:
                grads.append((dz.T @ a_in, dz.sum(axis=0)))
            upstream = dz @ W
        grads.reverse()
        return [g for pair in grads for g in pair], upstream


class MlpReconstructor(Mlp):
    """Maps the back-projection ``A^T y`` to a signal estimate in [-1, 1]."""

    output_activation = "tanh"


class PerturbationGenerator(Mlp):
    """Maps a measurement ``y`` to an additive measurement perturbation."""

    output_activation = "linear"


def reconstruct(f, A, Y):
    """``x_hat = f(A^T y)`` row-wise."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[-1] != A.m:
        raise ValueError("measurement length %d does not match operator m=%d" % (Y.shape[-1], A.m))
    return f.forward(Y @ A.entries)


def hinge_penalty(delta, epsilon):
    """``max(0, ||delta||^2 - eps^2)`` per row, with its gradient in ``delta``."""
    delta = np.asarray(delta, dtype=np.float64)
    sq = np.sum(delta * delta, axis=-1)
    active = sq > epsilon ** 2
    value = np.where(active, sq - epsilon ** 2, 0.0)
    grad = 2.0 * delta * active[..., None]
    return value, grad


def parseval_penalty(net, beta):
    """``beta/2 * sum ||W^T W - I||_F^2`` over all layers, with gradients."""
    value = 0.0
    grads = []
    for W, b in net.weights:
        gram_err = W.T @ W - np.eye(W.shape[1])
        value += 0.5 * beta * float(np.sum(gram_err ** 2))
        grads.extend([2.0 * beta * (W @ gram_err), np.zeros_like(b)])
    return value, grads


def orthogonality_gap(net):
    """``sqrt(sum ||W^T W - I||_F^2)``: how far the layers are from Parseval frames."""
    return float(np.sqrt(sum(np.sum((W.T @ W - np.eye(W.shape[1])) ** 2) for W, _ in net.weights)))


class Adam:
    def __init__(self, params, learning_rate=1e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, maximize=False):
        """In-place update of ``params``; ascent when ``maximize`` is set."""
        self.t += 1
        sign = 1.0 if maximize else -1.0
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p += sign * self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)
