"""Adversarial (generator-based) and baseline training of MLP reconstructors."""

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..reporting import write_csv
from .network import Adam, hinge_penalty, parseval_penalty

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class AdvTrainConfig:
    """Settings for alternating reconstructor/generator training.

    ``warmup_epochs=None`` means 10% of ``epochs``. ``generator_learning_rate``
    defaults to ``learning_rate``.
    """

    lambda1: float = 1.0
    lambda2: float = -0.1
    epsilon: float = 2.0
    K: int = 4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    learning_rate: float = 1e-4
    batch_size: int = 128
    epochs: int = 50
    warmup_epochs: int = None
    seed: int = 0
    generator_learning_rate: float = None

    def __post_init__(self):
        if not self.lambda1 >= 0:
            raise ValueError("lambda1 must be non-negative")
        if not self.lambda2 < 0:
            raise ValueError("lambda2 must be negative to enforce the perturbation budget")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.K < 1 or self.batch_size % self.K:
            raise ValueError("K=%d must divide batch_size=%d" % (self.K, self.batch_size))
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.warmup_epochs is None:
            object.__setattr__(self, "warmup_epochs", self.epochs // 10)
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be non-negative")
        if self.generator_learning_rate is None:
            object.__setattr__(self, "generator_learning_rate", self.learning_rate)


class BaselineVariant(str, enum.Enum):
    PLAIN = "plain"
    WEIGHT_DECAY = "weight_decay"
    PARSEVAL = "parseval"


@dataclass(frozen=True)
class BaselineConfig:
    variant: BaselineVariant = BaselineVariant.PLAIN
    mu: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", BaselineVariant(self.variant))
        if self.mu < 0 or self.beta < 0:
            raise ValueError("mu and beta must be non-negative")
        # a zero coefficient is allowed so that weight_decay with mu=0 reproduces plain
        if self.mu > 0 and self.variant != BaselineVariant.WEIGHT_DECAY:
            raise ValueError("mu > 0 requires the weight_decay variant")
        if self.beta > 0 and self.variant != BaselineVariant.PARSEVAL:
            raise ValueError("beta > 0 requires the parseval variant")

    @classmethod
    def with_default_strength(cls, variant):
        variant = BaselineVariant(variant)
        if variant == BaselineVariant.WEIGHT_DECAY:
            return cls(variant, mu=1e-5)
        if variant == BaselineVariant.PARSEVAL:
            return cls(variant, beta=1e-5)
        return cls(variant)


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0


@dataclass
class TrainHistory:
    clean_loss: list = field(default_factory=list)
    adv_loss: list = field(default_factory=list)
    gen_norm_mean: list = field(default_factory=list)
    generator_updates: int = 0
    reconstructor_updates: int = 0

    def to_csv(self, path, provenance=None):
        rows = [
            (epoch, c, a, g)
            for epoch, (c, a, g) in enumerate(zip(self.clean_loss, self.adv_loss, self.gen_norm_mean))
        ]
        return write_csv(path, [(("epoch", "clean_loss", "adv_loss", "gen_norm_mean"), rows)], provenance)


def _check_finite(loss, where):
    if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
        raise DivergenceError("loss %.3g at %s" % (loss, where))


def reconstruction_loss(f, A, X, Y):
    """Mean over rows of ``||f(A^T y) - x||^2``; returns ``(loss, param grads, grad wrt y)``."""
    out, cache = f.forward(Y @ A.entries, return_cache=True)
    err = out - X
    N = X.shape[0]
    loss = float(np.sum(err * err) / N)
    grads, g_in = f.backward(cache, 2.0 * err / N)
    return loss, grads, g_in @ A.entries.T


def generator_objective(f, G, A, X, Y, lambda1, lambda2, epsilon):
    """Ascent objective of the generator and its gradient in the generator weights.

    ``lambda1 * mean||f(A^T(y + G(y))) - x||^2 + lambda2 * mean hinge(G(y))``.
    """
    delta, g_cache = G.forward(Y, return_cache=True)
    N = X.shape[0]
    adv, _, g_y = reconstruction_loss(f, A, X, Y + delta)
    hinge, hinge_grad = hinge_penalty(delta, epsilon)
    value = lambda1 * adv + lambda2 * float(hinge.mean())
    g_delta = lambda1 * g_y + lambda2 * hinge_grad / N
    grads, _ = G.backward(g_cache, g_delta)
    return value, grads, delta


def _reconstructor_step_loss(f, A, X, Y, delta, lambda1):
    clean, grads, _ = reconstruction_loss(f, A, X, Y)
    if delta is None or lambda1 == 0:
        return clean, 0.0, grads
    adv, adv_grads, _ = reconstruction_loss(f, A, X, Y + delta)
    return clean, adv, [g + lambda1 * h for g, h in zip(grads, adv_grads)]


def adv_train(f, G, A, dataset, cfg, history=None):
    """Alternating min-max training of reconstructor ``f`` and generator ``G``.

    Each mini-batch is split into ``K`` parts. For every part the generator takes
    one Adam ascent step with ``f`` frozen and then emits perturbations for that
    part; ``f`` then takes one Adam step on the clean plus perturbed loss over the
    whole batch. The generator state carries over to the next batch. During the
    warm-up epochs only the clean loss trains ``f`` and ``G`` is left untouched.
    Networks are updated in place and returned together with the history.
    """
    X = dataset.samples
    if X.shape[1] != A.n or f.n_inputs != A.n or G.n_inputs != A.m or G.n_outputs != A.m:
        raise ValueError("network shapes do not match the operator")
    rng = np.random.default_rng(cfg.seed)
    opt_f = Adam(f.parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    opt_g = Adam(G.parameters(), cfg.generator_learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    history = history or TrainHistory()
    N = X.shape[0]
    bs = cfg.batch_size
    if N < bs:
        raise ValueError("dataset has %d samples, fewer than one batch of %d" % (N, bs))
    part = bs // cfg.K
    for epoch in range(cfg.epochs):
        warm = epoch < cfg.warmup_epochs
        perm = rng.permutation(N)
        sums = np.zeros(3)
        n_batches = N // bs
        for b in range(n_batches):
            xb = X[perm[b * bs:(b + 1) * bs]]
            yb = xb @ A.entries.T
            delta = None
            if not warm:
                pieces = []
                for k in range(cfg.K):
                    xk, yk = xb[k * part:(k + 1) * part], yb[k * part:(k + 1) * part]
                    _, g_grads, _ = generator_objective(f, G, A, xk, yk, cfg.lambda1, cfg.lambda2, cfg.epsilon)
                    opt_g.step(G.parameters(), g_grads, maximize=True)
                    history.generator_updates += 1
                    pieces.append(G.forward(yk))
                delta = np.vstack(pieces)
            clean, adv, grads = _reconstructor_step_loss(f, A, xb, yb, delta, cfg.lambda1)
            _check_finite(clean + cfg.lambda1 * adv, "epoch %d batch %d" % (epoch, b))
            opt_f.step(f.parameters(), grads)
            history.reconstructor_updates += 1
            norm = 0.0 if delta is None else float(np.linalg.norm(delta, axis=1).mean())
            sums += (clean, adv, norm)
        sums /= n_batches
        history.clean_loss.append(float(sums[0]))
        history.adv_loss.append(float(sums[1]))
        history.gen_norm_mean.append(float(sums[2]))
    return f, G, history


def train_baseline(f, A, dataset, variant, settings=OptimizerSettings()):
    """Clean-loss training with optional weight decay or Parseval penalty."""
    X = dataset.samples
    if X.shape[1] != A.n or f.n_inputs != A.n:
        raise ValueError("network shapes do not match the operator")
    rng = np.random.default_rng(settings.seed)
    opt = Adam(f.parameters(), settings.learning_rate, settings.adam_beta1, settings.adam_beta2)
    history = TrainHistory()
    N = X.shape[0]
    bs = settings.batch_size
    if N < bs:
        raise ValueError("dataset has %d samples, fewer than one batch of %d" % (N, bs))
    for epoch in range(settings.epochs):
        perm = rng.permutation(N)
        total = 0.0
        n_batches = N // bs
        for b in range(n_batches):
            xb = X[perm[b * bs:(b + 1) * bs]]
            loss, grads, _ = reconstruction_loss(f, A, xb, xb @ A.entries.T)
            penalty = 0.0
            if variant.variant == BaselineVariant.WEIGHT_DECAY:
                params = f.parameters()
                penalty = variant.mu * sum(float(np.sum(p * p)) for p in params)
                grads = [g + 2.0 * variant.mu * p for g, p in zip(grads, params)]
            elif variant.variant == BaselineVariant.PARSEVAL:
                penalty, p_grads = parseval_penalty(f, variant.beta)
                grads = [g + h for g, h in zip(grads, p_grads)]
            _check_finite(loss + penalty, "epoch %d batch %d" % (epoch, b))
            opt.step(f.parameters(), grads)
            history.reconstructor_updates += 1
            total += loss
        history.clean_loss.append(total / n_batches)
        history.adv_loss.append(float("nan"))
        history.gen_norm_mean.append(float("nan"))
    return f, history
