"""scikit-learn style wrappers around the reconstructors.

All estimators take the measurement operator as a constructor parameter.
``fit(X)`` receives clean signals row-wise, shape ``(n_samples, n)``;
``predict(Y)`` maps measurements, shape ``(n_samples, m)``, back to signals.
``score(Y, X)`` is the negative mean squared reconstruction error per sample,
so larger is better. Fitted estimators also expose ``reconstruct`` and
``input_gradient`` and can be passed directly to the attack functions.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .data import DataSource, Dataset
from .linear import LinearTrainConfig, train_minmax_linear
from .neural import (
    AdvTrainConfig,
    BaselineConfig,
    MlpReconstructor,
    OptimizerSettings,
    PerturbationGenerator,
    adv_train,
    train_baseline,
)
from .theory import robust_linear_reconstructor


def _check_operator(operator):
    if operator is None or not hasattr(operator, "entries"):
        raise ValueError("estimator needs a MeasurementOperator as `operator`")
    return operator


class _ReconstructorMixin:
    def _check_measurements(self, Y):
        Y = check_array(Y)
        if Y.shape[1] != self.operator.m:
            raise ValueError("measurements have %d entries, operator has m=%d" % (Y.shape[1], self.operator.m))
        return Y

    def _check_signals(self, X):
        X = check_array(X)
        if X.shape[1] != self.operator.n:
            raise ValueError("signals have %d entries, operator has n=%d" % (X.shape[1], self.operator.n))
        return X

    def reconstruct(self, Y):
        return self.predict(Y)

    def score(self, Y, X):
        X = self._check_signals(X)
        err = self.predict(Y) - X
        return -float(np.mean(np.sum(err * err, axis=1)))


class _LinearReconstructor(_ReconstructorMixin, BaseEstimator):
    def predict(self, Y):
        check_is_fitted(self, "B_")
        return self._check_measurements(Y) @ self.B_.T

    def input_gradient(self, Y, grad_out):
        check_is_fitted(self, "B_")
        return np.asarray(grad_out, dtype=np.float64) @ self.B_


class RobustLinearReconstructor(_LinearReconstructor):
    """Closed-form minimizer of ``E||B A x - x||^2 + lam * max_{||d||<=eps} E||B(A x + d) - x||^2``
    for white signals. ``fit`` only validates ``X``; the solution depends on the operator alone."""

    def __init__(self, operator=None, lam=1.0, epsilon=0.1):
        self.operator = operator
        self.lam = lam
        self.epsilon = epsilon

    def fit(self, X=None, y=None):
        A = _check_operator(self.operator)
        if X is not None:
            self._check_signals(X)
        self.solution_ = robust_linear_reconstructor(A, self.lam, self.epsilon)
        self.B_ = self.solution_.B
        return self


class MinMaxLinearReconstructor(_LinearReconstructor):
    """Linear reconstructor trained by momentum SGD on the min-max loss."""

    def __init__(self, operator=None, lam=1.0, epsilon=0.1, learning_rate=1e-3, momentum=0.9, epochs=200,
                 batch_size=128, seed=0, cross_term="expected"):
        self.operator = operator
        self.lam = lam
        self.epsilon = epsilon
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.cross_term = cross_term

    def fit(self, X, y=None):
        A = _check_operator(self.operator)
        X = self._check_signals(X)
        cfg = LinearTrainConfig(self.lam, self.epsilon, self.learning_rate, self.momentum, self.epochs,
                                self.batch_size, self.seed, self.cross_term)
        result = train_minmax_linear(A, X, cfg)
        self.B_ = result.B
        self.loss_history_ = result.loss_history
        return self


class _MlpEstimator(_ReconstructorMixin, BaseEstimator):
    def _new_network(self):
        n = self.operator.n
        return MlpReconstructor([n, *self.hidden, n], seed=self.init_seed)

    def _image_dataset(self, X):
        # the tanh output covers [-1, 1]; signals outside are legal but unreachable
        src = DataSource.MNIST if X.min() >= -1 and X.max() <= 1 else DataSource.SYNTHETIC_GAUSSIAN
        return Dataset(X, src)

    def predict(self, Y):
        check_is_fitted(self, "network_")
        return self.network_.forward(self._check_measurements(Y) @ self.operator.entries)

    def input_gradient(self, Y, grad_out):
        check_is_fitted(self, "network_")
        _, cache = self.network_.forward(np.asarray(Y, dtype=np.float64) @ self.operator.entries,
                                         return_cache=True)
        _, g = self.network_.backward(cache, grad_out)
        return g @ self.operator.entries.T


class AdversarialMLPReconstructor(_MlpEstimator):
    """MLP on ``A^T y`` trained jointly with a perturbation generator."""

    def __init__(self, operator=None, hidden=(256, 256), generator_hidden=(64, 64, 64, 64), lambda1=1.0,
                 lambda2=-0.1, epsilon=2.0, K=4, learning_rate=1e-4, generator_learning_rate=None,
                 adam_beta1=0.5, adam_beta2=0.999, batch_size=128, epochs=50, warmup_epochs=None, seed=0,
                 init_seed=0):
        self.operator = operator
        self.hidden = hidden
        self.generator_hidden = generator_hidden
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.epsilon = epsilon
        self.K = K
        self.learning_rate = learning_rate
        self.generator_learning_rate = generator_learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.batch_size = batch_size
        self.epochs = epochs
        self.warmup_epochs = warmup_epochs
        self.seed = seed
        self.init_seed = init_seed

    def fit(self, X, y=None):
        A = _check_operator(self.operator)
        X = self._check_signals(X)
        cfg = AdvTrainConfig(
            lambda1=self.lambda1, lambda2=self.lambda2, epsilon=self.epsilon, K=self.K,
            adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2, learning_rate=self.learning_rate,
            batch_size=self.batch_size, epochs=self.epochs, warmup_epochs=self.warmup_epochs, seed=self.seed,
            generator_learning_rate=self.generator_learning_rate,
        )
        f = self._new_network()
        G = PerturbationGenerator([A.m, *self.generator_hidden, A.m], seed=self.init_seed + 1)
        self.network_, self.generator_, self.history_ = adv_train(f, G, A, self._image_dataset(X), cfg)
        return self


class BaselineMLPReconstructor(_MlpEstimator):
    """MLP on ``A^T y`` trained on the clean loss, optionally with weight decay or a Parseval penalty."""

    def __init__(self, operator=None, hidden=(256, 256), variant="plain", mu=0.0, beta=0.0, learning_rate=1e-4,
                 adam_beta1=0.5, adam_beta2=0.999, batch_size=128, epochs=50, seed=0, init_seed=0):
        self.operator = operator
        self.hidden = hidden
        self.variant = variant
        self.mu = mu
        self.beta = beta
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.init_seed = init_seed

    def fit(self, X, y=None):
        A = _check_operator(self.operator)
        X = self._check_signals(X)
        variant = BaselineConfig(self.variant, self.mu, self.beta)
        settings = OptimizerSettings(self.learning_rate, self.adam_beta1, self.adam_beta2, self.batch_size,
                                     self.epochs, self.seed)
        self.network_, self.history_ = train_baseline(self._new_network(), A, self._image_dataset(X), variant,
                                                      settings)
        return self
