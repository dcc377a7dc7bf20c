"""Training a linear reconstructor ``x_hat = B y`` with the common-perturbation min-max loss."""

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, measure
from .errors import DivergenceError
from .reporting import write_csv
from .theory import worst_case_delta_linear

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class LinearTrainConfig:
    """Hyperparameters of the linear min-max run.

    ``cross_term`` picks the estimator of the adversarial term:
    ``"expected"`` drops ``2 lam (B delta)^T (B A x - x)``, whose expectation is
    zero for zero-mean signals, while ``"sampled"`` keeps its mini-batch value.
    """

    lam: float = 1.0
    epsilon: float = 0.1
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    cross_term: str = "expected"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.cross_term not in ("expected", "sampled"):
            raise ValueError("cross_term must be 'expected' or 'sampled'")


@dataclass
class LinearTrainResult:
    B: np.ndarray
    loss_history: list = field(default_factory=list)

    def history_csv(self, path, provenance=None):
        rows = [(i, loss) for i, loss in enumerate(self.loss_history)]
        return write_csv(path, [(("epoch", "loss"), rows)], provenance)


@dataclass(frozen=True)
class LinearComparisonReport:
    rel_frobenius: float
    rel_spectral: float
    identity_ratio: float
    kappa_theory: float
    kappa_trained: float

    def as_rows(self):
        return [
            ("rel_frobenius", self.rel_frobenius),
            ("rel_spectral", self.rel_spectral),
            ("identity_ratio", self.identity_ratio),
            ("kappa_theory", self.kappa_theory),
            ("kappa_trained", self.kappa_trained),
        ]

    def to_csv(self, path, provenance=None):
        return write_csv(path, [(("metric", "value"), self.as_rows())], provenance)


def minmax_linear_loss(B, X, Y, lam, delta, cross_term="sampled"):
    """Mini-batch loss and its gradient in ``B`` with ``delta`` held fixed.

    ``X`` holds signals row-wise and ``Y`` the matching clean measurements.
    """
    N = X.shape[0]
    clean = Y @ B.T - X
    if cross_term == "expected":
        Bd = B @ delta
        loss = (1.0 + lam) * np.sum(clean ** 2) / N + lam * Bd @ Bd
        grad = (2.0 * (1.0 + lam) / N) * (clean.T @ Y) + 2.0 * lam * np.outer(Bd, delta)
        return float(loss), grad
    Ya = Y + delta
    adv = Ya @ B.T - X
    loss = (np.sum(clean ** 2) + lam * np.sum(adv ** 2)) / N
    grad = (2.0 / N) * (clean.T @ Y + lam * (adv.T @ Ya))
    return float(loss), grad


def train_minmax_linear(A, data, cfg, init=None):
    """Momentum SGD on the linear min-max loss with the exact inner maximizer.

    Each step recomputes ``delta = eps * (top right singular vector of B)`` and
    treats it as a constant while differentiating.
    """
    X = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.shape[1] != A.n:
        raise ValueError("signal dimension %d does not match operator n=%d" % (X.shape[1], A.n))
    Y = measure(A, data, seed=cfg.seed) if isinstance(data, Dataset) else X @ A.entries.T
    rng = np.random.default_rng(cfg.seed)
    B = np.zeros((A.n, A.m)) if init is None else np.array(init, dtype=np.float64)
    velocity = np.zeros_like(B)
    N = X.shape[0]
    bs = min(cfg.batch_size, N)
    steps = N // bs
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(N)
        total = 0.0
        for k in range(steps):
            idx = perm[k * bs:(k + 1) * bs]
            delta = worst_case_delta_linear(B, cfg.epsilon)
            loss, grad = minmax_linear_loss(B, X[idx], Y[idx], cfg.lam, delta, cfg.cross_term)
            if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise DivergenceError("loss %.3g at epoch %d step %d" % (loss, epoch, k))
            velocity = cfg.momentum * velocity - cfg.learning_rate * grad
            B = B + velocity
            total += loss
        history.append(total / steps)
    return LinearTrainResult(B=B, loss_history=history)


def _kappa(M):
    s = np.linalg.svd(M, compute_uv=False)
    return float(s[0] / s[-1])


def compare_linear(B_hat, B_theory, A_tilde):
    B_hat = np.asarray(B_hat, dtype=np.float64)
    B_theory = np.asarray(B_theory, dtype=np.float64)
    if B_hat.shape != B_theory.shape:
        raise ValueError("shape mismatch %s vs %s" % (B_hat.shape, B_theory.shape))
    At = A_tilde.entries if hasattr(A_tilde, "entries") else np.asarray(A_tilde, dtype=np.float64)
    eye = np.eye(At.shape[1])
    diff = B_hat - B_theory
    return LinearComparisonReport(
        rel_frobenius=float(np.linalg.norm(diff) / np.linalg.norm(B_theory)),
        rel_spectral=float(np.linalg.norm(diff, 2) / np.linalg.norm(B_theory, 2)),
        identity_ratio=float(np.linalg.norm(eye - B_theory @ At) / np.linalg.norm(eye - B_hat @ At)),
        kappa_theory=_kappa(B_theory),
        kappa_trained=_kappa(B_hat),
    )
