"""Worst-case reconstruction error inside a measurement-space ball.

Models are duck-typed: anything with ``reconstruct(Y)`` and
``input_gradient(Y, grad_out)`` (the vector-Jacobian product of
``reconstruct`` at ``Y``) can be attacked. :class:`LinearModel` and
:class:`NetworkModel` adapt plain matrices and MLPs.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .reporting import write_csv


class LinearModel:
    def __init__(self, B):
        self.B = np.asarray(B, dtype=np.float64)

    def reconstruct(self, Y):
        return np.asarray(Y, dtype=np.float64) @ self.B.T

    def input_gradient(self, Y, grad_out):
        return np.asarray(grad_out, dtype=np.float64) @ self.B


class NetworkModel:
    """``x_hat = f(A^T y)`` for an MLP ``f``."""

    def __init__(self, f, A):
        self.f = f
        self.A = A

    def reconstruct(self, Y):
        return self.f.forward(np.asarray(Y, dtype=np.float64) @ self.A.entries)

    def input_gradient(self, Y, grad_out):
        _, cache = self.f.forward(np.asarray(Y, dtype=np.float64) @ self.A.entries, return_cache=True)
        _, g = self.f.backward(cache, grad_out)
        return g @ self.A.entries.T


def as_model(obj, A=None):
    if hasattr(obj, "reconstruct") and hasattr(obj, "input_gradient"):
        return obj
    if hasattr(obj, "forward") and hasattr(obj, "backward"):
        if A is None:
            raise ValueError("an operator is needed to attack a network")
        return NetworkModel(obj, A)
    return LinearModel(obj)


@dataclass(frozen=True)
class AttackConfig:
    """Projected gradient ascent with momentum; ``step_size=None`` means ``2.5 * eps / steps``."""

    epsilon: float = 1.0
    steps: int = 100
    step_size: float = None
    momentum: float = 0.9
    restarts: int = 2
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def effective_step(self):
        return self.step_size if self.step_size is not None else 2.5 * self.epsilon / self.steps

    def with_epsilon(self, epsilon):
        return AttackConfig(epsilon, self.steps, self.step_size, self.momentum, self.restarts, self.seed)


@dataclass
class RobustnessReport:
    per_sample: list = field(default_factory=list)  # (sample_id, epsilon, delta_max)
    rho_hat: dict = field(default_factory=dict)
    sample_count: int = 0
    config: AttackConfig = None

    def to_csv(self, path, provenance=None):
        prov = dict(provenance or {})
        if self.config is not None:
            prov["attack"] = " ".join("%s=%s" % kv for kv in asdict(self.config).items() if kv[0] != "epsilon")
        return write_csv(
            path,
            [
                (("sample_id", "epsilon", "delta_max"), self.per_sample),
                (("epsilon", "rho_hat"), sorted(self.rho_hat.items())),
            ],
            prov,
        )


def sample_rng(seed, sample_id):
    """Independent stream per test sample, identical however samples are scheduled."""
    return np.random.default_rng([int(seed), int(sample_id)])


def _random_in_ball(rng, dim, epsilon):
    d = rng.standard_normal(dim)
    d /= np.linalg.norm(d)
    return d * epsilon * rng.random() ** (1.0 / dim)


def _project(delta, epsilon):
    norms = np.linalg.norm(delta, axis=1, keepdims=True)
    scale = np.minimum(1.0, epsilon / np.maximum(norms, 1e-300))
    return delta * scale


def _errors(model, X0, Y):
    err = model.reconstruct(Y) - X0
    return np.sum(err * err, axis=1), err


def _pga_batch(model, X0, Y0, cfg, sample_ids, extra_inits=None):
    N, m = Y0.shape
    eps = cfg.epsilon
    best_val, _ = _errors(model, X0, Y0)
    best_delta = np.zeros((N, m))
    if eps == 0:
        return best_delta, best_val
    rngs = [sample_rng(cfg.seed, i) for i in sample_ids]
    inits = [np.zeros((N, m))]
    for _ in range(1, cfg.restarts):
        inits.append(np.array([_random_in_ball(r, m, eps) for r in rngs]))
    if extra_inits is not None:
        inits.append(_project(np.asarray(extra_inits, dtype=np.float64), eps))
    alpha = cfg.effective_step
    for delta in inits:
        velocity = np.zeros((N, m))
        alive = np.ones(N, dtype=bool)
        for t in range(cfg.steps + 1):
            vals, err = _errors(model, X0, Y0 + delta)
            alive &= np.isfinite(vals)
            improved = alive & (vals > best_val)
            best_val = np.where(improved, vals, best_val)
            best_delta[improved] = delta[improved]
            if t == cfg.steps or not alive.any():
                break
            grad = model.input_gradient(Y0 + delta, 2.0 * err)
            grad[~alive] = 0.0
            gnorm = np.linalg.norm(grad, axis=1, keepdims=True)
            velocity = cfg.momentum * velocity + np.where(gnorm > 0, grad / np.maximum(gnorm, 1e-300), 0.0)
            vnorm = np.linalg.norm(velocity, axis=1, keepdims=True)
            step = np.where(vnorm > 0, velocity / np.maximum(vnorm, 1e-300), 0.0)
            delta = _project(delta + alpha * step, eps)
    return best_delta, best_val


def pga_attack(model, A, x0, cfg, sample_id=0):
    """Largest ``||f(A x0 + delta) - x0||^2`` found over ``||delta|| <= eps``.

    Returns ``(delta_star, delta_max)``. Trajectory 0 starts at ``delta = 0``
    and the others at random points in the ball.
    """
    model = as_model(model, A)
    x0 = np.asarray(x0, dtype=np.float64)
    delta, val = _pga_batch(model, x0[None, :], (x0 @ A.entries.T)[None, :], cfg, [sample_id])
    return delta[0], float(val[0])


def rho_hat(model, A, testset, epsilon_list, cfg):
    """Mean worst-case error over a test set for each radius.

    Radii are processed in increasing order and each attack also restarts from
    the best perturbation found at the previous radius, which is feasible in
    the larger ball; per-sample worst cases are therefore monotone in radius.
    """
    model = as_model(model, A)
    X = testset.samples if hasattr(testset, "samples") else np.asarray(testset, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty test set")
    Y = X @ A.entries.T
    ids = np.arange(len(X))
    report = RobustnessReport(sample_count=len(X), config=cfg)
    prev = None
    for eps in sorted(float(e) for e in epsilon_list):
        delta, vals = _pga_batch(model, X, Y, cfg.with_epsilon(eps), ids, prev)
        prev = delta
        report.per_sample.extend((int(i), eps, float(v)) for i, v in zip(ids, vals))
        report.rho_hat[eps] = float(np.mean(vals))
    report.per_sample.sort(key=lambda row: (row[1], row[0]))
    return report


def linear_worst_case(B, A, x0, epsilon):
    """Exact maximizer of ``||B (A x0 + delta) - x0||^2`` over the ball.

    Solves the trust-region secular equation for the convex quadratic
    ``||c + B delta||^2`` with ``c = B A x0 - x0``. Returns ``(delta, value)``.
    """
    B = np.asarray(B, dtype=np.float64)
    entries = A.entries if hasattr(A, "entries") else np.asarray(A, dtype=np.float64)
    c = B @ (entries @ x0) - x0
    if epsilon == 0:
        return np.zeros(B.shape[1]), float(c @ c)
    lam, W = np.linalg.eigh(B.T @ B)
    g = W.T @ (B.T @ c)
    top = lam[-1]
    scale = max(top, 1.0)

    def norm_at(mu):
        return np.linalg.norm(g / (mu - lam))

    tiny = 1e-14 * scale
    if norm_at(top + tiny) > epsilon:
        hi = top + np.linalg.norm(g) / epsilon + scale
        mu = optimize.brentq(lambda mu: norm_at(mu) - epsilon, top + tiny, hi, xtol=1e-15 * scale, maxiter=500)
        coords = g / (mu - lam)
    else:
        # hard case: no component along the top eigenvector to carry the norm
        coords = np.zeros_like(g)
        rest = lam < top - tiny
        coords[rest] = g[rest] / (top - lam[rest])
        coords[-1] = np.sqrt(max(epsilon ** 2 - coords @ coords, 0.0))
    delta = W @ coords
    candidates = [delta, -delta] if np.allclose(g, 0) else [delta]
    values = [float(np.sum((c + B @ d) ** 2)) for d in candidates]
    i = int(np.argmax(values))
    return candidates[i], values[i]


@dataclass(frozen=True)
class XSpaceAttackConfig:
    lambda_reg: float = 1.0
    steps: int = 200
    step_size: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.lambda_reg > 0 or not self.step_size > 0 or self.steps < 1:
            raise ValueError("lambda_reg, step_size and steps must be positive")


@dataclass(frozen=True)
class XSpaceAttackResult:
    r: np.ndarray
    objective: float
    measurement_perturbation: np.ndarray


def xspace_attack(model, A, x0, cfg):
    """Proximal gradient ascent on ``0.5 ||f(y + A r) - x0||^2 - 0.5 * lambda_reg * ||r||^2``.

    The signal-space perturbation ``r`` only reaches the measurements as
    ``A r``, i.e. inside the range of ``A``.
    """
    model = as_model(model, A)
    x0 = np.asarray(x0, dtype=np.float64)
    entries = A.entries
    y = entries @ x0
    rng = np.random.default_rng(cfg.seed)
    r = 1e-3 * rng.standard_normal(entries.shape[1])

    def objective(r):
        err = model.reconstruct((y + entries @ r)[None, :])[0] - x0
        return 0.5 * float(err @ err) - 0.5 * cfg.lambda_reg * float(r @ r), err

    best_r, (best_val, _) = r.copy(), objective(r)
    for _ in range(cfg.steps):
        val, err = objective(r)
        if not np.isfinite(val):
            break
        if val > best_val:
            best_r, best_val = r.copy(), val
        g_y = model.input_gradient((y + entries @ r)[None, :], err[None, :])[0]
        # explicit step on the data term, exact proximal step on the penalty
        r = (r + cfg.step_size * (entries.T @ g_y)) / (1.0 + cfg.step_size * cfg.lambda_reg)
    val, _ = objective(r)
    if np.isfinite(val) and val > best_val:
        best_r, best_val = r, val
    return XSpaceAttackResult(best_r, float(best_val), entries @ best_r)
