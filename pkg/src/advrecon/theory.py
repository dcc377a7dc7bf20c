"""Closed-form robust linear reconstructor for the common-perturbation min-max problem.

For ``y = A x`` with whitened signals (zero mean, identity covariance) the
linear min-max objective

    min_B max_{||delta|| <= eps}  E||B A x - x||^2 + lam * E||B (A x + delta) - x||^2

reduces to ``(1 + lam) ||B A - I||_F^2 + lam * eps^2 * sigma_max(B)^2``. Its
minimizer is ``B = V diag(Q) U^T`` where the ``m_star`` smallest singular
values share one shrunken gain ``q_m`` and the rest are inverted exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import NumericalError
from .measurement import MeasurementOperator, compute_svd, nonzero_singular_values

_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ReducedObjectiveValue:
    fidelity_term: float
    adversarial_term: float

    @property
    def total(self):
        return self.fidelity_term + self.adversarial_term


@dataclass(frozen=True)
class RobustLinearSolution:
    B: np.ndarray
    M: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    m_star: int
    q_m: float
    h: float
    lam: float
    epsilon: float
    objective_value: float

    def sidecar(self):
        """Scalar summary, suitable for a JSON sidecar next to ``B``."""
        return {
            "lambda": float(self.lam),
            "epsilon": float(self.epsilon),
            "m_star": int(self.m_star),
            "q_m": float(self.q_m),
            "objective_value": float(self.objective_value),
        }


def _check_params(lam, epsilon):
    if not lam > 0:
        raise ValueError("lambda must be positive, got %r" % lam)
    if not epsilon >= 0:
        raise ValueError("epsilon must be non-negative, got %r" % epsilon)


def shrinkage(lam, epsilon):
    """``h = lam * eps^2 / (1 + lam)``."""
    return lam * epsilon ** 2 / (1.0 + lam)


def filtered_gain(S, lam, epsilon, m_candidate):
    """Common gain of the ``m_candidate`` smallest singular values.

    ``q = sum(S[:m]) / (sum(S[:m]**2) + h)`` with ``S`` increasing.
    """
    _check_params(lam, epsilon)
    S = np.asarray(S, dtype=np.float64)
    if not 1 <= m_candidate <= len(S):
        raise ValueError("m_candidate must lie in [1, %d], got %r" % (len(S), m_candidate))
    head = S[:m_candidate]
    return float(head.sum() / (np.dot(head, head) + shrinkage(lam, epsilon)))


def gains_for(S, lam, epsilon, m):
    q = filtered_gain(S, lam, epsilon, m)
    return np.concatenate([np.full(m, q), 1.0 / np.asarray(S[m:], dtype=np.float64)])


def gains_objective(Q, S, lam, epsilon, n):
    """Reduced objective of ``B = V diag(Q) U^T`` written in the gain coordinates."""
    Q = np.asarray(Q, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    fidelity = (1.0 + lam) * (np.sum((Q * S - 1.0) ** 2) + (n - len(S)))
    adversarial = lam * epsilon ** 2 * np.max(np.abs(Q)) ** 2
    return ReducedObjectiveValue(float(fidelity), float(adversarial))


def _search_multiplicity(S, lam, epsilon, n):
    S = np.asarray(S, dtype=np.float64)
    rank = len(S)
    candidates = []
    for m in range(1, rank + 1):
        q = filtered_gain(S, lam, epsilon, m)
        # the shared gain has to be the largest entry of Q
        consistent = m == rank or q >= 1.0 / S[m]
        total = gains_objective(gains_for(S, lam, epsilon, m), S, lam, epsilon, n).total
        candidates.append((m, consistent, total))

    # m == rank is always consistent, so the pool is never empty
    pool = [c for c in candidates if c[1]]
    best = min(c[2] for c in pool)
    return next(m for m, _, total in pool if total <= best + _TIE_RTOL * max(1.0, abs(best)))


def select_multiplicity(S, lam, epsilon):
    """Number of smallest singular values sharing the filtered gain.

    Among the ``m`` whose shared gain dominates the exactly inverted entries,
    the one with the lowest reduced objective wins; ties go to the smaller ``m``.
    """
    _check_params(lam, epsilon)
    return _search_multiplicity(S, lam, epsilon, len(S))


def _full_row_rank_svd(A):
    entries = A.entries if isinstance(A, MeasurementOperator) else np.asarray(A, dtype=np.float64)
    factors = A.svd if isinstance(A, MeasurementOperator) else compute_svd(entries)
    m, n = entries.shape
    if m > n or len(nonzero_singular_values(factors.S, entries.shape)) < m:
        raise ValueError("operator must have full row rank (m <= n and m nonzero singular values)")
    return entries, factors


def reduced_objective(B, A, lam, epsilon):
    """``(1 + lam) ||B A - I||_F^2 + lam * eps^2 * ||B||_2^2``."""
    entries = A.entries if isinstance(A, MeasurementOperator) else np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if B.shape != entries.shape[::-1]:
        raise ValueError("B has shape %s, expected %s" % (B.shape, entries.shape[::-1]))
    residual = B @ entries - np.eye(entries.shape[1])
    fidelity = (1.0 + lam) * float(np.sum(residual ** 2))
    top = np.linalg.norm(B, 2) if B.size else 0.0
    return ReducedObjectiveValue(fidelity, float(lam * epsilon ** 2 * top ** 2))


def robust_linear_reconstructor(A, lam, epsilon):
    """Closed-form minimizer of the linear min-max objective for operator ``A``."""
    _check_params(lam, epsilon)
    entries, f = _full_row_rank_svd(A)
    k = len(f.S)
    m_star = _search_multiplicity(f.S, lam, epsilon, entries.shape[1])
    Q = gains_for(f.S, lam, epsilon, m_star)
    B = (f.V[:, :k] * Q) @ f.U[:, :k].T
    objective = reduced_objective(B, entries, lam, epsilon).total
    return RobustLinearSolution(
        B=B, M=f.V, Q=Q, P=f.U, m_star=m_star, q_m=float(Q[0]), h=shrinkage(lam, epsilon),
        lam=float(lam), epsilon=float(epsilon), objective_value=objective,
    )


def worst_case_delta_linear(B, epsilon):
    """Measurement perturbation of norm ``epsilon`` maximizing ``||B delta||``.

    This is ``epsilon`` times the top right singular vector of ``B``; the sign
    is fixed so the largest-magnitude component is positive.
    """
    if not epsilon >= 0:
        raise ValueError("epsilon must be non-negative, got %r" % epsilon)
    B = np.asarray(B, dtype=np.float64)
    if epsilon == 0:
        return np.zeros(B.shape[1])
    _, _, Vt = np.linalg.svd(B, full_matrices=False)
    v = Vt[0]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return epsilon * v


def numerical_oracle(A, lam, epsilon, tolerance=1e-13, max_iter=10_000):
    """Minimize the reduced objective numerically over diagonal gains.

    Uses the epigraph form: for a cap ``t`` on every gain the best gains are
    ``min(1/S_i, t)``, leaving a convex scalar problem in ``t`` that is solved
    with bounded Brent iterations. Shares nothing with the multiplicity formula.
    """
    _check_params(lam, epsilon)
    entries, f = _full_row_rank_svd(A)
    S = f.S
    k = len(S)
    inv = 1.0 / S

    def objective(t):
        q = np.minimum(inv, t)
        return (1.0 + lam) * np.sum((q * S - 1.0) ** 2) + lam * epsilon ** 2 * t ** 2

    upper = float(inv.max())
    res = optimize.minimize_scalar(
        objective, bounds=(0.0, upper), method="bounded",
        options={"xatol": tolerance * upper, "maxiter": max_iter},
    )
    if not res.success:
        raise NumericalError("oracle did not converge: %s" % res.message)
    t = float(res.x)
    # the bounded search never lands exactly on the boundary
    if objective(upper) <= res.fun:
        t = upper
    q = np.minimum(inv, t)
    return (f.V[:, :k] * q) @ f.U[:, :k].T
