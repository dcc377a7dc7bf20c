"""Measurement operators: construction, SVD, spectrum surgery and conditioning.

Singular values are kept in *increasing* order throughout the package, so
index 0 is always the smallest singular value.
"""

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

from . import _container
from .errors import FormatError, NumericalError
from .reporting import write_csv


class OperatorKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    DCT = "dct"
    MODIFIED = "modified"


@dataclass(frozen=True)
class SvdFactors:
    """``A = U[:, :k] @ diag(S) @ V[:, :k].T`` with ``k = len(S) = min(m, n)``.

    ``U`` is m x m and ``V`` is n x n. Columns beyond ``k`` complete the
    orthonormal bases (left/right null spaces).
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return len(self.S)

    def reconstruct(self):
        k = self.rank
        return (self.U[:, :k] * self.S) @ self.V[:, :k].T


@dataclass(frozen=True)
class ConditioningReport:
    sigma_min: float
    sigma_max: float
    kappa: float
    histogram: list = field(default_factory=list)  # (bin_lower, bin_upper, count)

    def to_csv(self, path, provenance=None):
        return write_csv(
            path,
            [
                (("bin_lower", "bin_upper", "count"), self.histogram),
                (("sigma_min", "sigma_max", "kappa"), [(self.sigma_min, self.sigma_max, self.kappa)]),
            ],
            provenance,
        )


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """Dense real m x n measurement matrix ``A`` in ``y = A x``."""

    entries: np.ndarray
    kind: OperatorKind = OperatorKind.GAUSSIAN
    seed: int = 0

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or min(entries.shape) < 1:
            raise ValueError("operator entries must be a non-empty 2-d array")
        if not np.all(np.isfinite(entries)):
            raise ValueError("operator entries must be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def m(self):
        return self.entries.shape[0]

    @property
    def n(self):
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    @cached_property
    def svd(self):
        return compute_svd(self)

    def apply(self, x):
        return apply(self, x)

    def adjoint_apply(self, y):
        return adjoint_apply(self, y)

    def __repr__(self):
        return "MeasurementOperator(m=%d, n=%d, kind=%s, seed=%d)" % (
            self.m, self.n, self.kind.value, self.seed)


def _check_dims(m, n):
    for name, v in (("m", m), ("n", n)):
        if int(v) != v or v <= 0:
            raise ValueError("%s must be a positive integer, got %r" % (name, v))
    if m > n:
        raise ValueError("need m <= n, got m=%d, n=%d" % (m, n))


def gen_gaussian_operator(m, n, seed):
    """i.i.d. N(0, 1/m) entries; a pure function of ``(m, n, seed)``."""
    _check_dims(m, n)
    rng = np.random.default_rng(seed)
    entries = rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, n))
    return MeasurementOperator(entries, OperatorKind.GAUSSIAN, seed)


def dct_matrix(p):
    """Orthonormal type-II DCT matrix of size p x p (rows are frequencies)."""
    return scipy.fft.dct(np.eye(p), type=2, norm="ortho", axis=0)


def _dct_entries(rows, cols, p):
    # closed-form DCT-II entries, avoids materializing the full p x p matrix
    rows = np.asarray(rows)
    block = np.sqrt(2.0 / p) * np.cos(np.pi * np.outer(rows, 2 * np.asarray(cols) + 1) / (2 * p))
    block[rows == 0] /= np.sqrt(2.0)
    return block


def default_dct_size(n):
    """Smallest power of two strictly greater than ``n``."""
    return 1 << int(n).bit_length()


def gen_dct_operator(m, n, p=None, seed=0):
    """Random ``m`` rows and ``n`` columns of the p x p orthonormal DCT-II."""
    _check_dims(m, n)
    p = default_dct_size(n) if p is None else int(p)
    if p <= n:
        raise ValueError("DCT size p must exceed n (p=%d, n=%d)" % (p, n))
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(p, size=m, replace=False))
    cols = np.sort(rng.choice(p, size=n, replace=False))
    return MeasurementOperator(_dct_entries(rows, cols, p), OperatorKind.DCT, seed)


def compute_svd(A):
    entries = A.entries if isinstance(A, MeasurementOperator) else np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(entries)):
        raise ValueError("cannot factor a matrix with non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(entries, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("SVD did not converge: %s" % exc) from exc
    k = len(s)
    order = np.argsort(s, kind="stable")
    U = np.concatenate([U[:, :k][:, order], U[:, k:]], axis=1)
    V = Vt.T
    V = np.concatenate([V[:, :k][:, order], V[:, k:]], axis=1)
    return SvdFactors(U=U, S=s[order], V=V)


def modify_spectrum(A, replacements):
    """Swap selected singular values, keeping both sets of singular vectors.

    ``replacements`` holds ``(index, new_value)`` pairs, indices referring to
    the increasing order of ``A.svd.S``.
    """
    f = A.svd
    S = f.S.copy()
    seen = set()
    for index, value in replacements:
        index = int(index)
        if index in seen:
            raise ValueError("duplicate singular value index %d" % index)
        if not 0 <= index < len(S):
            raise ValueError("singular value index %d out of range [0, %d)" % (index, len(S)))
        if not value > 0:
            raise ValueError("replacement singular values must be positive, got %r" % value)
        seen.add(index)
        S[index] = value
    k = len(S)
    entries = (f.U[:, :k] * S) @ f.V[:, :k].T
    return MeasurementOperator(entries, OperatorKind.MODIFIED, A.seed)


def apply(A, x):
    """``A x`` for a vector, or row-wise ``X A^T`` for a batch of signals."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != A.n:
        raise ValueError("signal length %d does not match operator n=%d" % (x.shape[-1], A.n))
    return x @ A.entries.T


def adjoint_apply(A, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != A.m:
        raise ValueError("measurement length %d does not match operator m=%d" % (y.shape[-1], A.m))
    return y @ A.entries


def nonzero_singular_values(S, shape):
    S = np.asarray(S)
    if S.size == 0 or S.max() == 0:
        return S[:0]
    tol = S.max() * max(shape) * np.finfo(np.float64).eps
    return S[S > tol]


def conditioning_report(A, bins=50):
    """Condition number and a histogram of the nonzero singular values."""
    entries = A.entries if isinstance(A, MeasurementOperator) else np.asarray(A, dtype=np.float64)
    if not np.any(entries):
        raise ValueError("conditioning of an all-zero matrix is undefined")
    S = A.svd.S if isinstance(A, MeasurementOperator) else compute_svd(entries).S
    nz = nonzero_singular_values(S, entries.shape)
    smin, smax = float(nz.min()), float(nz.max())
    # values equal up to rounding cannot be split into finite bins
    hist_range = (smin, smin) if smax - smin <= 1e-12 * smax else (smin, smax)
    counts, edges = np.histogram(nz, bins=bins, range=hist_range)
    hist = [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    return ConditioningReport(sigma_min=smin, sigma_max=smax, kappa=smax / smin, histogram=hist)


def save_operator(A, path):
    _container.write_matrix(path, A.entries, A.kind.value, A.seed)


def load_operator(path):
    entries, kind, seed = _container.read_matrix(path)
    if kind == "dense":
        raise FormatError("%s holds a plain matrix, not a measurement operator" % path)
    return MeasurementOperator(entries, OperatorKind(kind), seed)
