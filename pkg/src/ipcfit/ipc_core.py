"""Streaming moments, the optimal linear readout, and training/test IPC.

Only three running sums per data segment are kept (target energy,
feature-target cross moments, feature Gram matrix); the readout and both
capacities are closed-form functions of them, so trajectories never need
to be stored.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import special

GRAM_RTOL = 1e-10

_MAGIC = b"IPCA"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIQ")


class NonFiniteError(ValueError):
    """Raised when NaN/inf reaches an accumulator."""


class MomentAccumulator:
    """Running sums ``sum y^T y``, ``sum x y^T`` and ``sum x x^T``.

    Sums rather than means are stored: every quantity derived from them is
    a ratio in which the segment length cancels.
    """

    __slots__ = ("n", "sum_y2", "sum_xy", "sum_xx")

    def __init__(self, n_features: int, n_targets: int = 1):
        if n_features < 1 or n_targets < 1:
            raise ValueError("accumulator dimensions must be positive")
        self.n = 0
        self.sum_y2 = 0.0
        self.sum_xy = np.zeros((n_features, n_targets))
        self.sum_xx = np.zeros((n_features, n_features))

    @property
    def n_features(self) -> int:
        return self.sum_xx.shape[0]

    @property
    def n_targets(self) -> int:
        return self.sum_xy.shape[1]

    def accumulate(self, x, y) -> "MomentAccumulator":
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.size != self.n_features or y.size != self.n_targets:
            raise ValueError(
                f"expected {self.n_features} features and {self.n_targets} targets, "
                f"got {x.size} and {y.size}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFiniteError("non-finite sample refused")
        self.n += 1
        self.sum_y2 += float(y @ y)
        self.sum_xy += np.outer(x, y)
        self.sum_xx += np.outer(x, x)
        return self

    def accumulate_batch(self, X, Y) -> "MomentAccumulator":
        """Add many samples at once; rows of ``X`` and ``Y`` are time steps."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[1] != self.n_features or Y.shape[1] != self.n_targets:
            raise ValueError("batch dimensions do not match the accumulator")
        if X.shape[0] != Y.shape[0]:
            raise ValueError("feature and target batches differ in length")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise NonFiniteError("non-finite sample refused")
        self.n += X.shape[0]
        self.sum_y2 += float(np.sum(Y * Y))
        self.sum_xy += X.T @ Y
        self.sum_xx += X.T @ X
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """New accumulator equal to accumulating both streams."""
        if (self.n_features, self.n_targets) != (other.n_features, other.n_targets):
            raise ValueError("cannot merge accumulators of different shape")
        out = MomentAccumulator(self.n_features, self.n_targets)
        out.n = self.n + other.n
        out.sum_y2 = self.sum_y2 + other.sum_y2
        out.sum_xy = self.sum_xy + other.sum_xy
        out.sum_xx = self.sum_xx + other.sum_xx
        return out

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(_MAGIC, _VERSION, self.n_features, self.n_targets, self.n)
        body = np.concatenate(
            [[self.sum_y2], self.sum_xy.ravel(), self.sum_xx.ravel()]
        ).astype("<f8")
        return head + body.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MomentAccumulator":
        magic, version, d, d2, n = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise ValueError("not a moment accumulator blob")
        if version != _VERSION:
            raise ValueError(f"unsupported accumulator version {version}")
        body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if body.size != 1 + d * d2 + d * d:
            raise ValueError("truncated accumulator blob")
        acc = cls(d, d2)
        acc.n = n
        acc.sum_y2 = float(body[0])
        acc.sum_xy = body[1 : 1 + d * d2].reshape(d, d2).astype(float)
        acc.sum_xx = body[1 + d * d2 :].reshape(d, d).astype(float)
        return acc


@dataclass(frozen=True)
class ReadoutSolution:
    w: np.ndarray
    gram_rank: int
    solve_tolerance: float


@dataclass(frozen=True)
class IpcSamplePair:
    T: int
    T_test: int
    c_train: float
    c_test: float


def _pinv_solve(gram: np.ndarray, rhs: np.ndarray, rtol: float):
    vals, vecs = np.linalg.eigh(gram)
    top = np.max(np.abs(vals))
    if top == 0.0:
        raise ValueError("feature Gram matrix is identically zero")
    keep = vals > rtol * top
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return vecs @ (inv[:, None] * (vecs.T @ rhs)), int(keep.sum())


def solve_readout(acc: MomentAccumulator, rtol: float = GRAM_RTOL) -> ReadoutSolution:
    """Least-squares readout from the normal equations.

    Solved through the symmetric eigen-decomposition of the Gram matrix;
    eigenvalues below ``rtol * max`` are dropped, which gives the
    minimum-norm solution when features are (numerically) dependent.
    """
    if acc.n == 0:
        raise ValueError("cannot solve a readout from zero samples")
    gram = acc.sum_xx
    if not np.any(gram):
        raise ValueError("feature Gram matrix is identically zero")
    w, rank = _pinv_solve(gram, acc.sum_xy, rtol)
    return ReadoutSolution(w=w, gram_rank=rank, solve_tolerance=rtol)


def _check_target(acc: MomentAccumulator):
    if acc.n == 0:
        raise ValueError("empty accumulator")
    if acc.sum_y2 <= 0.0:
        raise ValueError("target is identically zero; IPC is undefined")


def training_ipc(acc: MomentAccumulator, readout: ReadoutSolution | None = None) -> float:
    """Tr(<y x^T> <x x^T>^-1 <x y^T>) / <y^2> on the training segment."""
    _check_target(acc)
    w = (readout or solve_readout(acc)).w
    return float(np.sum(acc.sum_xy * w) / acc.sum_y2)


def test_ipc(
    acc_train: MomentAccumulator,
    acc_test: MomentAccumulator,
    readout: ReadoutSolution | None = None,
) -> float:
    """Capacity on a held-out segment using the training readout.

    Expands 1 - mean residual / mean target energy on the test segment in
    terms of its own moments: Tr[w^T (2 <x y^T>' - <x x^T>' w)] / <y^2>'.
    """
    _check_target(acc_train)
    _check_target(acc_test)
    w = (readout or solve_readout(acc_train)).w
    inner = 2.0 * acc_test.sum_xy - acc_test.sum_xx @ w
    return float(np.sum(w * inner) / acc_test.sum_y2)


test_ipc.__test__ = False  # keep pytest from collecting it by name


def ipc_pair(acc_train: MomentAccumulator, acc_test: MomentAccumulator) -> IpcSamplePair:
    readout = solve_readout(acc_train)
    return IpcSamplePair(
        T=acc_train.n,
        T_test=acc_test.n,
        c_train=training_ipc(acc_train, readout),
        c_test=test_ipc(acc_train, acc_test, readout),
    )


def chi_square_quantile(dof: int, p: float) -> float:
    """Upper-tail quantile alpha with P(chi2(dof) >= alpha) = p."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"tail probability must be in (0, 1), got {p}")
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    # Q(k/2, alpha/2) = p
    return 2.0 * float(special.gammainccinv(dof / 2.0, p))


def chi_square_threshold(dof: int, p: float, T: int) -> float:
    """Capacity threshold 2 * alpha / T used to gate finite-length IPCs."""
    if T < 1:
        raise ValueError("segment length must be >= 1")
    return 2.0 * chi_square_quantile(dof, p) / T


def empirical_ipc(c: float, threshold: float) -> float:
    return c if c > threshold else 0.0
