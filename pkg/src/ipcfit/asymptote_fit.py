"""Extrapolating finite-length IPC statistics to infinite data length.

The sample means of the training and test IPC are modelled as
``a + b1/T`` and ``a - b2/T'`` and their variances as ``d/T`` and
``d/T'``. Means are fitted with weights proportional to the data length,
which flattens the ``1/T`` shrinkage of their noise; variances are fitted
with squared-length weights for the same reason.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_A_TOL = 0.01
DEFAULT_SLOPE_TOL = 0.3


@dataclass(frozen=True)
class MeanSample:
    T: int
    T_test: int
    g_train: float
    g_test: float
    N: int = 1

    def __post_init__(self):
        if min(self.T, self.T_test, self.N) < 1:
            raise ValueError("lengths and trial counts must be >= 1")


@dataclass(frozen=True)
class VarSample:
    T: int
    T_test: int
    s2_train: float
    s2_test: float
    N: int = 2

    def __post_init__(self):
        if min(self.T, self.T_test, self.N) < 1:
            raise ValueError("lengths and trial counts must be >= 1")
        if self.s2_train < 0 or self.s2_test < 0:
            raise ValueError("variances must be nonnegative")


@dataclass(frozen=True)
class TheoryTerms:
    """Population quantities entering the 1/T expansions.

    ``mu0`` is the target mean square, ``l0`` the optimal-readout MSE,
    ``v_mu``/``v_l`` the long-run variances of the target energy and the
    loss, ``c_l_mu`` their long-run covariance and ``tr_ij`` is
    Tr(I J^-1) for the loss-gradient covariance I and Hessian J.
    """

    mu0: float
    l0: float
    v_mu: float = 0.0
    c_l_mu: float = 0.0
    v_l: float = 0.0
    tr_ij: float = 0.0


@dataclass(frozen=True)
class FitResult:
    a: float
    b1: float
    b2: float
    d: float
    cost: float
    condition: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ZeroIpcDecision:
    is_zero: bool
    slope: float
    a: float
    a_tol: float
    slope_tol: float


class SingularFitError(ValueError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3g})")
        self.condition = condition


def _solve_full_pivot(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with full pivoting for a small dense system."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = A.shape[0]
    cols = list(range(n))
    scale = np.max(np.abs(A))
    for k in range(n):
        sub = np.abs(A[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        i += k
        j += k
        if sub[i - k, j - k] <= 1e-14 * scale:
            raise ZeroDivisionError("matrix is singular to working precision")
        A[[k, i]] = A[[i, k]]
        b[[k, i]] = b[[i, k]]
        A[:, [k, j]] = A[:, [j, k]]
        cols[k], cols[j] = cols[j], cols[k]
        for r in range(k + 1, n):
            f = A[r, k] / A[k, k]
            A[r, k:] -= f * A[k, k:]
            b[r] -= f * b[k]
    z = np.zeros(n)
    for k in range(n - 1, -1, -1):
        z[k] = (b[k] - A[k, k + 1 :] @ z[k + 1 :]) / A[k, k]
    x = np.empty(n)
    x[cols] = z
    return x


def mean_normal_system(samples: Sequence[MeanSample]) -> tuple[np.ndarray, np.ndarray]:
    """The 3x3 stationarity conditions of the length-weighted mean cost."""
    T1 = np.array([s.T for s in samples], dtype=float)
    T2 = np.array([s.T_test for s in samples], dtype=float)
    g1 = np.array([s.g_train for s in samples], dtype=float)
    g2 = np.array([s.g_test for s in samples], dtype=float)
    n = float(len(samples))
    gamma = T1.sum() + T2.sum()
    beta1 = np.sum(1.0 / T1)
    beta2 = np.sum(1.0 / T2)
    A = np.array(
        [
            [gamma, n, -n],
            [n, beta1, 0.0],
            [n, 0.0, -beta2],
        ]
    )
    rhs = np.array([np.sum(T1 * g1) + np.sum(T2 * g2), g1.sum(), g2.sum()])
    return A, rhs


def mean_cost(samples: Sequence[MeanSample], a: float, b1: float, b2: float) -> float:
    """0.5 * sum[T (a + b1/T - g)^2 + T' (a - b2/T' - g')^2]."""
    total = 0.0
    for s in samples:
        r1 = a + b1 / s.T - s.g_train
        r2 = a - b2 / s.T_test - s.g_test
        total += s.T * r1 * r1 + s.T_test * r2 * r2
    return 0.5 * total


def mean_cost_gradient(samples: Sequence[MeanSample], a: float, b1: float, b2: float) -> np.ndarray:
    ga = gb1 = gb2 = 0.0
    for s in samples:
        r1 = a + b1 / s.T - s.g_train
        r2 = a - b2 / s.T_test - s.g_test
        ga += s.T * r1 + s.T_test * r2
        gb1 += r1
        gb2 -= r2
    return np.array([ga, gb1, gb2])


def _sorted(samples):
    # fixed summation order so permuted input gives bit-identical output
    return sorted(samples, key=lambda s: (s.T, s.T_test))


def fit_means(samples: Sequence[MeanSample]) -> tuple[float, float, float]:
    """Weighted least-squares asymptote ``(a, b1, b2)``."""
    a, b1, b2, _, _ = _fit_means_full(samples)
    return a, b1, b2


def _fit_means_full(samples):
    samples = _sorted(samples)
    if len({(s.T, s.T_test) for s in samples}) < 2:
        cond = np.inf
        if samples:
            cond = float(np.linalg.cond(mean_normal_system(samples)[0]))
        raise SingularFitError("need at least two distinct data lengths", cond)
    A, rhs = mean_normal_system(samples)
    condition = float(np.linalg.cond(A))
    try:
        a, b1, b2 = _solve_full_pivot(A, rhs)
    except ZeroDivisionError:
        raise SingularFitError("mean-fit system is singular", condition) from None
    return float(a), float(b1), float(b2), mean_cost(samples, a, b1, b2), condition


def fit_variance(samples: Sequence[VarSample]) -> float:
    """Closed-form ``d`` minimizing the squared-length-weighted variance cost."""
    if not samples:
        raise ValueError("no variance samples")
    samples = _sorted(samples)
    total = math.fsum(s.T * s.s2_train + s.T_test * s.s2_test for s in samples)
    return total / (2 * len(samples))


def variance_cost(samples: Sequence[VarSample], d: float) -> float:
    return 0.5 * sum(
        s.T**2 * (d / s.T - s.s2_train) ** 2 + s.T_test**2 * (d / s.T_test - s.s2_test) ** 2
        for s in samples
    )


def fit_asymptote(means: Sequence[MeanSample], variances: Sequence[VarSample]) -> FitResult:
    a, b1, b2, cost, condition = _fit_means_full(means)
    d = fit_variance(variances)
    return FitResult(a=a, b1=b1, b2=b2, d=d, cost=cost, condition=condition)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    excluded: int


def loglog_slope(samples: Sequence[VarSample]) -> SlopeFit:
    """OLS slope of log variance against log length, train and test pooled."""
    xs, ys = [], []
    excluded = 0
    for s in _sorted(samples):
        for T, v in ((s.T, s.s2_train), (s.T_test, s.s2_test)):
            if v > 0:
                xs.append(math.log(T))
                ys.append(math.log(v))
            else:
                excluded += 1
    if excluded:
        log.warning("excluded %d nonpositive variance point(s) from slope fit", excluded)
    if len(xs) < 3:
        raise ValueError(f"need >= 3 positive variances for a slope, have {len(xs)}")
    x = np.array(xs)
    y = np.array(ys)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0.0:
        raise ValueError("all variance points share one length; slope undefined")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = len(xs) - 2
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 else float("nan")
    return SlopeFit(slope=slope, stderr=stderr, intercept=intercept, excluded=excluded)


def decide_zero_ipc(
    a: float,
    slope: float,
    a_tol: float = DEFAULT_A_TOL,
    slope_tol: float = DEFAULT_SLOPE_TOL,
) -> ZeroIpcDecision:
    """Zero capacity iff ``a`` is near zero and variance falls faster than 1/T."""
    if a_tol <= 0 or slope_tol <= 0:
        raise ValueError("thresholds must be positive")
    is_zero = abs(a) < a_tol and slope < -1.0 - slope_tol
    return ZeroIpcDecision(is_zero=bool(is_zero), slope=slope, a=a, a_tol=a_tol, slope_tol=slope_tol)


def asymptotic_coefficients(theory: TheoryTerms, ratio: float) -> tuple[float, float, float, float]:
    """Coefficients ``(a, b1, b2, d)`` predicted by the population terms.

    ``ratio`` is T/T'. ``b2`` is expressed per unit 1/T' so the test mean
    reads ``a - b2/T'``.
    """
    mu0, l0 = theory.mu0, theory.l0
    if mu0 <= 0:
        raise ValueError("target mean square must be positive")
    if ratio <= 0:
        raise ValueError("length ratio must be positive")
    energy_term = theory.c_l_mu / mu0**2 - l0 * theory.v_mu / mu0**3
    fit_term = theory.tr_ij / mu0
    a = 1.0 - l0 / mu0
    b1 = energy_term + fit_term
    b2 = -(energy_term - fit_term / ratio)
    d = theory.v_l / mu0**2 + l0**2 * theory.v_mu / mu0**4 - 2.0 * l0 * theory.c_l_mu / mu0**3
    return a, b1, b2, d


def variance_of_variance(s2: float, N: int) -> float:
    """Approximate sampling variance of an unbiased variance from N trials."""
    if N < 2:
        raise ValueError("need at least two trials")
    return 2.0 * N * s2 * s2 / (N - 1) ** 2


def mean_loglog_points(Ts, means, a: float):
    """Points (T, g - a) usable on a log-log plot, plus the dropped lengths."""
    kept, dropped = [], []
    for T, g in zip(Ts, means):
        if g - a > 0:
            kept.append((T, g - a))
        else:
            dropped.append(T)
    return kept, dropped
