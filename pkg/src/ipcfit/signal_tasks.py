"""Input processes and target sequences for the benchmark tasks.

Three target families are supported: products of delayed Legendre
polynomials, the NARMA10 recursion, and the geometric-filter simple model
(whose target lives in :mod:`ipcfit.esn` next to its node recursion).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

NARMA_ORDER = 10
NARMA_DIVERGENCE_BOUND = 1e6


class TaskDivergence(RuntimeError):
    """A task produced a non-finite or runaway output; the trial is unusable."""


class Distribution(enum.Enum):
    UNIFORM_SYMMETRIC = "uniform_symmetric"
    UNIFORM_POSITIVE = "uniform_positive"

    @property
    def bounds(self) -> tuple[float, float]:
        if self is Distribution.UNIFORM_SYMMETRIC:
            return -1.0, 1.0
        return 0.0, 0.2


@dataclass(frozen=True)
class InputSpec:
    distribution: Distribution = Distribution.UNIFORM_SYMMETRIC
    dimension: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"input dimension must be >= 1, got {self.dimension}")

    @property
    def lo(self) -> float:
        return self.distribution.bounds[0]

    @property
    def hi(self) -> float:
        return self.distribution.bounds[1]


def gen_input(spec: InputSpec, length: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``length`` i.i.d. input vectors, shape ``(length, dimension)``."""
    if length < 1:
        raise ValueError(f"input length must be >= 1, got {length}")
    return rng.uniform(spec.lo, spec.hi, size=(length, spec.dimension))


def legendre_eval(n: int, x):
    """Unnormalized Legendre polynomial P_n via the three-term recurrence.

    Works elementwise on arrays. Arguments outside [-1, 1] are evaluated
    anyway; callers decide whether that is meaningful.
    """
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class LegendreTaskSpec:
    """Target ``prod_i P_{s_i}(u_{t-i})`` given as ``(delay, degree)`` pairs."""

    terms: tuple[tuple[int, int], ...]

    def __post_init__(self):
        terms = tuple((int(i), int(s)) for i, s in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("Legendre task needs at least one term")
        delays = [i for i, _ in terms]
        if any(i < 1 for i in delays):
            raise ValueError("delays must be positive")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("delays must be strictly increasing")
        if any(s < 0 for _, s in terms):
            raise ValueError("degrees must be nonnegative")
        if all(s == 0 for _, s in terms):
            raise ValueError("at least one degree must be positive")

    @property
    def max_delay(self) -> int:
        return self.terms[-1][0]


def legendre_target(spec: LegendreTaskSpec, window) -> float:
    """Target value from an input history window.

    ``window[k]`` is ``u_{t-k}`` (so ``window[0]`` is the current input).
    """
    window = np.asarray(window, dtype=float).reshape(-1)
    if window.size <= spec.max_delay:
        raise ValueError(
            f"window of length {window.size} does not reach delay {spec.max_delay}"
        )
    value = 1.0
    for delay, degree in spec.terms:
        value *= legendre_eval(degree, window[delay])
    return float(value)


def legendre_series(spec: LegendreTaskSpec, u: np.ndarray) -> np.ndarray:
    """Vectorized targets over a scalar input stream.

    Entry ``t`` is defined for ``t >= max_delay``; earlier entries are NaN.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    out = np.full(u.shape, np.nan)
    m = spec.max_delay
    if u.size <= m:
        return out
    prod = np.ones(u.size - m)
    for delay, degree in spec.terms:
        prod *= legendre_eval(degree, u[m - delay : u.size - delay])
    out[m:] = prod
    return out


@dataclass(frozen=True)
class Narma10Params:
    alpha: float = 0.3
    beta: float = 0.05
    gamma: float = 1.5
    delta: float = 0.1


@dataclass
class Narma10State:
    """Last ten outputs (``y[0]`` is y_{t-1}) and inputs (``u[0]`` is u_{t-1})."""

    y: np.ndarray = field(default_factory=lambda: np.zeros(NARMA_ORDER))
    u: np.ndarray = field(default_factory=lambda: np.zeros(NARMA_ORDER))


def narma10_step(
    state: Narma10State, params: Narma10Params, u_t: float
) -> tuple[float, Narma10State]:
    y_prev = state.y[0]
    y_t = (
        params.alpha * y_prev
        + params.beta * y_prev * state.y.sum()
        + params.gamma * u_t * state.u[NARMA_ORDER - 2]
        + params.delta
    )
    if not np.isfinite(y_t) or abs(y_t) > NARMA_DIVERGENCE_BOUND:
        raise TaskDivergence(f"NARMA10 output diverged ({y_t!r})")
    y = np.roll(state.y, 1)
    y[0] = y_t
    u = np.roll(state.u, 1)
    u[0] = u_t
    return y_t, Narma10State(y=y, u=u)


def narma10_series(params: Narma10Params, u: np.ndarray) -> np.ndarray:
    """NARMA10 outputs for a whole scalar input stream, from zero state.

    Same recursion as :func:`narma10_step`; the lag sum is added in a
    different order, so the two agree to rounding, not bitwise. A plain loop
    over Python floats is several times faster than rotating numpy buffers.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    n = u.size
    a, b, g, d = params.alpha, params.beta, params.gamma, params.delta
    ys = [0.0] * NARMA_ORDER + [0.0] * n
    us = [0.0] * (NARMA_ORDER - 1) + u.tolist()
    for t in range(n):
        k = t + NARMA_ORDER
        y_prev = ys[k - 1]
        window = ys[k - NARMA_ORDER : k]
        y_t = a * y_prev + b * y_prev * sum(window) + g * us[t + 9] * us[t] + d
        if not (abs(y_t) <= NARMA_DIVERGENCE_BOUND):
            raise TaskDivergence(f"NARMA10 output diverged at step {t} ({y_t!r})")
        ys[k] = y_t
    return np.asarray(ys[NARMA_ORDER:])
