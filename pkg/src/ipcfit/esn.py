"""Random echo state networks and the geometric-filter simple model."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy import signal

MAX_BUILD_ATTEMPTS = 8


@dataclass(frozen=True)
class EsnConfig:
    nodes: int
    spectral_radius: float = 0.9
    density: float = 0.7
    input_scale: float = 1.0
    bias: float = 0.0
    input_dim: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError(f"nodes must be >= 1, got {self.nodes}")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must be in (0, 1], got {self.density}")
        if self.spectral_radius <= 0:
            raise ValueError("spectral_radius must be positive")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")


@dataclass(frozen=True)
class EsnWeights:
    v1: np.ndarray  # (nodes, nodes), recurrent
    v2: np.ndarray  # (nodes, input_dim)
    c: np.ndarray  # (nodes,)

    def __post_init__(self):
        for name in ("v1", "v2", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nodes(self) -> int:
        return self.v1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.v2.shape[1]


def spectral_radius(m: np.ndarray) -> float:
    """Largest eigenvalue magnitude, from the dense eigensolver."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def power_iteration_radius(
    m: np.ndarray, iterations: int = 10_000, seed: int = 0
) -> float:
    """Spectral radius by two-column subspace iteration.

    A real matrix may have a complex-conjugate leading pair, which plain
    power iteration cannot resolve; a 2-dimensional orthonormal block
    captures either a real leader or the pair, and the eigenvalues of the
    projected 2x2 matrix give its modulus.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if n == 1:
        return abs(float(m[0, 0]))
    q = np.random.default_rng(seed).standard_normal((n, 2))
    q, _ = np.linalg.qr(q)
    for _ in range(iterations):
        z = m @ q
        if not np.any(z):
            return 0.0
        q, _ = np.linalg.qr(z)
    h = q.T @ m @ q
    return float(np.max(np.abs(np.linalg.eigvals(h))))


def rescale_to_radius(m: np.ndarray, radius: float) -> np.ndarray:
    current = spectral_radius(m)
    if current == 0.0 or not np.isfinite(current):
        raise ValueError("matrix has zero spectral radius; cannot rescale")
    return m * (radius / current)


def build_esn(config: EsnConfig, rng: np.random.Generator | np.random.SeedSequence) -> EsnWeights:
    """Draw sparse normal recurrent weights and dense normal input weights.

    With a :class:`~numpy.random.SeedSequence`, a degenerate draw (all-zero
    mask) is retried on the next spawned substream; a plain Generator is
    simply drawn from again.
    """
    streams = _substreams(rng)
    d1, d0 = config.nodes, config.input_dim
    for _ in range(MAX_BUILD_ATTEMPTS):
        gen = next(streams)
        raw = gen.standard_normal((d1, d1))
        mask = gen.random((d1, d1)) < config.density
        v1 = raw * mask
        try:
            v1 = rescale_to_radius(v1, config.spectral_radius)
        except ValueError:
            continue
        v2 = gen.standard_normal((d1, d0)) * config.input_scale
        c = np.full(d1, float(config.bias))
        return EsnWeights(v1=v1, v2=v2, c=c)
    raise RuntimeError(
        f"could not draw a recurrent matrix with nonzero spectral radius "
        f"in {MAX_BUILD_ATTEMPTS} attempts"
    )


def _substreams(rng):
    if isinstance(rng, np.random.SeedSequence):
        for child in rng.spawn(MAX_BUILD_ATTEMPTS):
            yield np.random.Generator(np.random.Philox(child))
    else:
        while True:
            yield rng


def esn_step(weights: EsnWeights, x: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
    """One update x_t = tanh(v1^T x_{t-1} + v2 u_{t-1} + c)."""
    x = np.asarray(x, dtype=float)
    u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
    if x.shape != (weights.nodes,) or u_prev.shape != (weights.input_dim,):
        raise ValueError("state or input dimension does not match the weights")
    return np.tanh(weights.v1.T @ x + weights.v2 @ u_prev + weights.c)


def esn_run(weights: EsnWeights, u: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
    """Drive the reservoir with ``u`` (shape ``(L, input_dim)``).

    Row ``t`` of the result is the state after consuming ``u[t]``, i.e. the
    state paired with targets at time ``t + 1``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    drive = u @ weights.v2.T + weights.c
    w = np.ascontiguousarray(weights.v1.T)
    x = np.zeros(weights.nodes) if x0 is None else np.array(x0, dtype=float)
    states = np.empty((u.shape[0], weights.nodes))
    tanh = np.tanh
    for t in range(u.shape[0]):
        x = tanh(w @ x + drive[t])
        states[t] = x
    return states


def simple_model_step(x: float, u_t: float) -> float:
    """Geometric filter x_t = u_t + x_{t-1}/2; its target is 1 + x_t."""
    return u_t + 0.5 * x


def simple_model_run(u: np.ndarray, x0: float = 0.0) -> np.ndarray:
    """Node values of the simple model over a whole input stream."""
    u = np.asarray(u, dtype=float).reshape(-1)
    # first-order IIR filter; zi carries the initial node value
    out, _ = signal.lfilter([1.0], [1.0, -0.5], u, zi=[0.5 * float(x0)])
    return out


def simple_model_target(x):
    return 1.0 + x


def run_washout(step: Callable, state, steps: int, inputs: Iterable):
    """Advance ``state`` through ``steps`` inputs and return it.

    ``inputs`` should be an iterator so the caller can keep consuming the
    same stream afterwards.
    """
    if steps < 0:
        raise ValueError("washout length must be >= 0")
    it = iter(inputs)
    for _ in range(steps):
        state = step(state, next(it))
    return state


def save_weights(path: str | Path, weights: EsnWeights, config: EsnConfig) -> None:
    """Write weights as CSV: header, v1 rows, v2 rows, then the bias row."""
    header = (
        f"esn-weights d1={weights.nodes} d0={weights.input_dim} "
        f"rho={config.spectral_radius!r} density={config.density!r} seed={config.seed}"
    )
    rows = [*weights.v1, *weights.v2, weights.c]
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in np.atleast_1d(row)) + "\n")


def load_weights(path: str | Path) -> tuple[EsnWeights, dict]:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# esn-weights"):
            raise ValueError(f"{path}: not an ESN weight file")
        meta = dict(tok.split("=", 1) for tok in first.split()[2:])
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    d1, d0 = int(meta["d1"]), int(meta["d0"])
    if len(rows) != 2 * d1 + 1:
        raise ValueError(f"{path}: expected {2 * d1 + 1} rows, found {len(rows)}")
    v1 = np.array(rows[:d1])
    v2 = np.array(rows[d1 : 2 * d1]).reshape(d1, d0)
    c = np.array(rows[-1])
    parsed = {
        "d1": d1,
        "d0": d0,
        "rho": float(meta["rho"]),
        "density": float(meta["density"]),
        "seed": int(meta["seed"]),
    }
    return EsnWeights(v1=v1, v2=v2, c=c), parsed
