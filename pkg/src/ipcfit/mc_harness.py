"""Monte Carlo driver: per-trial IPC pairs over a grid of data lengths.

Every trial draws its randomness from a Philox stream keyed by
``(base_seed, T, trial_index)``, so a trial's result does not depend on
which worker runs it or in what order. Results are always reduced in
trial-index order.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .asymptote_fit import MeanSample, VarSample, variance_of_variance
from .esn import EsnConfig, build_esn, esn_run, simple_model_run, simple_model_target
from .ipc_core import IpcSamplePair, MomentAccumulator, NonFiniteError, ipc_pair
from .signal_tasks import (
    Distribution,
    InputSpec,
    LegendreTaskSpec,
    Narma10Params,
    TaskDivergence,
    gen_input,
    legendre_series,
    narma10_series,
)

log = logging.getLogger(__name__)

TASKS = ("simple", "legendre", "narma10")
CSV_VERSION = 1
CSV_MAGIC = f"# ipc-summary v{CSV_VERSION}"
CSV_FIELDS = (
    "T",
    "Tprime",
    "N",
    "mean_train",
    "var_train",
    "mean_test",
    "var_test",
    "err_var_train",
    "err_var_test",
    "failures",
)
MAX_FAILURE_FRACTION = 0.01
# spawn-key slot 0 is never a valid T, so the shared reservoir stream
# cannot collide with any per-trial stream
_SHARED_RESERVOIR_KEY = (0, 0, 1)


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    task: str
    T_grid: tuple[int, ...]
    trials: int
    ratio: float = 1.0
    washout: int | None = None
    base_seed: int = 0
    legendre_terms: tuple[tuple[int, int], ...] = ((1, 1),)
    narma: Narma10Params = field(default_factory=Narma10Params)
    narma_warmup: int = 200
    input_distribution: Distribution | None = None
    nodes: int = 100
    spectral_radius: float = 0.9
    density: float = 0.7
    input_scale: float = 1.0
    bias: float = 0.0
    fix_reservoir: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {TASKS}")
        grid = tuple(int(t) for t in self.T_grid)
        object.__setattr__(self, "T_grid", grid)
        object.__setattr__(
            self, "legendre_terms", tuple((int(i), int(s)) for i, s in self.legendre_terms)
        )
        if not grid:
            raise ValueError("T_grid must not be empty")
        if any(t < 1 for t in grid):
            raise ValueError("data lengths must be positive")
        if any(b <= a for a, b in zip(sorted(grid), sorted(grid)[1:])):
            raise ValueError("T_grid must not contain duplicates")
        if self.trials < 2:
            raise ValueError("need at least 2 trials for an unbiased variance")
        if self.ratio <= 0:
            raise ValueError("ratio T'/T must be positive")
        if self.washout is not None and self.washout < 0:
            raise ValueError("washout must be >= 0")
        if self.task == "legendre":
            LegendreTaskSpec(self.legendre_terms)
        if self.task != "simple":
            EsnConfig(
                nodes=self.nodes,
                spectral_radius=self.spectral_radius,
                density=self.density,
                input_scale=self.input_scale,
            )

    @property
    def is_esn(self) -> bool:
        return self.task != "simple"

    @property
    def effective_washout(self) -> int:
        tau = self.washout
        if tau is None:
            tau = 50 if self.task == "simple" else 500
        if self.task == "legendre":
            tau = max(tau, LegendreTaskSpec(self.legendre_terms).max_delay)
        elif self.task == "narma10":
            tau = max(tau, self.narma_warmup)
        return tau

    @property
    def input_spec(self) -> InputSpec:
        dist = self.input_distribution
        if dist is None:
            dist = (
                Distribution.UNIFORM_POSITIVE
                if self.task == "narma10"
                else Distribution.UNIFORM_SYMMETRIC
            )
        return InputSpec(distribution=dist)

    @property
    def readout_dof(self) -> int:
        """Degrees of freedom used for the chi-square gate (bias excluded)."""
        return self.nodes if self.is_esn else 1

    def test_length(self, T: int) -> int:
        return max(1, int(round(self.ratio * T)))

    def esn_config(self) -> EsnConfig:
        return EsnConfig(
            nodes=self.nodes,
            spectral_radius=self.spectral_radius,
            density=self.density,
            input_scale=self.input_scale,
            bias=self.bias,
            seed=self.base_seed,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["T_grid"] = list(self.T_grid)
        out["legendre_terms"] = [list(t) for t in self.legendre_terms]
        out["input_distribution"] = self.input_spec.distribution.value
        return out


@dataclass(frozen=True)
class SummaryRow:
    T: int
    Tprime: int
    N: int
    mean_train: float
    var_train: float
    mean_test: float
    var_test: float
    err_var_train: float
    err_var_test: float
    failures: int = 0

    def mean_sample(self) -> MeanSample:
        return MeanSample(T=self.T, T_test=self.Tprime, g_train=self.mean_train, g_test=self.mean_test, N=self.N)

    def var_sample(self) -> VarSample:
        return VarSample(T=self.T, T_test=self.Tprime, s2_train=self.var_train, s2_test=self.var_test, N=self.N)


def trial_seed(base_seed: int, T: int, trial_index: int, stream: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(T, trial_index, stream))


def _generator(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


@functools.lru_cache(maxsize=4)
def _shared_reservoir(config: EsnConfig, base_seed: int):
    return build_esn(config, np.random.SeedSequence(base_seed, spawn_key=_SHARED_RESERVOIR_KEY))


def _trial_weights(plan: ExperimentPlan, T: int, trial_index: int):
    if plan.fix_reservoir:
        return _shared_reservoir(plan.esn_config(), plan.base_seed)
    return build_esn(plan.esn_config(), trial_seed(plan.base_seed, T, trial_index, stream=1))


def _segments(plan: ExperimentPlan, T: int, features: np.ndarray, targets: np.ndarray):
    tau = plan.effective_washout
    T2 = plan.test_length(T)
    train = MomentAccumulator(features.shape[1], 1).accumulate_batch(
        features[tau : tau + T], targets[tau : tau + T]
    )
    test = MomentAccumulator(features.shape[1], 1).accumulate_batch(
        features[tau + T : tau + T + T2], targets[tau + T : tau + T + T2]
    )
    return train, test


def trial_data(plan: ExperimentPlan, T: int, trial_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows and targets for one trial, washout included.

    Row ``k`` pairs the readout features with the target at the same time
    step; the first ``effective_washout`` rows are transients.
    """
    tau = plan.effective_washout
    total = tau + T + plan.test_length(T)
    rng = _generator(trial_seed(plan.base_seed, T, trial_index))
    if plan.task == "simple":
        u = gen_input(plan.input_spec, total, rng)[:, 0]
        x = simple_model_run(u)
        return x[:, None], simple_model_target(x)
    # one extra input: the state at step s is driven by u[s-1]
    u = gen_input(plan.input_spec, total + 1, rng)
    weights = _trial_weights(plan, T, trial_index)
    states = esn_run(weights, u[:-1])
    if plan.task == "legendre":
        y = legendre_series(LegendreTaskSpec(plan.legendre_terms), u[:, 0])
    else:
        y = narma10_series(plan.narma, u[:, 0])
    features = np.empty((total, weights.nodes + 1))
    features[:, :-1] = states
    features[:, -1] = 1.0
    return features, y[1:]


def run_trial(plan: ExperimentPlan, T: int, trial_index: int) -> IpcSamplePair:
    """Training and test IPC of one independently seeded trial."""
    features, targets = trial_data(plan, T, trial_index)
    train, test = _segments(plan, T, features, targets)
    return ipc_pair(train, test)


def _run_chunk(plan: ExperimentPlan, T: int, indices: Sequence[int]):
    out = []
    for i in indices:
        try:
            out.append((i, run_trial(plan, T, i)))
        except (TaskDivergence, NonFiniteError) as exc:
            out.append((i, str(exc)))
    return out


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """Mean and unbiased variance by a corrected two-pass sum."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 2:
        raise ValueError("need at least two values for an unbiased variance")
    mean = math.fsum(v) / n
    dev = v - mean
    # second term removes the rounding error left in the first-pass mean
    var = (math.fsum(dev * dev) - math.fsum(dev) ** 2 / n) / (n - 1)
    return mean, max(var, 0.0)


def summary_row(T: int, Tprime: int, pairs: Sequence[IpcSamplePair], failures: int = 0) -> SummaryRow:
    c1 = [p.c_train for p in pairs]
    c2 = [p.c_test for p in pairs]
    m1, v1 = summarize(c1)
    m2, v2 = summarize(c2)
    n = len(pairs)
    return SummaryRow(
        T=T,
        Tprime=Tprime,
        N=n,
        mean_train=m1,
        var_train=v1,
        mean_test=m2,
        var_test=v2,
        err_var_train=math.sqrt(variance_of_variance(v1, n)),
        err_var_test=math.sqrt(variance_of_variance(v2, n)),
        failures=failures,
    )


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("IPC_LIMIT_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def _chunks(n: int, size: int) -> list[list[int]]:
    return [list(range(i, min(i + size, n))) for i in range(0, n, size)]


def run_experiment(
    plan: ExperimentPlan,
    threads: int | None = None,
    keep_pairs: bool = False,
):
    """Summary rows for every T in the plan, sorted by T.

    With ``keep_pairs`` the per-trial pairs are returned as well, keyed by T.
    """
    workers = resolve_threads(threads if threads is not None else plan.threads)
    grid = sorted(plan.T_grid)
    results: dict[int, list] = {}
    if workers == 1:
        for T in grid:
            results[T] = _run_chunk(plan, T, range(plan.trials))
    else:
        size = max(1, math.ceil(plan.trials / (4 * workers)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                T: [pool.submit(_run_chunk, plan, T, idx) for idx in _chunks(plan.trials, size)]
                for T in grid
            }
            for T in grid:
                results[T] = [item for fut in futures[T] for item in fut.result()]

    rows, kept = [], {}
    for T in grid:
        ordered = sorted(results[T], key=lambda item: item[0])
        pairs = [p for _, p in ordered if isinstance(p, IpcSamplePair)]
        errors = [(i, p) for i, p in ordered if not isinstance(p, IpcSamplePair)]
        if errors:
            log.warning("T=%d: %d failed trial(s), first: %s", T, len(errors), errors[0][1])
        if len(errors) > MAX_FAILURE_FRACTION * plan.trials:
            raise ExperimentError(
                f"T={T}: {len(errors)} of {plan.trials} trials failed "
                f"(limit {MAX_FAILURE_FRACTION:.0%}); first failure in trial "
                f"{errors[0][0]}: {errors[0][1]}"
            )
        if len(pairs) < 2:
            raise ExperimentError(f"T={T}: fewer than two successful trials")
        rows.append(summary_row(T, plan.test_length(T), pairs, failures=len(errors)))
        kept[T] = pairs
    if keep_pairs:
        return rows, kept
    return rows


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def rows_to_csv(rows: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    buf.write(CSV_MAGIC + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
    return buf.getvalue()


def write_csv(path: str | Path, rows: Iterable[SummaryRow]) -> None:
    Path(path).write_text(rows_to_csv(rows))


class CsvSchemaError(ValueError):
    pass


def read_csv(path: str | Path) -> list[SummaryRow]:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# ipc-summary"):
        raise CsvSchemaError(f"{path}: missing '# ipc-summary' version line")
    version = lines[0].split()[-1]
    if version != f"v{CSV_VERSION}":
        raise CsvSchemaError(f"{path}: unsupported summary version {version}")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise CsvSchemaError(f"{path}: unexpected columns {reader.fieldnames}")
    rows = []
    for rec in reader:
        try:
            rows.append(
                SummaryRow(
                    T=int(rec["T"]),
                    Tprime=int(rec["Tprime"]),
                    N=int(rec["N"]),
                    mean_train=float(rec["mean_train"]),
                    var_train=float(rec["var_train"]),
                    mean_test=float(rec["mean_test"]),
                    var_test=float(rec["var_test"]),
                    err_var_train=float(rec["err_var_train"]),
                    err_var_test=float(rec["err_var_test"]),
                    failures=int(rec["failures"]),
                )
            )
        except (TypeError, ValueError) as exc:
            raise CsvSchemaError(f"{path}: bad row {rec}: {exc}") from None
    return sorted(rows, key=lambda r: r.T)


def manifest(plan: ExperimentPlan, rows: Sequence[SummaryRow], wall_time: float, threads: int) -> dict:
    return {
        "tool": "ipcfit",
        "version": __version__,
        "csv_version": CSV_VERSION,
        "plan": plan.to_dict(),
        "seed_policy": "Philox stream per trial: SeedSequence(base_seed, spawn_key=(T, trial, stream))",
        "base_seed": plan.base_seed,
        "threads": threads,
        "wall_time_s": wall_time,
        "failures": {str(r.T): r.failures for r in rows},
    }


def run_and_write(plan: ExperimentPlan, out_dir: str | Path, threads: int | None = None):
    """Run ``plan`` and write ``results.csv`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = resolve_threads(threads if threads is not None else plan.threads)
    start = time.perf_counter()
    rows = run_experiment(plan, threads=workers)
    wall = time.perf_counter() - start
    write_csv(out / "results.csv", rows)
    (out / "manifest.json").write_text(json.dumps(manifest(plan, rows, wall, workers), indent=2) + "\n")
    return rows


def with_overrides(plan: ExperimentPlan, **kw) -> ExperimentPlan:
    return replace(plan, **{k: v for k, v in kw.items() if v is not None})
