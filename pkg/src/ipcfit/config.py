"""INI run configuration and the built-in experiment presets."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from pathlib import Path

from .asymptote_fit import DEFAULT_A_TOL, DEFAULT_SLOPE_TOL
from .mc_harness import ExperimentPlan
from .signal_tasks import Distribution, Narma10Params

DEFAULT_P_VALUE = 1e-4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    plan: ExperimentPlan
    out_dir: str = "ipc-out"
    p_value: float = DEFAULT_P_VALUE
    dof: int | None = None
    a_tol: float = DEFAULT_A_TOL
    slope_tol: float = DEFAULT_SLOPE_TOL
    gnuplot: bool = True

    @property
    def threshold_dof(self) -> int:
        return self.dof if self.dof is not None else self.plan.readout_dof


# allowed keys per section; anything else is rejected
_SCHEMA = {
    "experiment": ("task", "t_grid", "ratio", "trials", "washout", "seed", "threads", "fix_reservoir"),
    "task": ("terms", "input", "narma_alpha", "narma_beta", "narma_gamma", "narma_delta", "narma_warmup"),
    "reservoir": ("nodes", "spectral_radius", "density", "input_scale", "bias"),
    "fit": ("p_value", "dof", "a_tol", "slope_tol"),
    "output": ("dir", "gnuplot"),
}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)


def _terms(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for tok in text.replace(" ", "").split(","):
        if not tok:
            continue
        delay, _, degree = tok.partition(":")
        out.append((int(delay), int(degree)))
    return tuple(out)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")

    def get(section, key, conv, default):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{source}: [{section}] {key} = {raw!r}: {exc}") from None
        return default

    if not cp.has_option("experiment", "task"):
        raise ConfigError(f"{source}: [experiment] task is required")
    if not cp.has_option("experiment", "t_grid"):
        raise ConfigError(f"{source}: [experiment] t_grid is required")
    washout_raw = get("experiment", "washout", str, "auto")
    dof_raw = get("fit", "dof", str, "auto")
    input_raw = get("task", "input", str, "auto")
    narma = Narma10Params(
        alpha=get("task", "narma_alpha", float, 0.3),
        beta=get("task", "narma_beta", float, 0.05),
        gamma=get("task", "narma_gamma", float, 1.5),
        delta=get("task", "narma_delta", float, 0.1),
    )
    try:
        plan = ExperimentPlan(
            task=get("experiment", "task", str.strip, None),
            T_grid=get("experiment", "t_grid", _ints, None),
            ratio=get("experiment", "ratio", float, 1.0),
            trials=get("experiment", "trials", int, 100),
            washout=None if washout_raw.strip() == "auto" else int(washout_raw),
            base_seed=get("experiment", "seed", int, 0),
            threads=get("experiment", "threads", int, 1),
            fix_reservoir=get("experiment", "fix_reservoir", _bool, False),
            legendre_terms=get("task", "terms", _terms, ((1, 1),)),
            input_distribution=None if input_raw.strip() == "auto" else Distribution(input_raw.strip()),
            narma=narma,
            narma_warmup=get("task", "narma_warmup", int, 200),
            nodes=get("reservoir", "nodes", int, 100),
            spectral_radius=get("reservoir", "spectral_radius", float, 0.9),
            density=get("reservoir", "density", float, 0.7),
            input_scale=get("reservoir", "input_scale", float, 1.0),
            bias=get("reservoir", "bias", float, 0.0),
        )
        cfg = RunConfig(
            plan=plan,
            out_dir=get("output", "dir", str.strip, "ipc-out"),
            p_value=get("fit", "p_value", float, DEFAULT_P_VALUE),
            dof=None if dof_raw.strip() == "auto" else int(dof_raw),
            a_tol=get("fit", "a_tol", float, DEFAULT_A_TOL),
            slope_tol=get("fit", "slope_tol", float, DEFAULT_SLOPE_TOL),
            gnuplot=get("output", "gnuplot", _bool, True),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not 0 < cfg.p_value < 1:
        raise ConfigError(f"{source}: p_value must be in (0, 1)")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), source=str(p))


def dump_config(cfg: RunConfig) -> str:
    """Fully-defaulted INI text; parsing it back yields an equal config."""
    plan = cfg.plan
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {
        "task": plan.task,
        "t_grid": ", ".join(str(t) for t in plan.T_grid),
        "ratio": repr(plan.ratio),
        "trials": str(plan.trials),
        "washout": "auto" if plan.washout is None else str(plan.washout),
        "seed": str(plan.base_seed),
        "threads": str(plan.threads),
        "fix_reservoir": str(plan.fix_reservoir).lower(),
    }
    cp["task"] = {
        "terms": ", ".join(f"{i}:{s}" for i, s in plan.legendre_terms),
        "input": "auto" if plan.input_distribution is None else plan.input_distribution.value,
        "narma_alpha": repr(plan.narma.alpha),
        "narma_beta": repr(plan.narma.beta),
        "narma_gamma": repr(plan.narma.gamma),
        "narma_delta": repr(plan.narma.delta),
        "narma_warmup": str(plan.narma_warmup),
    }
    cp["reservoir"] = {
        "nodes": str(plan.nodes),
        "spectral_radius": repr(plan.spectral_radius),
        "density": repr(plan.density),
        "input_scale": repr(plan.input_scale),
        "bias": repr(plan.bias),
    }
    cp["fit"] = {
        "p_value": repr(cfg.p_value),
        "dof": "auto" if cfg.dof is None else str(cfg.dof),
        "a_tol": repr(cfg.a_tol),
        "slope_tol": repr(cfg.slope_tol),
    }
    cp["output"] = {"dir": cfg.out_dir, "gnuplot": str(cfg.gnuplot).lower()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _grid(start, stop, step):
    return tuple(range(start, stop + 1, step))


# Desk-scale plans, each paired with the overrides that restore the published scale.
_PRESETS = {
    "simple-verify": (
        ExperimentPlan(task="simple", T_grid=_grid(200, 600, 100), ratio=2.0, trials=10_000, washout=50),
        dict(trials=100_000),
    ),
    "legendre1": (
        ExperimentPlan(
            task="legendre",
            legendre_terms=((1, 1),),
            T_grid=_grid(500, 4000, 500),
            trials=100,
            nodes=50,
            washout=500,
            fix_reservoir=True,
        ),
        dict(nodes=100, trials=1000, T_grid=_grid(1000, 10_000, 1000)),
    ),
    "legendre15": (
        ExperimentPlan(
            task="legendre",
            legendre_terms=((5, 15),),
            T_grid=_grid(500, 4000, 500),
            trials=100,
            nodes=50,
            washout=500,
            fix_reservoir=True,
        ),
        dict(nodes=100, trials=1000, T_grid=_grid(1000, 10_000, 1000)),
    ),
    "narma10": (
        ExperimentPlan(
            task="narma10",
            T_grid=_grid(500, 4000, 500),
            trials=100,
            nodes=50,
            washout=500,
            fix_reservoir=True,
        ),
        dict(nodes=100, trials=1000, T_grid=_grid(1000, 10_000, 1000)),
    ),
}

PRESETS = tuple(_PRESETS)


def preset(name: str, paper_scale: bool = False) -> RunConfig:
    try:
        plan, full = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if paper_scale:
        plan = replace(plan, **full)
    return RunConfig(plan=plan, out_dir=f"ipc-out/{name}")
