"""Fit reports and plot-data files built from summary rows."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from .asymptote_fit import (
    DEFAULT_A_TOL,
    DEFAULT_SLOPE_TOL,
    decide_zero_ipc,
    fit_asymptote,
    loglog_slope,
    mean_loglog_points,
)
from .ipc_core import chi_square_threshold, empirical_ipc
from .mc_harness import SummaryRow


def fit_report(
    rows: Sequence[SummaryRow],
    a_tol: float = DEFAULT_A_TOL,
    slope_tol: float = DEFAULT_SLOPE_TOL,
) -> dict:
    rows = sorted(rows, key=lambda r: r.T)
    fit = fit_asymptote([r.mean_sample() for r in rows], [r.var_sample() for r in rows])
    slope = loglog_slope([r.var_sample() for r in rows])
    decision = decide_zero_ipc(fit.a, slope.slope, a_tol=a_tol, slope_tol=slope_tol)
    return {
        "a": fit.a,
        "b1": fit.b1,
        "b2": fit.b2,
        "d": fit.d,
        "cost": float(fit.cost),
        "condition": fit.condition,
        "variance_slope": slope.slope,
        "variance_slope_stderr": slope.stderr,
        "variance_intercept": slope.intercept,
        "variance_points_excluded": slope.excluded,
        "zero_ipc": {
            "is_zero": decision.is_zero,
            "a_tol": decision.a_tol,
            "slope_tol": decision.slope_tol,
        },
        "n_lengths": len(rows),
    }


def baseline_report(rows: Sequence[SummaryRow], dof: int, p: float) -> dict:
    """Empirical (threshold-gated) IPC at the largest T next to the fitted a."""
    rows = sorted(rows, key=lambda r: r.T)
    last = rows[-1]
    threshold = chi_square_threshold(dof, p, last.T)
    report = {
        "T": last.T,
        "dof": dof,
        "p": p,
        "threshold": threshold,
        "training_mean": last.mean_train,
        "empirical_ipc": empirical_ipc(last.mean_train, threshold),
    }
    if len({r.T for r in rows}) >= 2:
        fit = fit_asymptote([r.mean_sample() for r in rows], [r.var_sample() for r in rows])
        report["fitted_a"] = fit.a
    return report


def _write_series(path: Path, header: str, points) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for pt in points:
            fh.write(" ".join(repr(float(v)) for v in pt) + "\n")


def write_plot_data(out_dir: str | Path, rows: Sequence[SummaryRow], report: dict, gnuplot: bool = True) -> list[Path]:
    """Write plot data for mean, log-log mean residual, variance and log-log variance.

    Lengths whose mean lies on the wrong side of ``a`` cannot go on a log-log
    axis; they are listed in the header of the log-log file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows, key=lambda r: r.T)
    a, b1, b2, d = report["a"], report["b1"], report["b2"], report["d"]
    files = []

    p = out / "mean_vs_T.dat"
    _write_series(
        p,
        "T mean_train err_train fit_train Tprime mean_test err_test fit_test",
        [
            (r.T, r.mean_train, (r.var_train / r.N) ** 0.5, a + b1 / r.T, r.Tprime, r.mean_test, (r.var_test / r.N) ** 0.5, a - b2 / r.Tprime)
            for r in rows
        ],
    )
    files.append(p)

    train_pts, train_drop = mean_loglog_points([r.T for r in rows], [r.mean_train for r in rows], a)
    # test means approach a from below
    test_pts, test_drop = mean_loglog_points(
        [r.Tprime for r in rows], [2 * a - r.mean_test for r in rows], a
    )
    report["dropped_loglog_train"] = train_drop
    report["dropped_loglog_test"] = test_drop
    p = out / "mean_minus_a_loglog.dat"
    with open(p, "w") as fh:
        fh.write(f"# dropped (mean - a <= 0): train T={train_drop} test T'={test_drop}\n")
        fh.write("# set length |mean - a| asymptote\n")
        for T, v in train_pts:
            fh.write(f"train {T} {v!r} {abs(b1) / T!r}\n")
        for T, v in test_pts:
            fh.write(f"test {T} {v!r} {abs(b2) / T!r}\n")
    files.append(p)

    p = out / "var_vs_T.dat"
    _write_series(
        p,
        "T var_train err_var_train Tprime var_test err_var_test d/T d/Tprime",
        [(r.T, r.var_train, r.err_var_train, r.Tprime, r.var_test, r.err_var_test, d / r.T, d / r.Tprime) for r in rows],
    )
    files.append(p)

    p = out / "var_loglog.dat"
    slope, intercept = report["variance_slope"], report["variance_intercept"]
    with open(p, "w") as fh:
        fh.write(f"# fitted log-log slope {slope!r} (1/T asymptote has slope -1)\n")
        fh.write("# length variance d/length slope_line\n")
        for r in rows:
            for T, v in ((r.T, r.var_train), (r.Tprime, r.var_test)):
                if v > 0:
                    line = math.exp(intercept) * T**slope
                    fh.write(f"{T} {v!r} {d / T!r} {line!r}\n")
    files.append(p)

    if gnuplot:
        p = out / "plots.gp"
        p.write_text(_GNUPLOT)
        files.append(p)
    return files


def write_fit_json(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


_GNUPLOT = """\
set terminal pngcairo size 1200,900
set output 'ipc_fit.png'
set multiplot layout 2,2
set xlabel 'T'
set title 'mean IPC'
plot 'mean_vs_T.dat' u 1:2:3 w yerr t 'train', '' u 1:4 w l t 'a + b1/T', \\
     '' u 5:6:7 w yerr t 'test', '' u 5:8 w l t "a - b2/T'"
set logscale xy
set title '|mean - a|'
plot '< grep ^train mean_minus_a_loglog.dat' u 2:3 w p t 'train', '' u 2:4 w l t 'b1/T', \\
     '< grep ^test mean_minus_a_loglog.dat' u 2:3 w p t 'test', '' u 2:4 w l t "b2/T'"
unset logscale
set title 'IPC variance'
plot 'var_vs_T.dat' u 1:2:3 w yerr t 'train', '' u 4:5:6 w yerr t 'test', '' u 1:7 w l t 'd/T'
set logscale xy
set title 'IPC variance (log-log)'
plot 'var_loglog.dat' u 1:2 w p t 'variance', '' u 1:3 w l t 'd/T', '' u 1:4 w l t 'fitted power'
unset multiplot
"""
