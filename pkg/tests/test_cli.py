import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipcfit import asymptote_fit, verify
from ipcfit.cli import main
from ipcfit.config import PRESETS, ConfigError, dump_config, load_config, parse_config, preset
from ipcfit.mc_harness import SummaryRow, read_csv, write_csv
from ipcfit.report import fit_report

MINIMAL = """
[experiment]
task = simple
t_grid = 100, 200, 300
trials = 20
ratio = 2
"""


def noiseless_rows(a=0.3, b1=0.2, b2=6.0, d=1.3, Ts=(200, 300, 400, 500, 600)):
    return [
        SummaryRow(T=T, Tprime=2 * T, N=1000, mean_train=a + b1 / T, var_train=d / T,
                   mean_test=a - b2 / (2 * T), var_test=d / (2 * T),
                   err_var_train=0.0, err_var_test=0.0, failures=0)
        for T in Ts
    ]


def test_parse_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.plan.T_grid == (100, 200, 300) and cfg.plan.ratio == 2.0
    assert cfg.p_value == 1e-4 and cfg.threshold_dof == 1
    assert cfg.plan.washout is None and not cfg.plan.fix_reservoir
    assert (cfg.a_tol, cfg.slope_tol) == (0.01, 0.3)


def test_parse_full_config():
    text = MINIMAL.replace("task = simple", "task = legendre") + """
washout = 10
fix_reservoir = yes
[task]
terms = 1:2, 3:1
input = uniform_symmetric
[reservoir]
nodes = 12
[fit]
dof = 7
p_value = 0.001
[output]
dir = somewhere
gnuplot = false
"""
    cfg = parse_config(text)
    assert cfg.plan.legendre_terms == ((1, 2), (3, 1))
    assert cfg.plan.nodes == 12 and cfg.plan.fix_reservoir and cfg.plan.washout == 10
    assert cfg.threshold_dof == 7 and cfg.p_value == 0.001
    assert cfg.out_dir == "somewhere" and not cfg.gnuplot


@pytest.mark.parametrize(
    "text",
    [
        MINIMAL + "[bogus]\nx = 1\n",
        MINIMAL + "colour = red\n",
        MINIMAL.replace("trials = 20", "trials = lots"),
        MINIMAL.replace("task = simple", "task = weather"),
        MINIMAL + "[fit]\np_value = 1.5\n",
        "[experiment]\ntask = simple\n",
        "not an ini file",
    ],
)
def test_parse_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("name", PRESETS)
@pytest.mark.parametrize("full", [False, True])
def test_config_round_trip_fixed_point(name, full):
    cfg = preset(name, paper_scale=full)
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert dump_config(again) == text


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.integers(1, 10_000), min_size=1, max_size=6, unique=True),
    st.floats(0.1, 10, allow_nan=False),
    st.integers(2, 10_000),
    st.floats(1e-9, 0.5),
    st.booleans(),
)
def test_round_trip_property(grid, ratio, trials, p, fix):
    text = MINIMAL.replace("100, 200, 300", ", ".join(map(str, grid)))
    text = text.replace("ratio = 2", f"ratio = {ratio!r}").replace("trials = 20", f"trials = {trials}")
    text += f"fix_reservoir = {str(fix).lower()}\n[fit]\np_value = {p!r}\n"
    cfg = parse_config(text)
    assert parse_config(dump_config(cfg)) == cfg


def test_presets_encode_published_settings():
    sv = preset("simple-verify").plan
    assert sv.T_grid == (200, 300, 400, 500, 600) and sv.ratio == 2.0 and sv.trials == 10_000
    assert preset("simple-verify", paper_scale=True).plan.trials == 100_000
    for name in ("legendre1", "legendre15", "narma10"):
        p = preset(name).plan
        assert p.nodes == 50 and p.trials == 100 and p.T_grid[-1] == 4000 and p.fix_reservoir
        pp = preset(name, paper_scale=True).plan
        assert pp.nodes == 100 and pp.trials == 1000 and pp.T_grid == tuple(range(1000, 10_001, 1000))
    assert preset("legendre15").plan.legendre_terms == ((5, 15),)
    assert preset("narma10", paper_scale=True).threshold_dof == 100
    with pytest.raises(ConfigError):
        preset("nope")


def test_load_config_missing_names_path(tmp_path):
    with pytest.raises(ConfigError, match="nowhere.ini"):
        load_config(tmp_path / "nowhere.ini")


def test_fit_report_noiseless():
    rep = fit_report(noiseless_rows())
    assert rep["a"] == pytest.approx(0.3, abs=1e-10)
    assert rep["b1"] == pytest.approx(0.2, abs=1e-8) and rep["b2"] == pytest.approx(6.0, abs=1e-8)
    assert rep["d"] == pytest.approx(1.3, abs=1e-12)
    assert rep["variance_slope"] == pytest.approx(-1.0, abs=1e-10)
    assert rep["zero_ipc"]["is_zero"] is False


# command line


def test_cli_run_simple_preset(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL.replace("t_grid = 100, 200, 300", "t_grid = 200, 300, 400, 500, 600"))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "results.csv")
    assert [r.T for r in rows] == [200, 300, 400, 500, 600]
    assert json.loads((out / "manifest.json").read_text())["plan"]["trials"] == 20
    assert parse_config((out / "config.ini").read_text()).plan.trials == 20
    first = (out / "results.csv").read_bytes()
    assert main(["run", "--config", str(cfg), "--out", str(out), "--threads", "2"]) == 0
    assert (out / "results.csv").read_bytes() == first


def test_cli_seed_override_changes_output(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a" / "results.csv").read_text() != (tmp_path / "b" / "results.csv").read_text()


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert "missing.ini" in capsys.readouterr().err
    assert main(["run"]) == 2
    assert main(["run", "--preset", "simple-verify", "--config", "x.ini"]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text(MINIMAL + "typo = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit) as info:
        main(["run", "--preset", "no-such-preset"])
    assert info.value.code == 2


def test_cli_fit_noiseless(tmp_path, capsys):
    write_csv(tmp_path / "results.csv", noiseless_rows())
    assert main(["fit", str(tmp_path / "results.csv")]) == 0
    rep = json.loads((tmp_path / "fit.json").read_text())
    assert rep["a"] == pytest.approx(0.3, abs=1e-10)
    for name in ("mean_vs_T.dat", "mean_minus_a_loglog.dat", "var_vs_T.dat", "var_loglog.dat", "plots.gp"):
        assert (tmp_path / name).is_file()
    data = np.loadtxt(tmp_path / "var_vs_T.dat")
    assert data.shape == (5, 8)
    assert np.allclose(data[:, 1], data[:, 6])


def test_cli_fit_errors(tmp_path):
    write_csv(tmp_path / "one.csv", noiseless_rows(Ts=(200,)))
    assert main(["fit", str(tmp_path / "one.csv")]) == 1
    (tmp_path / "v9.csv").write_text((tmp_path / "one.csv").read_text().replace("v1", "v9", 1))
    assert main(["fit", str(tmp_path / "v9.csv")]) == 2
    assert main(["fit", str(tmp_path / "absent.csv")]) == 2


def test_cli_fit_flags_zero_ipc(tmp_path):
    rows = [
        SummaryRow(T=T, Tprime=T, N=100, mean_train=0.002 + 1.0 / T, var_train=3.0 / T**2,
                   mean_test=0.002 - 1.0 / T, var_test=3.0 / T**2, err_var_train=0, err_var_test=0, failures=0)
        for T in range(500, 4001, 500)
    ]
    write_csv(tmp_path / "r.csv", rows)
    assert main(["fit", str(tmp_path / "r.csv"), "--no-gnuplot"]) == 0
    rep = json.loads((tmp_path / "fit.json").read_text())
    assert rep["zero_ipc"]["is_zero"] is True
    assert not (tmp_path / "plots.gp").exists()


def test_cli_baseline(tmp_path, capsys):
    write_csv(tmp_path / "r.csv", noiseless_rows())
    assert main(["baseline", str(tmp_path / "r.csv"), "--dof", "1"]) == 0
    out = capsys.readouterr().out
    assert "threshold        0.050456" in out
    assert "empirical IPC    0.3003333" in out
    assert "asymptote a      0.3000000" in out
    # below the gate
    write_csv(tmp_path / "low.csv", noiseless_rows(a=0.01, b1=0.0))
    assert main(["baseline", str(tmp_path / "low.csv"), "--dof", "1"]) == 0
    assert "empirical IPC    0.0000000" in capsys.readouterr().out


def test_cli_config_dump(capsys):
    assert main(["config", "--preset", "narma10", "--paper-scale"]) == 0
    cfg = parse_config(capsys.readouterr().out)
    assert cfg.plan.nodes == 100 and cfg.plan.task == "narma10"


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "ipcfit", "config", "--preset", "legendre1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "[reservoir]" in res.stdout


def test_verify_passes_oracle_checks():
    v = verify.Verifier(seed=0)
    for name in ("simple_analytic", "chi_square_thresholds", "oracle_equivalence"):
        res = getattr(v, name)()
        assert res.passed, res.line()


def test_sabotaged_b2_sign_is_caught(monkeypatch):
    real = asymptote_fit._solve_full_pivot

    def flipped(A, b):
        x = real(A, b)
        x[2] = -x[2]
        return x

    monkeypatch.setattr(asymptote_fit, "_solve_full_pivot", flipped)
    res = verify.Verifier(seed=0).oracle_equivalence()
    assert not res.passed
    # the fit report on clean data exposes the wrong sign too
    assert fit_report(noiseless_rows())["b2"] == pytest.approx(-6.0, abs=1e-8)
