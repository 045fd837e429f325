import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipcfit.esn import (
    EsnConfig,
    EsnWeights,
    build_esn,
    esn_run,
    esn_step,
    load_weights,
    power_iteration_radius,
    rescale_to_radius,
    run_washout,
    save_weights,
    simple_model_run,
    simple_model_step,
    simple_model_target,
    spectral_radius,
)


def test_config_validation():
    for bad in (dict(nodes=0), dict(nodes=5, density=0.0), dict(nodes=5, density=1.5), dict(nodes=5, spectral_radius=0)):
        with pytest.raises(ValueError):
            EsnConfig(**bad)


def test_single_node_radius():
    w = build_esn(EsnConfig(nodes=1, density=1.0, spectral_radius=0.9), np.random.default_rng(0))
    assert w.v1.shape == (1, 1)
    assert abs(abs(w.v1[0, 0]) - 0.9) < 1e-15


@pytest.mark.parametrize("nodes,seed", [(5, 0), (20, 1), (50, 2), (100, 3)])
def test_power_iteration_agrees_with_target_radius(nodes, seed):
    w = build_esn(EsnConfig(nodes=nodes), np.random.default_rng(seed))
    assert abs(spectral_radius(w.v1) - 0.9) < 0.9e-6
    assert abs(power_iteration_radius(w.v1, iterations=10_000, seed=seed) - 0.9) < 1e-6


def test_density_fraction():
    w = build_esn(EsnConfig(nodes=100, density=0.7), np.random.default_rng(11))
    zero_frac = np.mean(w.v1 == 0.0)
    assert abs(zero_frac - 0.30) < 0.02


def test_input_weights_scale_and_bias():
    cfg = EsnConfig(nodes=200, input_scale=2.0, input_dim=3)
    w = build_esn(cfg, np.random.default_rng(4))
    assert w.v2.shape == (200, 3)
    assert abs(w.v2.std() - 2.0) < 0.15
    assert not w.c.any()


def test_build_reproducible_from_seed_sequence():
    cfg = EsnConfig(nodes=30)
    a = build_esn(cfg, np.random.SeedSequence(7))
    b = build_esn(cfg, np.random.SeedSequence(7))
    assert np.array_equal(a.v1, b.v1) and np.array_equal(a.v2, b.v2)


def test_degenerate_mask_retries_then_fails():
    # density this small makes an all-zero 1x1 mask almost certain
    cfg = EsnConfig(nodes=1, density=1e-12)
    with pytest.raises(RuntimeError, match="8 attempts"):
        build_esn(cfg, np.random.SeedSequence(0))


def test_rescale_idempotent():
    m = np.random.default_rng(2).standard_normal((40, 40))
    once = rescale_to_radius(m, 0.9)
    twice = rescale_to_radius(once, 0.9)
    assert np.max(np.abs(twice - once) / np.max(np.abs(once))) < 1e-12


def test_rescale_rejects_zero_matrix():
    with pytest.raises(ValueError):
        rescale_to_radius(np.zeros((3, 3)), 0.9)


def test_weights_are_read_only_copies():
    v1 = np.eye(2)
    w = EsnWeights(v1=v1, v2=np.ones((2, 1)), c=np.zeros(2))
    v1[0, 0] = 5.0
    assert w.v1[0, 0] == 1.0
    with pytest.raises(ValueError):
        w.v1[0, 0] = 2.0


def test_step_zero_weights():
    w = EsnWeights(v1=np.zeros((4, 4)), v2=np.zeros((4, 1)), c=np.zeros(4))
    assert not esn_step(w, np.zeros(4), [0.3]).any()


def test_step_scalar_value():
    w = EsnWeights(v1=[[0.5]], v2=[[1.0]], c=[0.0])
    assert esn_step(w, np.zeros(1), [0.3])[0] == pytest.approx(0.291312612, abs=1e-9)


def test_step_uses_transpose_of_recurrent_matrix():
    v1 = np.array([[0.0, 0.4], [0.0, 0.0]])
    w = EsnWeights(v1=v1, v2=np.zeros((2, 1)), c=np.zeros(2))
    x = esn_step(w, np.array([1.0, 0.0]), [0.0])
    # v1^T x puts node 0's value into node 1
    assert x[0] == 0.0 and x[1] == pytest.approx(np.tanh(0.4))


def test_step_dimension_check():
    w = build_esn(EsnConfig(nodes=3), np.random.default_rng(0))
    with pytest.raises(ValueError):
        esn_step(w, np.zeros(4), [0.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_states_bounded_and_run_matches_step(seed):
    rng = np.random.default_rng(seed)
    w = build_esn(EsnConfig(nodes=8, input_scale=5.0), rng)
    u = rng.uniform(-1, 1, 30)
    states = esn_run(w, u)
    assert np.all(np.abs(states) < 1)
    x = np.zeros(8)
    for t in range(30):
        x = esn_step(w, x, [u[t]])
        assert np.allclose(states[t], x, rtol=0, atol=1e-14)


def test_step_independent_of_node_order():
    rng = np.random.default_rng(9)
    w = build_esn(EsnConfig(nodes=6), rng)
    x = rng.uniform(-1, 1, 6)
    perm = rng.permutation(6)
    wp = EsnWeights(v1=w.v1[np.ix_(perm, perm)], v2=w.v2[perm], c=w.c[perm])
    assert np.allclose(esn_step(wp, x[perm], [0.2]), esn_step(w, x, [0.2])[perm], rtol=0, atol=1e-15)


def test_echo_state_convergence():
    rng = np.random.default_rng(5)
    w = build_esn(EsnConfig(nodes=50), rng)
    u = rng.uniform(-1, 1, 500)
    a = esn_run(w, u, x0=rng.uniform(-1, 1, 50))[-1]
    b = esn_run(w, u, x0=rng.uniform(-1, 1, 50))[-1]
    assert np.max(np.abs(a - b)) < 1e-8


def test_simple_model_examples():
    assert simple_model_step(0.0, 0.0) == 0.0
    x = 0.0
    for _ in range(200):
        x = simple_model_step(x, 1.0)
    assert x == 2.0
    assert simple_model_target(0.5) == 1.5


def test_simple_model_equals_truncated_sum():
    u = np.random.default_rng(1).uniform(-1, 1, 64)
    x = 0.0
    for t in range(64):
        x = simple_model_step(x, u[t])
        ref = sum(2.0**-s * u[t - s] for s in range(t + 1))
        assert abs(x - ref) < 1e-15


def test_simple_model_run_matches_step():
    u = np.random.default_rng(2).uniform(-1, 1, 1000)
    x, ref = 0.3, []
    for v in u:
        x = simple_model_step(x, v)
        ref.append(x)
    assert np.array_equal(simple_model_run(u, x0=0.3), np.array(ref))


def test_simple_model_washout_tail_bound():
    rng = np.random.default_rng(3)
    history = rng.uniform(-1, 1, 2000)
    full = simple_model_run(history)[-1]
    washed = simple_model_run(history[-51:])[-1]
    assert abs(full - washed) <= 2.0**-50 * 2


def test_washout_zero_steps_is_identity():
    state = np.array([0.1, 0.2])
    assert run_washout(lambda s, u: s + u, state, 0, iter([1.0])) is state
    with pytest.raises(ValueError):
        run_washout(simple_model_step, 0.0, -1, iter([]))


def test_washout_forgets_initial_condition():
    u = np.random.default_rng(4).uniform(-1, 1, 50)
    a = run_washout(simple_model_step, 10.0, 50, iter(u))
    b = run_washout(simple_model_step, -10.0, 50, iter(u))
    assert abs(a - b) <= 20 * 2.0**-50
    it = iter(u)
    run_washout(simple_model_step, 0.0, 10, it)
    assert next(it) == u[10]


def test_weights_round_trip(tmp_path):
    cfg = EsnConfig(nodes=7, input_dim=2, seed=12)
    w = build_esn(cfg, np.random.default_rng(12))
    save_weights(tmp_path / "w.csv", w, cfg)
    back, meta = load_weights(tmp_path / "w.csv")
    assert np.array_equal(back.v1, w.v1) and np.array_equal(back.v2, w.v2) and np.array_equal(back.c, w.c)
    assert meta == {"d1": 7, "d0": 2, "rho": 0.9, "density": 0.7, "seed": 12}


def test_load_weights_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,2\n3,4\n")
    with pytest.raises(ValueError):
        load_weights(p)
