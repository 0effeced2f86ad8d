"""The compiled kernel must match the pure-Python reference bit for bit."""

import math

import numpy as np
import pytest

from gridshield import _kernel_py

try:
    from gridshield import _kernel
except ImportError:
    _kernel = None

needs_ext = pytest.mark.skipif(_kernel is None,
                               reason="compiled kernel not built")

N, NF = 3, 14
STEPS = 400


def make_inputs(seed=0, with_attacks=True):
    rng = np.random.default_rng(seed)
    w0 = 2 * math.pi * 60
    X = np.zeros((N, 11))
    X[:, 0] = rng.uniform(0.05, 0.15, N)       # beta
    X[:, 1] = 1.0
    X[:, 7] = rng.uniform(1e6, 3e6, N)         # P
    X[:, 8] = rng.uniform(-2e5, 2e5, N)        # Q
    X[:, 9] = w0
    X[:, 10] = rng.uniform(0.95, 1.05, N)      # V
    par = np.zeros((N, 13))
    par[:, 0] = 1e-6
    par[:, 1] = 2.5e-8
    par[:, 2] = w0
    par[:, 3] = 1.0
    par[:, 4] = 0.1
    par[:, 5] = math.pi / 2
    par[:, 6] = 2e6
    par[:, 7] = 1e-3
    par[:, 8] = 5e-3
    par[:, 9] = 4.0
    par[:, 10] = 5.0
    par[:, 11] = 1.0
    par[:, 12] = rng.uniform(-0.01, 0.01, N)
    adj = np.zeros((N, N))
    adj[0, 1] = adj[1, 0] = 1.0
    adj[1, 2] = adj[2, 1] = 1.0
    if with_attacks:
        attacks = np.array([
            [1, 3, 0, 1.5, 0.005, 0.02, 0.0, 0.0],     # scaling on vs
            [0, 4, 1, 0.02, 0.01, 0.015, 1.0, 0.012],  # periodic additive mod
            [2, 0, 2, 5e5, 0.0, 0.04, 0.0, 0.0],       # ramping on p
        ], dtype=float)
    else:
        attacks = np.zeros((0, 8))
    noise = rng.normal(0, 1e-3, size=(N, 11, STEPS))
    base_mean = X.copy()
    base_half = np.full((N, 11), 6e-3)
    base_half[:, 7:9] = 1.2e4
    base_half[:, 9] = 2.26
    return dict(
        X=X, xsec=np.full(N, 2.0), theta_wf=np.zeros(N),
        wf_buf=np.zeros((N, 333)), wf_pos=0,
        counters=np.zeros((N, NF), dtype=np.int64),
        streak_start=np.full((N, NF), -1, dtype=np.int64),
        first_exceed=np.full((N, NF), -1, dtype=np.int64),
        flag_step=np.full(N, -1, dtype=np.int64),
        flag_feature=np.full(N, -1, dtype=np.int64),
        env_flag=np.zeros(N, dtype=np.uint8),
        noise=noise, par=par, adj=adj,
        in_set=np.ones(N, dtype=np.uint8),
        inverter_on=np.array([1, 1, 0], dtype=np.uint8),
        monitored=np.ones(N, dtype=np.uint8),
        attacks=attacks, x0=2.0,
        base_mean=base_mean, base_half=base_half,
        v_lo=0.9, v_hi=1.1, w_lo=59.5 * 2 * math.pi, w_hi=60.5 * 2 * math.pi,
        persistence=20, detect_on=1, detect_from_step=50,
        w_nom=w0, v_g=1.0, clip_pu=1.1, dt=1e-4, step0=0,
        n_sub=STEPS, wf_per_step=2,
    )


def call(mod, inputs):
    kw = {k: (v.copy() if isinstance(v, np.ndarray) else v)
          for k, v in inputs.items()}
    ret = mod.run_chunk(*kw.values())
    return kw, ret


@needs_ext
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
@pytest.mark.parametrize("with_attacks", [True, False])
def test_bitwise_parity(seed, with_attacks):
    inputs = make_inputs(seed, with_attacks)
    py_state, py_ret = call(_kernel_py, inputs)
    cy_state, cy_ret = call(_kernel, inputs)
    assert py_ret == cy_ret
    for name in ("X", "xsec", "theta_wf", "wf_buf", "counters",
                 "streak_start", "first_exceed", "flag_step",
                 "flag_feature", "env_flag"):
        assert np.array_equal(py_state[name], cy_state[name]), name


@needs_ext
def test_parity_across_chunk_splits():
    # One 400-step call == forty 10-step calls, bit for bit.
    inputs = make_inputs(5)
    whole, ret_whole = call(_kernel, inputs)

    split = {k: (v.copy() if isinstance(v, np.ndarray) else v)
             for k, v in inputs.items()}
    wf_pos = 0
    for c in range(40):
        split["wf_pos"] = wf_pos
        split["step0"] = c * 10
        split["n_sub"] = 10
        wf_pos, status, _, _ = _kernel.run_chunk(*split.values())
        assert status == _kernel.OK
    assert wf_pos == ret_whole[0]
    for name in ("X", "xsec", "wf_buf", "counters", "flag_step"):
        assert np.array_equal(whole[name], split[name]), name


def test_divergence_reported():
    inputs = make_inputs(6)
    inputs["X"][1, 10] = 1e308
    inputs["par"][1, 1] = 1e280      # absurd droop gain forces overflow
    _, (wf_pos, status, bad_agent, bad_state) = call(_kernel_py, inputs)
    assert status == _kernel_py.DIVERGED
    assert bad_agent == 1


@needs_ext
def test_divergence_parity():
    inputs = make_inputs(6)
    inputs["X"][1, 10] = 1e308
    inputs["par"][1, 1] = 1e280
    py_state, py_ret = call(_kernel_py, inputs)
    cy_state, cy_ret = call(_kernel, inputs)
    assert py_ret == cy_ret
